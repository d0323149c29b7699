#pragma once

// The bundled test images: five natural photos and three simple crops whose
// clean robust-reconstruction residual is below the detection threshold.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "tnshield/image_io.hpp"

namespace corpus {

inline std::filesystem::path images_dir() { return std::filesystem::path(TNSHIELD_TESTDATA) / "images"; }

inline std::vector<std::string> photo_names() {
  return {"photo_astronaut", "photo_chelsea", "photo_coffee", "photo_ihc", "photo_rocket"};
}

inline std::vector<std::string> crop_names() { return {"simple_sky_a", "simple_sky_b", "simple_table"}; }

inline std::filesystem::path image_path(const std::string& name) { return images_dir() / (name + ".png"); }

inline tnshield::DenseTensor load(const std::string& name) { return tnshield::read_image(image_path(name)); }

/// x + n with n uniform in direction and scaled so that ||n|| / ||x|| equals `dissimilarity`.
inline tnshield::DenseTensor noise_at_dissimilarity(const tnshield::DenseTensor& x, double dissimilarity, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> n(x.size());
  double nn = 0.0, xx = 0.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    n[i] = u(rng);
    nn += n[i] * n[i];
    xx += x[i] * x[i];
  }
  const double c = dissimilarity * std::sqrt(xx / nn);
  tnshield::DenseTensor out = x;
  for (std::size_t i = 0; i < n.size(); ++i) out[i] += c * n[i];
  return out;
}

}  // namespace corpus
