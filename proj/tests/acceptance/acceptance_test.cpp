// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
// Each criterion also has a wall-clock budget; exceeding it is a failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "corpus.hpp"
#include "oracles.hpp"
#include "tnshield/analysis.hpp"
#include "tnshield/app.hpp"
#include "tnshield/detect.hpp"
#include "tnshield/network.hpp"
#include "tnshield/quantize.hpp"
#include "tnshield/tnz.hpp"

using namespace tnshield;
namespace fs = std::filesystem;
using tnshield::app::json;

namespace {

// Collects failed checks with a message; a criterion passes when none failed.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    ++checks_;
    if (!ok && failures_.size() < 5) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failed_ == 0; }

  std::string summary() const {
    std::ostringstream os;
    os << checks_ - failed_ << "/" << checks_ << " checks";
    for (const auto& n : notes_) os << "; " << n;
    for (const auto& f : failures_) os << "\n      failed: " << f;
    if (failed_ > failures_.size()) os << "\n      ... " << failed_ - failures_.size() << " more";
    return os.str();
  }

 private:
  std::size_t checks_ = 0, failed_ = 0;
  std::vector<std::string> failures_, notes_;
};

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

//
// 1. storage formulas
//

std::size_t closed_form(const TensorNetwork& net) {
  const Shape s = net.shape();
  std::size_t n = 0;
  switch (net.format()) {
    case Format::CP: {
      const auto& cp = std::get<CPTensor>(net.value);
      const std::size_t r = cp.factors.front().dim(1);
      for (auto m : s) n += m * r;
      return n + cp.weights.size();
    }
    case Format::TD: {
      const auto& tk = std::get<TuckerTensor>(net.value);
      std::size_t core = 1;
      for (std::size_t k = 0; k < s.size(); ++k) {
        const std::size_t r = tk.factors[k].dim(1);
        core *= r;
        n += s[k] * r;
      }
      return n + core;
    }
    case Format::HT: {
      const auto& ht = std::get<HTTensor>(net.value);
      const auto r = ht.ranks();
      for (std::size_t i = 0; i < ht.tree.size(); ++i) {
        const auto& node = ht.tree[i];
        if (node.is_leaf())
          n += s[node.first_mode] * r[i];
        else
          n += r[static_cast<std::size_t>(node.left)] * r[static_cast<std::size_t>(node.right)] * r[i];
      }
      return n;
    }
    case Format::TT: {
      const auto r = std::get<TTTensor>(net.value).ranks();
      for (std::size_t k = 0; k < s.size(); ++k) n += r[k] * s[k] * r[k + 1];
      return n;
    }
  }
  return 0;
}

void storage_formulas(Check& c) {
  std::mt19937_64 rng(1001);
  std::uniform_int_distribution<std::size_t> order(2, 5), size(1, 6), rank(1, 5);
  std::size_t configs[4] = {0, 0, 0, 0};
  for (int trial = 0; trial < 200; ++trial) {
    Shape s(order(rng));
    for (auto& n : s) n = size(rng);
    std::vector<std::size_t> tt_ranks(s.size() + 1, 1);
    for (std::size_t k = 1; k < s.size(); ++k) tt_ranks[k] = rank(rng);
    Shape tk_ranks(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) tk_ranks[k] = std::min(rank(rng), s[k]);
    const TensorNetwork nets[] = {TensorNetwork{oracle::random_cp(s, rank(rng), rng, trial % 2 == 0)},
                                  to_network(oracle::random_tucker(s, tk_ranks, rng)),
                                  to_network(oracle::random_ht(s, rank(rng), rng)),
                                  to_network(oracle::random_tt(s, tt_ranks, rng))};
    for (const auto& net : nets) {
      c.expect(storage_count(net) == closed_form(net),
               std::string(to_string(net.format())) + " trial " + std::to_string(trial) + ": " +
                   std::to_string(storage_count(net)) + " != " + std::to_string(closed_form(net)));
      ++configs[static_cast<int>(net.format())];
    }
  }
  c.note(std::to_string(configs[0]) + " configurations per format");
}

//
// 2. TT-SVD error contract
//

void tt_error_contract(Check& c) {
  std::mt19937_64 rng(1002);
  for (double eps : {0.01, 0.1, 0.3}) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const DenseTensor t = oracle::random_tensor({8, 8, 8}, rng);
      const double err = oracle::relative_error(t, tt_reconstruct(tt_svd(t, Tolerance{eps})));
      worst = std::max(worst, err);
      c.expect(err <= eps, "eps " + fmt(eps) + " trial " + std::to_string(trial) + " error " + fmt(err, 8));
    }
    c.note("eps " + fmt(eps) + " worst " + fmt(worst));
  }
}

//
// 3. exact recovery
//

void exact_recovery(Check& c) {
  std::mt19937_64 rng(1003);
  double worst_tt = 0.0, worst_tk = 0.0, worst_cp = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const DenseTensor t = tt_reconstruct(oracle::random_tt({4, 5, 6}, {1, 2, 3, 1}, rng));
    const TTTensor tt = tt_svd(t, Tolerance{1e-10});
    const double err = oracle::relative_error(t, tt_reconstruct(tt));
    worst_tt = std::max(worst_tt, err);
    c.expect(tt.ranks() == std::vector<std::size_t>{1, 2, 3, 1}, "TT ranks not (1,2,3,1)");
    c.expect(err <= 1e-9, "TT error " + fmt(err));

    const DenseTensor u = tucker_reconstruct(oracle::random_tucker({5, 6, 4}, {2, 2, 2}, rng));
    const TuckerTensor tk = tucker_decompose(u, Tolerance{1e-10});
    const double terr = oracle::relative_error(u, tucker_reconstruct(tk));
    worst_tk = std::max(worst_tk, terr);
    c.expect(tk.core.shape() == Shape{2, 2, 2}, "Tucker ranks not (2,2,2)");
    c.expect(terr <= 1e-9, "Tucker error " + fmt(terr));
  }
  for (int trial = 0; trial < 5; ++trial) {
    const DenseTensor t = cp_reconstruct(oracle::random_cp({6, 7, 8}, 3, rng, false));
    CPOptions opts;
    opts.rank = 3;
    opts.max_iter = 2000;
    opts.tol = 1e-14;
    opts.seed = static_cast<std::uint64_t>(trial);
    const CPResult r = cp_als(t, opts);
    const auto* cp = std::get_if<CPTensor>(&r);
    c.expect(cp != nullptr, "CP rank 3 reported failure");
    if (!cp) continue;
    const double err = oracle::relative_error(t, cp_reconstruct(*cp));
    worst_cp = std::max(worst_cp, err);
    c.expect(err <= 1e-6, "CP error " + fmt(err));
  }
  c.note("worst TT " + fmt(worst_tt, 2) + ", Tucker " + fmt(worst_tk, 2) + ", CP " + fmt(worst_cp, 2));
}

//
// 4. brute-force equivalence on 3x2x4
//

void brute_force(Check& c) {
  std::mt19937_64 rng(1004);
  const Shape s{3, 2, 4};
  for (int trial = 0; trial < 5; ++trial) {
    const CPTensor cp = oracle::random_cp(s, 3, rng, true);
    const TuckerTensor tk = oracle::random_tucker(s, {2, 2, 3}, rng);
    const HTTensor ht = oracle::random_ht(s, 2, rng);
    const TTTensor tt = oracle::random_tt(s, {1, 2, 3, 1}, rng);
    const double d_cp = oracle::max_abs_diff(cp_reconstruct(cp), oracle::cp_sum(cp));
    const double d_tk = oracle::max_abs_diff(tucker_reconstruct(tk), oracle::tucker_sum(tk));
    const double d_ht = oracle::max_abs_diff(ht_reconstruct(ht), oracle::ht_sum(ht));
    const double d_tt = oracle::max_abs_diff(tt_reconstruct(tt), oracle::tt_sum(tt));
    c.expect(d_cp <= 1e-10, "CP differs by " + fmt(d_cp));
    c.expect(d_tk <= 1e-10, "Tucker differs by " + fmt(d_tk));
    c.expect(d_ht <= 1e-10, "HT differs by " + fmt(d_ht));
    c.expect(d_tt <= 1e-10, "TT differs by " + fmt(d_tt));
  }
}

//
// 5. robust SVD
//

void robust_svd_properties(Check& c) {
  std::mt19937_64 rng(1005);
  for (double beta : {0.01, 0.03, 0.1, 0.5}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Matrix a = oracle::random_matrix(16 + trial, 12, rng);
      const SVDFactors plain = svd(a);
      const RobustSVD r = robust_svd(a, RobustBinConfig{beta, std::nullopt, 512});
      const double drift = std::abs(r.factors.s.sum() - plain.s.sum());
      c.expect(drift <= 1e-9 * plain.s.sum(), "energy drift " + fmt(drift));
      for (Eigen::Index j = 0; j < r.factors.u.cols(); ++j) {
        c.expect(std::abs(r.factors.u.col(j).norm() - 1.0) < 1e-12, "U column not unit norm");
        c.expect(std::abs(r.factors.v.col(j).norm() - 1.0) < 1e-12, "V column not unit norm");
      }
      // output columns are sorted by merged value, so labels may permute; each label must still
      // cover one run of indices, and its value must be the sum of that run
      std::vector<double> member_sum(r.factors.rank(), 0.0);
      std::vector<bool> closed(r.factors.rank(), false);
      for (std::size_t i = 0; i < r.merged_into.size(); ++i) {
        const std::size_t label = r.merged_into[i];
        if (label >= member_sum.size()) {
          c.expect(false, "merge label out of range");
          continue;
        }
        if (i > 0 && r.merged_into[i - 1] != label) closed[r.merged_into[i - 1]] = true;
        c.expect(!closed[label], "bins are not contiguous");
        member_sum[label] += plain.s[static_cast<Eigen::Index>(i)];
      }
      c.expect(*std::max_element(r.merged_into.begin(), r.merged_into.end()) + 1 == r.factors.rank(),
               "bin count differs from output rank");
      for (Eigen::Index j = 0; j < r.factors.s.size(); ++j) {
        c.expect(std::abs(r.factors.s[j] - member_sum[static_cast<std::size_t>(j)]) <= 1e-12 * plain.s.sum(),
                 "merged value is not the sum of its members");
        if (j > 0) c.expect(r.factors.s[j] <= r.factors.s[j - 1], "merged values not sorted");
      }
    }
  }

  // hand-executed: [[1.5, .5], [.5, 1.5]] has S = [2, 1]; tail sums 3 and 1 share the bin (0.5, 0.5 e^2]
  Matrix a(2, 2);
  a << 1.5, 0.5, 0.5, 1.5;
  const RobustSVD r = robust_svd(a, RobustBinConfig{2.0, 0.5, 8});
  c.expect(r.factors.rank() == 1, "2x2 case did not merge");
  if (r.factors.rank() == 1) {
    c.expect(std::abs(r.factors.s[0] - 3.0) < 1e-14, "2x2 merged value " + fmt(r.factors.s[0], 17));
    c.expect(std::abs(std::abs(r.factors.u(0, 0)) - 1.0) < 1e-14 && std::abs(r.factors.u(1, 0)) < 1e-14,
             "2x2 merged vector is not (1, 0)");
  }
  // S = [1, 1]: the merged column is the normalized mean of the two left vectors
  const Matrix id = Matrix::Identity(2, 2);
  const SVDFactors p = svd(id);
  const RobustSVD e = robust_svd(id, RobustBinConfig{1.0, 0.9, 8});
  c.expect(e.factors.rank() == 1 && std::abs(e.factors.s[0] - 2.0) < 1e-14, "equal values did not merge to 2");
  if (e.factors.rank() == 1) {
    const Vector mean = ((p.u.col(0) + p.u.col(1)) / 2.0).normalized();
    c.expect((e.factors.u.col(0) - mean).norm() < 1e-14, "equal-value merge vector differs from the normalized mean");
  }
}

//
// 6. slope oracle
//

void slope_oracle(Check& c) {
  std::vector<double> s(40);
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = std::exp(-0.1 * static_cast<double>(k + 1));
  const double direct = decay_slope(s, 5, 25).slope;
  c.expect(std::abs(direct + 0.1) <= 1e-6, "spectrum slope " + fmt(direct, 10));

  std::mt19937_64 rng(1006);
  const DenseTensor t = oracle::decaying_spectrum_tensor(30, -0.1, rng);
  const SlopeReport r = tt_svd_slope(t);
  c.expect(std::abs(r.mean_slope + 0.1) <= 1e-6, "tensor slope " + fmt(r.mean_slope, 10));
  for (double scale : {1e-3, 0.5, 255.0, 1e5}) {
    DenseTensor u = t;
    for (auto& v : u.data()) v *= scale;
    const double d = std::abs(tt_svd_slope(u).mean_slope - r.mean_slope);
    c.expect(d <= 1e-10, "scale " + fmt(scale) + " moves the slope by " + fmt(d));
  }
  c.note("slope " + fmt(r.mean_slope, 10));
}

//
// 7. directional slope laws on photos
//

void slope_laws(Check& c) {
  std::ostringstream os;
  for (const auto& name : corpus::photo_names()) {
    const DenseTensor img = corpus::load(name);
    const double clean = image_slope(img).mean_slope;
    const double noisy = image_slope(add_uniform_noise(img, 0.3 * 255.0, 7)).mean_slope;
    const double smooth_slope = image_slope(smooth(img, Gaussian{2.0})).mean_slope;
    c.expect(clean >= -0.12 && clean <= -0.04, name + " slope " + fmt(clean) + " outside [-0.12, -0.04]");
    c.expect(noisy > clean, name + " noise did not flatten: " + fmt(noisy) + " vs " + fmt(clean));
    c.expect(smooth_slope < clean, name + " smoothing did not steepen: " + fmt(smooth_slope) + " vs " + fmt(clean));
    os << name.substr(6) << " " << fmt(clean, 3) << "/" << fmt(noisy, 3) << "/" << fmt(smooth_slope, 3) << " ";
  }
  c.note("clean/noisy/smoothed: " + os.str());
}

//
// 8. quantization bounds
//

void quantization_bounds(Check& c) {
  std::mt19937_64 rng(1008);
  std::uniform_real_distribution<double> scale(0.01, 1000.0);
  std::uniform_int_distribution<std::size_t> len(1, 2000);
  for (int trial = 0; trial < 1000; ++trial) {
    const double lo = -scale(rng), hi = scale(rng);
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> x(len(rng));
    for (auto& v : x) v = u(rng);
    const QuantizedArray q = quantize_uniform(x);
    const auto back = dequantize(q);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - back[i]));
    const double half_step = 0.5 * q.codebook.step;
    c.expect(worst <= half_step * (1.0 + 1e-9) + 1e-12, "trial " + std::to_string(trial) + " error " + fmt(worst) + " > " + fmt(half_step));
  }

  for (int trial = 0; trial < 5; ++trial) {
    std::normal_distribution<double> a(-5.0, 0.3), b(4.0, 0.5);
    std::vector<double> x(4000);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = i % 3 ? a(rng) : b(rng);
    LloydOptions opts;
    opts.seed = static_cast<std::uint64_t>(trial);
    std::vector<double> trace;
    const QuantizedArray l = quantize_lloyd(x, opts, &trace);
    const double d_lloyd = mean_squared_error(x, dequantize(l));
    const double d_uniform = mean_squared_error(x, dequantize(quantize_uniform(x)));
    c.expect(d_lloyd <= d_uniform, "two-cluster Lloyd " + fmt(d_lloyd) + " > uniform " + fmt(d_uniform));
    c.expect(trace.size() >= 2, "Lloyd trace too short");
    for (std::size_t i = 1; i < trace.size(); ++i)
      c.expect(trace[i] <= trace[i - 1], "Lloyd distortion rose at iteration " + std::to_string(i));
  }
}

//
// 9. compression
//

void compression(Check& c) {
  std::ostringstream os;
  for (const auto& name : corpus::photo_names()) {
    const DenseTensor t = to_tt_order(corpus::load(name));
    app::RunConfig cfg;
    cfg.format = Format::TT;
    cfg.tol = 0.1;
    const app::CompressedImage out = app::compress_tensor(t, cfg);
    c.expect(out.quantized.has_value(), name + " was not compressed");
    if (!out.quantized) continue;
    const auto bytes = encode(*out.quantized);
    const double ratio = static_cast<double>(bytes.size()) / static_cast<double>(t.size());
    const double err = l2_dissimilarity(t, reconstruct(dequantize_network(decode(bytes))));
    c.expect(ratio == compression_ratio(*out.quantized, t), name + " ratio bookkeeping differs from the file size");
    c.expect(ratio < 0.55, name + " ratio " + fmt(ratio));
    c.expect(err <= 0.1, name + " error " + fmt(err));
    os << name.substr(6) << " " << fmt(ratio, 3) << "@" << fmt(err, 3) << " ";
  }
  c.note("ratio@error: " + os.str());
}

//
// 10. detection
//

void detection(Check& c) {
  const DetectionConfig cfg;
  std::vector<std::string> names = corpus::photo_names();
  for (const auto& n : corpus::crop_names()) names.push_back(n);

  struct Eligible {
    std::string name;
    DenseTensor image;
    double clean_residual;
  };
  std::vector<Eligible> eligible;
  double clean_dissimilarity = 0.0;
  for (const auto& n : names) {
    DenseTensor img = corpus::load(n);
    const RobustReconstruction r = robust_reconstruct(img, cfg);
    if (r.residual_norm < cfg.threshold_for(img.size())) {
      clean_dissimilarity += r.residual_norm / frobenius_norm(img);
      eligible.push_back({n, std::move(img), r.residual_norm});
    }
  }
  c.expect(!eligible.empty(), "no bundled image passes the eligibility gate");
  if (eligible.empty()) return;
  clean_dissimilarity /= static_cast<double>(eligible.size());

  std::size_t flagged_noisy = 0, flagged_clean = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eligible& e = eligible[static_cast<std::size_t>(trial) % eligible.size()];
    const DenseTensor noisy = corpus::noise_at_dissimilarity(e.image, 0.05, 5000 + static_cast<std::uint64_t>(trial));
    const DetectionVerdict v = detect(noisy, cfg, e.image);
    c.expect(v.eligible, e.name + " lost eligibility");
    c.expect(l2_dissimilarity(e.image, noisy) >= 0.05 - 1e-12, "noise below 0.05 dissimilarity");
    flagged_noisy += v.flagged;
    c.expect(v.flagged, e.name + " trial " + std::to_string(trial) + " not flagged, residual " + fmt(v.residual_norm));
    const DetectionVerdict clean = detect(e.image, cfg, e.image);
    flagged_clean += clean.flagged;
    c.expect(!clean.flagged, e.name + " clean baseline flagged");
  }

  for (const Eligible& e : eligible) {
    double previous = e.clean_residual;
    for (int step = 1; step <= 10; ++step) {
      const double amplitude = 0.03 * step * cfg.pixel_max;
      const double r = robust_reconstruct(add_uniform_noise(e.image, amplitude, 77), cfg).residual_norm;
      c.expect(r >= previous, e.name + " residual fell at amplitude " + fmt(amplitude) + ": " + fmt(r) + " < " + fmt(previous));
      previous = r;
    }
    // the threshold expressed as a dissimilarity, against the 0.01 to 0.02 band
    const double at_threshold = cfg.threshold_for(e.image.size()) / frobenius_norm(e.image);
    c.expect(at_threshold >= 0.01 / 3.0 && at_threshold <= 0.02 * 3.0,
             e.name + " threshold corresponds to dissimilarity " + fmt(at_threshold));
  }
  c.note(std::to_string(eligible.size()) + " eligible; flagged noisy " + std::to_string(flagged_noisy) + "/50, clean " +
         std::to_string(flagged_clean) + "/50; clean reconstruction dissimilarity " + fmt(clean_dissimilarity, 3));
}

//
// 11. NMI indistinguishability
//

struct Range {
  double lo = 1e300, hi = -1e300;
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double spread() const { return hi - lo; }
};

double gap(const Range& a, const Range& b) { return std::max({0.0, b.lo - a.hi, a.lo - b.hi}); }

void nmi_indistinguishability(Check& c) {
  const auto names = corpus::photo_names();
  std::vector<std::vector<DenseTensor>> cores;
  for (const auto& n : names) cores.push_back(tt_svd(to_tt_order(corpus::load(n)), Tolerance{0.1}).cores);

  auto nmi_of = [](const DenseTensor& a, const DenseTensor& b) { return nmi(a.data(), b.data()).value; };
  Range one, two, random;
  std::mt19937_64 rng(1011);
  int trials = 0;
  for (std::size_t a = 0; a < names.size(); ++a)
    for (std::size_t b = 0; b < names.size(); ++b) {
      if (a == b) continue;
      ++trials;
      const auto& ca = cores[a];
      const auto& cb = cores[b];
      for (std::size_t i = 0; i < ca.size(); ++i)
        for (std::size_t j = i + 1; j < ca.size(); ++j) one.add(nmi_of(ca[i], ca[j]));
      for (std::size_t i = 0; i < ca.size(); ++i)
        for (std::size_t j = 0; j < cb.size(); ++j) two.add(nmi_of(ca[i], cb[j]));
      std::vector<DenseTensor> rand;
      for (const auto& core : ca) rand.push_back(oracle::random_tensor(core.shape(), rng));
      for (std::size_t i = 0; i < rand.size(); ++i)
        for (std::size_t j = i + 1; j < rand.size(); ++j) random.add(nmi_of(rand[i], rand[j]));
    }
  c.expect(trials == 20, "expected 20 ordered image pairs");
  const double allowed = std::max({one.spread(), two.spread(), random.spread()});
  const double worst = std::max({gap(one, two), gap(one, random), gap(two, random)});
  c.expect(worst <= allowed, "groups separated by " + fmt(worst) + " > within-group spread " + fmt(allowed));
  c.note("one-image [" + fmt(one.lo, 3) + ", " + fmt(one.hi, 3) + "], two-image [" + fmt(two.lo, 3) + ", " + fmt(two.hi, 3) +
         "], random [" + fmt(random.lo, 3) + ", " + fmt(random.hi, 3) + "]");
}

//
// 12. TNZ format
//

void tnz_format(Check& c) {
  std::mt19937_64 rng(1012);
  const Shape s{5, 4, 6};
  const TensorNetwork nets[] = {to_network(oracle::random_cp(s, 3, rng, false)),
                                to_network(oracle::random_tucker(s, {2, 3, 2}, rng)),
                                to_network(oracle::random_ht(s, 2, rng)),
                                to_network(oracle::random_tt(s, {1, 2, 3, 1}, rng))};
  for (const auto& net : nets) {
    for (auto choice : {QuantizerChoice::Uniform, QuantizerChoice::Lloyd}) {
      QuantizerSettings qs;
      qs.choice = choice;
      const QuantizedNetwork q = quantize_network(net, qs);
      const auto bytes = encode(q);
      const QuantizedNetwork back = decode(bytes);
      bool codes_equal = back.blocks.size() == q.blocks.size();
      for (std::size_t i = 0; codes_equal && i < q.blocks.size(); ++i) codes_equal = back.blocks[i].codes == q.blocks[i].codes;
      const std::string tag = std::string(to_string(net.format())) + (choice == QuantizerChoice::Lloyd ? "/lloyd" : "/uniform");
      c.expect(codes_equal, tag + " codes changed in the roundtrip");
      c.expect(encode(back) == bytes, tag + " re-encoding differs");

      auto damaged = bytes;
      damaged[damaged.size() / 2] ^= 0x01;
      try {
        decode(damaged);
        c.expect(false, tag + " damaged payload decoded");
      } catch (const Error& e) {
        c.expect(e.code() == ErrorCode::CorruptFile, tag + " damaged payload gave " + std::string(to_string(e.code())));
      }
    }
  }

  const fs::path dir = fs::temp_directory_path() / ("tnshield_acceptance_" + std::to_string(::getpid()));
  std::vector<fs::path> inputs;
  for (const auto& n : corpus::crop_names()) inputs.push_back(corpus::image_path(n));
  inputs.push_back(corpus::image_path("photo_ihc"));
  app::RunConfig serial, parallel;
  serial.jobs = 1;
  parallel.jobs = 4;
  const auto a = app::cmd_compress(inputs, serial, dir / "serial");
  const auto b = app::cmd_compress(inputs, parallel, dir / "parallel");
  auto strip = [](json r) {
    r = app::stable_view(r);
    for (auto& item : r["results"]) item.erase("output");
    return r.dump();
  };
  c.expect(strip(a.body) == strip(b.body), "batch report depends on the worker count");
  for (const auto& p : inputs) {
    const std::string f = p.stem().string() + ".tnz";
    c.expect(read_file(dir / "serial" / f) == read_file(dir / "parallel" / f), f + " differs between worker counts");
  }
  fs::remove_all(dir);
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<void(Check&)> run;
  };
  const std::vector<Criterion> criteria{
      {1, "storage formulas", 1.0, storage_formulas},
      {2, "TT-SVD error contract", 5.0, tt_error_contract},
      {3, "exact recovery", 10.0, exact_recovery},
      {4, "brute-force equivalence", 1.0, brute_force},
      {5, "robust SVD", 1.0, robust_svd_properties},
      {6, "slope oracle", 1.0, slope_oracle},
      {7, "directional slope laws", 30.0, slope_laws},
      {8, "quantization bounds", 5.0, quantization_bounds},
      {9, "compression", 30.0, compression},
      {10, "detection", 60.0, detection},
      {11, "NMI indistinguishability", 60.0, nmi_indistinguishability},
      {12, "TNZ format", 5.0, tnz_format},
  };

  int failures = 0;
  for (const auto& cr : criteria) {
    Check check;
    const auto start = std::chrono::steady_clock::now();
    try {
      cr.run(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    check.expect(elapsed < cr.budget_s, "took " + fmt(elapsed, 3) + " s, budget " + fmt(cr.budget_s) + " s");
    const bool ok = check.passed();
    failures += !ok;
    std::printf("%s %2d %-26s %7.3f s  %s\n", ok ? "PASS" : "FAIL", cr.id, cr.name, elapsed, check.summary().c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
