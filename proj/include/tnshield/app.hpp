#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tnshield/analysis.hpp"
#include "tnshield/detect.hpp"
#include "tnshield/image_io.hpp"
#include "tnshield/network.hpp"
#include "tnshield/quantize.hpp"
#include "tnshield/tnz.hpp"

// Command implementations behind the tnshield executable. Every command returns
// a JSON report; per-item failures are recorded inline and never abort a batch.

namespace tnshield::app {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kFatal = 1, kUsage = 2 };

struct RunConfig {
  Format format = Format::TT;
  /// Relative error target; used when no ranks are given (default 0.1).
  std::optional<double> tol;
  std::vector<std::size_t> ranks;
  bool robust = false;
  RobustBinConfig robust_bins;
  QuantizerSettings quantizer;
  DetectionConfig detection;
  CPOptions cp;
  std::size_t cp_default_rank = 16;
  std::uint64_t seed = 0;
  std::optional<std::size_t> jobs;
  /// Extra decompositions at a tighter tolerance when quantization pushes the error over the target.
  std::size_t compress_retries = 4;
  std::size_t nmi_bins = 256;
  NmiNormalization nmi_normalization = NmiNormalization::Arithmetic;
  std::vector<double> levels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  PerturbMode perturb_mode = PerturbMode::AdditiveUniform;
  std::optional<std::size_t> selector;

  double target_tol() const { return tol.value_or(0.1); }

  RankPolicy policy(double tolerance) const {
    if (!ranks.empty()) return MaxRanks{ranks};
    return Tolerance{tolerance};
  }

  void validate() const {
    auto bad = [](const std::string& m) { fail(ErrorCode::InvalidConfig, m); };
    if (tol && !(*tol >= 0.0 && std::isfinite(*tol))) bad("tol must be a non-negative number");
    for (auto r : ranks)
      if (r == 0) bad("ranks must be positive");
    try {
      robust_bins.validate();
    } catch (const Error& e) {
      bad(e.what());
    }
    detection.validate();
    if (cp.max_iter == 0) bad("cp_max_iter must be positive");
    if (!(cp.failure_threshold > 0.0)) bad("cp_failure_threshold must be positive");
    if (cp_default_rank == 0) bad("cp rank must be positive");
    if (jobs && *jobs == 0) bad("jobs must be positive");
    if (nmi_bins < 2) bad("nmi_bins must be at least 2");
    if (quantizer.lloyd.max_iter == 0) bad("lloyd_max_iter must be positive");
    for (double l : levels)
      if (!(l >= 0.0 && std::isfinite(l))) bad("perturbation levels must be non-negative");
    if (levels.empty()) bad("at least one perturbation level is required");
  }
};

//
// config files
//

namespace detail {

template <typename T>
T get_as(const json& v, const std::string& key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    fail(ErrorCode::InvalidConfig, "config key '" + key + "' has the wrong type");
  }
}

inline QuantKind parse_kind(const std::string& s) {
  if (s == "uniform") return QuantKind::Uniform;
  if (s == "lloyd") return QuantKind::Lloyd;
  fail(ErrorCode::InvalidConfig, "unknown quantizer '" + s + "'");
}

inline QuantizerChoice parse_quantizer(const std::string& s) {
  if (s == "auto") return QuantizerChoice::Auto;
  if (s == "uniform") return QuantizerChoice::Uniform;
  if (s == "lloyd") return QuantizerChoice::Lloyd;
  fail(ErrorCode::InvalidConfig, "unknown quantizer '" + s + "'");
}

inline PerturbMode parse_mode(const std::string& s) {
  if (s == "additive" || s == "additive-uniform") return PerturbMode::AdditiveUniform;
  if (s == "randomize" || s == "randomize-sequence") return PerturbMode::RandomizeSequence;
  fail(ErrorCode::InvalidConfig, "unknown perturbation mode '" + s + "'");
}

inline Format parse_format_config(const std::string& s) {
  try {
    return parse_format(s);
  } catch (const Error&) {
    fail(ErrorCode::InvalidConfig, "unknown format '" + s + "'");
  }
}

using Setter = std::function<void(RunConfig&, const json&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters{
      {"format", [](RunConfig& c, const json& v, const std::string& k) { c.format = parse_format_config(get_as<std::string>(v, k)); }},
      {"tol", [](RunConfig& c, const json& v, const std::string& k) { c.tol = get_as<double>(v, k); }},
      {"ranks", [](RunConfig& c, const json& v, const std::string& k) { c.ranks = get_as<std::vector<std::size_t>>(v, k); }},
      {"robust", [](RunConfig& c, const json& v, const std::string& k) { c.robust = get_as<bool>(v, k); }},
      {"alpha", [](RunConfig& c, const json& v, const std::string& k) {
         c.robust_bins.alpha = get_as<double>(v, k);
         c.detection.alpha = c.robust_bins.alpha;
       }},
      {"beta", [](RunConfig& c, const json& v, const std::string& k) { c.robust_bins.beta = get_as<double>(v, k); }},
      {"max_bins", [](RunConfig& c, const json& v, const std::string& k) {
         c.robust_bins.max_bins = get_as<std::size_t>(v, k);
         c.detection.max_bins = c.robust_bins.max_bins;
       }},
      {"quantizer", [](RunConfig& c, const json& v, const std::string& k) { c.quantizer.choice = parse_quantizer(get_as<std::string>(v, k)); }},
      {"quantizer_overrides", [](RunConfig& c, const json& v, const std::string& k) {
         if (!v.is_array()) fail(ErrorCode::InvalidConfig, "config key '" + k + "' must be an array");
         c.quantizer.overrides.clear();
         for (const auto& e : v) {
           if (e.is_null())
             c.quantizer.overrides.emplace_back(std::nullopt);
           else
             c.quantizer.overrides.emplace_back(parse_kind(get_as<std::string>(e, k)));
         }
       }},
      {"kurtosis_threshold", [](RunConfig& c, const json& v, const std::string& k) { c.quantizer.kurtosis_threshold = get_as<double>(v, k); }},
      {"lloyd_max_iter", [](RunConfig& c, const json& v, const std::string& k) { c.quantizer.lloyd.max_iter = get_as<std::size_t>(v, k); }},
      {"lloyd_tol", [](RunConfig& c, const json& v, const std::string& k) { c.quantizer.lloyd.tol = get_as<double>(v, k); }},
      {"slope", [](RunConfig& c, const json& v, const std::string& k) { c.detection.target_slope = get_as<double>(v, k); }},
      {"trunc", [](RunConfig& c, const json& v, const std::string& k) { c.detection.truncation_error = get_as<double>(v, k); }},
      {"threshold", [](RunConfig& c, const json& v, const std::string& k) { c.detection.l2_threshold = get_as<double>(v, k); }},
      {"pixel_max", [](RunConfig& c, const json& v, const std::string& k) { c.detection.pixel_max = get_as<double>(v, k); }},
      {"reference_elements", [](RunConfig& c, const json& v, const std::string& k) { c.detection.reference_elements = get_as<std::size_t>(v, k); }},
      {"seed", [](RunConfig& c, const json& v, const std::string& k) { c.seed = get_as<std::uint64_t>(v, k); }},
      {"jobs", [](RunConfig& c, const json& v, const std::string& k) { c.jobs = get_as<std::size_t>(v, k); }},
      {"cp_rank", [](RunConfig& c, const json& v, const std::string& k) { c.cp_default_rank = get_as<std::size_t>(v, k); }},
      {"cp_max_iter", [](RunConfig& c, const json& v, const std::string& k) { c.cp.max_iter = get_as<std::size_t>(v, k); }},
      {"cp_tol", [](RunConfig& c, const json& v, const std::string& k) { c.cp.tol = get_as<double>(v, k); }},
      {"cp_failure_threshold", [](RunConfig& c, const json& v, const std::string& k) { c.cp.failure_threshold = get_as<double>(v, k); }},
      {"compress_retries", [](RunConfig& c, const json& v, const std::string& k) { c.compress_retries = get_as<std::size_t>(v, k); }},
      {"nmi_bins", [](RunConfig& c, const json& v, const std::string& k) { c.nmi_bins = get_as<std::size_t>(v, k); }},
      {"nmi_normalization", [](RunConfig& c, const json& v, const std::string& k) {
         const auto s = get_as<std::string>(v, k);
         if (s == "arithmetic")
           c.nmi_normalization = NmiNormalization::Arithmetic;
         else if (s == "geometric")
           c.nmi_normalization = NmiNormalization::Geometric;
         else
           fail(ErrorCode::InvalidConfig, "unknown nmi normalization '" + s + "'");
       }},
      {"levels", [](RunConfig& c, const json& v, const std::string& k) { c.levels = get_as<std::vector<double>>(v, k); }},
      {"mode", [](RunConfig& c, const json& v, const std::string& k) { c.perturb_mode = parse_mode(get_as<std::string>(v, k)); }},
      {"selector", [](RunConfig& c, const json& v, const std::string& k) {
         if (v.is_null())
           c.selector.reset();
         else
           c.selector = get_as<std::size_t>(v, k);
       }},
  };
  return setters;
}

}  // namespace detail

/// Applies a JSON object of settings; unknown keys and wrong types are rejected.
inline void apply_config(RunConfig& cfg, const json& doc) {
  if (!doc.is_object()) fail(ErrorCode::InvalidConfig, "config must be a JSON object");
  const auto& setters = detail::config_setters();
  for (const auto& [key, value] : doc.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) fail(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    it->second(cfg, value, key);
  }
}

inline void load_config_file(RunConfig& cfg, const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::InvalidConfig, "cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::InvalidConfig, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  apply_config(cfg, doc);
}

/// Explicit setting first, then TNSHIELD_JOBS, then 1.
inline std::size_t resolve_jobs(const RunConfig& cfg) {
  if (cfg.jobs) return *cfg.jobs;
  if (const char* env = std::getenv("TNSHIELD_JOBS"); env && *env) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (*end != '\0' || v == 0) fail(ErrorCode::InvalidConfig, "TNSHIELD_JOBS must be a positive integer");
    return v;
  }
  return 1;
}

inline json config_echo(const RunConfig& cfg) {
  json j;
  j["format"] = std::string(to_string(cfg.format));
  if (cfg.ranks.empty())
    j["tol"] = cfg.target_tol();
  else
    j["ranks"] = cfg.ranks;
  j["robust"] = cfg.robust;
  j["beta"] = cfg.robust_bins.beta;
  j["alpha"] = cfg.robust_bins.alpha ? json(*cfg.robust_bins.alpha) : json(nullptr);
  j["seed"] = cfg.seed;
  return j;
}

//
// parallel execution
//

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Results land at their
/// index, so the output never depends on scheduling.
template <typename T>
std::vector<T> parallel_map(std::size_t n, std::size_t jobs, const std::function<T(std::size_t)>& fn) {
  std::vector<T> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

//
// shared helpers
//

struct Report {
  json body;
  int exit_code = kOk;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

inline json error_entry(const std::string& input, const std::exception& e) {
  json j;
  j["input"] = input;
  j["status"] = "error";
  if (const auto* err = dynamic_cast<const Error*>(&e))
    j["error_code"] = std::string(to_string(err->code()));
  else
    j["error_code"] = "Internal";
  j["message"] = e.what();
  return j;
}

inline const char* kind_name(QuantKind k) { return k == QuantKind::Lloyd ? "lloyd" : "uniform"; }

inline std::vector<std::string> subtensor_labels(const NetworkLayout& layout) {
  std::vector<std::string> labels;
  const std::size_t d = layout.shape.size();
  switch (layout.format) {
    case Format::CP:
      for (std::size_t k = 1; k <= d; ++k) labels.push_back("U" + std::to_string(k));
      break;
    case Format::TD:
      labels.push_back("G");
      for (std::size_t k = 1; k <= d; ++k) labels.push_back("U" + std::to_string(k));
      break;
    case Format::HT: {
      const auto tree = DimensionTree::balanced(d);
      for (std::size_t i = 0; i < tree.size(); ++i) {
        const auto& n = tree[i];
        std::string name = n.is_leaf() ? "U" : "B";
        for (std::size_t m = 0; m < n.mode_count; ++m) name += std::to_string(n.first_mode + m + 1);
        labels.push_back(name);
      }
      break;
    }
    case Format::TT:
      for (std::size_t k = 1; k <= d; ++k) labels.push_back("G" + std::to_string(k));
      break;
  }
  return labels;
}

inline int batch_exit_code(const json& results) {
  if (results.empty()) return kOk;
  for (const auto& r : results)
    if (r.value("status", "") != "error") return kOk;
  return kFatal;
}

inline std::string stem_of(const fs::path& p) { return p.stem().string(); }

/// Loads an image as a tensor in the configured pixel scale.
inline DenseTensor load_scaled(const fs::path& path, const RunConfig& cfg) {
  DenseTensor img = read_image(path);
  const double scale = cfg.detection.pixel_max / 255.0;
  if (scale != 1.0)
    for (auto& v : img.data()) v *= scale;
  return img;
}

}  // namespace detail

//
// decomposition
//

using Decomposition = std::variant<TensorNetwork, DecompositionFailure>;

inline Decomposition decompose(const DenseTensor& t, const RunConfig& cfg, double tolerance) {
  const RankPolicy policy = cfg.policy(tolerance);
  switch (cfg.format) {
    case Format::TT: {
      std::optional<RobustBinConfig> robust;
      if (cfg.robust) robust = cfg.robust_bins;
      return to_network(tt_svd(t, policy, robust));
    }
    case Format::TD: return to_network(tucker_decompose(t, policy));
    case Format::HT: return to_network(ht_decompose(t, policy));
    case Format::CP: {
      CPOptions opts = cfg.cp;
      opts.rank = cfg.ranks.empty() ? cfg.cp_default_rank : cfg.ranks.front();
      opts.seed = cfg.seed;
      CPResult r = cp_als(t, opts);
      if (auto* f = std::get_if<DecompositionFailure>(&r)) return *f;
      return to_network(std::move(std::get<CPTensor>(r)));
    }
  }
  fail(ErrorCode::InvalidArgument, "unknown format");
}

inline QuantizerSettings seeded_quantizer(const RunConfig& cfg) {
  QuantizerSettings q = cfg.quantizer;
  q.lloyd.seed = cfg.seed;
  return q;
}

struct CompressedImage {
  std::optional<QuantizedNetwork> quantized;
  std::optional<DecompositionFailure> failure;
  double error = 0.0;
  double decomposition_tol = 0.0;
  std::size_t attempts = 0;
};

/// Decompose and quantize `t` (already in TT mode order). In tolerance mode the
/// first decomposition runs at 0.9 * tol so that the 8-bit coding fits in the
/// remaining budget; if the end-to-end error still exceeds tol the tolerance is
/// tightened and the decomposition repeated.
inline CompressedImage compress_tensor(const DenseTensor& t, const RunConfig& cfg) {
  CompressedImage out;
  const bool tolerance_mode = cfg.ranks.empty();
  const double target = cfg.target_tol();
  double eps = 0.9 * target;
  for (std::size_t attempt = 0; attempt <= cfg.compress_retries; ++attempt) {
    out.attempts = attempt + 1;
    out.decomposition_tol = eps;
    Decomposition d = decompose(t, cfg, eps);
    if (auto* f = std::get_if<DecompositionFailure>(&d)) {
      out.failure = *f;
      out.quantized.reset();
      return out;
    }
    QuantizedNetwork q = quantize_network(std::get<TensorNetwork>(d), seeded_quantizer(cfg));
    out.error = l2_dissimilarity(t, reconstruct(dequantize_network(q)));
    out.quantized = std::move(q);
    if (!tolerance_mode || out.error <= target) break;
    eps *= std::min(0.8, target / out.error);
  }
  return out;
}

//
// commands
//

inline Report cmd_compress(const std::vector<fs::path>& inputs, const RunConfig& cfg, const fs::path& output_dir) {
  cfg.validate();
  if (inputs.empty()) fail(ErrorCode::InvalidConfig, "compress needs at least one input image");
  const std::size_t jobs = resolve_jobs(cfg);
  fs::create_directories(output_dir);

  struct Item {
    json result, timing;
  };
  const auto items = parallel_map<Item>(inputs.size(), jobs, [&](std::size_t i) {
    const fs::path& input = inputs[i];
    Item item;
    item.timing["input"] = input.string();
    try {
      const auto t0 = detail::Clock::now();
      const DenseTensor image = read_image(input);
      const DenseTensor t = to_tt_order(image);
      const CompressedImage c = compress_tensor(t, cfg);
      item.timing["compress_ms"] = detail::ms_since(t0);

      json& r = item.result;
      r["input"] = input.string();
      r["format"] = std::string(to_string(cfg.format));
      r["shape"] = t.shape();
      if (c.failure) {
        r["status"] = "failed";
        r["reason"] = c.failure->reason;
        r["best_error"] = c.failure->best_error;
        r["iterations"] = c.failure->iterations;
        r["compression_ratio"] = 1.0;
        r["output"] = nullptr;
        return item;
      }
      const QuantizedNetwork& q = *c.quantized;
      const auto bytes = encode(q);
      const fs::path out_path = output_dir / (detail::stem_of(input) + ".tnz");
      write_file(out_path, bytes);

      const auto t1 = detail::Clock::now();
      const DenseTensor back = reconstruct(dequantize_network(decode(bytes)));
      item.timing["decompress_ms"] = detail::ms_since(t1);

      r["status"] = "ok";
      r["output"] = out_path.string();
      r["ranks"] = q.layout.ranks;
      r["storage_count"] = code_count(q);
      r["compressed_bytes"] = bytes.size();
      r["original_bytes"] = t.size();
      r["compression_ratio"] = compression_ratio(q, t);
      r["reconstruction_error"] = l2_dissimilarity(t, back);
      if (cfg.ranks.empty()) {
        r["tolerance"] = cfg.target_tol();
        r["decomposition_tolerance"] = c.decomposition_tol;
        r["tolerance_met"] = c.error <= cfg.target_tol();
      }
      r["attempts"] = c.attempts;
      json kinds = json::array();
      for (const auto& b : q.blocks) kinds.push_back(detail::kind_name(b.codebook.kind));
      r["quantizers"] = kinds;
    } catch (const std::exception& e) {
      item.result = detail::error_entry(input.string(), e);
    }
    return item;
  });

  Report rep;
  json results = json::array(), timings = json::array();
  std::size_t ok = 0, failed = 0, errors = 0;
  double ratio_sum = 0.0;
  for (const auto& it : items) {
    results.push_back(it.result);
    timings.push_back(it.timing);
    const std::string status = it.result["status"];
    if (status == "ok") {
      ++ok;
      ratio_sum += it.result["compression_ratio"].get<double>();
    } else if (status == "failed") {
      ++failed;
    } else {
      ++errors;
    }
  }
  json warnings = json::array();
  for (const auto& r : results) {
    if (r["status"] == "failed")
      warnings.push_back(r["input"].get<std::string>() + ": decomposition failed (" + r["reason"].get<std::string>() + ")");
    else if (r.value("tolerance_met", true) == false)
      warnings.push_back(r["input"].get<std::string>() + ": error above the tolerance after quantization");
  }
  rep.body["command"] = "compress";
  rep.body["config"] = config_echo(cfg);
  rep.body["results"] = results;
  rep.body["warnings"] = warnings;
  rep.body["summary"] = {{"images", inputs.size()}, {"ok", ok}, {"failed", failed}, {"errors", errors},
                         {"mean_compression_ratio", ok ? json(ratio_sum / static_cast<double>(ok)) : json(nullptr)}};
  rep.body["timings"] = timings;
  rep.body["runtime"] = {{"jobs", jobs}};
  rep.exit_code = detail::batch_exit_code(results);
  return rep;
}

inline Report cmd_decompress(const std::vector<fs::path>& inputs, const RunConfig& cfg, const fs::path& output_dir,
                             const std::optional<fs::path>& output_file, const std::vector<fs::path>& references) {
  cfg.validate();
  if (inputs.empty()) fail(ErrorCode::InvalidConfig, "decompress needs at least one .tnz input");
  if (output_file && inputs.size() != 1) fail(ErrorCode::InvalidConfig, "--output needs exactly one input");
  if (!references.empty() && references.size() != inputs.size())
    fail(ErrorCode::InvalidConfig, "give one reference image per input");
  const std::size_t jobs = resolve_jobs(cfg);
  if (!output_file) fs::create_directories(output_dir);

  struct Item {
    json result, timing;
  };
  const auto items = parallel_map<Item>(inputs.size(), jobs, [&](std::size_t i) {
    const fs::path& input = inputs[i];
    Item item;
    item.timing["input"] = input.string();
    try {
      const auto t0 = detail::Clock::now();
      const QuantizedNetwork q = load_tnz(input);
      const DenseTensor t = reconstruct(dequantize_network(q));
      item.timing["decompress_ms"] = detail::ms_since(t0);
      json& r = item.result;
      r["input"] = input.string();
      r["format"] = std::string(to_string(q.layout.format));
      r["shape"] = q.layout.shape;
      r["ranks"] = q.layout.ranks;
      if (t.order() != 2 && !(t.order() == 3 && t.dim(1) == 3)) {
        r["status"] = "error";
        r["error_code"] = "ShapeMismatch";
        r["message"] = "decoded tensor is not an image in (rows, channels, columns) order";
        return item;
      }
      // errors describe the 8-bit image as written, not the float reconstruction
      DenseTensor image = from_tt_order(t);
      for (auto& v : image.data()) v = static_cast<double>(tnshield::detail::to_byte(v));
      const fs::path out_path = output_file ? *output_file : output_dir / (detail::stem_of(input) + ".png");
      write_image(out_path, image);
      r["status"] = "ok";
      r["output"] = out_path.string();
      if (!references.empty()) {
        const DenseTensor ref = read_image(references[i]);
        r["reference"] = references[i].string();
        r["reconstruction_error"] = l2_dissimilarity(ref, image);
        double m = 0.0;
        for (std::size_t k = 0; k < ref.size(); ++k) m = std::max(m, std::abs(ref[k] - image[k]));
        r["max_abs_error"] = m;
      }
    } catch (const std::exception& e) {
      item.result = detail::error_entry(input.string(), e);
    }
    return item;
  });

  Report rep;
  json results = json::array(), timings = json::array();
  std::size_t errors = 0;
  for (const auto& it : items) {
    results.push_back(it.result);
    timings.push_back(it.timing);
    if (it.result["status"] != "ok") ++errors;
  }
  rep.body["command"] = "decompress";
  rep.body["results"] = results;
  rep.body["summary"] = {{"files", inputs.size()}, {"ok", inputs.size() - errors}, {"errors", errors}};
  rep.body["timings"] = timings;
  rep.body["runtime"] = {{"jobs", jobs}};
  rep.exit_code = detail::batch_exit_code(results);
  return rep;
}

inline json nmi_matrix(const QuantizedNetwork& q, const RunConfig& cfg) {
  const TensorNetwork net = dequantize_network(q);
  const auto blocks = subtensors(net);
  const std::size_t n = blocks.size();
  json matrix = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < n; ++j)
      row.push_back(nmi(blocks[i].get().data(), blocks[j].get().data(), cfg.nmi_bins, cfg.nmi_normalization).value);
    matrix.push_back(row);
  }
  return {{"labels", detail::subtensor_labels(q.layout)}, {"bins", cfg.nmi_bins}, {"matrix", matrix}};
}

inline Report cmd_analyze(const std::vector<fs::path>& inputs, const RunConfig& cfg, bool with_nmi, bool with_spectra) {
  cfg.validate();
  if (inputs.empty()) fail(ErrorCode::InvalidConfig, "analyze needs at least one input");
  const std::size_t jobs = resolve_jobs(cfg);

  const auto results = parallel_map<json>(inputs.size(), jobs, [&](std::size_t i) {
    const fs::path& input = inputs[i];
    json r;
    r["input"] = input.string();
    try {
      if (tnshield::detail::lower_extension(input) == ".tnz") {
        const QuantizedNetwork q = load_tnz(input);
        r["kind"] = "network";
        r["format"] = std::string(to_string(q.layout.format));
        r["shape"] = q.layout.shape;
        r["ranks"] = q.layout.ranks;
        if (with_nmi) r["nmi"] = nmi_matrix(q, cfg);
        r["status"] = "ok";
        return r;
      }
      const DenseTensor image = detail::load_scaled(input, cfg);
      const DenseTensor t = to_tt_order(image);
      r["kind"] = "image";
      r["shape"] = t.shape();
      try {
        const SlopeReport s = tt_svd_slope(t);
        r["mean_slope"] = s.mean_slope;
        json steps = json::array();
        for (const auto& e : s.steps) steps.push_back({{"slope", e.slope}, {"std_error", e.std_error}, {"lo", e.lo}, {"hi", e.hi}});
        r["steps"] = steps;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NonPositiveValue && e.code() != ErrorCode::InsufficientRank) throw;
        r["mean_slope"] = nullptr;
        r["slope_error"] = e.what();
      }
      if (with_spectra) {
        json spectra = json::array();
        for (const Vector& s : tt_sweep_spectra(t)) spectra.push_back(std::vector<double>(s.data(), s.data() + s.size()));
        r["spectra"] = spectra;
      }
      if (with_nmi) {
        Decomposition d = decompose(t, cfg, cfg.target_tol());
        if (auto* net = std::get_if<TensorNetwork>(&d))
          r["nmi"] = nmi_matrix(quantize_network(*net, seeded_quantizer(cfg)), cfg);
        else
          r["nmi"] = nullptr;
      }
      r["status"] = "ok";
    } catch (const std::exception& e) {
      return detail::error_entry(input.string(), e);
    }
    return r;
  });

  std::vector<double> slopes;
  std::size_t errors = 0;
  for (const auto& r : results) {
    if (r["status"] != "ok") ++errors;
    if (r.contains("mean_slope") && r["mean_slope"].is_number()) slopes.push_back(r["mean_slope"].get<double>());
  }
  const SlopeSummary s = summarize_slopes(slopes);
  Report rep;
  rep.body["command"] = "analyze";
  rep.body["results"] = results;
  rep.body["summary"] = {{"inputs", inputs.size()},
                         {"errors", errors},
                         {"slope_count", s.count},
                         {"mean_slope", s.count ? json(s.mean) : json(nullptr)},
                         {"population_std", s.count ? json(s.population_std) : json(nullptr)}};
  rep.body["runtime"] = {{"jobs", jobs}};
  rep.exit_code = detail::batch_exit_code(results);
  return rep;
}

inline json verdict_json(const DetectionVerdict& v) {
  json j;
  j["eligible"] = v.eligible;
  j["eligibility_assumed"] = v.eligibility_assumed;
  j["flagged"] = v.flagged;
  j["residual_norm"] = v.residual_norm;
  j["baseline_residual"] = v.baseline_residual ? json(*v.baseline_residual) : json(nullptr);
  j["threshold"] = v.threshold;
  j["reconstruction_dissimilarity"] = v.reconstruction_dissimilarity;
  return j;
}

inline Report cmd_detect(const std::vector<fs::path>& inputs, const std::vector<fs::path>& baselines, const RunConfig& cfg) {
  cfg.validate();
  if (inputs.empty()) fail(ErrorCode::InvalidConfig, "detect needs at least one input image");
  if (!baselines.empty() && baselines.size() != inputs.size())
    fail(ErrorCode::InvalidConfig, "give one baseline per input image (or none)");
  const std::size_t jobs = resolve_jobs(cfg);

  const auto results = parallel_map<json>(inputs.size(), jobs, [&](std::size_t i) {
    try {
      const DenseTensor image = detail::load_scaled(inputs[i], cfg);
      std::optional<DenseTensor> baseline;
      if (!baselines.empty()) baseline = detail::load_scaled(baselines[i], cfg);
      json r;
      r["input"] = inputs[i].string();
      r["baseline"] = baselines.empty() ? json(nullptr) : json(baselines[i].string());
      r["status"] = "ok";
      r.update(verdict_json(detect(image, cfg.detection, baseline)));
      return r;
    } catch (const std::exception& e) {
      return detail::error_entry(inputs[i].string(), e);
    }
  });

  std::size_t eligible = 0, flagged = 0, assumed = 0, errors = 0;
  for (const auto& r : results) {
    if (r["status"] != "ok") {
      ++errors;
      continue;
    }
    eligible += r["eligible"].get<bool>();
    flagged += r["flagged"].get<bool>();
    assumed += r["eligibility_assumed"].get<bool>();
  }
  Report rep;
  rep.body["command"] = "detect";
  rep.body["config"] = {{"target_slope", cfg.detection.target_slope},
                        {"truncation_error", cfg.detection.truncation_error},
                        {"l2_threshold", cfg.detection.l2_threshold},
                        {"pixel_max", cfg.detection.pixel_max}};
  rep.body["results"] = results;
  rep.body["summary"] = {{"images", inputs.size()},
                         {"errors", errors},
                         {"eligible", eligible},
                         {"not_eligible", inputs.size() - errors - eligible},
                         {"flagged", flagged},
                         {"eligibility_assumed", assumed}};
  rep.body["runtime"] = {{"jobs", jobs}};
  rep.exit_code = detail::batch_exit_code(results);
  return rep;
}

/// Perturbs one subtensor of a stored network at each level. Distortion is the
/// normalized l2 distance between reconstructions of the perturbed and the
/// original network, in double precision ("distortion") and after re-coding
/// the perturbed subtensor for storage ("stored_distortion").
inline Report cmd_perturb(const fs::path& input, const RunConfig& cfg, const fs::path& output_dir) {
  cfg.validate();
  const std::size_t jobs = resolve_jobs(cfg);
  const QuantizedNetwork q = load_tnz(input);
  const TensorNetwork net = dequantize_network(q);
  const std::size_t target = resolve_selector(net, cfg.selector, cfg.seed);
  const DenseTensor base = reconstruct(net);
  fs::create_directories(output_dir);
  const QuantizerSettings settings = seeded_quantizer(cfg);

  const auto series = parallel_map<json>(cfg.levels.size(), jobs, [&](std::size_t i) {
    const double level = cfg.levels[i];
    const TensorNetwork perturbed = perturb_subtensor(net, target, level, cfg.perturb_mode, cfg.seed);

    QuantizedNetwork stored = q;
    QuantizedArray& block = stored.blocks[target];
    if (cfg.perturb_mode == PerturbMode::RandomizeSequence) {
      // shuffling codes with the same generator permutes exactly like the values
      std::mt19937_64 rng(cfg.seed);
      std::shuffle(block.codes.begin(), block.codes.end(), rng);
    } else if (level > 0.0) {
      const auto values = subtensors(perturbed)[target].get().data();
      block = quantize_block(values, block.codebook.kind, settings.lloyd);
    }
    std::ostringstream name;
    name << detail::stem_of(input) << "_s" << target << "_" << i << ".tnz";
    const fs::path out_path = output_dir / name.str();
    save_tnz(out_path, stored);

    json p;
    p["level"] = level;
    p["distortion"] = l2_dissimilarity(base, reconstruct(perturbed));
    p["stored_distortion"] = l2_dissimilarity(base, reconstruct(dequantize_network(stored)));
    p["output"] = out_path.string();
    return p;
  });

  Report rep;
  rep.body["command"] = "perturb";
  rep.body["input"] = input.string();
  rep.body["format"] = std::string(to_string(q.layout.format));
  rep.body["subtensor"] = target;
  rep.body["subtensor_label"] = detail::subtensor_labels(q.layout)[target];
  rep.body["subtensor_count"] = q.blocks.size();
  rep.body["mode"] = cfg.perturb_mode == PerturbMode::AdditiveUniform ? "additive-uniform" : "randomize-sequence";
  rep.body["seed"] = cfg.seed;
  rep.body["series"] = series;
  rep.body["runtime"] = {{"jobs", jobs}};
  return rep;
}

/// Drops the keys that legitimately vary between runs (timings, thread count).
inline json stable_view(json report) {
  report.erase("timings");
  report.erase("runtime");
  return report;
}

}  // namespace tnshield::app
