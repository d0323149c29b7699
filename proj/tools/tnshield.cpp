#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "tnshield/app.hpp"

namespace fs = std::filesystem;
using namespace tnshield;
using tnshield::app::json;

namespace {

// Options shared by every subcommand. Values are bound to locals and applied
// only when the flag was actually given, so they override the config file.
struct CommonFlags {
  std::string config;
  std::string report;
  std::string format;
  double tol = 0.0;
  std::vector<std::size_t> ranks;
  bool robust = false;
  double alpha = 0.0;
  double beta = 0.0;
  std::size_t max_bins = 0;
  double slope = 0.0;
  double trunc = 0.0;
  double threshold = 0.0;
  double pixel_max = 0.0;
  std::uint64_t seed = 0;
  std::size_t jobs = 0;
  std::string quantizer;
  std::size_t cp_rank = 0;

  std::vector<std::pair<std::string, CLI::Option*>> given;

  void attach(CLI::App& sub) {
    sub.add_option("--config", config, "JSON config file (flags override it)")->check(CLI::ExistingFile);
    sub.add_option("--report", report, "Write the JSON report here instead of stdout");
    given = {
        {"format", sub.add_option("--format", format, "Tensor network format: CP, TD, HT or TT")},
        {"tol", sub.add_option("--tol", tol, "Relative error target (default 0.1)")},
        {"ranks", sub.add_option("--ranks", ranks, "Explicit rank caps; overrides --tol")->delimiter(',')},
        {"robust", sub.add_flag("--robust", robust, "Use the robust binned SVD kernel (TT only)")},
        {"alpha", sub.add_option("--alpha", alpha, "Robust kernel tail threshold")},
        {"beta", sub.add_option("--beta", beta, "Robust kernel bin growth rate")},
        {"max_bins", sub.add_option("--max-bins", max_bins, "Robust kernel bin cap")},
        {"slope", sub.add_option("--slope", slope, "Detection target slope")},
        {"trunc", sub.add_option("--trunc", trunc, "Detection truncation error")},
        {"threshold", sub.add_option("--threshold", threshold, "Detection residual threshold")},
        {"pixel_max", sub.add_option("--pixel-max", pixel_max, "Pixel scale used by analyze and detect")},
        {"seed", sub.add_option("--seed", seed, "Seed for every random choice")},
        {"jobs", sub.add_option("--jobs", jobs, "Worker threads (default TNSHIELD_JOBS or 1)")},
        {"quantizer", sub.add_option("--quantizer", quantizer, "auto, uniform or lloyd")},
        {"cp_rank", sub.add_option("--cp-rank", cp_rank, "CP rank when no --ranks are given")},
    };
  }

  bool has(const std::string& key) const {
    for (const auto& [k, opt] : given)
      if (k == key) return opt->count() > 0;
    return false;
  }

  app::RunConfig resolve() const {
    app::RunConfig cfg;
    if (!config.empty()) app::load_config_file(cfg, config);
    json flags = json::object();
    if (has("format")) flags["format"] = format;
    if (has("tol")) flags["tol"] = tol;
    if (has("ranks")) flags["ranks"] = ranks;
    if (has("robust")) flags["robust"] = robust;
    if (has("alpha")) flags["alpha"] = alpha;
    if (has("beta")) flags["beta"] = beta;
    if (has("max_bins")) flags["max_bins"] = max_bins;
    if (has("slope")) flags["slope"] = slope;
    if (has("trunc")) flags["trunc"] = trunc;
    if (has("threshold")) flags["threshold"] = threshold;
    if (has("pixel_max")) flags["pixel_max"] = pixel_max;
    if (has("seed")) flags["seed"] = seed;
    if (has("jobs")) flags["jobs"] = jobs;
    if (has("quantizer")) flags["quantizer"] = quantizer;
    if (has("cp_rank")) flags["cp_rank"] = cp_rank;
    app::apply_config(cfg, flags);
    return cfg;
  }
};

std::vector<fs::path> to_paths(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

void print_summary(const json& report) {
  std::cerr << "tnshield " << report.value("command", "") << ":";
  if (report.contains("summary"))
    for (const auto& [k, v] : report["summary"].items()) std::cerr << " " << k << "=" << v.dump();
  if (report.contains("series"))
    for (const auto& p : report["series"])
      std::cerr << "\n  level " << p["level"].get<double>() << " distortion " << p["distortion"].get<double>();
  std::cerr << "\n";
  if (report.contains("warnings"))
    for (const auto& w : report["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
}

int emit(const app::Report& rep, const std::string& report_path) {
  const std::string text = rep.body.dump(2);
  if (report_path.empty()) {
    std::cout << text << "\n";
  } else {
    std::ofstream out(report_path, std::ios::trunc);
    if (!out) {
      std::cerr << "error: cannot write report " << report_path << "\n";
      return app::kFatal;
    }
    out << text << "\n";
  }
  print_summary(rep.body);
  return rep.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Tensor network compression and adversarial-noise analysis for images"};
  cli.require_subcommand(1);

  std::vector<std::string> inputs, references, baselines;
  std::string output_dir = ".", output_file;
  bool with_nmi = false, with_spectra = false;
  std::size_t selector = 0;
  std::vector<double> levels;
  std::string mode;

  CommonFlags compress_flags, decompress_flags, analyze_flags, detect_flags, perturb_flags;

  auto* compress = cli.add_subcommand("compress", "Decompose and quantize images into .tnz files");
  compress->add_option("inputs", inputs, "Input images (PNG or PPM)")->required();
  compress->add_option("-o,--output-dir", output_dir, "Directory for .tnz files");
  compress_flags.attach(*compress);

  auto* decompress = cli.add_subcommand("decompress", "Reconstruct images from .tnz files");
  decompress->add_option("inputs", inputs, ".tnz files")->required();
  decompress->add_option("-o,--output-dir", output_dir, "Directory for reconstructed PNGs");
  auto* output_opt = decompress->add_option("--output", output_file, "Output image path (single input only)");
  decompress->add_option("--reference", references, "Original image(s) to measure the error against");
  decompress_flags.attach(*decompress);

  auto* analyze = cli.add_subcommand("analyze", "Spectral decay slopes and subtensor NMI");
  analyze->add_option("inputs", inputs, "Images or .tnz files")->required();
  analyze->add_flag("--nmi", with_nmi, "Report pairwise NMI between subtensors");
  analyze->add_flag("--spectra", with_spectra, "Include the singular values of every sweep step");
  analyze_flags.attach(*analyze);

  auto* detect = cli.add_subcommand("detect", "Flag images whose robust reconstruction residual is high");
  detect->add_option("inputs", inputs, "Images to check")->required();
  detect->add_option("--baseline", baselines, "Clean counterpart per image, used for eligibility");
  detect_flags.attach(*detect);

  auto* perturb = cli.add_subcommand("perturb", "Perturb one subtensor of a .tnz file over a sweep of levels");
  perturb->add_option("input", inputs, ".tnz file")->required()->expected(1);
  perturb->add_option("-o,--output-dir", output_dir, "Directory for perturbed .tnz files");
  auto* selector_opt = perturb->add_option("--selector", selector, "Subtensor index (random when omitted)");
  auto* levels_opt = perturb->add_option("--levels", levels, "Noise levels, comma separated")->delimiter(',');
  auto* mode_opt = perturb->add_option("--mode", mode, "additive or randomize");
  perturb_flags.attach(*perturb);

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = cli.exit(e);
    return code == 0 ? 0 : app::kUsage;
  }

  try {
    if (compress->parsed()) {
      return emit(app::cmd_compress(to_paths(inputs), compress_flags.resolve(), output_dir), compress_flags.report);
    }
    if (decompress->parsed()) {
      std::optional<fs::path> single;
      if (output_opt->count()) single = output_file;
      return emit(app::cmd_decompress(to_paths(inputs), decompress_flags.resolve(), output_dir, single, to_paths(references)),
                  decompress_flags.report);
    }
    if (analyze->parsed()) {
      return emit(app::cmd_analyze(to_paths(inputs), analyze_flags.resolve(), with_nmi, with_spectra), analyze_flags.report);
    }
    if (detect->parsed()) {
      return emit(app::cmd_detect(to_paths(inputs), to_paths(baselines), detect_flags.resolve()), detect_flags.report);
    }
    if (perturb->parsed()) {
      app::RunConfig cfg = perturb_flags.resolve();
      json extra = json::object();
      if (selector_opt->count()) extra["selector"] = selector;
      if (levels_opt->count()) extra["levels"] = levels;
      if (mode_opt->count()) extra["mode"] = mode;
      app::apply_config(cfg, extra);
      return emit(app::cmd_perturb(inputs.front(), cfg, output_dir), perturb_flags.report);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::InvalidConfig ? app::kUsage : app::kFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return app::kFatal;
  }
  return app::kUsage;
}
