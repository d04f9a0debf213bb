// s2fp8 command line: formats, quantize, train, checkgrad.

#include <cmath>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "s2fp8/codec.hpp"
#include "s2fp8/error.hpp"
#include "s2fp8/experiment.hpp"
#include "s2fp8/float_format.hpp"
#include "s2fp8/tensor_io.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitGradcheckFailed = 3;

struct QuantizeArgs {
  std::string in, out, mode;
  double target_max = s2fp8::kDefaultTargetMax;
  bool encode = false;
};

int cmd_formats() {
  std::cout << s2fp8::format_table();
  return kExitOk;
}

int cmd_quantize(const QuantizeArgs& a) {
  using namespace s2fp8;
  const Tensor input = load_tensor(a.in);
  const S2Stats stats = compute_statistics(input, a.target_max);
  Tensor output;
  if (a.mode == "fp8") {
    if (a.encode) throw ConfigError("--encode requires --mode s2fp8");
    output = truncate_tensor(input, kFP8);
    save_tensor(a.out, output);
  } else {
    const S2Encoded enc = encode(input, stats);
    output = decode(enc);
    if (a.encode) {
      save_encoded(a.out, enc);
    } else {
      save_tensor(a.out, output);
    }
  }
  const QuantizeReport r = quantize_report(input, output, stats);
  std::printf("mode       %s\n", a.mode.c_str());
  std::printf("elements   %zu\n", r.elements);
  std::printf("nonzero    %zu\n", r.stats.n_nonzero);
  std::printf("mu         %.17g\n", r.stats.mu);
  std::printf("m          %.17g\n", r.stats.m);
  std::printf("alpha      %.17g\n", r.stats.alpha);
  std::printf("beta       %.17g\n", r.stats.beta);
  std::printf("flushed    %zu (%.2f%%)\n", r.flushed, 100.0 * r.flushed_fraction());
  std::printf("max_rel_err %.17g\n", r.max_relative_error);
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& out_dir) {
  using namespace s2fp8;
  const ExperimentConfig config = load_config(config_path);
  const ExperimentResult result = run_experiment(config, out_dir);
  for (const RunOutcome& r : result.runs) {
    std::printf("%-20s %-16s %-9s val %.2f%%\n", r.run.id.c_str(), std::string(to_string(r.run.quant.mode)).c_str(),
                std::string(to_string(r.result.status)).c_str(), r.result.val_accuracy);
  }
  std::printf("wrote %s/metrics.csv and summary.json\n", out_dir.c_str());
  return kExitOk;
}

int cmd_checkgrad(const std::string& config_path) {
  using namespace s2fp8;
  const ExperimentConfig config = load_config(config_path);
  const GradcheckRun run = run_checkgrad(config);
  std::printf("parameters      %zu\n", run.parameters);
  std::printf("checked         %zu\n", run.report.checked);
  std::printf("max_rel_err     %.6e (at %s)\n", run.report.max_relative_error, run.report.worst_parameter.c_str());
  std::printf("threshold       %.1e\n", run.report.threshold);
  std::printf("%s\n", run.report.passed ? "PASS" : "FAIL");
  return run.report.passed ? kExitOk : kExitGradcheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"S2FP8 quantization toolkit"};
  app.require_subcommand(1);

  auto* formats = app.add_subcommand("formats", "Print min/max/epsilon/range of FP32, FP16, BF16 and FP8");

  QuantizeArgs q;
  auto* quantize = app.add_subcommand("quantize", "Quantize an S2T1 tensor file to FP8 or S2FP8");
  quantize->add_option("--in", q.in, "input tensor (S2T1)")->required();
  quantize->add_option("--mode", q.mode, "fp8 or s2fp8")->required()->check(CLI::IsMember({"fp8", "s2fp8"}));
  quantize->add_option("--target-max", q.target_max, "log2 of the largest transformed magnitude");
  quantize->add_option("--out", q.out, "output file")->required();
  quantize->add_flag("--encode", q.encode, "write the S2F8 container instead of the decoded S2T1 tensor");

  std::string config, out_dir;
  auto* train = app.add_subcommand("train", "Run an experiment config");
  train->add_option("--config", config, "experiment JSON")->required();
  train->add_option("--out-dir", out_dir, "directory for metrics.csv and summary.json")->required();

  auto* checkgrad = app.add_subcommand("checkgrad", "Compare FP32 backprop with finite differences");
  checkgrad->add_option("--config", config, "experiment JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*formats) return cmd_formats();
    if (*quantize) return cmd_quantize(q);
    if (*train) return cmd_train(config, out_dir);
    if (*checkgrad) return cmd_checkgrad(config);
  } catch (const s2fp8::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const s2fp8::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitUsage;
}
