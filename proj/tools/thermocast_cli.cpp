#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "thermocast/check.hpp"
#include "thermocast/config.hpp"
#include "thermocast/datapipe.hpp"
#include "thermocast/errors.hpp"
#include "thermocast/io.hpp"
#include "thermocast/model.hpp"
#include "thermocast/params_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace thermocast;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json metrics_json(const Metrics& m) {
  return {{"mse_scaled", m.mse_scaled},
          {"rmse_scaled", m.rmse_scaled},
          {"mse_original", m.mse_original},
          {"rmse_original", m.rmse_original}};
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const char* name) { return (fs::path(dir) / name).string(); }

int cmd_synth(std::size_t days, std::uint64_t seed, const std::string& start, double noise_sd, const std::string& out) {
  if (days < 31) throw UsageError("--days: need >= 31 days, got " + std::to_string(days));
  const auto first = parse_date(start);
  if (!first) throw UsageError("--start: expected YYYY-MM-DD, got '" + start + "'");
  SynthParams params;
  params.noise_sd = noise_sd;
  const std::vector<double> series = synthesize_series(days, seed, params);
  write_file_atomic(out, series_to_csv(*first, series));
  std::cout << "wrote " << days << " days to " << out << "\n";
  return kOk;
}

int cmd_train(const std::string& data, const std::string& config_path, const std::vector<std::string>& overrides,
              const std::string& out) {
  RunConfig cfg;
  try {
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.train.validate();
    cfg.model.validate();
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  if (!cfg.exclusions_path.empty()) cfg.pipeline.exclusions = parse_exclusions(cfg.exclusions_path);

  const std::string effective = cfg.to_text();
  std::cout << "effective configuration:\n" << effective;

  ParseReport parsed = parse_csv(data);
  std::cout << "parsed " << parsed.records.size() << " records (" << parsed.summary() << ")\n";
  const PreparedData prepared = prepare_dataset(std::move(parsed.records), cfg.pipeline);
  std::cout << "windows: " << prepared.train.size() << " train, " << prepared.test.size() << " test\n";

  Model model = Model::build(cfg.model, cfg.train.seed);
  std::cout << "model: " << model.parameter_count() << " parameters\n";
  const TrainReport report = train(model, prepared, cfg.train);

  ensure_dir(out);
  save_params(model, join(out, "params.bin"), {prepared.scaler, cfg.pipeline});
  std::string loss_csv = "epoch,loss,monitored\n";
  for (std::size_t i = 0; i < report.loss_history.size(); ++i) {
    loss_csv += std::to_string(i + 1) + "," + format_double(report.loss_history[i]) + "," +
                format_double(report.monitored_history[i]) + "\n";
  }
  write_file_atomic(join(out, "loss_history.csv"), loss_csv);
  write_file_atomic(join(out, "effective_config.txt"), effective);
  const json rep = {
      {"loss_history", report.loss_history},
      {"monitored_history", report.monitored_history},
      {"stopped_epoch", report.stopped_epoch},
      {"early_stopped", report.early_stopped},
      {"stop_reason", report.stop_reason},
      {"steps", report.steps},
      {"final_lr", report.final_lr},
      {"parameter_count", model.parameter_count()},
      {"train_windows", prepared.train.size()},
      {"test_windows", prepared.test.size()},
      {"scaler", {{"min", prepared.scaler.min}, {"max", prepared.scaler.max}}},
      {"train_metrics", metrics_json(report.train_metrics)},
      {"test_metrics", metrics_json(report.test_metrics)},
      {"wall_seconds", report.wall_seconds},
  };
  write_file_atomic(join(out, "train_report.json"), rep.dump(2) + "\n");
  std::cout << "stopped after " << report.stopped_epoch << " epochs (" << report.stop_reason << ")\n"
            << "test mse " << format_double(report.test_metrics.mse_original) << " (original units), "
            << format_double(report.test_metrics.mse_scaled) << " (scaled)\n";
  return kOk;
}

int cmd_eval(const std::string& model_path, const std::string& data, const std::string& out) {
  LoadedModel loaded = load_params(model_path);
  if (!loaded.meta.scaler || !loaded.meta.pipeline) {
    throw FormatError(model_path + ": no scaler or pipeline settings stored; was it written by train?");
  }
  ParseReport parsed = parse_csv(data);
  const PreparedData prepared = prepare_dataset(std::move(parsed.records), *loaded.meta.pipeline, loaded.meta.scaler);
  const Evaluation eval = evaluate(loaded.model, prepared.test, prepared.scaler);
  ensure_dir(out);
  export_predictions(eval, join(out, "predictions.csv"));
  json metrics = metrics_json(eval.metrics);
  metrics["windows"] = eval.actual.size();
  write_file_atomic(join(out, "metrics.json"), metrics.dump(2) + "\n");
  std::cout << "evaluated " << eval.actual.size() << " test windows: mse " << format_double(eval.metrics.mse_original)
            << ", rmse " << format_double(eval.metrics.rmse_original) << " (original units)\n";
  return kOk;
}

int cmd_check(bool inject_fault, std::size_t seeds) {
  CheckOptions opts;
  opts.inject_gradient_fault = inject_fault;
  opts.gradient_seeds = seeds;
  const std::vector<CheckOutcome> results = run_checks(opts, std::cout);
  std::size_t failed = 0;
  for (const CheckOutcome& r : results) failed += r.passed ? 0 : 1;
  std::cout << (failed == 0 ? "all checks passed" : std::to_string(failed) + " check(s) failed") << "\n";
  return failed == 0 ? kOk : kNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermocast: convolutional-recurrent-attention temperature forecaster"};
  app.require_subcommand(1);

  std::size_t days = 0;
  std::uint64_t synth_seed = 1;
  std::string start = "2000-01-01";
  double noise_sd = SynthParams{}.noise_sd;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a synthetic daily temperature CSV");
  synth->add_option("--days", days, "number of days (>= 31)")->required();
  synth->add_option("--seed", synth_seed, "noise seed")->capture_default_str();
  synth->add_option("--start", start, "first date, YYYY-MM-DD")->capture_default_str();
  synth->add_option("--noise-sd", noise_sd, "noise standard deviation")->capture_default_str();
  synth->add_option("--out", synth_out, "output CSV path")->required();

  std::string data, config_path, out;
  std::vector<std::string> overrides;
  auto* trainc = app.add_subcommand("train", "train on a CSV and write the model and reports");
  trainc->add_option("--data", data, "input CSV (timestamp,temperature,...)")->required();
  trainc->add_option("--config", config_path, "key = value configuration file");
  trainc->add_option("--set", overrides, "override one setting, key=value (repeatable)");
  trainc->add_option("--out", out, "output directory")->required();

  std::string model_path, eval_data, eval_out;
  auto* evalc = app.add_subcommand("eval", "evaluate a trained model on the test split of a CSV");
  evalc->add_option("--model", model_path, "params.bin written by train")->required();
  evalc->add_option("--data", eval_data, "input CSV")->required();
  evalc->add_option("--out", eval_out, "output directory")->required();

  bool inject_fault = false;
  std::size_t seeds = CheckOptions{}.gradient_seeds;
  auto* check = app.add_subcommand("check", "run the embedded verification suite");
  check->add_flag("--inject-gradient-fault", inject_fault, "perturb two backward rules (the suite must fail)");
  check->add_option("--seeds", seeds, "random instances per gradient case")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*synth) return cmd_synth(days, synth_seed, start, noise_sd, synth_out);
    if (*trainc) return cmd_train(data, config_path, overrides, out);
    if (*evalc) return cmd_eval(model_path, eval_data, eval_out);
    if (*check) return cmd_check(inject_fault, seeds);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error in stage " << e.stage() << ": " << e.what() << "\n";
    return kData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kData;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
