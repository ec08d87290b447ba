#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv) {
  CLI::App app{"Federated-learning simulation engine"};
  app.require_subcommand(1);

  std::string config_path, out_dir, in_dir;
  int workers = 0;
  std::vector<std::string> overrides;
  double target = 0.7;
  int epochs = 0;

  auto* run = app.add_subcommand("run", "Run the configured method x seed matrix");
  run->add_option("--config", config_path, "experiment config file")->required();
  run->add_option("--out", out_dir, "output directory (overrides config)");
  run->add_option("--workers", workers, "parallel (method, seed) cells");
  run->add_option("--override", overrides, "key=value config overrides");

  auto* summ = app.add_subcommand("summarize", "Summarize metrics CSVs in a directory");
  summ->add_option("--in", in_dir, "directory holding metrics_*.csv files")->required();
  summ->add_option("--target", target, "accuracy target for the rounds-to-target column");
  summ->add_option("--epochs", epochs, "local epochs E recorded in the summary");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) {
      fedsim::ExperimentConfig cfg;
      try {
        cfg = fedsim::parse_config_file(config_path);
        for (const auto& ov : overrides) fedsim::apply_override(cfg, ov);
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        if (workers > 0) cfg.workers = workers;
        cfg.validate();
      } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
      }
      return fedsim::run_experiment(cfg);
    }

    // summarize
    std::vector<fedsim::RunHistory> runs;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
      const std::string name = entry.path().filename().string();
      if (name.rfind("metrics_", 0) == 0 && entry.path().extension() == ".csv") {
        runs.push_back(fedsim::parse_history_csv(entry.path().string()));
      }
    }
    std::sort(runs.begin(), runs.end(), [](const auto& a, const auto& b) {
      return std::tie(a.method, a.seed) < std::tie(b.method, b.seed);
    });
    if (runs.empty()) {
      std::cerr << "summarize: no metrics_*.csv files in " << in_dir << "\n";
      return 1;
    }
    const auto table = fedsim::summarize(runs, epochs, target);
    fedsim::emit_summary_csv(table, in_dir + "/summary.csv");
    std::cout << "wrote " << in_dir << "/summary.csv\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
