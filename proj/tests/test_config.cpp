#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "fedsim/config.hpp"

using namespace fedsim;
namespace fs = std::filesystem;

TEST_CASE("defaults match the experiment contract") {
  const ExperimentConfig cfg = parse_config("");
  CHECK(cfg.hp.alpha == 5.0);
  CHECK(cfg.hp.eta == 0.01);
  CHECK(cfg.hp.batch_size == 32);
  CHECK(cfg.hp.clients_per_round == 10);
  CHECK(cfg.mode == ClientPool::Mode::CrossDevice);
  CHECK(cfg.partition == "prior");
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(cfg.shift.imbalance_ratio == 0.01);
  CHECK(cfg.acc_target == 0.7);
}

TEST_CASE("parsing: comments, whitespace, lists") {
  const ExperimentConfig cfg = parse_config(
      "# a comment\n"
      "methods = fedavg, fedfor, scaffold\n"
      "rounds = 12\n"
      "hidden = 16,8\n"
      "eta = 0.5\n"
      "seeds = 7\n"
      "mode = cross-silo\n"
      "pool_size = 6\n"
      "clients_per_round = 4\n");
  CHECK(cfg.methods == std::vector<Method>{Method::FedAvg, Method::FedFOR, Method::Scaffold});
  CHECK(cfg.rounds == 12);
  CHECK(cfg.hidden == std::vector<int>{16, 8});
  CHECK(cfg.hp.eta == 0.5);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{7});
  CHECK(cfg.mode == ClientPool::Mode::CrossSilo);
  CHECK(cfg.pool_size == 6);
}

TEST_CASE("parsing rejects unknown keys by name") {
  try {
    parse_config("lerning_rate = 0.1\n");
    FAIL("expected a config error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("lerning_rate") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("rounds = soon\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_config("methods = federated\n"), std::runtime_error);
  CHECK_THROWS_AS(parse_config("fedbn = maybe\n"), std::runtime_error);
}

TEST_CASE("overrides rewrite parsed values") {
  ExperimentConfig cfg = parse_config("rounds = 10\n");
  apply_override(cfg, "rounds=25");
  CHECK(cfg.rounds == 25);
  apply_override(cfg, "alpha=0.5");
  CHECK(cfg.hp.alpha == 0.5);
  CHECK_THROWS_AS(apply_override(cfg, "nonsense=1"), std::runtime_error);
  CHECK_THROWS_AS(apply_override(cfg, "no_equals_sign"), std::runtime_error);
}

TEST_CASE("validation catches inconsistent setups") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.rounds = 0;
  CHECK_THROWS_AS(cfg.validate(), std::runtime_error);
  cfg = ExperimentConfig{};
  cfg.dataset = "file";  // file dataset without a path
  CHECK_THROWS_AS(cfg.validate(), std::runtime_error);
  cfg = ExperimentConfig{};
  cfg.mode = ClientPool::Mode::CrossSilo;
  cfg.pool_size = 2;
  cfg.hp.clients_per_round = 5;  // more than the roster
  CHECK_THROWS_AS(cfg.validate(), std::runtime_error);
  cfg = ExperimentConfig{};
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), std::runtime_error);
}

TEST_CASE("digest is stable and excludes output-only knobs") {
  ExperimentConfig a = parse_config("rounds = 9\n");
  ExperimentConfig b = parse_config("rounds = 9\n");
  CHECK(a.digest() == b.digest());
  b.out_dir = "elsewhere";
  b.workers = 12;
  CHECK(a.digest() == b.digest());
  b.rounds = 10;
  CHECK(a.digest() != b.digest());
  // serialization parses back to the same digest
  const ExperimentConfig back = parse_config(a.serialize());
  CHECK(back.digest() == a.digest());
}

TEST_CASE("config files load like inline text") {
  const std::string path = (fs::temp_directory_path() / "fedsim_cfg_test.cfg").string();
  {
    std::ofstream out(path);
    out << "rounds = 4\nmethods = fedprox\n";
  }
  const ExperimentConfig cfg = parse_config_file(path);
  CHECK(cfg.rounds == 4);
  CHECK(cfg.methods == std::vector<Method>{Method::FedProx});
  CHECK_THROWS_AS(parse_config_file("/nonexistent/fedsim.cfg"), std::runtime_error);
  fs::remove(path);
}

namespace {

ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.methods = {Method::FedAvg, Method::FedFOR};
  cfg.rounds = 4;
  cfg.hp.local_epochs = 1;
  cfg.hp.batch_size = 8;
  cfg.hp.clients_per_round = 3;
  cfg.shift.sample_fraction = 0.3;
  cfg.shift.imbalance_ratio = 0.5;
  cfg.shift.concept_shift_prob = 0.0;
  cfg.classes = 3;
  cfg.dim = 5;
  cfg.n_per_class = 30;
  cfg.val_per_class = 10;
  cfg.hidden = {6};
  cfg.seeds = {1, 2};
  cfg.out_dir = out_dir;
  cfg.workers = 2;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("run_experiment writes the full metrics matrix and reruns identically") {
  const fs::path root = fs::temp_directory_path() / "fedsim_cfg_exp";
  fs::remove_all(root);
  ExperimentConfig cfg = tiny_config((root / "a").string());
  REQUIRE(run_experiment(cfg) == 0);
  for (const char* name : {"metrics_fedavg_seed1.csv", "metrics_fedavg_seed2.csv",
                           "metrics_fedfor_seed1.csv", "metrics_fedfor_seed2.csv",
                           "summary.csv"}) {
    CHECK(fs::exists(root / "a" / name));
  }

  ExperimentConfig again = tiny_config((root / "b").string());
  REQUIRE(run_experiment(again) == 0);
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    CHECK(slurp(entry.path()) == slurp(root / "b" / entry.path().filename()));
  }
  fs::remove_all(root);
}

TEST_CASE("run_single: alpha=0 FedFOR tracks FedAvg exactly") {
  ExperimentConfig cfg = tiny_config("");
  cfg.hp.alpha = 0.0;
  const RunHistory avg = run_single(cfg, Method::FedAvg, 1);
  const RunHistory ffr = run_single(cfg, Method::FedFOR, 1);
  REQUIRE(avg.rounds.size() == ffr.rounds.size());
  for (std::size_t i = 0; i < avg.rounds.size(); ++i) {
    CHECK(avg.rounds[i].val_acc == ffr.rounds[i].val_acc);
  }
}

TEST_CASE("run_single respects the round count and digest") {
  const ExperimentConfig cfg = tiny_config("");
  const RunHistory h = run_single(cfg, Method::FedAvg, 2);
  CHECK(h.rounds.size() == 4);
  CHECK(h.method == "fedavg");
  CHECK(h.seed == 2);
  CHECK(h.config_digest == cfg.digest());
}

TEST_CASE("model_spec assembles layer sizes from the config") {
  ExperimentConfig cfg;
  cfg.dim = 7;
  cfg.classes = 4;
  cfg.hidden = {9, 5};
  cfg.norm_layer = true;
  const ModelSpec spec = cfg.model_spec();
  CHECK(spec.layer_sizes == std::vector<int>{7, 9, 5, 4});
  CHECK(spec.has_norm_layer);
}
