#include <atomic>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include "fedsim/config.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

namespace {

struct SplitData {
  Dataset train;
  Dataset val;
};

// same mixture for train and validation: generate one pool per class and split
SplitData make_synthetic_split(const ExperimentConfig& cfg, std::uint64_t data_seed) {
  const Dataset all =
      gen_synthetic(cfg.classes, cfg.dim, cfg.n_per_class + cfg.val_per_class, data_seed);
  SplitData out;
  out.train.dim = out.val.dim = cfg.dim;
  out.train.num_classes = out.val.num_classes = cfg.classes;
  // gen_synthetic emits samples grouped by class in order
  std::size_t off = 0;
  for (int c = 0; c < cfg.classes; ++c) {
    for (int s = 0; s < cfg.n_per_class + cfg.val_per_class; ++s, ++off) {
      Dataset& dst = s < cfg.n_per_class ? out.train : out.val;
      dst.features.insert(dst.features.end(), all.features.begin() + off * cfg.dim,
                          all.features.begin() + (off + 1) * cfg.dim);
      dst.labels.push_back(all.labels[off]);
    }
  }
  return out;
}

SplitData make_file_split(const ExperimentConfig& cfg) {
  // file datasets are used as-is for training; validation reuses the file
  Dataset d = load_table(cfg.data_file);
  if (d.empty()) throw std::runtime_error("run: dataset file has no samples: " + cfg.data_file);
  return {d, d};
}

}  // namespace

RunHistory run_single(const ExperimentConfig& cfg, Method method, std::uint64_t seed) {
  cfg.validate();
  const ModelSpec spec = cfg.model_spec();

  const std::uint64_t data_seed = Rng(seed).fork(0x64617461ULL).next_u64();
  const SplitData data = cfg.dataset == "synthetic" ? make_synthetic_split(cfg, data_seed)
                                                    : make_file_split(cfg);

  LabelMap label_map(cfg.classes);
  Rng concept_rng = Rng(seed).fork(0x636f6e63ULL);

  ClientPool pool;
  pool.mode = cfg.mode;
  pool.pool_size = cfg.pool_size;
  pool.seed = Rng(seed).fork(0x706f6f6cULL).next_u64();

  // model init is method-independent so methods share W^0 for a given seed
  ServerState server = init_server(method, spec, Rng(seed).fork(0x696e6974ULL).next_u64());

  DataProvider provider;
  provider.shard = [&](std::int64_t id, int round) -> ClientDataset {
    (void)round;
    const std::uint64_t client_seed =
        Rng(seed).fork(0x7368617264ULL).fork(static_cast<std::uint64_t>(id)).next_u64();
    ClientDataset shard;
    if (cfg.partition == "prior") {
      shard = partition_prior_shift(data.train, client_seed, cfg.shift);
    } else if (cfg.partition == "covariate") {
      shard = partition_iid(data.train, client_seed, cfg.shift);
      const int domain = static_cast<int>(id % cfg.num_domains);
      const auto t = make_covariate_transform(domain, cfg.dim, cfg.shift);
      t.apply(shard.data.features, cfg.dim);
      shard.meta.domain_id = domain;
    } else {
      shard = partition_iid(data.train, client_seed, cfg.shift);
    }
    shard.meta.client_id = id;
    shard.meta.label_map_version = label_map.version();
    label_map.relabel(shard.data);
    return shard;
  };
  provider.validation = [&](int round) -> Batch {
    (void)round;
    Dataset v = data.val;
    label_map.relabel(v);
    return v.to_batch();
  };

  RoundOptions opts;
  opts.run_seed = Rng(seed).fork(0x72756eULL).next_u64();
  opts.fedbn_mask = cfg.fedbn && spec.has_norm_layer;
  opts.weighted_average = cfg.weighted_average;

  RunHistory history;
  history.method = method_name(method);
  history.seed = seed;
  history.config_digest = cfg.digest();

  for (int t = 1; t <= cfg.rounds; ++t) {
    const bool force = cfg.concept_shift_force_round == t;
    if (cfg.shift.concept_shift_prob > 0.0 || force) {
      concept_shift_step(label_map, t, concept_rng, cfg.shift, force);
    }
    RoundRecord rec = run_round(server, pool, method, cfg.hp, spec, provider, opts);
    rec.labelmap_version = label_map.version();
    history.push(std::move(rec));
  }

  if (cfg.mode == ClientPool::Mode::CrossDevice && server.state_store_touches != 0) {
    throw std::logic_error("run: state store touched in cross-device mode");
  }
  return history;
}

int run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  struct Cell {
    Method method;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Method m : cfg.methods) {
    for (std::uint64_t s : cfg.seeds) cells.push_back({m, s});
  }

  std::vector<RunHistory> histories(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex io_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      try {
        RunHistory h = run_single(cfg, cell.method, cell.seed);
        const std::string path = cfg.out_dir + "/metrics_" + method_name(cell.method) +
                                 "_seed" + std::to_string(cell.seed) + ".csv";
        emit_history_csv(h, path);
        histories[i] = std::move(h);
      } catch (const std::exception& e) {
        errors[i] = std::string("(") + method_name(cell.method) + ", seed " +
                    std::to_string(cell.seed) + "): " + e.what();
      }
      std::lock_guard<std::mutex> lock(io_mutex);
      if (!errors[i].empty()) {
        std::cerr << "run failed " << errors[i] << "\n";
      } else {
        std::cerr << "run done: " << method_name(cell.method) << " seed " << cell.seed << "\n";
      }
    }
  };

  const int n_workers = std::min<int>(cfg.workers, static_cast<int>(cells.size()));
  std::vector<std::thread> threads;
  for (int i = 1; i < n_workers; ++i) threads.emplace_back(worker);
  worker();
  for (auto& th : threads) th.join();

  bool any_failed = false;
  std::vector<RunHistory> ok;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (!errors[i].empty()) {
      any_failed = true;
    } else {
      ok.push_back(std::move(histories[i]));
    }
  }
  if (!ok.empty()) {
    SummaryTable table = summarize(ok, cfg.hp.local_epochs, cfg.acc_target);
    emit_summary_csv(table, cfg.out_dir + "/summary.csv");
  }
  return any_failed ? 1 : 0;
}

}  // namespace fedsim
