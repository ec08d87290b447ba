#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <string>

#include "fedsim/data.hpp"

using namespace fedsim;

TEST_CASE("gen_synthetic: shapes, determinism, class grouping") {
  const Dataset d = gen_synthetic(4, 6, 10, 21);
  CHECK(d.n() == 40);
  CHECK(d.dim == 6);
  CHECK(d.num_classes == 4);
  CHECK(d.features.size() == 240);
  for (int i = 0; i < 40; ++i) CHECK(d.labels[i] == i / 10);  // grouped by class
  CHECK(gen_synthetic(4, 6, 10, 21).features == d.features);
  CHECK(gen_synthetic(4, 6, 10, 22).features != d.features);
  CHECK_THROWS_AS(gen_synthetic(1, 6, 10, 0), std::invalid_argument);
}

TEST_CASE("prior shift: exact long-tail profile") {
  const Dataset base = gen_synthetic(10, 8, 100, 31);
  ShiftConfig cfg;
  cfg.imbalance_ratio = 0.01;
  cfg.sample_fraction = 0.1;
  const ClientDataset shard = partition_prior_shift(base, 97, cfg);
  REQUIRE(shard.meta.class_order.size() == 10);

  std::vector<int> counts(10, 0);
  for (int lbl : shard.data.labels) ++counts[lbl];
  const int n_max = 10;  // floor(0.1 * 100)
  for (int rank = 0; rank < 10; ++rank) {
    const int want = std::max(
        1, static_cast<int>(std::floor(n_max * std::pow(cfg.imbalance_ratio, rank / 9.0))));
    CHECK(counts[shard.meta.class_order[rank]] == want);
  }
  // deterministic in the client seed
  CHECK(partition_prior_shift(base, 97, cfg).data.features == shard.data.features);
  CHECK(partition_prior_shift(base, 98, cfg).data.features != shard.data.features);
}

TEST_CASE("prior shift: rho=1 keeps the subsample balanced") {
  const Dataset base = gen_synthetic(5, 4, 40, 32);
  ShiftConfig cfg;
  cfg.imbalance_ratio = 1.0;
  cfg.sample_fraction = 0.5;
  const ClientDataset shard = partition_prior_shift(base, 3, cfg);
  std::vector<int> counts(5, 0);
  for (int lbl : shard.data.labels) ++counts[lbl];
  for (int c = 0; c < 5; ++c) CHECK(counts[c] == 20);
}

TEST_CASE("prior shift: clients get distinct class orderings") {
  const Dataset base = gen_synthetic(8, 4, 50, 33);
  ShiftConfig cfg;
  cfg.imbalance_ratio = 0.05;
  cfg.sample_fraction = 0.2;
  std::set<std::vector<int>> orders;
  for (std::uint64_t cs = 0; cs < 8; ++cs) {
    orders.insert(partition_prior_shift(base, cs, cfg).meta.class_order);
  }
  CHECK(orders.size() >= 2);
}

TEST_CASE("iid partition subsamples each class without trimming") {
  const Dataset base = gen_synthetic(4, 4, 50, 34);
  ShiftConfig cfg;
  cfg.sample_fraction = 0.2;
  const ClientDataset shard = partition_iid(base, 5, cfg);
  std::vector<int> counts(4, 0);
  for (int lbl : shard.data.labels) ++counts[lbl];
  for (int c = 0; c < 4; ++c) CHECK(counts[c] == 10);
  CHECK(shard.meta.class_order.empty());
}

TEST_CASE("covariate transforms: domain 0 identity, all domains invertible") {
  const int dim = 10;
  ShiftConfig cfg;
  Rng rng(44);
  std::vector<double> x(dim * 30);
  for (auto& v : x) v = rng.normal();

  const CovariateTransform id = make_covariate_transform(0, dim, cfg);
  std::vector<double> y = x;
  id.apply(y, dim);
  CHECK(y == x);

  for (int domain = 1; domain <= 6; ++domain) {
    const CovariateTransform t = make_covariate_transform(domain, dim, cfg);
    std::vector<double> z = x;
    t.apply(z, dim);
    CHECK(z != x);
    t.invert(z, dim);
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::fabs(z[i] - x[i]));
    CHECK(worst < 1e-10);
    // scales stay inside the configured band
    for (double s : t.scales) {
      CHECK(s >= cfg.scale_min);
      CHECK(s <= cfg.scale_max);
    }
  }
  // same domain id, same transform
  CHECK(make_covariate_transform(3, dim, cfg).scales ==
        make_covariate_transform(3, dim, cfg).scales);
}

TEST_CASE("label map: remap bookkeeping and validation") {
  LabelMap map(4);
  CHECK(map.version() == 0);
  for (int c = 0; c < 4; ++c) CHECK(map.apply(c) == c);

  map.remap(3, 1, 2);
  CHECK(map.version() == 1);
  CHECK(map.apply(1) == 2);
  CHECK(map.history().back().round == 3);

  CHECK_THROWS_AS(map.remap(4, 1, 2), std::invalid_argument);  // no-op remap
  CHECK_THROWS_AS(map.remap(4, 9, 0), std::invalid_argument);  // class out of range
  CHECK_THROWS_AS(LabelMap(1), std::invalid_argument);
}

TEST_CASE("label map: mapping_at_version replays the history") {
  LabelMap map(5);
  Rng rng(45);
  for (int k = 0; k < 10; ++k) {
    const int src = static_cast<int>(rng.next_below(5));
    int dst;
    do {
      dst = static_cast<int>(rng.next_below(5));
    } while (dst == map.apply(src));
    map.remap(k + 1, src, dst);
  }
  CHECK(map.mapping_at_version(map.version()) == map.mapping());
  // version 0 is the identity
  const auto v0 = map.mapping_at_version(0);
  for (int c = 0; c < 5; ++c) CHECK(v0[c] == c);
  // replay is a prefix composition: each version extends the previous one
  LabelMap replay(5);
  for (int v = 0; v < map.version(); ++v) {
    const auto& e = map.history()[v];
    replay.remap(e.round, e.source_class, e.target_label);
    CHECK(replay.mapping() == map.mapping_at_version(v + 1));
  }
  CHECK_THROWS_AS(map.mapping_at_version(99), std::invalid_argument);
}

TEST_CASE("label map: relabel rewrites dataset labels") {
  Dataset d = gen_synthetic(3, 4, 5, 46);
  LabelMap map(3);
  map.remap(1, 0, 2);
  const auto before = d.labels;
  map.relabel(d);
  for (std::size_t i = 0; i < d.labels.size(); ++i) {
    CHECK(d.labels[i] == (before[i] == 0 ? 2 : before[i]));
  }
}

TEST_CASE("concept_shift_step: probability edge cases") {
  ShiftConfig cfg;
  cfg.concept_shift_prob = 0.0;
  LabelMap map(6);
  Rng rng(47);
  for (int t = 1; t <= 500; ++t) concept_shift_step(map, t, rng, cfg);
  CHECK(map.version() == 0);

  concept_shift_step(map, 501, rng, cfg, /*force=*/true);
  CHECK(map.version() == 1);
  CHECK(map.history().back().round == 501);
  CHECK(map.apply(map.history().back().source_class) == map.history().back().target_label);
}

TEST_CASE("concept_shift_step: flip frequency sits in the binomial band") {
  ShiftConfig cfg;
  cfg.concept_shift_prob = 0.05;
  LabelMap map(10);
  Rng rng(48);
  for (int t = 1; t <= 2000; ++t) concept_shift_step(map, t, rng, cfg);
  // 3 sigma around 100 for Binomial(2000, 0.05)
  CHECK(map.version() >= 71);
  CHECK(map.version() <= 129);
}

TEST_CASE("table files round-trip exactly") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "fedsim_table_test.csv").string();
  const Dataset d = gen_synthetic(3, 5, 7, 49);
  save_table(d, path);
  const Dataset back = load_table(path);
  CHECK(back.dim == d.dim);
  CHECK(back.labels == d.labels);
  CHECK(back.features == d.features);  // 17 significant digits round-trip
  CHECK(back.num_classes == d.num_classes);
  std::remove(path.c_str());
}

TEST_CASE("table loader reports header and line errors") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "fedsim_table_bad.csv").string();
  auto write = [&](const std::string& text) {
    FILE* f = std::fopen(path.c_str(), "w");
    std::fputs(text.c_str(), f);
    std::fclose(f);
  };

  write("x0,x1,label\n1,2,0\n");
  CHECK_THROWS_AS(load_table(path), std::runtime_error);

  write("f0,f1,label\n1,2,0\n1,oops,1\n");
  try {
    load_table(path);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  write("f0,f1,label\n1,2\n");
  try {
    load_table(path);
    FAIL("expected a column-count error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("shift config validation") {
  ShiftConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.imbalance_ratio = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ShiftConfig{};
  cfg.sample_fraction = 1.5;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ShiftConfig{};
  cfg.concept_shift_prob = -0.1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
