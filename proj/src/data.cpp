#include "fedsim/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace fedsim {

Batch Dataset::to_batch() const {
  return Batch(features, labels, dim, num_classes);
}

LabelMap::LabelMap(int num_classes) : mapping_(num_classes) {
  if (num_classes < 2) throw std::invalid_argument("LabelMap: need >= 2 classes");
  std::iota(mapping_.begin(), mapping_.end(), 0);
}

void LabelMap::remap(int round, int source_class, int target_label) {
  if (source_class < 0 || source_class >= num_classes() || target_label < 0 ||
      target_label >= num_classes()) {
    throw std::invalid_argument("LabelMap: class out of range");
  }
  if (mapping_[source_class] == target_label) {
    throw std::invalid_argument("LabelMap: remap must change the current label");
  }
  mapping_[source_class] = target_label;
  history_.push_back({round, source_class, target_label});
}

std::vector<int> LabelMap::mapping_at_version(int v) const {
  if (v < 0 || v > version()) throw std::invalid_argument("LabelMap: bad version");
  std::vector<int> m(num_classes());
  std::iota(m.begin(), m.end(), 0);
  for (int i = 0; i < v; ++i) m[history_[i].source_class] = history_[i].target_label;
  return m;
}

void LabelMap::relabel(Dataset& d) const {
  for (int& y : d.labels) y = mapping_.at(y);
}

void ShiftConfig::validate() const {
  if (imbalance_ratio <= 0.0 || imbalance_ratio > 1.0) {
    throw std::invalid_argument("ShiftConfig: imbalance_ratio must be in (0,1]");
  }
  if (sample_fraction <= 0.0 || sample_fraction > 1.0) {
    throw std::invalid_argument("ShiftConfig: sample_fraction must be in (0,1]");
  }
  if (concept_shift_prob < 0.0 || concept_shift_prob > 1.0) {
    throw std::invalid_argument("ShiftConfig: concept_shift_prob must be in [0,1]");
  }
  if (scale_min <= 0.0 || scale_max < scale_min) {
    throw std::invalid_argument("ShiftConfig: bad covariate scale range");
  }
}

Dataset gen_synthetic(int num_classes, int dim, int n_per_class, std::uint64_t seed) {
  if (num_classes < 2) throw std::invalid_argument("gen_synthetic: need >= 2 classes");
  if (dim < 2) throw std::invalid_argument("gen_synthetic: need dim >= 2");
  if (n_per_class < 1) throw std::invalid_argument("gen_synthetic: need n_per_class >= 1");
  Dataset d;
  d.dim = dim;
  d.num_classes = num_classes;

  Rng mean_rng = Rng(seed).fork(0x6d65616eULL);
  std::vector<double> means(static_cast<std::size_t>(num_classes) * dim);
  for (int c = 0; c < num_classes; ++c) {
    double norm2 = 0.0;
    for (int j = 0; j < dim; ++j) {
      double v = mean_rng.normal();
      means[static_cast<std::size_t>(c) * dim + j] = v;
      norm2 += v * v;
    }
    const double scale = 3.0 / std::sqrt(std::max(norm2, 1e-300));
    for (int j = 0; j < dim; ++j) means[static_cast<std::size_t>(c) * dim + j] *= scale;
  }

  Rng samp_rng = Rng(seed).fork(0x73616d70ULL);
  d.features.reserve(static_cast<std::size_t>(num_classes) * n_per_class * dim);
  d.labels.reserve(static_cast<std::size_t>(num_classes) * n_per_class);
  for (int c = 0; c < num_classes; ++c) {
    for (int s = 0; s < n_per_class; ++s) {
      for (int j = 0; j < dim; ++j) {
        d.features.push_back(means[static_cast<std::size_t>(c) * dim + j] + samp_rng.normal());
      }
      d.labels.push_back(c);
    }
  }
  return d;
}

namespace {

std::vector<std::vector<int>> indices_by_class(const Dataset& d) {
  std::vector<std::vector<int>> by_class(d.num_classes);
  for (int i = 0; i < d.n(); ++i) by_class[d.labels[i]].push_back(i);
  return by_class;
}

void append_sample(Dataset& dst, const Dataset& src, int idx) {
  dst.features.insert(dst.features.end(),
                      src.features.begin() + static_cast<std::size_t>(idx) * src.dim,
                      src.features.begin() + static_cast<std::size_t>(idx + 1) * src.dim);
  dst.labels.push_back(src.labels[idx]);
}

// per-class uniform subsample of sample_fraction; returns kept indices per class
std::vector<std::vector<int>> subsample_per_class(const Dataset& d, Rng& rng,
                                                  double fraction) {
  auto by_class = indices_by_class(d);
  for (auto& idxs : by_class) {
    rng.shuffle(idxs);
    const auto keep = static_cast<std::size_t>(
        std::max<long long>(1, static_cast<long long>(std::floor(fraction * idxs.size()))));
    idxs.resize(std::min(keep, idxs.size()));
  }
  return by_class;
}

}  // namespace

ClientDataset partition_prior_shift(const Dataset& dataset, std::uint64_t client_seed,
                                    const ShiftConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(client_seed).fork(0x7072696f72ULL);
  auto by_class = subsample_per_class(dataset, rng, cfg.sample_fraction);
  std::size_t n_max = 0;
  for (const auto& idxs : by_class) n_max = std::max(n_max, idxs.size());

  const int C = dataset.num_classes;
  std::vector<int> order(C);
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);

  ClientDataset out;
  out.data.dim = dataset.dim;
  out.data.num_classes = C;
  out.meta.class_order = order;
  for (int rank = 0; rank < C; ++rank) {
    const int cls = order[rank];
    const double frac = std::pow(cfg.imbalance_ratio,
                                 static_cast<double>(rank) / std::max(1, C - 1));
    const auto keep = static_cast<std::size_t>(std::max<long long>(
        1, static_cast<long long>(std::floor(static_cast<double>(n_max) * frac))));
    auto& idxs = by_class[cls];
    for (std::size_t i = 0; i < std::min(keep, idxs.size()); ++i) {
      append_sample(out.data, dataset, idxs[i]);
    }
  }
  return out;
}

ClientDataset partition_iid(const Dataset& dataset, std::uint64_t client_seed,
                            const ShiftConfig& cfg) {
  cfg.validate();
  Rng rng = Rng(client_seed).fork(0x696964ULL);
  auto by_class = subsample_per_class(dataset, rng, cfg.sample_fraction);
  ClientDataset out;
  out.data.dim = dataset.dim;
  out.data.num_classes = dataset.num_classes;
  for (const auto& idxs : by_class) {
    for (int idx : idxs) append_sample(out.data, dataset, idx);
  }
  return out;
}

void CovariateTransform::apply(std::vector<double>& features, int dim) const {
  if (domain_id == 0) return;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t off = 0; off + dim <= features.size(); off += dim) {
    double* x = &features[off];
    const double a = x[axis_a], b = x[axis_b];
    x[axis_a] = c * a - s * b;
    x[axis_b] = s * a + c * b;
    for (int j = 0; j < dim; ++j) x[j] = scales[j] * x[j] + bias[j];
  }
}

void CovariateTransform::invert(std::vector<double>& features, int dim) const {
  if (domain_id == 0) return;
  const double c = std::cos(angle), s = std::sin(angle);
  for (std::size_t off = 0; off + dim <= features.size(); off += dim) {
    double* x = &features[off];
    for (int j = 0; j < dim; ++j) x[j] = (x[j] - bias[j]) / scales[j];
    const double a = x[axis_a], b = x[axis_b];
    x[axis_a] = c * a + s * b;
    x[axis_b] = -s * a + c * b;
  }
}

CovariateTransform make_covariate_transform(int domain_id, int dim, const ShiftConfig& cfg) {
  if (domain_id < 0) throw std::invalid_argument("make_covariate_transform: domain_id >= 0");
  cfg.validate();
  CovariateTransform t;
  t.domain_id = domain_id;
  t.scales.assign(dim, 1.0);
  t.bias.assign(dim, 0.0);
  if (domain_id == 0) return t;
  Rng rng = Rng(0x636f76ULL).fork(static_cast<std::uint64_t>(domain_id));
  t.axis_a = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(dim)));
  t.axis_b = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(dim - 1)));
  if (t.axis_b >= t.axis_a) ++t.axis_b;
  t.angle = rng.uniform(0.0, 6.283185307179586);
  for (int j = 0; j < dim; ++j) t.scales[j] = rng.uniform(cfg.scale_min, cfg.scale_max);
  for (int j = 0; j < dim; ++j) t.bias[j] = rng.uniform(-cfg.bias_range, cfg.bias_range);
  return t;
}

ClientDataset apply_covariate_shift(const Dataset& dataset, int domain_id,
                                    const ShiftConfig& cfg) {
  ClientDataset out;
  out.data = dataset;
  out.meta.domain_id = domain_id;
  const auto t = make_covariate_transform(domain_id, dataset.dim, cfg);
  t.apply(out.data.features, dataset.dim);
  return out;
}

void concept_shift_step(LabelMap& map, int round, Rng& rng, const ShiftConfig& cfg,
                        bool force) {
  const int C = map.num_classes();
  auto flip_one = [&](int cls) {
    const int cur = map.apply(cls);
    // uniform over the other C-1 labels
    int target = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(C - 1)));
    if (target >= cur) ++target;
    map.remap(round, cls, target);
  };
  if (force) {
    flip_one(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(C))));
    return;
  }
  if (cfg.concept_shift_per_class) {
    for (int cls = 0; cls < C; ++cls) {
      if (rng.next_double() < cfg.concept_shift_prob) flip_one(cls);
    }
  } else {
    if (rng.next_double() < cfg.concept_shift_prob) {
      flip_one(static_cast<int>(rng.next_below(static_cast<std::uint64_t>(C))));
    }
  }
}

Dataset load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_table: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_table: empty file " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();

  // header: f0,...,f{dim-1},label
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cols.push_back(cell);
  }
  if (cols.size() < 2 || cols.back() != "label") {
    throw std::runtime_error("load_table: bad header in " + path);
  }
  const int dim = static_cast<int>(cols.size()) - 1;
  for (int j = 0; j < dim; ++j) {
    if (cols[j] != "f" + std::to_string(j)) {
      throw std::runtime_error("load_table: bad header column " + cols[j] + " in " + path);
    }
  }

  Dataset d;
  d.dim = dim;
  int max_label = -1;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    int col = 0;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      if (col < dim) {
        double v;
        try {
          v = std::stod(cell, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != cell.size()) {
          throw std::runtime_error("load_table: non-numeric feature at line " +
                                   std::to_string(lineno) + " in " + path);
        }
        d.features.push_back(v);
      } else {
        long y;
        try {
          y = std::stol(cell, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != cell.size() || y < 0) {
          throw std::runtime_error("load_table: bad label at line " + std::to_string(lineno) +
                                   " in " + path);
        }
        d.labels.push_back(static_cast<int>(y));
        max_label = std::max(max_label, static_cast<int>(y));
      }
      ++col;
    }
    if (col != dim + 1) {
      throw std::runtime_error("load_table: wrong column count at line " +
                               std::to_string(lineno) + " in " + path);
    }
  }
  d.num_classes = max_label + 1;
  return d;
}

void save_table(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_table: cannot open " + path);
  for (int j = 0; j < d.dim; ++j) out << "f" << j << ",";
  out << "label\n";
  out.precision(17);
  for (int i = 0; i < d.n(); ++i) {
    for (int j = 0; j < d.dim; ++j) {
      out << d.features[static_cast<std::size_t>(i) * d.dim + j] << ",";
    }
    out << d.labels[i] << "\n";
  }
  if (!out) throw std::runtime_error("save_table: write failed for " + path);
}

}  // namespace fedsim
