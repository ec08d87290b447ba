#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/nn.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

struct Dataset {
  std::vector<double> features;  // row-major, n x dim
  std::vector<int> labels;
  int dim = 0;
  int num_classes = 0;

  int n() const { return static_cast<int>(labels.size()); }
  bool empty() const { return labels.empty(); }
  Batch to_batch() const;
};

struct ShiftMeta {
  std::int64_t client_id = -1;
  std::vector<int> class_order;  // long-tail rank order, empty if none
  int domain_id = -1;
  int label_map_version = 0;
};

struct ClientDataset {
  Dataset data;
  ShiftMeta meta;
};

/// Global, irreversible relabeling process. The mapping at version v is the
/// replay of the first v history entries over the identity map.
class LabelMap {
 public:
  struct Event {
    int round;
    int source_class;  // original class id
    int target_label;
  };

  explicit LabelMap(int num_classes);

  int version() const { return static_cast<int>(history_.size()); }
  int num_classes() const { return static_cast<int>(mapping_.size()); }
  int apply(int original_label) const { return mapping_.at(original_label); }
  const std::vector<Event>& history() const { return history_; }
  const std::vector<int>& mapping() const { return mapping_; }

  /// Record one remap; target must differ from the class's current label.
  void remap(int round, int source_class, int target_label);

  /// Replays the first v events; used as the composition oracle.
  std::vector<int> mapping_at_version(int v) const;

  void relabel(Dataset& d) const;

 private:
  std::vector<int> mapping_;
  std::vector<Event> history_;
};

struct ShiftConfig {
  double imbalance_ratio = 0.01;   // rho in (0, 1]
  double sample_fraction = 0.1;    // in (0, 1]
  double concept_shift_prob = 0.05;
  bool concept_shift_per_class = false;  // independent 5% coin per class
  // covariate transform family
  double scale_min = 0.5;
  double scale_max = 2.0;
  double bias_range = 1.0;

  void validate() const;
};

/// Gaussian mixture: one unit-variance spherical component per class,
/// means on a sphere of radius 3.
Dataset gen_synthetic(int num_classes, int dim, int n_per_class, std::uint64_t seed);

/// Per-class 10%-style subsample followed by the exponential long-tail trim
/// with a client-specific class ordering: rank-r class keeps
/// max(1, floor(n_max * rho^{r/(C-1)})) samples.
ClientDataset partition_prior_shift(const Dataset& dataset, std::uint64_t client_seed,
                                    const ShiftConfig& cfg);

/// IID shard: per-class uniform subsample of sample_fraction, no trimming.
ClientDataset partition_iid(const Dataset& dataset, std::uint64_t client_seed,
                            const ShiftConfig& cfg);

struct CovariateTransform {
  int domain_id = 0;
  int axis_a = 0, axis_b = 1;  // rotation plane
  double angle = 0.0;
  std::vector<double> scales;
  std::vector<double> bias;

  void apply(std::vector<double>& features, int dim) const;
  void invert(std::vector<double>& features, int dim) const;
};

/// Fixed invertible affine transform per domain; domain 0 is the identity.
CovariateTransform make_covariate_transform(int domain_id, int dim, const ShiftConfig& cfg);

ClientDataset apply_covariate_shift(const Dataset& dataset, int domain_id,
                                    const ShiftConfig& cfg);

/// One concept-shift draw for this round; mutates the map in place when the
/// coin lands. `force` triggers exactly one remap regardless of probability.
void concept_shift_step(LabelMap& map, int round, Rng& rng, const ShiftConfig& cfg,
                        bool force = false);

/// CSV ingestion: header `f0,...,f{dim-1},label`, one sample per line.
Dataset load_table(const std::string& path);
void save_table(const Dataset& d, const std::string& path);

}  // namespace fedsim
