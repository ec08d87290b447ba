#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace fedsim {

using ParamVector = std::vector<double>;
using ParamMask = std::vector<bool>;

/// Dense ReLU network layout. The optional norm layer is a per-feature
/// scale+shift block inserted after the first hidden activation; its
/// parameters are what aggregation masking (FedBN-style) excludes.
struct ModelSpec {
  std::vector<int> layer_sizes;  // input dim, hidden dims..., class count
  bool has_norm_layer = false;

  int input_dim() const { return layer_sizes.front(); }
  int num_classes() const { return layer_sizes.back(); }
  std::size_t param_count() const;
  void validate() const;
};

struct Batch {
  std::vector<double> features;  // row-major, n x input_dim
  std::vector<int> labels;       // n entries in [0, C)
  int n = 0;
  int dim = 0;

  Batch() = default;
  Batch(std::vector<double> f, std::vector<int> l, int dim_, int num_classes);
};

ParamVector init_model(const ModelSpec& spec, std::uint64_t seed);

std::pair<double, ParamVector> loss_and_grad(const ParamVector& params,
                                             const Batch& batch,
                                             const ModelSpec& spec);

/// Per-sample loss gradients stacked row-wise (n x d); used for the
/// diagonal Fisher estimate.
std::vector<ParamVector> per_sample_grads(const ParamVector& params,
                                          const Batch& batch,
                                          const ModelSpec& spec);

ParamVector finite_diff_grad(const ParamVector& params, const Batch& batch,
                             const ModelSpec& spec, double step);

/// All-true except the norm layer's scale/shift coordinates.
ParamMask norm_layer_mask(const ModelSpec& spec);

/// Resets the norm layer to scale 1, shift 0; no-op without a norm layer.
void reset_norm_identity(ParamVector& params, const ModelSpec& spec);

/// Fraction of argmax-correct predictions; ties go to the lowest class index.
double evaluate(const ParamVector& params, const Batch& dataset,
                const ModelSpec& spec);

/// Class logits for one sample (used by evaluate and tests).
std::vector<double> forward_logits(const ParamVector& params,
                                   const double* features,
                                   const ModelSpec& spec);

}  // namespace fedsim
