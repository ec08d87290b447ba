#include "fedsim/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fedsim/rng.hpp"

namespace fedsim {

void ModelSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw std::invalid_argument("ModelSpec: need at least input and output layer");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw std::invalid_argument("ModelSpec: layer sizes must be >= 1");
  }
}

std::size_t ModelSpec::param_count() const {
  std::size_t d = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    d += static_cast<std::size_t>(layer_sizes[i]) * layer_sizes[i + 1] + layer_sizes[i + 1];
    if (i == 0 && has_norm_layer) d += 2 * static_cast<std::size_t>(layer_sizes[1]);
  }
  return d;
}

Batch::Batch(std::vector<double> f, std::vector<int> l, int dim_, int num_classes)
    : features(std::move(f)), labels(std::move(l)), dim(dim_) {
  if (dim <= 0) throw std::invalid_argument("Batch: dim must be positive");
  if (labels.empty() || features.size() != labels.size() * static_cast<std::size_t>(dim)) {
    throw std::invalid_argument("Batch: feature/label size mismatch");
  }
  n = static_cast<int>(labels.size());
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw std::invalid_argument("Batch: label out of range");
  }
}

ParamVector init_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p;
  p.reserve(spec.param_count());
  Rng rng = Rng(seed).fork(0x6d6f64656cULL);
  for (std::size_t i = 0; i + 1 < spec.layer_sizes.size(); ++i) {
    const int fan_in = spec.layer_sizes[i];
    const int fan_out = spec.layer_sizes[i + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (int j = 0; j < fan_in * fan_out; ++j) p.push_back(rng.uniform(-bound, bound));
    for (int j = 0; j < fan_out; ++j) p.push_back(0.0);
    if (i == 0 && spec.has_norm_layer) {
      for (int j = 0; j < fan_out; ++j) p.push_back(1.0);  // scales
      for (int j = 0; j < fan_out; ++j) p.push_back(0.0);  // shifts
    }
  }
  return p;
}

namespace {

struct Layout {
  // offsets into the flat parameter vector, forward order
  struct Linear {
    std::size_t w, b;
    int in, out;
  };
  std::vector<Linear> linears;
  std::size_t norm_scale = 0, norm_shift = 0;
  int norm_dim = 0;
  std::size_t total = 0;
};

Layout make_layout(const ModelSpec& spec) {
  Layout lo;
  std::size_t off = 0;
  for (std::size_t i = 0; i + 1 < spec.layer_sizes.size(); ++i) {
    Layout::Linear lin;
    lin.in = spec.layer_sizes[i];
    lin.out = spec.layer_sizes[i + 1];
    lin.w = off;
    off += static_cast<std::size_t>(lin.in) * lin.out;
    lin.b = off;
    off += lin.out;
    lo.linears.push_back(lin);
    if (i == 0 && spec.has_norm_layer) {
      lo.norm_dim = lin.out;
      lo.norm_scale = off;
      off += lin.out;
      lo.norm_shift = off;
      off += lin.out;
    }
  }
  lo.total = off;
  return lo;
}

// activations[l] holds the post-everything input to linear layer l;
// returns the final logits.
void forward_pass(const ParamVector& p, const Layout& lo, const ModelSpec& spec,
                  const double* x, std::vector<std::vector<double>>& acts,
                  std::vector<double>& relu0, std::vector<double>& logits) {
  const std::size_t L = lo.linears.size();
  acts.assign(L, {});
  acts[0].assign(x, x + lo.linears[0].in);
  relu0.clear();
  std::vector<double> cur;
  for (std::size_t l = 0; l < L; ++l) {
    const auto& lin = lo.linears[l];
    cur.assign(lin.out, 0.0);
    const double* in = acts[l].data();
    for (int o = 0; o < lin.out; ++o) {
      double s = p[lin.b + o];
      const double* wrow = &p[lin.w + static_cast<std::size_t>(o) * lin.in];
      for (int i = 0; i < lin.in; ++i) s += wrow[i] * in[i];
      cur[o] = s;
    }
    if (l + 1 < L) {
      for (double& v : cur) v = v > 0.0 ? v : 0.0;  // ReLU
      if (l == 0 && spec.has_norm_layer) {
        relu0 = cur;
        for (int i = 0; i < lo.norm_dim; ++i) {
          cur[i] = p[lo.norm_scale + i] * cur[i] + p[lo.norm_shift + i];
        }
      }
      acts[l + 1] = cur;
    }
  }
  logits = cur;
}

void softmax_inplace(std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (double& v : z) v /= sum;
}

}  // namespace

std::vector<double> forward_logits(const ParamVector& params, const double* features,
                                   const ModelSpec& spec) {
  Layout lo = make_layout(spec);
  std::vector<std::vector<double>> acts;
  std::vector<double> relu0, logits;
  forward_pass(params, lo, spec, features, acts, relu0, logits);
  return logits;
}

std::pair<double, ParamVector> loss_and_grad(const ParamVector& params, const Batch& batch,
                                             const ModelSpec& spec) {
  spec.validate();
  const Layout lo = make_layout(spec);
  if (params.size() != lo.total) throw std::invalid_argument("loss_and_grad: param size mismatch");
  if (batch.dim != spec.input_dim()) throw std::invalid_argument("loss_and_grad: feature dim mismatch");

  const std::size_t L = lo.linears.size();
  ParamVector grad(lo.total, 0.0);
  double loss = 0.0;
  std::vector<std::vector<double>> acts;
  std::vector<double> relu0, logits, delta, prev_delta;

  for (int s = 0; s < batch.n; ++s) {
    const double* x = &batch.features[static_cast<std::size_t>(s) * batch.dim];
    forward_pass(params, lo, spec, x, acts, relu0, logits);
    std::vector<double> probs = logits;
    softmax_inplace(probs);
    const int y = batch.labels[s];
    loss += -std::log(std::max(probs[y], 1e-300));

    // output delta = softmax - onehot
    delta = probs;
    delta[y] -= 1.0;

    for (std::size_t l = L; l-- > 0;) {
      const auto& lin = lo.linears[l];
      const double* in = acts[l].data();
      for (int o = 0; o < lin.out; ++o) {
        grad[lin.b + o] += delta[o];
        double* gw = &grad[lin.w + static_cast<std::size_t>(o) * lin.in];
        for (int i = 0; i < lin.in; ++i) gw[i] += delta[o] * in[i];
      }
      if (l == 0) break;
      prev_delta.assign(lin.in, 0.0);
      for (int o = 0; o < lin.out; ++o) {
        const double* wrow = &params[lin.w + static_cast<std::size_t>(o) * lin.in];
        for (int i = 0; i < lin.in; ++i) prev_delta[i] += wrow[i] * delta[o];
      }
      if (l == 1 && spec.has_norm_layer) {
        // acts[1] = scale * relu0 + shift
        for (int i = 0; i < lo.norm_dim; ++i) {
          grad[lo.norm_scale + i] += prev_delta[i] * relu0[i];
          grad[lo.norm_shift + i] += prev_delta[i];
          prev_delta[i] *= params[lo.norm_scale + i];
          if (relu0[i] <= 0.0) prev_delta[i] = 0.0;
        }
      } else {
        for (int i = 0; i < lin.in; ++i) {
          if (acts[l][i] <= 0.0) prev_delta[i] = 0.0;
        }
      }
      delta = prev_delta;
    }
  }

  const double inv_n = 1.0 / batch.n;
  loss *= inv_n;
  for (double& g : grad) g *= inv_n;
  return {loss, grad};
}

std::vector<ParamVector> per_sample_grads(const ParamVector& params, const Batch& batch,
                                          const ModelSpec& spec) {
  std::vector<ParamVector> out;
  out.reserve(batch.n);
  for (int s = 0; s < batch.n; ++s) {
    Batch one;
    one.dim = batch.dim;
    one.n = 1;
    one.features.assign(batch.features.begin() + static_cast<std::size_t>(s) * batch.dim,
                        batch.features.begin() + static_cast<std::size_t>(s + 1) * batch.dim);
    one.labels = {batch.labels[s]};
    out.push_back(loss_and_grad(params, one, spec).second);
  }
  return out;
}

ParamVector finite_diff_grad(const ParamVector& params, const Batch& batch,
                             const ModelSpec& spec, double step) {
  if (step <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
  ParamVector g(params.size(), 0.0);
  ParamVector p = params;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double orig = p[i];
    p[i] = orig + step;
    const double lp = loss_and_grad(p, batch, spec).first;
    p[i] = orig - step;
    const double lm = loss_and_grad(p, batch, spec).first;
    p[i] = orig;
    g[i] = (lp - lm) / (2.0 * step);
  }
  return g;
}

ParamMask norm_layer_mask(const ModelSpec& spec) {
  const Layout lo = make_layout(spec);
  ParamMask mask(lo.total, true);
  if (spec.has_norm_layer) {
    for (int i = 0; i < lo.norm_dim; ++i) {
      mask[lo.norm_scale + i] = false;
      mask[lo.norm_shift + i] = false;
    }
  }
  return mask;
}

void reset_norm_identity(ParamVector& params, const ModelSpec& spec) {
  if (!spec.has_norm_layer) return;
  const Layout lo = make_layout(spec);
  for (int i = 0; i < lo.norm_dim; ++i) {
    params[lo.norm_scale + i] = 1.0;
    params[lo.norm_shift + i] = 0.0;
  }
}

double evaluate(const ParamVector& params, const Batch& dataset, const ModelSpec& spec) {
  if (dataset.n == 0) throw std::invalid_argument("evaluate: empty dataset");
  const Layout lo = make_layout(spec);
  std::vector<std::vector<double>> acts;
  std::vector<double> relu0, logits;
  int correct = 0;
  for (int s = 0; s < dataset.n; ++s) {
    forward_pass(params, lo, spec, &dataset.features[static_cast<std::size_t>(s) * dataset.dim],
                 acts, relu0, logits);
    int best = 0;
    for (int c = 1; c < static_cast<int>(logits.size()); ++c) {
      if (logits[c] > logits[best]) best = c;  // ties keep the lowest index
    }
    if (best == dataset.labels[s]) ++correct;
  }
  return static_cast<double>(correct) / dataset.n;
}

}  // namespace fedsim
