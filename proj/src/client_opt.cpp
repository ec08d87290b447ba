#include "fedsim/client_opt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

#include "fedsim/rng.hpp"

namespace fedsim {

std::string method_name(Method m) {
  switch (m) {
    case Method::FedAvg: return "fedavg";
    case Method::FedProx: return "fedprox";
    case Method::FedCurv: return "fedcurv";
    case Method::FedPD: return "fedpd";
    case Method::Scaffold: return "scaffold";
    case Method::FedFOR: return "fedfor";
  }
  return "unknown";
}

std::optional<Method> method_from_name(const std::string& name) {
  if (name == "fedavg") return Method::FedAvg;
  if (name == "fedprox") return Method::FedProx;
  if (name == "fedcurv") return Method::FedCurv;
  if (name == "fedpd" || name == "feddyn") return Method::FedPD;
  if (name == "scaffold") return Method::Scaffold;
  if (name == "fedfor") return Method::FedFOR;
  return std::nullopt;
}

bool method_is_stateful(Method m) {
  return m == Method::FedPD || m == Method::Scaffold || m == Method::FedCurv;
}

void HyperParams::validate() const {
  if (eta <= 0.0) throw std::invalid_argument("HyperParams: eta must be > 0");
  if (alpha < 0.0) throw std::invalid_argument("HyperParams: alpha must be >= 0");
  if (fedcurv_alpha < 0.0) throw std::invalid_argument("HyperParams: fedcurv_alpha must be >= 0");
  if (local_epochs < 1) throw std::invalid_argument("HyperParams: E must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("HyperParams: B must be >= 1");
  if (clients_per_round < 1) throw std::invalid_argument("HyperParams: K must be >= 1");
}

std::pair<double, ParamVector> fedfor_reg_term(const ParamVector& w,
                                               const ParamVector& w_prev,
                                               const ParamVector& w_prevprev,
                                               double alpha, double eta, bool rectified) {
  if (eta <= 0.0) throw std::invalid_argument("fedfor_reg_term: eta must be > 0");
  const std::size_t d = w.size();
  if (w_prev.size() != d || w_prevprev.size() != d) {
    throw std::invalid_argument("fedfor_reg_term: vector length mismatch");
  }
  const double scale = alpha / eta;
  double penalty = 0.0;
  ParamVector grad_add(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double diff = w_prevprev[i] - w_prev[i];
    const double prod = diff * (w[i] - w_prev[i]);
    if (!rectified || prod >= 0.0) {
      penalty += scale * (!rectified ? prod : std::max(prod, 0.0));
      grad_add[i] = scale * diff;
    }
  }
  if (rectified && penalty < 0.0) penalty = 0.0;
  return {penalty, grad_add};
}

ParamVector compute_fisher_diag(const ParamVector& params, const Batch& data,
                                const ModelSpec& spec) {
  if (data.n == 0) throw std::invalid_argument("compute_fisher_diag: empty data");
  ParamVector fisher(params.size(), 0.0);
  const auto grads = per_sample_grads(params, data, spec);
  for (const auto& g : grads) {
    for (std::size_t i = 0; i < g.size(); ++i) fisher[i] += g[i] * g[i];
  }
  const double inv_n = 1.0 / data.n;
  for (double& v : fisher) v *= inv_n;
  return fisher;
}

namespace {

// Fills `extra` with the method's added gradient at w; returns false when
// the method contributes nothing this step.
using ExtraGrad = std::function<bool(const ParamVector& w, ParamVector& extra)>;

bool all_zero(const ParamVector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Minibatch SGD: E epochs, per-epoch shuffle keyed on (seed, epoch),
// consecutive chunks of size B (last chunk may be short).
ParamVector sgd_loop(const ParamVector& start, const Batch& data, const HyperParams& hp,
                     const ModelSpec& spec, std::uint64_t seed, const ExtraGrad& extra_grad) {
  hp.validate();
  if (data.n == 0) throw std::invalid_argument("local update: empty dataset");
  ParamVector w = start;
  ParamVector extra(w.size(), 0.0);
  std::vector<int> order(data.n);
  Batch mini;
  mini.dim = data.dim;
  for (int epoch = 0; epoch < hp.local_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).fork(0x65706f6368ULL).fork(static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);
    for (int begin = 0; begin < data.n; begin += hp.batch_size) {
      const int end = std::min(begin + hp.batch_size, data.n);
      mini.n = end - begin;
      mini.features.assign(static_cast<std::size_t>(mini.n) * data.dim, 0.0);
      mini.labels.assign(mini.n, 0);
      for (int r = begin; r < end; ++r) {
        const int src = order[r];
        std::copy_n(&data.features[static_cast<std::size_t>(src) * data.dim], data.dim,
                    &mini.features[static_cast<std::size_t>(r - begin) * data.dim]);
        mini.labels[r - begin] = data.labels[src];
      }
      ParamVector g = loss_and_grad(w, mini, spec).second;
      const bool has_extra = extra_grad && extra_grad(w, extra);
      if (has_extra && !all_zero(extra)) {
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += extra[i];
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= hp.eta * g[i];
    }
  }
  return w;
}

ParamVector full_data_grad(const ParamVector& params, const Batch& data,
                           const ModelSpec& spec) {
  return loss_and_grad(params, data, spec).second;
}

}  // namespace

ParamVector local_update_fedavg(const BroadcastPayload& payload, const Batch& data,
                                const HyperParams& hp, const ModelSpec& spec,
                                std::uint64_t seed) {
  return sgd_loop(payload.current_global, data, hp, spec, seed, nullptr);
}

ParamVector local_update_fedfor(const BroadcastPayload& payload, const Batch& data,
                                const HyperParams& hp, const ModelSpec& spec,
                                std::uint64_t seed) {
  if (!payload.prev_global && !payload.global_grad) {
    // round 1: no previous global movement yet
    return local_update_fedavg(payload, data, hp, spec, seed);
  }
  const ParamVector& w_prev = payload.current_global;
  // direction_i carries the sign of (w_i^{t-2} - w_i^{t-1}); grad_add is
  // alpha/eta times the cross-device difference, or alpha times the
  // cross-silo transmitted gradient (already divided by eta server-side).
  ParamVector direction, grad_unit;
  if (payload.prev_global) {
    const ParamVector& w_pp = *payload.prev_global;
    direction.resize(w_prev.size());
    grad_unit.resize(w_prev.size());
    const double scale = hp.alpha / hp.eta;
    for (std::size_t i = 0; i < w_prev.size(); ++i) {
      direction[i] = w_pp[i] - w_prev[i];
      grad_unit[i] = scale * direction[i];
    }
  } else {
    direction = *payload.global_grad;
    grad_unit.resize(direction.size());
    for (std::size_t i = 0; i < direction.size(); ++i) grad_unit[i] = hp.alpha * direction[i];
  }
  const bool rectified = hp.fedfor_rectified;
  auto extra = [&](const ParamVector& w, ParamVector& out) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      out[i] = (!rectified || direction[i] * (w[i] - w_prev[i]) >= 0.0) ? grad_unit[i] : 0.0;
    }
    return true;
  };
  return sgd_loop(w_prev, data, hp, spec, seed, extra);
}

ParamVector local_update_fedprox(const BroadcastPayload& payload, const Batch& data,
                                 const HyperParams& hp, const ModelSpec& spec,
                                 std::uint64_t seed) {
  const ParamVector& w_prev = payload.current_global;
  auto extra = [&](const ParamVector& w, ParamVector& out) {
    for (std::size_t i = 0; i < w.size(); ++i) out[i] = hp.alpha * (w[i] - w_prev[i]);
    return true;
  };
  return sgd_loop(w_prev, data, hp, spec, seed, extra);
}

std::pair<ParamVector, ParamVector> local_update_fedcurv(const BroadcastPayload& payload,
                                                         const Batch& data,
                                                         const HyperParams& hp,
                                                         const ModelSpec& spec,
                                                         std::uint64_t seed) {
  ParamVector model;
  if (!payload.fisher_sum || !payload.fisher_weighted_sum) {
    model = local_update_fedavg(payload, data, hp, spec, seed);
  } else {
    const ParamVector& fsum = *payload.fisher_sum;
    const ParamVector& gsum = *payload.fisher_weighted_sum;
    const double a2 = 2.0 * hp.fedcurv_alpha;
    auto extra = [&](const ParamVector& w, ParamVector& out) {
      for (std::size_t i = 0; i < w.size(); ++i) out[i] = a2 * (fsum[i] * w[i] - gsum[i]);
      return true;
    };
    model = sgd_loop(payload.current_global, data, hp, spec, seed, extra);
  }
  ParamVector fisher = compute_fisher_diag(model, data, spec);
  return {std::move(model), std::move(fisher)};
}

std::pair<ParamVector, ClientState> local_update_fedpd(
    const BroadcastPayload& payload, const Batch& data, const HyperParams& hp,
    const ModelSpec& spec, std::uint64_t seed, const std::optional<ClientState>& state) {
  const ParamVector& w_prev = payload.current_global;
  const ParamVector* prev_grad =
      (state && state->prev_local_grad) ? &*state->prev_local_grad : nullptr;
  auto extra = [&](const ParamVector& w, ParamVector& out) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      out[i] = hp.alpha * (w[i] - w_prev[i]);
      if (prev_grad) out[i] += (*prev_grad)[i];
    }
    return true;
  };
  ParamVector model = sgd_loop(w_prev, data, hp, spec, seed, extra);
  ClientState next;
  next.prev_local_grad = full_data_grad(model, data, spec);
  next.last_local_model = model;
  return {std::move(model), std::move(next)};
}

std::pair<ParamVector, ClientState> local_update_scaffold(
    const BroadcastPayload& payload, const Batch& data, const HyperParams& hp,
    const ModelSpec& spec, std::uint64_t seed, const std::optional<ClientState>& state) {
  const ParamVector& w_prev = payload.current_global;
  const ParamVector* c = payload.global_grad ? &*payload.global_grad : nullptr;
  const ParamVector* ck =
      (state && state->control_variate) ? &*state->control_variate : nullptr;
  // corrected step: batch grad - c_k + c
  ParamVector corr(w_prev.size(), 0.0);
  for (std::size_t i = 0; i < corr.size(); ++i) {
    double v = 0.0;
    if (ck) v -= (*ck)[i];
    if (c) v += (*c)[i];
    corr[i] = v;
  }
  auto extra = [&](const ParamVector&, ParamVector& out) {
    out = corr;
    return true;
  };
  ParamVector model = sgd_loop(w_prev, data, hp, spec, seed, extra);
  ClientState next;
  if (hp.scaffold_zero_variates) {
    next.control_variate = ParamVector(w_prev.size(), 0.0);
  } else {
    next.control_variate = full_data_grad(w_prev, data, spec);
  }
  return {std::move(model), std::move(next)};
}

LocalResult local_update(Method method, const BroadcastPayload& payload, const Batch& data,
                         const HyperParams& hp, const ModelSpec& spec, std::uint64_t seed,
                         const std::optional<ClientState>& state) {
  LocalResult res;
  switch (method) {
    case Method::FedAvg:
      res.model = local_update_fedavg(payload, data, hp, spec, seed);
      break;
    case Method::FedProx:
      res.model = local_update_fedprox(payload, data, hp, spec, seed);
      break;
    case Method::FedFOR:
      res.model = local_update_fedfor(payload, data, hp, spec, seed);
      break;
    case Method::FedCurv: {
      auto [model, fisher] = local_update_fedcurv(payload, data, hp, spec, seed);
      res.model = std::move(model);
      res.fisher = fisher;
      ClientState next;
      next.fisher_diag = std::move(fisher);
      next.last_local_model = res.model;
      res.new_state = std::move(next);
      break;
    }
    case Method::FedPD: {
      auto [model, next] = local_update_fedpd(payload, data, hp, spec, seed, state);
      res.model = std::move(model);
      res.new_state = std::move(next);
      break;
    }
    case Method::Scaffold: {
      auto [model, next] = local_update_scaffold(payload, data, hp, spec, seed, state);
      res.model = std::move(model);
      res.new_state = std::move(next);
      break;
    }
  }
  return res;
}

}  // namespace fedsim
