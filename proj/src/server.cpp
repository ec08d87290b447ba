#include "fedsim/server.hpp"

#include <algorithm>
#include <stdexcept>

#include "fedsim/rng.hpp"

namespace fedsim {

void CommLedger::add(int round, std::uint64_t s2c, std::uint64_t c2s) {
  per_round.push_back({round, s2c, c2s});
  total_s2c += s2c;
  total_c2s += c2s;
}

ServerState init_server(Method method, const ModelSpec& spec, std::uint64_t seed) {
  ServerState s;
  s.w_curr = init_model(spec, seed);
  const std::size_t d = s.w_curr.size();
  if (method == Method::Scaffold) s.control_variate = ParamVector(d, 0.0);
  if (method == Method::FedCurv) {
    s.fedcurv_sums = std::make_pair(ParamVector(d, 0.0), ParamVector(d, 0.0));
  }
  return s;
}

std::vector<std::int64_t> sample_clients(ClientPool& pool, int k, int round) {
  if (k < 1) throw std::invalid_argument("sample_clients: K must be >= 1");
  std::vector<std::int64_t> ids;
  ids.reserve(k);
  if (pool.mode == ClientPool::Mode::CrossDevice) {
    // fresh, never-seen ids
    for (int i = 0; i < k; ++i) ids.push_back(pool.next_fresh_id++);
  } else {
    if (k > pool.pool_size) {
      throw std::invalid_argument("sample_clients: K exceeds cross-silo roster size");
    }
    std::vector<std::int64_t> roster(pool.pool_size);
    for (int i = 0; i < pool.pool_size; ++i) roster[i] = i;
    Rng rng = Rng(pool.seed).fork(0x73616d706cULL).fork(static_cast<std::uint64_t>(round));
    rng.shuffle(roster);
    ids.assign(roster.begin(), roster.begin() + k);
    std::sort(ids.begin(), ids.end());
  }
  return ids;
}

CommCost comm_cost(Method method, ClientPool::Mode mode, int round, std::size_t d) {
  CommCost c;
  switch (method) {
    case Method::FedAvg:
    case Method::FedProx:
    case Method::FedPD:
      c = {d, d};
      break;
    case Method::FedFOR:
      c = {round >= 2 ? 2 * d : d, d};
      break;
    case Method::Scaffold:
      c = {2 * d, 2 * d};  // model + variate each way
      break;
    case Method::FedCurv:
      c = {3 * d, d};  // model + the two Fisher sums down, model up
      break;
  }
  (void)mode;  // FedFOR cross-silo transmits the direction instead of W^{t-2}: still 2d
  return c;
}

BroadcastPayload build_broadcast(Method method, const ServerState& state,
                                 ClientPool::Mode mode, std::int64_t client_id,
                                 const HyperParams& hp) {
  BroadcastPayload p;
  p.method = method;
  p.current_global = state.w_curr;
  p.first_round = !state.w_prev.has_value();
  switch (method) {
    case Method::FedAvg:
    case Method::FedProx:
    case Method::FedPD:
      break;
    case Method::FedFOR:
      if (state.w_prev) {
        if (mode == ClientPool::Mode::CrossSilo) {
          // server-computed global direction (W^{t-2} - W^{t-1}) / eta
          ParamVector g(state.w_curr.size());
          for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] = ((*state.w_prev)[i] - state.w_curr[i]) / hp.eta;
          }
          p.global_grad = std::move(g);
        } else {
          p.prev_global = *state.w_prev;
        }
      }
      break;
    case Method::Scaffold:
      p.global_grad = state.control_variate.value_or(ParamVector(state.w_curr.size(), 0.0));
      break;
    case Method::FedCurv:
      if (state.fedcurv_sums) {
        ParamVector fsum = state.fedcurv_sums->first;
        ParamVector gsum = state.fedcurv_sums->second;
        // remove the recipient's own contribution when we have it (cross-silo;
        // a cross-device client never contributed before)
        if (mode == ClientPool::Mode::CrossSilo) {
          auto it = state.state_store.find(client_id);
          if (it != state.state_store.end() && it->second.fisher_diag &&
              it->second.last_local_model) {
            const auto& fi = *it->second.fisher_diag;
            const auto& wi = *it->second.last_local_model;
            for (std::size_t i = 0; i < fsum.size(); ++i) {
              fsum[i] -= fi[i];
              gsum[i] -= fi[i] * wi[i];
            }
          }
        }
        p.fisher_sum = std::move(fsum);
        p.fisher_weighted_sum = std::move(gsum);
      }
      break;
  }
  return p;
}

ParamVector aggregate(const std::vector<ParamVector>& models, const ParamMask* mask,
                      const ParamVector* fallback, const std::vector<double>* weights) {
  if (models.empty()) throw std::invalid_argument("aggregate: no models");
  const std::size_t d = models.front().size();
  for (const auto& m : models) {
    if (m.size() != d) throw std::invalid_argument("aggregate: length mismatch");
  }
  if (weights && weights->size() != models.size()) {
    throw std::invalid_argument("aggregate: weight count mismatch");
  }
  ParamVector out(d, 0.0);
  if (weights) {
    double wsum = 0.0;
    for (double w : *weights) wsum += w;
    if (wsum <= 0.0) throw std::invalid_argument("aggregate: nonpositive weight sum");
    for (std::size_t k = 0; k < models.size(); ++k) {
      const double w = (*weights)[k] / wsum;
      for (std::size_t i = 0; i < d; ++i) out[i] += w * models[k][i];
    }
  } else {
    for (const auto& m : models) {
      for (std::size_t i = 0; i < d; ++i) out[i] += m[i];
    }
    const double inv_k = 1.0 / static_cast<double>(models.size());
    for (double& v : out) v *= inv_k;
  }
  if (mask) {
    if (mask->size() != d) throw std::invalid_argument("aggregate: mask length mismatch");
    if (!fallback || fallback->size() != d) {
      throw std::invalid_argument("aggregate: mask requires a fallback vector");
    }
    for (std::size_t i = 0; i < d; ++i) {
      if (!(*mask)[i]) out[i] = (*fallback)[i];
    }
  }
  return out;
}

ParamVector eval_params(const ParamVector& w, const ModelSpec& spec, bool fedbn_mask) {
  ParamVector p = w;
  if (fedbn_mask) reset_norm_identity(p, spec);
  return p;
}

RoundRecord run_round(ServerState& state, ClientPool& pool, Method method,
                      const HyperParams& hp, const ModelSpec& spec,
                      const DataProvider& provider, const RoundOptions& opts) {
  hp.validate();
  const int t = state.round + 1;
  const std::size_t d = state.w_curr.size();
  const bool stateful_pool = pool.mode == ClientPool::Mode::CrossSilo;

  auto ids = sample_clients(pool, hp.clients_per_round, t);

  RoundRecord rec;
  rec.round = t;

  const CommCost cost = comm_cost(method, pool.mode, t, d);

  std::vector<ParamVector> models;
  std::vector<double> weights;
  std::vector<ParamVector> returned_variates;
  std::vector<std::pair<ParamVector, ParamVector>> fedcurv_contribs;
  std::vector<std::pair<std::int64_t, ClientState>> new_states;

  for (std::int64_t id : ids) {
    ClientDataset shard = provider.shard(id, t);
    rec.s2c_floats += cost.s2c_per_client;  // broadcast goes out on sampling
    if (shard.data.empty()) {
      rec.skipped.push_back(id);
      continue;
    }
    BroadcastPayload payload = build_broadcast(method, state, pool.mode, id, hp);

    std::optional<ClientState> prior_state;
    if (stateful_pool && method_is_stateful(method)) {
      ++state.state_store_touches;
      auto it = state.state_store.find(id);
      if (it != state.state_store.end()) prior_state = it->second;
    }

    const std::uint64_t client_seed = Rng(opts.run_seed)
                                          .fork(static_cast<std::uint64_t>(id))
                                          .fork(static_cast<std::uint64_t>(t))
                                          .next_u64();
    const Batch local = shard.data.to_batch();
    LocalResult res = local_update(method, payload, local, hp, spec, client_seed, prior_state);

    rec.c2s_floats += cost.c2s_per_client;
    rec.participants.push_back(id);
    weights.push_back(static_cast<double>(shard.data.n()));

    if (method == Method::Scaffold && res.new_state && res.new_state->control_variate) {
      returned_variates.push_back(*res.new_state->control_variate);
    }
    if (method == Method::FedCurv && res.fisher) {
      ParamVector fw(d);
      for (std::size_t i = 0; i < d; ++i) fw[i] = (*res.fisher)[i] * res.model[i];
      fedcurv_contribs.emplace_back(*res.fisher, std::move(fw));
    }
    if (stateful_pool && method_is_stateful(method) && res.new_state) {
      new_states.emplace_back(id, std::move(*res.new_state));
    }
    models.push_back(std::move(res.model));
  }

  if (models.empty()) {
    throw std::runtime_error("run_round: every sampled client had an empty shard");
  }

  std::optional<ParamMask> mask;
  if (opts.fedbn_mask) mask = norm_layer_mask(spec);
  ParamVector w_new = aggregate(models, mask ? &*mask : nullptr,
                                mask ? &state.w_curr : nullptr,
                                opts.weighted_average ? &weights : nullptr);

  // advance global snapshots
  state.w_prev = std::move(state.w_curr);
  state.w_curr = std::move(w_new);
  state.round = t;

  if (method == Method::Scaffold && !hp.scaffold_zero_variates &&
      !returned_variates.empty()) {
    state.control_variate = aggregate(returned_variates);
  }
  if (method == Method::FedCurv && !fedcurv_contribs.empty()) {
    ParamVector fsum(d, 0.0), gsum(d, 0.0);
    for (const auto& [fi, fwi] : fedcurv_contribs) {
      for (std::size_t i = 0; i < d; ++i) {
        fsum[i] += fi[i];
        gsum[i] += fwi[i];
      }
    }
    state.fedcurv_sums = std::make_pair(std::move(fsum), std::move(gsum));
  }
  for (auto& [id, st] : new_states) {
    ++state.state_store_touches;
    state.state_store[id] = std::move(st);
  }

  state.ledger.add(t, rec.s2c_floats, rec.c2s_floats);

  const Batch val = provider.validation(t);
  rec.val_acc = evaluate(eval_params(state.w_curr, spec, opts.fedbn_mask), val, spec);
  return rec;
}

std::vector<LedgerRow> ledger_report(const CommLedger& ledger) {
  std::vector<LedgerRow> rows;
  rows.reserve(ledger.per_round.size());
  for (const auto& e : ledger.per_round) rows.push_back({e.round, e.s2c, e.c2s});
  return rows;
}

}  // namespace fedsim
