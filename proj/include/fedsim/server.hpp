#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "fedsim/client_opt.hpp"
#include "fedsim/data.hpp"
#include "fedsim/nn.hpp"

namespace fedsim {

struct CommLedger {
  struct Entry {
    int round = 0;
    std::uint64_t s2c = 0;  // floats server -> clients, summed over clients
    std::uint64_t c2s = 0;  // floats clients -> server
  };
  std::vector<Entry> per_round;
  std::uint64_t total_s2c = 0;
  std::uint64_t total_c2s = 0;

  void add(int round, std::uint64_t s2c, std::uint64_t c2s);
};

struct ClientPool {
  enum class Mode { CrossDevice, CrossSilo };
  Mode mode = Mode::CrossDevice;
  int pool_size = 0;  // cross-silo roster size; ignored for cross-device
  std::uint64_t seed = 0;
  std::int64_t next_fresh_id = 0;  // cross-device id counter
};

/// Per-client S2C/C2S float counts for one round, as multiples of d.
struct CommCost {
  std::uint64_t s2c_per_client = 0;
  std::uint64_t c2s_per_client = 0;
};
CommCost comm_cost(Method method, ClientPool::Mode mode, int round, std::size_t d);

struct ServerState {
  int round = 0;  // rounds completed
  ParamVector w_curr;                         // W^{t-1} for the next round
  std::optional<ParamVector> w_prev;          // W^{t-2}
  std::optional<ParamVector> control_variate; // SCAFFOLD c
  std::optional<std::pair<ParamVector, ParamVector>> fedcurv_sums;  // (sum I_j, sum I_j*W_j)
  std::map<std::int64_t, ClientState> state_store;  // cross-silo only
  CommLedger ledger;
  // must stay 0 over any cross-device run
  int state_store_touches = 0;
};

ServerState init_server(Method method, const ModelSpec& spec, std::uint64_t seed);

struct RoundRecord {
  int round = 0;
  double val_acc = 0.0;
  std::uint64_t s2c_floats = 0;
  std::uint64_t c2s_floats = 0;
  std::vector<std::int64_t> participants;
  std::vector<std::int64_t> skipped;  // sampled clients with empty shards
  int labelmap_version = 0;
};

std::vector<std::int64_t> sample_clients(ClientPool& pool, int k, int round);

BroadcastPayload build_broadcast(Method method, const ServerState& state,
                                 ClientPool::Mode mode, std::int64_t client_id,
                                 const HyperParams& hp);

/// Unweighted coordinate mean; weighted by `weights` when given. Masked-out
/// coordinates keep `fallback`'s value.
ParamVector aggregate(const std::vector<ParamVector>& models,
                      const ParamMask* mask = nullptr,
                      const ParamVector* fallback = nullptr,
                      const std::vector<double>* weights = nullptr);

struct DataProvider {
  std::function<ClientDataset(std::int64_t client_id, int round)> shard;
  std::function<Batch(int round)> validation;
};

struct RoundOptions {
  std::uint64_t run_seed = 0;
  bool fedbn_mask = false;       // keep norm-layer params out of aggregation
  bool weighted_average = false; // data-size-weighted mean (off per default)
};

RoundRecord run_round(ServerState& state, ClientPool& pool, Method method,
                      const HyperParams& hp, const ModelSpec& spec,
                      const DataProvider& provider, const RoundOptions& opts = {});

/// Parameters used when evaluating the global model: identity norm layer
/// under FedBN masking.
ParamVector eval_params(const ParamVector& w, const ModelSpec& spec, bool fedbn_mask);

struct LedgerRow {
  int round;
  std::uint64_t s2c, c2s;
};
std::vector<LedgerRow> ledger_report(const CommLedger& ledger);

}  // namespace fedsim
