#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "fedsim/nn.hpp"

namespace fedsim {

enum class Method { FedAvg, FedProx, FedCurv, FedPD, Scaffold, FedFOR };

std::string method_name(Method m);
std::optional<Method> method_from_name(const std::string& name);

/// True for methods that keep per-client statistics between rounds.
bool method_is_stateful(Method m);

struct HyperParams {
  double eta = 0.01;
  double alpha = 5.0;
  int local_epochs = 1;   // E
  int batch_size = 32;    // B
  int clients_per_round = 10;  // K
  double fedcurv_alpha = 5.0;
  bool fedfor_rectified = true;
  // Test/config knob: keep SCAFFOLD's control variates pinned at zero.
  bool scaffold_zero_variates = false;

  void validate() const;
};

struct BroadcastPayload {
  Method method = Method::FedAvg;
  ParamVector current_global;                 // W^{t-1}
  std::optional<ParamVector> prev_global;     // W^{t-2} (FedFOR cross-device)
  std::optional<ParamVector> global_grad;     // FedFOR cross-silo direction, or SCAFFOLD c
  std::optional<ParamVector> fisher_sum;          // FedCurv: sum_j I_j (own removed)
  std::optional<ParamVector> fisher_weighted_sum; // FedCurv: sum_j I_j * W_j
  bool first_round = false;
};

struct ClientState {
  std::optional<ParamVector> prev_local_grad;  // FedPD/FedDyn
  std::optional<ParamVector> control_variate;  // SCAFFOLD c_k
  std::optional<ParamVector> fisher_diag;      // FedCurv I_k
  std::optional<ParamVector> last_local_model; // W_k^{t-1}
};

struct LocalResult {
  ParamVector model;
  std::optional<ClientState> new_state;        // stateful methods only
  std::optional<ParamVector> fisher;           // FedCurv upload
};

/// One-sided first-order penalty and its subgradient. grad_add_i is
/// (alpha/eta)(w_i^{t-2} - w_i^{t-1}) where the per-coordinate product
/// (w^{t-2}-w^{t-1})_i (w-w^{t-1})_i is >= 0, and 0 elsewhere; the
/// boundary (product exactly 0) counts as active.
std::pair<double, ParamVector> fedfor_reg_term(const ParamVector& w,
                                               const ParamVector& w_prev,
                                               const ParamVector& w_prevprev,
                                               double alpha, double eta,
                                               bool rectified = true);

/// Per-coordinate mean over samples of the squared per-sample loss gradient.
ParamVector compute_fisher_diag(const ParamVector& params, const Batch& data,
                                const ModelSpec& spec);

ParamVector local_update_fedavg(const BroadcastPayload& payload, const Batch& data,
                                const HyperParams& hp, const ModelSpec& spec,
                                std::uint64_t seed);

ParamVector local_update_fedfor(const BroadcastPayload& payload, const Batch& data,
                                const HyperParams& hp, const ModelSpec& spec,
                                std::uint64_t seed);

ParamVector local_update_fedprox(const BroadcastPayload& payload, const Batch& data,
                                 const HyperParams& hp, const ModelSpec& spec,
                                 std::uint64_t seed);

std::pair<ParamVector, ParamVector> local_update_fedcurv(const BroadcastPayload& payload,
                                                         const Batch& data,
                                                         const HyperParams& hp,
                                                         const ModelSpec& spec,
                                                         std::uint64_t seed);

std::pair<ParamVector, ClientState> local_update_fedpd(
    const BroadcastPayload& payload, const Batch& data, const HyperParams& hp,
    const ModelSpec& spec, std::uint64_t seed,
    const std::optional<ClientState>& state = std::nullopt);

std::pair<ParamVector, ClientState> local_update_scaffold(
    const BroadcastPayload& payload, const Batch& data, const HyperParams& hp,
    const ModelSpec& spec, std::uint64_t seed,
    const std::optional<ClientState>& state = std::nullopt);

/// Dispatch for the server loop.
LocalResult local_update(Method method, const BroadcastPayload& payload,
                         const Batch& data, const HyperParams& hp,
                         const ModelSpec& spec, std::uint64_t seed,
                         const std::optional<ClientState>& state = std::nullopt);

}  // namespace fedsim
