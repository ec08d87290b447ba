#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/server.hpp"

namespace fedsim {

struct RunHistory {
  std::vector<RoundRecord> rounds;  // round indices strictly increasing from 1
  std::string method;
  std::uint64_t seed = 0;
  std::string config_digest;

  void push(RoundRecord rec);
};

/// Running maximum of validation accuracy over rounds 1..t.
double best_acc_until(const RunHistory& history, int t);

/// Smallest round with val_acc >= threshold; nullopt when never reached.
std::optional<int> acc_at_x(const RunHistory& history, double threshold);

/// Mean over rounds of the running-best accuracy, with the running best
/// restarting at every label-map version change so the score rewards fast
/// recovery. `reset_on_shift=false` gives the plain prefix-max mean.
double concept_shift_score(const RunHistory& history, bool reset_on_shift = true);

struct MethodSummary {
  std::string method;
  int local_epochs = 0;
  double half_mean = 0.0, half_std = 0.0;
  double final_mean = 0.0, final_std = 0.0;
  bool has_std = false;  // requires >= 2 seeds
  double acc_target = 0.0;
  std::optional<int> median_rounds_to_target;
  std::uint64_t comm_total_floats = 0;  // S2C + C2S, summed over seeds
};

struct SummaryTable {
  std::vector<MethodSummary> rows;
  std::string config_digest;
};

/// Per-method mean/std of halfway and final best accuracy over seeds.
/// All runs must share a config digest.
SummaryTable summarize(const std::vector<RunHistory>& runs, int local_epochs,
                       double acc_target);

/// `round,method,seed,val_acc,best_acc,s2c_floats,c2s_floats,labelmap_version`
void emit_history_csv(const RunHistory& history, const std::string& path);
RunHistory parse_history_csv(const std::string& path);

/// `method,E,half_mean,half_std,final_mean,final_std,acc_at_x,comm_total_floats`
void emit_summary_csv(const SummaryTable& table, const std::string& path);

std::string format_double(double v);  // 17 significant digits, round-trip exact

}  // namespace fedsim
