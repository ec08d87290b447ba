#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace fedsim {

void RunHistory::push(RoundRecord rec) {
  const int expected = rounds.empty() ? 1 : rounds.back().round + 1;
  if (rec.round != expected) {
    throw std::invalid_argument("RunHistory: round indices must increase from 1");
  }
  rounds.push_back(std::move(rec));
}

double best_acc_until(const RunHistory& history, int t) {
  if (t < 1 || t > static_cast<int>(history.rounds.size())) {
    throw std::invalid_argument("best_acc_until: t out of range");
  }
  double best = 0.0;
  for (int i = 0; i < t; ++i) best = std::max(best, history.rounds[i].val_acc);
  return best;
}

std::optional<int> acc_at_x(const RunHistory& history, double threshold) {
  if (threshold <= 0.0 || threshold >= 1.0) {
    throw std::invalid_argument("acc_at_x: threshold must be in (0,1)");
  }
  for (const auto& r : history.rounds) {
    if (r.val_acc >= threshold) return r.round;
  }
  return std::nullopt;
}

double concept_shift_score(const RunHistory& history, bool reset_on_shift) {
  if (history.rounds.empty()) throw std::invalid_argument("concept_shift_score: empty history");
  double sum = 0.0;
  double best = 0.0;
  int last_version = history.rounds.front().labelmap_version;
  for (const auto& r : history.rounds) {
    if (reset_on_shift && r.labelmap_version != last_version) {
      best = 0.0;
      last_version = r.labelmap_version;
    }
    best = std::max(best, r.val_acc);
    sum += best;
  }
  return sum / static_cast<double>(history.rounds.size());
}

namespace {

// two accumulators, sample (n-1) std
std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace

SummaryTable summarize(const std::vector<RunHistory>& runs, int local_epochs,
                       double acc_target) {
  if (runs.empty()) throw std::invalid_argument("summarize: no runs");
  const std::string& digest = runs.front().config_digest;
  for (const auto& r : runs) {
    if (r.config_digest != digest) throw std::invalid_argument("summarize: mixed config digests");
  }

  // group by method, preserving first-seen order
  std::vector<std::string> methods;
  for (const auto& r : runs) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }

  SummaryTable table;
  table.config_digest = digest;
  for (const auto& m : methods) {
    MethodSummary row;
    row.method = m;
    row.local_epochs = local_epochs;
    row.acc_target = acc_target;
    std::vector<double> half, fin;
    std::vector<int> reach;  // never-reached encoded as INT_MAX
    for (const auto& r : runs) {
      if (r.method != m) continue;
      const int T = static_cast<int>(r.rounds.size());
      if (T == 0) throw std::invalid_argument("summarize: empty run history");
      half.push_back(best_acc_until(r, std::max(1, T / 2)));
      fin.push_back(best_acc_until(r, T));
      auto at = acc_at_x(r, acc_target);
      reach.push_back(at ? *at : std::numeric_limits<int>::max());
      for (const auto& rec : r.rounds) row.comm_total_floats += rec.s2c_floats + rec.c2s_floats;
    }
    std::tie(row.half_mean, row.half_std) = mean_std(half);
    std::tie(row.final_mean, row.final_std) = mean_std(fin);
    row.has_std = half.size() >= 2;
    std::sort(reach.begin(), reach.end());
    const int med = reach[reach.size() / 2];
    if (med != std::numeric_limits<int>::max()) row.median_rounds_to_target = med;
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void emit_history_csv(const RunHistory& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_history_csv: cannot open " + path);
  out << "# config_digest=" << history.config_digest << "\n";
  out << "round,method,seed,val_acc,best_acc,s2c_floats,c2s_floats,labelmap_version\n";
  double best = 0.0;
  for (const auto& r : history.rounds) {
    best = std::max(best, r.val_acc);
    out << r.round << ',' << history.method << ',' << history.seed << ','
        << format_double(r.val_acc) << ',' << format_double(best) << ',' << r.s2c_floats
        << ',' << r.c2s_floats << ',' << r.labelmap_version << "\n";
  }
  if (!out) throw std::runtime_error("emit_history_csv: write failed for " + path);
}

RunHistory parse_history_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("parse_history_csv: cannot open " + path);
  RunHistory h;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# config_digest=", 0) == 0) {
      h.config_digest = line.substr(16);
      continue;
    }
    if (line.rfind("round,", 0) == 0) continue;  // header
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) {
      throw std::runtime_error("parse_history_csv: bad row at line " + std::to_string(lineno) +
                               " in " + path);
    }
    RoundRecord rec;
    rec.round = std::stoi(cells[0]);
    h.method = cells[1];
    h.seed = std::stoull(cells[2]);
    rec.val_acc = std::stod(cells[3]);
    rec.s2c_floats = std::stoull(cells[5]);
    rec.c2s_floats = std::stoull(cells[6]);
    rec.labelmap_version = std::stoi(cells[7]);
    h.rounds.push_back(rec);
  }
  return h;
}

void emit_summary_csv(const SummaryTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("emit_summary_csv: cannot open " + path);
  out << "# config_digest=" << table.config_digest << "\n";
  out << "method,E,half_mean,half_std,final_mean,final_std,acc_at_x,comm_total_floats\n";
  for (const auto& row : table.rows) {
    out << row.method << ',' << row.local_epochs << ',' << format_double(row.half_mean) << ','
        << (row.has_std ? format_double(row.half_std) : "NA") << ','
        << format_double(row.final_mean) << ','
        << (row.has_std ? format_double(row.final_std) : "NA") << ',';
    if (row.median_rounds_to_target) {
      out << *row.median_rounds_to_target;
    } else {
      out << "NA";
    }
    out << ',' << row.comm_total_floats << "\n";
  }
  if (!out) throw std::runtime_error("emit_summary_csv: write failed for " + path);
}

}  // namespace fedsim
