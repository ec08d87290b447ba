#include "fedsim/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedsim/metrics.hpp"

namespace fedsim {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(trim(cell));
  return out;
}

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

double parse_float(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double x;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size()) throw ConfigError("config: key '" + key + "' needs a number, got '" + v + "'");
  return x;
}

long long parse_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long x;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != v.size()) throw ConfigError("config: key '" + key + "' needs an integer, got '" + v + "'");
  return x;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config: key '" + key + "' needs a boolean, got '" + v + "'");
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "methods") {
    cfg.methods.clear();
    for (const auto& name : split(value, ',')) {
      auto m = method_from_name(name);
      if (!m) throw ConfigError("config: unknown method '" + name + "'");
      cfg.methods.push_back(*m);
    }
  } else if (key == "mode") {
    if (value == "cross-device") cfg.mode = ClientPool::Mode::CrossDevice;
    else if (value == "cross-silo") cfg.mode = ClientPool::Mode::CrossSilo;
    else throw ConfigError("config: mode must be cross-device or cross-silo");
  } else if (key == "pool_size") cfg.pool_size = static_cast<int>(parse_int(key, value));
  else if (key == "rounds") cfg.rounds = static_cast<int>(parse_int(key, value));
  else if (key == "eta") cfg.hp.eta = parse_float(key, value);
  else if (key == "alpha") cfg.hp.alpha = parse_float(key, value);
  else if (key == "fedcurv_alpha") cfg.hp.fedcurv_alpha = parse_float(key, value);
  else if (key == "epochs") cfg.hp.local_epochs = static_cast<int>(parse_int(key, value));
  else if (key == "batch_size") cfg.hp.batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "clients_per_round") cfg.hp.clients_per_round = static_cast<int>(parse_int(key, value));
  else if (key == "fedfor_rectified") cfg.hp.fedfor_rectified = parse_bool(key, value);
  else if (key == "scaffold_zero_variates") cfg.hp.scaffold_zero_variates = parse_bool(key, value);
  else if (key == "imbalance_ratio") cfg.shift.imbalance_ratio = parse_float(key, value);
  else if (key == "sample_fraction") cfg.shift.sample_fraction = parse_float(key, value);
  else if (key == "concept_shift_prob") cfg.shift.concept_shift_prob = parse_float(key, value);
  else if (key == "concept_shift_per_class") cfg.shift.concept_shift_per_class = parse_bool(key, value);
  else if (key == "concept_shift_force_round") cfg.concept_shift_force_round = static_cast<int>(parse_int(key, value));
  else if (key == "partition") {
    if (value != "prior" && value != "covariate" && value != "iid") {
      throw ConfigError("config: partition must be prior, covariate or iid");
    }
    cfg.partition = value;
  } else if (key == "num_domains") cfg.num_domains = static_cast<int>(parse_int(key, value));
  else if (key == "fedbn") cfg.fedbn = parse_bool(key, value);
  else if (key == "weighted_average") cfg.weighted_average = parse_bool(key, value);
  else if (key == "hidden") {
    cfg.hidden.clear();
    for (const auto& h : split(value, ',')) cfg.hidden.push_back(static_cast<int>(parse_int(key, h)));
  } else if (key == "norm_layer") cfg.norm_layer = parse_bool(key, value);
  else if (key == "dataset") {
    if (value != "synthetic" && value != "file") throw ConfigError("config: dataset must be synthetic or file");
    cfg.dataset = value;
  } else if (key == "classes") cfg.classes = static_cast<int>(parse_int(key, value));
  else if (key == "dim") cfg.dim = static_cast<int>(parse_int(key, value));
  else if (key == "n_per_class") cfg.n_per_class = static_cast<int>(parse_int(key, value));
  else if (key == "val_per_class") cfg.val_per_class = static_cast<int>(parse_int(key, value));
  else if (key == "data_file") cfg.data_file = value;
  else if (key == "seeds") {
    cfg.seeds.clear();
    for (const auto& s : split(value, ',')) cfg.seeds.push_back(static_cast<std::uint64_t>(parse_int(key, s)));
  } else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "acc_target") cfg.acc_target = parse_float(key, value);
  else if (key == "workers") cfg.workers = static_cast<int>(parse_int(key, value));
  else throw ConfigError("config: unknown key '" + key + "'");
}

}  // namespace

ModelSpec ExperimentConfig::model_spec() const {
  ModelSpec spec;
  spec.layer_sizes.push_back(dim);
  for (int h : hidden) spec.layer_sizes.push_back(h);
  spec.layer_sizes.push_back(classes);
  spec.has_norm_layer = norm_layer;
  return spec;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw std::runtime_error("config: methods must be nonempty");
  if (rounds < 1) throw std::runtime_error("config: rounds must be >= 1");
  if (seeds.empty()) throw std::runtime_error("config: seeds must be nonempty");
  if (acc_target <= 0.0 || acc_target >= 1.0) throw std::runtime_error("config: acc_target in (0,1)");
  if (workers < 1) throw std::runtime_error("config: workers must be >= 1");
  if (mode == ClientPool::Mode::CrossSilo && pool_size < hp.clients_per_round) {
    throw std::runtime_error("config: pool_size must be >= clients_per_round in cross-silo mode");
  }
  if (dataset == "synthetic") {
    if (classes < 2 || dim < 2 || n_per_class < 1 || val_per_class < 1) {
      throw std::runtime_error("config: bad synthetic dataset parameters");
    }
  } else if (data_file.empty()) {
    throw std::runtime_error("config: dataset=file requires data_file");
  }
  if (concept_shift_force_round < 0 || concept_shift_force_round > rounds) {
    throw std::runtime_error("config: concept_shift_force_round out of range");
  }
  hp.validate();
  shift.validate();
  model_spec().validate();
}

std::string ExperimentConfig::serialize() const {
  std::map<std::string, std::string> kv;
  std::string methods_s;
  for (const auto& m : methods) {
    if (!methods_s.empty()) methods_s += ",";
    methods_s += method_name(m);
  }
  kv["methods"] = methods_s;
  kv["mode"] = mode == ClientPool::Mode::CrossDevice ? "cross-device" : "cross-silo";
  kv["pool_size"] = std::to_string(pool_size);
  kv["rounds"] = std::to_string(rounds);
  kv["eta"] = format_double(hp.eta);
  kv["alpha"] = format_double(hp.alpha);
  kv["fedcurv_alpha"] = format_double(hp.fedcurv_alpha);
  kv["epochs"] = std::to_string(hp.local_epochs);
  kv["batch_size"] = std::to_string(hp.batch_size);
  kv["clients_per_round"] = std::to_string(hp.clients_per_round);
  kv["fedfor_rectified"] = hp.fedfor_rectified ? "true" : "false";
  kv["scaffold_zero_variates"] = hp.scaffold_zero_variates ? "true" : "false";
  kv["imbalance_ratio"] = format_double(shift.imbalance_ratio);
  kv["sample_fraction"] = format_double(shift.sample_fraction);
  kv["concept_shift_prob"] = format_double(shift.concept_shift_prob);
  kv["concept_shift_per_class"] = shift.concept_shift_per_class ? "true" : "false";
  kv["concept_shift_force_round"] = std::to_string(concept_shift_force_round);
  kv["partition"] = partition;
  kv["num_domains"] = std::to_string(num_domains);
  kv["fedbn"] = fedbn ? "true" : "false";
  kv["weighted_average"] = weighted_average ? "true" : "false";
  std::string hidden_s;
  for (int h : hidden) {
    if (!hidden_s.empty()) hidden_s += ",";
    hidden_s += std::to_string(h);
  }
  kv["hidden"] = hidden_s;
  kv["norm_layer"] = norm_layer ? "true" : "false";
  kv["dataset"] = dataset;
  kv["classes"] = std::to_string(classes);
  kv["dim"] = std::to_string(dim);
  kv["n_per_class"] = std::to_string(n_per_class);
  kv["val_per_class"] = std::to_string(val_per_class);
  kv["data_file"] = data_file;
  std::string seeds_s;
  for (auto s : seeds) {
    if (!seeds_s.empty()) seeds_s += ",";
    seeds_s += std::to_string(s);
  }
  kv["seeds"] = seeds_s;
  kv["acc_target"] = format_double(acc_target);

  std::string out;
  for (const auto& [k, v] : kv) {
    out += k;
    out += " = ";
    out += v;
    out += "\n";
  }
  return out;
}

std::string ExperimentConfig::digest() const {
  // out_dir and workers are execution details, deliberately not serialized
  const std::string text = serialize();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config: line " + std::to_string(lineno) + " is not 'key = value'");
    }
    set_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& key_value) {
  const auto eq = key_value.find('=');
  if (eq == std::string::npos) {
    throw std::runtime_error("override '" + key_value + "' is not key=value");
  }
  set_key(cfg, trim(key_value.substr(0, eq)), trim(key_value.substr(eq + 1)));
  cfg.validate();
}

}  // namespace fedsim
