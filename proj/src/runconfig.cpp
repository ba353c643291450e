#include "runconfig.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "error.hpp"

namespace uhdn {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
  fail(ErrorCode::usage,
       "config key '" + key + "': cannot parse value '" + value + "'");
}

long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long v = std::stoll(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value);
  }
}

double to_real(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) bad_value(key, value);
    return v;
  } catch (const std::logic_error&) {
    bad_value(key, value);
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  bad_value(key, value);
}

std::vector<std::string> split_commas(const std::string& value) {
  std::vector<std::string> parts;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) parts.push_back(trim(item));
  return parts;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::string fmt(float v) { return fmt(double(v)); }

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "in_channels") {
    net.in_channels = int(to_int(key, value));
  } else if (key == "base_channels") {
    net.base_channels = int(to_int(key, value));
  } else if (key == "dilation_rates") {
    std::vector<int> rates;
    for (const std::string& p : split_commas(value))
      rates.push_back(int(to_int(key, p)));
    if (rates.empty()) bad_value(key, value);
    net.dilation_rates = rates;
  } else if (key == "with_mdm") {
    net.with_mdm = to_bool(key, value);
  } else if (key == "with_hf") {
    net.with_hf = to_bool(key, value);
  } else if (key == "seed") {
    long long v = to_int(key, value);
    if (v < 0) bad_value(key, value);
    net.seed = std::uint64_t(v);
    train.seed = std::uint64_t(v);
  } else if (key == "learning_rate") {
    train.learning_rate = float(to_real(key, value));
  } else if (key == "min_learning_rate") {
    train.min_learning_rate = float(to_real(key, value));
  } else if (key == "patience") {
    train.patience = int(to_int(key, value));
  } else if (key == "factor") {
    train.factor = float(to_real(key, value));
  } else if (key == "batch_size") {
    train.batch_size = int(to_int(key, value));
  } else if (key == "max_epochs") {
    train.max_epochs = int(to_int(key, value));
  } else if (key == "side_weights") {
    std::vector<std::string> parts = split_commas(value);
    if (parts.size() != train.side_weights.size())
      fail(ErrorCode::usage, "config key 'side_weights': expected " +
                                 std::to_string(train.side_weights.size()) +
                                 " comma-separated values, got " +
                                 std::to_string(parts.size()));
    for (std::size_t i = 0; i < parts.size(); ++i)
      train.side_weights[i] = float(to_real(key, parts[i]));
  } else if (key == "auto_balance") {
    train.auto_balance = to_bool(key, value);
  } else if (key == "beta") {
    train.beta = float(to_real(key, value));
  } else if (key == "gamma") {
    train.gamma = float(to_real(key, value));
  } else if (key == "epsilon_clamp") {
    train.epsilon_clamp = float(to_real(key, value));
  } else if (key == "threshold") {
    threshold = to_real(key, value);
  } else if (key == "margin") {
    margin = int(to_int(key, value));
  } else if (key == "layout") {
    layout = parse_layout(value);
  } else if (key == "dataset") {
    dataset = value;
  } else if (key == "out") {
    out = value;
  } else {
    fail(ErrorCode::usage, "unknown config key '" + key + "'");
  }
  explicit_.insert(key);
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::usage, "cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::usage, path + ":" + std::to_string(lineno) +
                                 ": expected key=value, got '" + line + "'");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::finalize() {
  if (!explicit_.count("in_channels")) {
    if (layout == Layout::aiglern) net.in_channels = 1;
    else net.in_channels = 3;
  }
  if (!explicit_.count("batch_size")) {
    if (layout == Layout::aiglern) train.batch_size = 1;
    else train.batch_size = 4;
  }
  net.validate();
  train.validate();
  if (!(threshold >= 0.0 && threshold <= 1.0))
    fail(ErrorCode::usage,
         "config key 'threshold': must lie in [0,1], got " + fmt(threshold));
  if (margin < 0)
    fail(ErrorCode::usage, "config key 'margin': must be non-negative, got " +
                               std::to_string(margin));
}

std::string RunConfig::dump() const {
  std::string rates, weights;
  for (std::size_t i = 0; i < net.dilation_rates.size(); ++i)
    rates += (i ? "," : "") + std::to_string(net.dilation_rates[i]);
  for (std::size_t i = 0; i < train.side_weights.size(); ++i)
    weights += (i ? "," : "") + fmt(train.side_weights[i]);

  std::string s;
  s += "in_channels=" + std::to_string(net.in_channels) + "\n";
  s += "base_channels=" + std::to_string(net.base_channels) + "\n";
  s += "dilation_rates=" + rates + "\n";
  s += std::string("with_mdm=") + (net.with_mdm ? "true" : "false") + "\n";
  s += std::string("with_hf=") + (net.with_hf ? "true" : "false") + "\n";
  s += "seed=" + std::to_string(net.seed) + "\n";
  s += "learning_rate=" + fmt(train.learning_rate) + "\n";
  s += "min_learning_rate=" + fmt(train.min_learning_rate) + "\n";
  s += "patience=" + std::to_string(train.patience) + "\n";
  s += "factor=" + fmt(train.factor) + "\n";
  s += "batch_size=" + std::to_string(train.batch_size) + "\n";
  s += "max_epochs=" + std::to_string(train.max_epochs) + "\n";
  s += "side_weights=" + weights + "\n";
  s += std::string("auto_balance=") + (train.auto_balance ? "true" : "false") +
       "\n";
  s += "beta=" + fmt(train.beta) + "\n";
  s += "gamma=" + fmt(train.gamma) + "\n";
  s += "epsilon_clamp=" + fmt(train.epsilon_clamp) + "\n";
  s += "threshold=" + fmt(threshold) + "\n";
  s += "margin=" + std::to_string(margin) + "\n";
  s += "layout=" + layout_name(layout) + "\n";
  s += "dataset=" + dataset + "\n";
  s += "out=" + out + "\n";
  return s;
}

}  // namespace uhdn
