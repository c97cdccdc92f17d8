#include "lamnet/config_file.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace lamnet {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);  // shortest round-trip form
  return std::string(buf, end);
}

template <typename T>
std::string join(const std::vector<T>& values, std::string (*fmt)(T)) {
  std::string out;
  for (size_t i = 0; i < values.size(); ++i) {
    if (i) out += ",";
    out += fmt(values[i]);
  }
  return out;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size())
    throw config_error("config: bad integer for '" + key + "': '" + v + "'");
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw config_error("config: bad number for '" + key + "': '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw config_error("config: bad boolean for '" + key + "': '" + v + "' (use true/false)");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v,
                          T (*one)(const std::string&, const std::string&)) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(one(key, trim(item)));
  if (out.empty()) throw config_error("config: empty list for '" + key + "'");
  return out;
}

}  // namespace

CliConfig parse_config(std::istream& in) {
  CliConfig c;
  std::map<std::string, std::function<void(const std::string&, const std::string&)>> setters;
  auto set_i64 = [&](const char* key, int64_t& field) {
    setters[key] = [&field](const std::string& k, const std::string& v) {
      field = parse_int(k, v);
    };
  };
  auto set_f64 = [&](const char* key, double& field) {
    setters[key] = [&field](const std::string& k, const std::string& v) {
      field = parse_double(k, v);
    };
  };
  auto set_bool = [&](const char* key, bool& field) {
    setters[key] = [&field](const std::string& k, const std::string& v) {
      field = parse_bool(k, v);
    };
  };
  auto set_str = [&](const char* key, std::string& field) {
    setters[key] = [&field](const std::string&, const std::string& v) { field = v; };
  };

  set_i64("scale", c.model.scale);
  set_i64("channels", c.model.channels);
  set_i64("num_blocks", c.model.num_blocks);
  set_i64("pairs_per_block", c.model.pairs_per_block);
  set_i64("groups", c.model.groups);
  setters["strides"] = [&c](const std::string& k, const std::string& v) {
    c.model.focal.strides = parse_list<int64_t>(k, v, parse_int);
  };
  setters["steps"] = [&c](const std::string& k, const std::string& v) {
    c.model.focal.steps = parse_list<int64_t>(k, v, parse_int);
  };
  set_i64("csm_hidden", c.model.csm_hidden);
  set_bool("softmax_weights", c.model.softmax_weights);
  set_bool("bias", c.model.bias);
  setters["dtype"] = [&c](const std::string& k, const std::string& v) {
    try {
      c.model.dtype = dtype_from_name(v);
    } catch (const std::exception& e) {
      throw config_error("config: " + std::string(e.what()) + " for '" + k + "'");
    }
  };

  set_i64("total_steps", c.train.total_steps);
  set_i64("batch_size", c.train.batch_size);
  set_i64("lr_patch", c.train.lr_patch);
  set_f64("lr0", c.train.lr0);
  set_f64("beta1", c.train.beta1);
  set_f64("beta2", c.train.beta2);
  set_f64("adam_eps", c.train.adam_eps);
  setters["milestones"] = [&c](const std::string& k, const std::string& v) {
    c.train.milestones = parse_list<double>(k, v, parse_double);
  };
  setters["seed"] = [&c](const std::string& k, const std::string& v) {
    c.train.seed = static_cast<uint64_t>(parse_int(k, v));
  };
  set_bool("augment", c.train.augment);
  set_bool("shuffle", c.train.shuffle);
  set_i64("checkpoint_every", c.train.checkpoint_every);
  set_i64("log_every", c.train.log_every);
  set_str("checkpoint_out", c.train.checkpoint_out);

  set_str("hr_dir", c.hr_dir);
  set_str("lr_dir", c.lr_dir);
  set_str("log_out", c.log_out);
  set_str("init_from", c.init_from);

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw config_error("config line " + std::to_string(lineno) +
                         ": expected 'key = value', got '" + t + "'");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw config_error("config line " + std::to_string(lineno) + ": unknown key '" + key +
                         "'");
    it->second(key, value);
  }
  return c;
}

CliConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file '" + path + "'");
  return parse_config(in);
}

void emit_config(std::ostream& out, const CliConfig& c) {
  auto fmt_i = [](int64_t v) { return std::to_string(v); };
  out << "# model\n";
  out << "scale = " << c.model.scale << "\n";
  out << "channels = " << c.model.channels << "\n";
  out << "num_blocks = " << c.model.num_blocks << "\n";
  out << "pairs_per_block = " << c.model.pairs_per_block << "\n";
  out << "groups = " << c.model.groups << "\n";
  out << "strides = " << join<int64_t>(c.model.focal.strides, fmt_i) << "\n";
  out << "steps = " << join<int64_t>(c.model.focal.steps, fmt_i) << "\n";
  out << "csm_hidden = " << c.model.csm_hidden << "\n";
  out << "softmax_weights = " << (c.model.softmax_weights ? "true" : "false") << "\n";
  out << "bias = " << (c.model.bias ? "true" : "false") << "\n";
  out << "dtype = " << dtype_name(c.model.dtype) << "\n";
  out << "\n# training\n";
  out << "total_steps = " << c.train.total_steps << "\n";
  out << "batch_size = " << c.train.batch_size << "\n";
  out << "lr_patch = " << c.train.lr_patch << "\n";
  out << "lr0 = " << format_double(c.train.lr0) << "\n";
  out << "beta1 = " << format_double(c.train.beta1) << "\n";
  out << "beta2 = " << format_double(c.train.beta2) << "\n";
  out << "adam_eps = " << format_double(c.train.adam_eps) << "\n";
  out << "milestones = " << join<double>(c.train.milestones, format_double) << "\n";
  out << "seed = " << c.train.seed << "\n";
  out << "augment = " << (c.train.augment ? "true" : "false") << "\n";
  out << "shuffle = " << (c.train.shuffle ? "true" : "false") << "\n";
  out << "checkpoint_every = " << c.train.checkpoint_every << "\n";
  out << "log_every = " << c.train.log_every << "\n";
  out << "checkpoint_out = " << c.train.checkpoint_out << "\n";
  out << "\n# data and outputs\n";
  out << "hr_dir = " << c.hr_dir << "\n";
  out << "lr_dir = " << c.lr_dir << "\n";
  out << "log_out = " << c.log_out << "\n";
  out << "init_from = " << c.init_from << "\n";
}

}  // namespace lamnet
