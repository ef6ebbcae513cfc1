#include "derain/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace derain {

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& s) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    fail("config key '", key, "': cannot parse number '", s, "'");
  }
  require(pos == s.size(), "config key '", key, "': trailing junk in '", s, "'");
  return v;
}

long long parse_int(const std::string& key, const std::string& s) {
  size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &pos);
  } catch (const std::exception&) {
    fail("config key '", key, "': cannot parse integer '", s, "'");
  }
  require(pos == s.size(), "config key '", key, "': trailing junk in '", s, "'");
  return v;
}

unsigned long long parse_uint(const std::string& key, const std::string& s) {
  size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(s, &pos);
  } catch (const std::exception&) {
    fail("config key '", key, "': cannot parse unsigned integer '", s, "'");
  }
  require(pos == s.size(), "config key '", key, "': trailing junk in '", s, "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail("config key '", key, "': expected true/false, got '", s, "'");
}

Field f_int(const std::string& key, int RunConfig::* m) {
  return {key, [m](const RunConfig& c) { return std::to_string(c.*m); },
          [m, key](RunConfig& c, const std::string& s) { c.*m = int(parse_int(key, s)); }};
}
Field f_model_int(const std::string& key, int ModelConfig::* m) {
  return {key, [m](const RunConfig& c) { return std::to_string(c.model.*m); },
          [m, key](RunConfig& c, const std::string& s) {
            c.model.*m = int(parse_int(key, s));
          }};
}
Field f_double(const std::string& key, double RunConfig::* m) {
  return {key, [m](const RunConfig& c) { return fmt_double(c.*m); },
          [m, key](RunConfig& c, const std::string& s) { c.*m = parse_double(key, s); }};
}
Field f_model_double(const std::string& key, double ModelConfig::* m) {
  return {key, [m](const RunConfig& c) { return fmt_double(c.model.*m); },
          [m, key](RunConfig& c, const std::string& s) { c.model.*m = parse_double(key, s); }};
}
Field f_string(const std::string& key, std::string RunConfig::* m) {
  return {key, [m](const RunConfig& c) { return c.*m; },
          [m](RunConfig& c, const std::string& s) { c.*m = s; }};
}
Field f_bool(const std::string& key, bool RunConfig::* m) {
  return {key, [m](const RunConfig& c) { return (c.*m) ? "true" : "false"; },
          [m, key](RunConfig& c, const std::string& s) { c.*m = parse_bool(key, s); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      f_string("variant", &RunConfig::variant),
      f_model_int("feat_ch", &ModelConfig::feat_ch),
      f_model_int("dec_ch", &ModelConfig::dec_ch),
      f_model_int("recurrence_R", &ModelConfig::recurrence_R),
      f_model_int("stages_T", &ModelConfig::stages_T),
      f_model_int("filternet_ch", &ModelConfig::filternet_ch),
      f_model_double("lrelu_slope", &ModelConfig::lrelu_slope),
      f_model_double("w", &ModelConfig::fusion_w),
      f_string("optimizer", &RunConfig::optimizer),
      f_int("batch_size", &RunConfig::batch_size),
      f_int("crop", &RunConfig::crop),
      f_double("lr_start", &RunConfig::lr_start),
      f_double("lr_end", &RunConfig::lr_end),
      f_double("lr_factor", &RunConfig::lr_factor),
      f_string("lr_decay", &RunConfig::lr_decay),
      f_int("plateau_window", &RunConfig::plateau_window),
      f_double("plateau_improve", &RunConfig::plateau_improve),
      Field{"max_iters",
            [](const RunConfig& c) { return std::to_string(c.max_iters); },
            [](RunConfig& c, const std::string& s) { c.max_iters = parse_int("max_iters", s); }},
      Field{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& s) { c.seed = parse_uint("seed", s); }},
      f_double("alpha", &RunConfig::alpha),
      f_double("beta1", &RunConfig::beta1),
      f_double("beta2", &RunConfig::beta2),
      f_double("clip_norm", &RunConfig::clip_norm),
      f_bool("fp64", &RunConfig::fp64),
      f_int("log_every", &RunConfig::log_every),
      f_int("checkpoint_every", &RunConfig::checkpoint_every),
      f_int("eval_every", &RunConfig::eval_every),
      f_int("levels", &RunConfig::levels),
      f_double("intensity_min", &RunConfig::intensity_min),
      f_double("intensity_max", &RunConfig::intensity_max),
      f_double("angle_min", &RunConfig::angle_min),
      f_double("angle_max", &RunConfig::angle_max),
      f_int("streak_length", &RunConfig::streak_length),
      f_double("streak_brightness", &RunConfig::streak_brightness),
      f_double("drop_density", &RunConfig::drop_density),
      f_int("drop_radius_min", &RunConfig::drop_radius_min),
      f_int("drop_radius_max", &RunConfig::drop_radius_max),
      f_double("drop_refraction", &RunConfig::drop_refraction),
      f_double("test_fraction", &RunConfig::test_fraction),
  };
  return table;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& f : fields()) out.push_back(f.key);
  return out;
}

std::string config_dump(const RunConfig& c) {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << " = " << f.get(c) << "\n";
  return os.str();
}

void config_apply_kv(RunConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  }
  fail("unknown config key '", key, "'");
}

void config_apply_text(RunConfig& c, const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const size_t eq = t.find('=');
    require(eq != std::string::npos, "config line ", lineno, ": expected 'key = value', got '",
            t, "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    require(!key.empty(), "config line ", lineno, ": empty key");
    config_apply_kv(c, key, value);
  }
}

RunConfig config_parse_text(const std::string& text) {
  RunConfig c;
  config_apply_text(c, text);
  return c;
}

RunConfig config_load(const std::string& path) {
  std::ifstream f(path);
  require(f.good(), "cannot open config file: ", path);
  std::ostringstream os;
  os << f.rdbuf();
  RunConfig c;
  config_apply_text(c, os.str());
  return c;
}

void config_save(const RunConfig& c, const std::string& path) {
  std::ofstream f(path);
  require(f.good(), "cannot write config file: ", path);
  f << config_dump(c);
  require(f.good(), "config write failed: ", path);
}

}  // namespace derain
