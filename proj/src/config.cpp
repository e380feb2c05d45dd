#include "redf/config.hpp"

#include "redf/errors.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace redf {

int patch_count(int lookback, int patch_size, int patch_stride) {
  if (patch_size > lookback)
    throw UsageError("patch_size " + std::to_string(patch_size) + " exceeds window length " +
                     std::to_string(lookback));
  if (patch_stride < 1) throw UsageError("patch_stride must be >= 1");
  return (lookback - patch_size) / patch_stride + 1;
}

int Config::patch_count() const { return redf::patch_count(lookback, patch_size, patch_stride); }

namespace {

struct Field {
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

int parse_int(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw UsageError("config key '" + k + "': expected integer, got '" + v + "'");
  }
}

int64_t parse_i64(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    long long r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw UsageError("config key '" + k + "': expected integer, got '" + v + "'");
  }
}

double parse_double(const std::string& k, const std::string& v) {
  try {
    size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw UsageError("config key '" + k + "': expected number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& k, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key '" + k + "': expected boolean, got '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
#define INT_FIELD(name) \
  {#name, {[](const Config& c) { return std::to_string(c.name); }, \
           [](Config& c, const std::string& v) { c.name = parse_int(#name, v); }}}
#define DBL_FIELD(name) \
  {#name, {[](const Config& c) { return fmt_double(c.name); }, \
           [](Config& c, const std::string& v) { c.name = parse_double(#name, v); }}}
#define STR_FIELD(name) \
  {#name, {[](const Config& c) { return c.name; }, \
           [](Config& c, const std::string& v) { c.name = v; }}}
#define BOOL_FIELD(name) \
  {#name, {[](const Config& c) { return std::string(c.name ? "true" : "false"); }, \
           [](Config& c, const std::string& v) { c.name = parse_bool(#name, v); }}}
      INT_FIELD(num_channels),
      INT_FIELD(lookback),
      INT_FIELD(horizon),
      INT_FIELD(patch_size),
      INT_FIELD(patch_stride),
      INT_FIELD(hidden_dim),
      INT_FIELD(encoder_layers),
      INT_FIELD(msp_count),
      INT_FIELD(attention_heads),
      DBL_FIELD(lambda_time),
      DBL_FIELD(lambda_freq),
      DBL_FIELD(lambda_main),
      DBL_FIELD(lambda_msp),
      DBL_FIELD(lambda_contra),
      DBL_FIELD(epsilon),
      DBL_FIELD(gumbel_temperature),
      DBL_FIELD(anomaly_ratio),
      DBL_FIELD(dropout),
      DBL_FIELD(clip_norm),
      {"seed",
       {[](const Config& c) { return std::to_string(c.seed); },
        [](Config& c, const std::string& v) { c.seed = parse_i64("seed", v); }}},
      DBL_FIELD(learning_rate),
      INT_FIELD(batch_size),
      INT_FIELD(epochs),
      STR_FIELD(mask_mode),
      BOOL_FIELD(detach_purified),
      BOOL_FIELD(use_graph),
      STR_FIELD(threshold_split),
      DBL_FIELD(val_fraction),
      INT_FIELD(train_stride),
      INT_FIELD(scoring_stride),
      INT_FIELD(ad_window),
      INT_FIELD(threads),
#undef INT_FIELD
#undef DBL_FIELD
#undef STR_FIELD
#undef BOOL_FIELD
  };
  return table;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, f] : fields()) k.push_back(name);
    return k;
  }();
  return keys;
}

void Config::set(const std::string& key, const std::string& value) {
  auto it = fields().find(key);
  if (it == fields().end()) throw UsageError("unknown config key '" + key + "'");
  it->second.set(*this, value);
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  Config c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

std::string Config::echo() const {
  std::ostringstream os;
  for (const auto& [name, f] : fields()) os << name << " = " << f.get(*this) << "\n";
  return os.str();
}

void Config::validate() const {
  auto fail = [](const std::string& m) { throw UsageError("config: " + m); };
  if (lookback < 1) fail("lookback must be positive");
  if (horizon < 1) fail("horizon must be positive");
  if (patch_size < 1) fail("patch_size must be positive");
  if (patch_stride < 1) fail("patch_stride must be positive");
  if (patch_size > lookback) fail("patch_size must not exceed lookback");
  if (patch_stride > patch_size) fail("patch_stride must not exceed patch_size");
  if (hidden_dim < 1) fail("hidden_dim must be positive");
  if (encoder_layers < 0) fail("encoder_layers must be >= 0");
  if (msp_count < 0) fail("msp_count must be >= 0");
  if (attention_heads < 1) fail("attention_heads must be positive");
  if (hidden_dim % attention_heads != 0) fail("hidden_dim must be divisible by attention_heads");
  if (lambda_time < 0 || lambda_freq < 0 || lambda_main < 0 || lambda_msp < 0 || lambda_contra < 0)
    fail("loss weights must be nonnegative");
  if (!(epsilon > 0)) fail("epsilon must be positive");
  if (!(gumbel_temperature > 0)) fail("gumbel_temperature must be positive");
  if (!(anomaly_ratio > 0 && anomaly_ratio < 100)) fail("anomaly_ratio must lie in (0,100)");
  if (!(dropout >= 0 && dropout < 1)) fail("dropout must lie in [0,1)");
  if (mask_mode != "binary" && mask_mode != "soft") fail("mask_mode must be 'binary' or 'soft'");
  if (threshold_split != "pooled" && threshold_split != "val-only")
    fail("threshold_split must be 'pooled' or 'val-only'");
  if (!(val_fraction > 0 && val_fraction < 1)) fail("val_fraction must lie in (0,1)");
  if (batch_size < 1) fail("batch_size must be positive");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (train_stride < 0 || scoring_stride < 0) fail("strides must be >= 0");
  if (ad_window < 1) fail("ad_window must be positive");
  if (threads < 1) fail("threads must be >= 1");
  (void)patch_count();  // throws when unpatchable
}

}  // namespace redf
