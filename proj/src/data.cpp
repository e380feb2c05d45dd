#include "redf/data.hpp"

#include "redf/errors.hpp"
#include "redf/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace redf {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_cell(const std::string& s, double* out) {
  if (s.empty()) return false;
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw DataError("malformed numeric cell: '" + s + "'");
    if (!std::isfinite(v)) return false;  // nan/inf cells go through imputation
    *out = v;
    return true;
  } catch (const std::invalid_argument&) {
    std::string low = s;
    std::transform(low.begin(), low.end(), low.begin(), ::tolower);
    if (low == "nan" || low == "na") return false;
    throw DataError("malformed numeric cell: '" + s + "'");
  } catch (const std::out_of_range&) {
    throw DataError("numeric cell out of range: '" + s + "'");
  }
}

struct Table {
  std::vector<std::string> header;
  Tensor values;  // (C, T)
};

Table load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty file: " + path);
  Table t;
  t.header = split_csv_line(line);
  size_t c = t.header.size();
  std::vector<std::vector<double>> cols(c);
  std::vector<std::vector<bool>> present(c);
  long row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != c)
      throw DataError(path + ": ragged row " + std::to_string(row + 2) + " (" +
                      std::to_string(cells.size()) + " cells, expected " + std::to_string(c) + ")");
    for (size_t j = 0; j < c; ++j) {
      double v = 0;
      bool ok = parse_cell(cells[j], &v);
      cols[j].push_back(ok ? v : 0.0);
      present[j].push_back(ok);
    }
    ++row;
  }
  if (row == 0) throw DataError(path + ": no data rows");
  // forward fill, leading gaps already zero
  for (size_t j = 0; j < c; ++j) {
    double last = 0.0;
    bool seen = false;
    for (long i = 0; i < row; ++i) {
      if (present[j][i]) {
        last = cols[j][i];
        seen = true;
      } else if (seen) {
        cols[j][i] = last;
      }
    }
  }
  t.values = Tensor(static_cast<int>(c), static_cast<int>(row));
  for (size_t j = 0; j < c; ++j)
    for (long i = 0; i < row; ++i) t.values(static_cast<int>(j), static_cast<int>(i)) = cols[j][i];
  return t;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  Dataset ds;
  ds.name = fs::path(dir).filename().string();
  Table train = load_table((fs::path(dir) / "train.csv").string());
  Table test = load_table((fs::path(dir) / "test.csv").string());
  if (train.header != test.header)
    throw DataError(dir + ": train/test channel names disagree");
  ds.channel_names = train.header;
  ds.train = std::move(train.values);
  ds.test = std::move(test.values);

  std::string label_path = (fs::path(dir) / "test_label.csv").string();
  std::ifstream in(label_path);
  if (!in) throw DataError("missing file: " + label_path);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.back() == '\r') line.pop_back();
    if (first) {
      first = false;
      if (line == "label") continue;  // optional header
    }
    if (line == "0")
      ds.test_labels.push_back(0);
    else if (line == "1")
      ds.test_labels.push_back(1);
    else
      throw DataError(label_path + ": non-binary label '" + line + "'");
  }
  if (static_cast<long>(ds.test_labels.size()) != ds.test.cols())
    throw DataError(dir + ": label count " + std::to_string(ds.test_labels.size()) +
                    " does not match test length " + std::to_string(ds.test.cols()));
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write_table = [&](const std::string& file, const Tensor& v) {
    std::ofstream out(fs::path(dir) / file);
    if (!out) throw DataError("cannot write " + file + " under " + dir);
    for (size_t j = 0; j < ds.channel_names.size(); ++j)
      out << (j ? "," : "") << ds.channel_names[j];
    out << "\n";
    for (int i = 0; i < v.cols(); ++i) {
      for (int c = 0; c < v.rows(); ++c) out << (c ? "," : "") << fmt(v(c, i));
      out << "\n";
    }
  };
  write_table("train.csv", ds.train);
  write_table("test.csv", ds.test);
  std::ofstream lab(fs::path(dir) / "test_label.csv");
  lab << "label\n";
  for (int v : ds.test_labels) lab << v << "\n";
}

void SynthSpec::validate() const {
  if (channels < 1) throw DataError("synth: channels must be positive");
  if (total_length < 4) throw DataError("synth: total_length too small");
  if (!(train_fraction > 0 && train_fraction < 1)) throw DataError("synth: train_fraction in (0,1)");
  if (precursor_lead < 1) throw DataError("synth: precursor_lead must be >= 1");
  // alpha=0 is the precursor-free control
  if (!(precursor_alpha >= 0 && precursor_alpha <= 1)) throw DataError("synth: alpha in [0,1]");
  if (precursor_shape != "ramp" && precursor_shape != "oscillation")
    throw DataError("synth: precursor_shape must be ramp|oscillation");
  std::vector<std::pair<long, long>> spans;
  for (const auto& e : events) {
    if (e.type != "spike" && e.type != "level_shift")
      throw DataError("synth: event type must be spike|level_shift");
    if (e.duration < 1) throw DataError("synth: event duration must be >= 1");
    if (e.start < precursor_lead) throw DataError("synth: event too close to split start for its precursor");
    if (e.start + e.duration > test_length()) throw DataError("synth: event exceeds test split");
    spans.emplace_back(e.start, e.start + e.duration);
  }
  std::sort(spans.begin(), spans.end());
  for (size_t i = 1; i < spans.size(); ++i)
    if (spans[i].first < spans[i - 1].second) throw DataError("synth: overlapping events");
}

SynthSpec SynthSpec::default_spec() {
  SynthSpec s;
  s.periods.resize(s.channels);
  s.amplitudes.resize(s.channels);
  for (int c = 0; c < s.channels; ++c) {
    s.periods[c] = {64.0, 20.0 + 6.0 * c};
    s.amplitudes[c] = {1.0, 0.4};
  }
  long test_len = s.test_length();
  const int n_events = 20;
  long gap = test_len / n_events;  // 500
  for (int k = 0; k < n_events; ++k) {
    SynthEvent e;
    e.type = (k % 2 == 0) ? "spike" : "level_shift";
    e.start = gap / 2 + k * gap;
    e.duration = (k % 2 == 0) ? 4 : 24;
    e.magnitude = (k % 2 == 0) ? 2.0 : 1.5;
    s.events.push_back(e);
  }
  return s;
}

std::string SynthSpec::to_json() const {
  nlohmann::json j;
  j["channels"] = channels;
  j["total_length"] = total_length;
  j["train_fraction"] = train_fraction;
  j["periods"] = periods;
  j["amplitudes"] = amplitudes;
  j["noise_sigma"] = noise_sigma;
  j["precursor"] = {{"lead", precursor_lead}, {"alpha", precursor_alpha}, {"shape", precursor_shape}};
  j["seed"] = seed;
  j["name"] = name;
  nlohmann::json evs = nlohmann::json::array();
  for (const auto& e : events)
    evs.push_back({{"type", e.type}, {"start", e.start}, {"duration", e.duration}, {"magnitude", e.magnitude}});
  j["events"] = evs;
  return j.dump(2);
}

SynthSpec SynthSpec::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("synth spec: invalid JSON: ") + e.what());
  }
  SynthSpec s = default_spec();
  try {
    if (j.contains("channels")) s.channels = j["channels"].get<int>();
    if (j.contains("total_length")) s.total_length = j["total_length"].get<long>();
    if (j.contains("train_fraction")) s.train_fraction = j["train_fraction"].get<double>();
    if (j.contains("periods")) s.periods = j["periods"].get<std::vector<std::vector<double>>>();
    if (j.contains("amplitudes")) s.amplitudes = j["amplitudes"].get<std::vector<std::vector<double>>>();
    if (j.contains("noise_sigma")) s.noise_sigma = j["noise_sigma"].get<double>();
    if (j.contains("precursor")) {
      const auto& p = j["precursor"];
      if (p.contains("lead")) s.precursor_lead = p["lead"].get<long>();
      if (p.contains("alpha")) s.precursor_alpha = p["alpha"].get<double>();
      if (p.contains("shape")) s.precursor_shape = p["shape"].get<std::string>();
    }
    if (j.contains("seed")) s.seed = j["seed"].get<uint64_t>();
    if (j.contains("name")) s.name = j["name"].get<std::string>();
    if (j.contains("events")) {
      s.events.clear();
      for (const auto& je : j["events"]) {
        SynthEvent e;
        e.type = je.at("type").get<std::string>();
        e.start = je.at("start").get<long>();
        e.duration = je.at("duration").get<long>();
        e.magnitude = je.at("magnitude").get<double>();
        s.events.push_back(e);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("synth spec: ") + e.what());
  }
  // default periods/amplitudes must track a non-default channel count
  if (static_cast<int>(s.periods.size()) != s.channels) {
    s.periods.resize(s.channels);
    s.amplitudes.resize(s.channels);
    for (int c = 0; c < s.channels; ++c) {
      if (s.periods[c].empty()) s.periods[c] = {64.0, 20.0 + 6.0 * c};
      if (s.amplitudes[c].empty()) s.amplitudes[c] = {1.0, 0.4};
    }
  }
  return s;
}

SynthSpec SynthSpec::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing synth spec: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

Dataset generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  long T = spec.total_length;
  long t_train = spec.train_length();
  long t_test = spec.test_length();
  int C = spec.channels;

  Rng rng(Rng::mix(spec.seed, 0x5f17));
  // phases first so layout is independent of noise draw order
  std::vector<std::vector<double>> phases(C);
  for (int c = 0; c < C; ++c)
    for (size_t j = 0; j < spec.periods[c].size(); ++j) phases[c].push_back(rng.uniform(0, 2.0 * M_PI));

  Tensor series(C, static_cast<int>(T));
  for (int c = 0; c < C; ++c) {
    const auto& per = spec.periods[c];
    const auto& amp = spec.amplitudes[c];
    for (long t = 0; t < T; ++t) {
      double v = 0;
      for (size_t j = 0; j < per.size(); ++j)
        v += (j < amp.size() ? amp[j] : 1.0) * std::sin(2.0 * M_PI * t / per[j] + phases[c][j]);
      series(c, static_cast<int>(t)) = v + spec.noise_sigma * rng.gaussian();
    }
  }

  std::vector<int> labels(t_test, 0);
  for (const auto& e : spec.events) {
    long abs_start = t_train + e.start;
    // precursor: unlabeled lead-in on every channel
    for (long k = 0; k < spec.precursor_lead; ++k) {
      long t = abs_start - spec.precursor_lead + k;
      double frac = static_cast<double>(k + 1) / spec.precursor_lead;
      double add = spec.precursor_shape == "ramp"
                       ? spec.precursor_alpha * e.magnitude * frac
                       : spec.precursor_alpha * e.magnitude * std::sin(2.0 * M_PI * 4.0 * k / spec.precursor_lead);
      for (int c = 0; c < C; ++c) series(c, static_cast<int>(t)) += add;
    }
    for (long t = abs_start; t < abs_start + e.duration; ++t) {
      for (int c = 0; c < C; ++c) series(c, static_cast<int>(t)) += e.magnitude;
      labels[t - t_train] = 1;
    }
  }

  Dataset ds;
  ds.name = spec.name;
  for (int c = 0; c < C; ++c) ds.channel_names.push_back("ch" + std::to_string(c));
  ds.train = Tensor(C, static_cast<int>(t_train));
  ds.test = Tensor(C, static_cast<int>(t_test));
  for (int c = 0; c < C; ++c) {
    for (long t = 0; t < t_train; ++t) ds.train(c, static_cast<int>(t)) = series(c, static_cast<int>(t));
    for (long t = 0; t < t_test; ++t) ds.test(c, static_cast<int>(t)) = series(c, static_cast<int>(t_train + t));
  }
  ds.test_labels = std::move(labels);
  return ds;
}

}  // namespace redf
