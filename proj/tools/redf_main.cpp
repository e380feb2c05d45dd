#include "redf/config.hpp"
#include "redf/data.hpp"
#include "redf/errors.hpp"
#include "redf/evalmetrics.hpp"
#include "redf/hash.hpp"
#include "redf/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir = ".";
  std::map<std::string, std::string> overrides;
  bool no_msp = false;
  bool no_contrastive = false;
  bool no_graph = false;
  bool detach_purified = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "config file (key = value lines)");
  cmd->add_option("--out", args.out_dir, "output directory");
  for (const std::string& key : redf::Config::known_keys()) {
    auto* opt = cmd->add_option(
        "--" + key, [&args, key](const std::vector<std::string>& vals) {
          args.overrides[key] = vals.at(0);
          return true;
        },
        "override config key " + key);
    opt->type_name("VALUE");
    opt->expected(1);
  }
  cmd->add_flag("--no-msp", args.no_msp, "disable the auxiliary multi-series prediction modules");
  cmd->add_flag("--no-contrastive-loss", args.no_contrastive, "set lambda_contra to 0");
  cmd->add_flag("--no-graph", args.no_graph, "disable the channel relationship graph mask");
  cmd->add_flag("--detach-purified", args.detach_purified,
                "block gradients from the forecaster into the reconstruction model");
}

redf::Config build_config(const CommonArgs& args) {
  redf::Config cfg;
  if (!args.config_path.empty()) cfg = redf::Config::load(args.config_path);
  for (const auto& [k, v] : args.overrides) cfg.set(k, v);
  if (args.no_msp) cfg.msp_count = 0;
  if (args.no_contrastive) cfg.lambda_contra = 0.0;
  if (args.no_graph) cfg.use_graph = false;
  if (args.detach_purified) cfg.detach_purified = true;
  return cfg;
}

json config_json(const redf::Config& cfg) {
  json j;
  std::istringstream is(cfg.echo());
  std::string line;
  while (std::getline(is, line)) {
    auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    j[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return j;
}

void write_run_meta(const std::string& out_dir, const std::string& subcommand,
                    const redf::Config& cfg, const std::vector<std::string>& input_files,
                    const std::vector<std::string>& outputs) {
  json meta;
  meta["subcommand"] = subcommand;
  meta["config"] = config_json(cfg);
  meta["seed"] = cfg.seed;
  json hashes;
  for (const std::string& f : input_files) hashes[f] = redf::sha1_file_hex(f);
  meta["input_hash"] = hashes;
  meta["outputs"] = outputs;
  std::ofstream out(fs::path(out_dir) / "run_meta.json");
  out << meta.dump(2) << "\n";
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> dataset_files(const std::string& dir) {
  return {(fs::path(dir) / "train.csv").string(), (fs::path(dir) / "test.csv").string(),
          (fs::path(dir) / "test_label.csv").string()};
}

void write_scores_csv(const std::string& path, const redf::AnomalyScoreSeries& s,
                      const std::vector<int>* labels) {
  std::ofstream out(path);
  if (!out) throw redf::DataError("cannot write " + path);
  out << "timestep,score,label\n";
  for (size_t i = 0; i < s.timesteps.size(); ++i) {
    int lab = labels ? (*labels)[s.timesteps[i]] : 0;
    out << s.timesteps[i] << "," << fmt(s.scores[i]) << "," << lab << "\n";
  }
}

struct ScoreRows {
  std::vector<long> timesteps;
  std::vector<double> scores;
  std::vector<int> labels;
};

ScoreRows read_scores_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw redf::DataError("missing scores file: " + path + " (run `score` first)");
  std::string line;
  if (!std::getline(in, line)) throw redf::DataError("empty scores file: " + path);
  ScoreRows rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    long t;
    double s;
    int lab;
    if (std::sscanf(line.c_str(), "%ld,%lf,%d", &t, &s, &lab) != 3)
      throw redf::DataError(path + ": malformed row '" + line + "'");
    rows.timesteps.push_back(t);
    rows.scores.push_back(s);
    rows.labels.push_back(lab);
  }
  if (rows.timesteps.empty()) throw redf::DataError(path + ": no score rows");
  return rows;
}

int run_synth(const CommonArgs& args, const std::string& spec_path, const std::string& name) {
  redf::SynthSpec spec =
      spec_path.empty() ? redf::SynthSpec::default_spec() : redf::SynthSpec::from_json_file(spec_path);
  if (!name.empty()) spec.name = name;
  redf::Dataset ds = redf::generate_synthetic(spec);
  fs::path dir = fs::path(args.out_dir) / spec.name;
  redf::save_dataset(ds, dir.string());
  {
    std::ofstream out(dir / "spec.json");
    out << spec.to_json() << "\n";
  }
  redf::Config cfg = build_config(args);
  cfg.seed = static_cast<int64_t>(spec.seed);
  std::vector<std::string> inputs;
  if (!spec_path.empty()) inputs.push_back(spec_path);
  write_run_meta(args.out_dir, "synth", cfg, inputs,
                 {(dir / "train.csv").string(), (dir / "test.csv").string(),
                  (dir / "test_label.csv").string(), (dir / "spec.json").string()});
  std::cerr << "synth: wrote " << dir.string() << " (" << ds.train.cols() << " train / "
            << ds.test.cols() << " test timesteps)\n";
  return 0;
}

int run_train(const CommonArgs& args, const std::string& data_dir) {
  redf::Dataset ds = redf::load_dataset(data_dir);
  redf::Config cfg = build_config(args);
  if (cfg.num_channels == 0) cfg.num_channels = ds.train.rows();
  cfg.validate();
  redf::Model model(cfg);

  fs::create_directories(args.out_dir);
  std::ofstream log(fs::path(args.out_dir) / "train_log.csv");
  log << "epoch,l_rem,l_pred,l_contra,total\n";
  auto rows = redf::train(model, ds.train, [&](const redf::EpochLog& e) {
    log << e.epoch << "," << fmt(e.l_rem) << "," << fmt(e.l_pred) << "," << fmt(e.l_contra) << ","
        << fmt(e.total) << "\n";
    log.flush();
    std::cerr << "epoch " << e.epoch << ": total " << e.total << "\n";
  });
  std::string ckpt = (fs::path(args.out_dir) / "checkpoint.bin").string();
  model.save(ckpt);
  write_run_meta(args.out_dir, "train", cfg, dataset_files(data_dir),
                 {ckpt, (fs::path(args.out_dir) / "train_log.csv").string()});
  return 0;
}

int run_score(const CommonArgs& args, const std::string& data_dir, const std::string& ckpt_path) {
  redf::Dataset ds = redf::load_dataset(data_dir);
  auto model = redf::Model::load(ckpt_path);
  redf::Config cfg = model->config();
  for (const auto& [k, v] : args.overrides) cfg.set(k, v);  // scoring-time knobs

  redf::AnomalyScoreSeries test_scores = redf::score_series(*model, ds.test);
  redf::Tensor val = redf::validation_slice(ds.train, cfg.val_fraction);
  redf::AnomalyScoreSeries val_scores = redf::score_series(*model, val);

  fs::create_directories(args.out_dir);
  std::string test_path = (fs::path(args.out_dir) / "scores.csv").string();
  std::string val_path = (fs::path(args.out_dir) / "scores_val.csv").string();
  write_scores_csv(test_path, test_scores, &ds.test_labels);
  write_scores_csv(val_path, val_scores, nullptr);
  auto inputs = dataset_files(data_dir);
  inputs.push_back(ckpt_path);
  write_run_meta(args.out_dir, "score", cfg, inputs, {test_path, val_path});
  std::cerr << "score: " << test_scores.scores.size() << " test rows, "
            << val_scores.scores.size() << " validation rows\n";
  return 0;
}

int run_eval(const CommonArgs& args, const std::string& scores_path, const std::string& val_path) {
  redf::Config cfg = build_config(args);
  std::string sp = scores_path.empty() ? (fs::path(args.out_dir) / "scores.csv").string() : scores_path;
  ScoreRows test = read_scores_csv(sp);
  for (size_t i = 1; i < test.timesteps.size(); ++i)
    if (test.timesteps[i] != test.timesteps[i - 1] + 1)
      throw redf::DataError("eval: scored timesteps must be contiguous");

  std::vector<double> val_scores;
  std::string vp = val_path.empty() ? (fs::path(args.out_dir) / "scores_val.csv").string() : val_path;
  if (cfg.threshold_split == "pooled" || !val_path.empty()) {
    ScoreRows val = read_scores_csv(vp);
    val_scores = val.scores;
  }
  redf::Threshold th =
      cfg.threshold_split == "val-only"
          ? redf::compute_threshold(val_scores, {}, cfg.anomaly_ratio)
          : redf::compute_threshold(val_scores, test.scores, cfg.anomaly_ratio);

  std::vector<int> pred = redf::apply_threshold(test.scores, th.delta);
  long T = static_cast<long>(test.scores.size());
  redf::EventLabels pred_ev = redf::extract_events(pred);
  redf::EventLabels truth_ev = redf::extract_events(test.labels);
  redf::AffiliationReport aff = redf::affiliation_metrics(pred_ev, truth_ev, T);
  redf::PointwiseReport pw = redf::pointwise_metrics(pred, test.labels);

  json j;
  j["aff_precision"] = aff.aff_precision;
  j["aff_recall"] = aff.aff_recall;
  j["aff_f1"] = aff.aff_f1;
  j["aff_precision_defined"] = aff.precision_defined;
  j["aff_recall_defined"] = aff.recall_defined;
  j["pointwise_p"] = pw.precision;
  j["pointwise_r"] = pw.recall;
  j["pointwise_f1"] = pw.f1;
  j["threshold"] = th.delta;
  j["r_pct"] = th.r_pct;
  j["n_pred_events"] = aff.n_pred_events;
  j["n_truth_events"] = aff.n_truth_events;
  fs::create_directories(args.out_dir);
  std::string mp = (fs::path(args.out_dir) / "metrics.json").string();
  {
    std::ofstream out(mp);
    out << j.dump(2) << "\n";
  }
  std::vector<std::string> inputs = {sp};
  if (!val_scores.empty()) inputs.push_back(vp);
  write_run_meta(args.out_dir, "eval", cfg, inputs, {mp});
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_forecast(const CommonArgs& args, const std::string& data_dir, const std::string& ckpt_path) {
  redf::Dataset ds = redf::load_dataset(data_dir);
  auto model = redf::Model::load(ckpt_path);
  redf::ForecastResult f = redf::forecast_only(*model, ds.test);

  fs::create_directories(args.out_dir);
  std::string fp = (fs::path(args.out_dir) / "forecasts.csv").string();
  {
    std::ofstream out(fp);
    out << "timestep";
    for (const auto& name : ds.channel_names) out << "," << name;
    out << "\n";
    for (size_t i = 0; i < f.timesteps.size(); ++i) {
      out << f.timesteps[i];
      for (int c = 0; c < f.forecasts.rows(); ++c)
        out << "," << fmt(f.forecasts(c, static_cast<int>(i)));
      out << "\n";
    }
  }
  json j;
  j["mse"] = f.mse;
  j["mae"] = f.mae;
  j["n_forecast_steps"] = f.timesteps.size();
  std::string mp = (fs::path(args.out_dir) / "forecast_metrics.json").string();
  {
    std::ofstream out(mp);
    out << j.dump(2) << "\n";
  }
  auto inputs = dataset_files(data_dir);
  inputs.push_back(ckpt_path);
  write_run_meta(args.out_dir, "forecast", model->config(), inputs, {fp, mp});
  std::cout << j.dump(2) << "\n";
  return 0;
}

int run_ad_score(const CommonArgs& args, const std::string& data_dir, const std::string& ckpt_path,
                 int window) {
  redf::Dataset ds = redf::load_dataset(data_dir);
  auto model = redf::Model::load(ckpt_path);
  redf::AnomalyScoreSeries scores = redf::rem_ad_score(*model, ds.test, window);
  redf::Tensor val = redf::validation_slice(ds.train, model->config().val_fraction);
  redf::AnomalyScoreSeries val_scores = redf::rem_ad_score(*model, val, window);

  fs::create_directories(args.out_dir);
  std::string sp = (fs::path(args.out_dir) / "scores.csv").string();
  std::string vp = (fs::path(args.out_dir) / "scores_val.csv").string();
  write_scores_csv(sp, scores, &ds.test_labels);
  write_scores_csv(vp, val_scores, nullptr);
  auto inputs = dataset_files(data_dir);
  inputs.push_back(ckpt_path);
  write_run_meta(args.out_dir, "ad-score", model->config(), inputs, {sp, vp});
  std::cerr << "ad-score: " << scores.scores.size() << " test rows\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"frequency-domain reconstruction-elimination + dual-stream contrastive forecasting "
               "for multivariate time-series anomaly prediction"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, score_args, eval_args, forecast_args, ad_args;
  std::string synth_spec, synth_name;
  std::string train_data;
  std::string score_data, score_ckpt;
  std::string eval_scores, eval_val_scores;
  std::string forecast_data, forecast_ckpt;
  std::string ad_data, ad_ckpt;
  int ad_window = 100;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic precursor dataset");
  add_common(synth, synth_args);
  synth->add_option("--synth-spec", synth_spec, "synthetic spec JSON file");
  synth->add_option("--name", synth_name, "dataset name override");

  CLI::App* train_cmd = app.add_subcommand("train", "joint training; writes checkpoint + log");
  add_common(train_cmd, train_args);
  train_cmd->add_option("--data", train_data, "dataset directory")->required();

  CLI::App* score = app.add_subcommand("score", "anomaly scores from the dual forecast streams");
  add_common(score, score_args);
  score->add_option("--data", score_data, "dataset directory")->required();
  score->add_option("--checkpoint", score_ckpt, "trained checkpoint")->required();

  CLI::App* eval = app.add_subcommand("eval", "threshold scores and report event metrics");
  add_common(eval, eval_args);
  eval->add_option("--scores", eval_scores, "scores.csv from `score` (default <out>/scores.csv)");
  eval->add_option("--val-scores", eval_val_scores, "validation scores (default <out>/scores_val.csv)");

  CLI::App* forecast = app.add_subcommand("forecast", "single-stream forecasting with MSE/MAE");
  add_common(forecast, forecast_args);
  forecast->add_option("--data", forecast_data, "dataset directory")->required();
  forecast->add_option("--checkpoint", forecast_ckpt, "trained checkpoint")->required();

  CLI::App* ad = app.add_subcommand("ad-score", "reconstruction-only anomaly detection scores");
  add_common(ad, ad_args);
  ad->add_option("--data", ad_data, "dataset directory")->required();
  ad->add_option("--checkpoint", ad_ckpt, "trained checkpoint")->required();
  ad->add_option("--window", ad_window, "detection window length (must match checkpoint lookback)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args, synth_spec, synth_name);
    if (train_cmd->parsed()) return run_train(train_args, train_data);
    if (score->parsed()) return run_score(score_args, score_data, score_ckpt);
    if (eval->parsed()) return run_eval(eval_args, eval_scores, eval_val_scores);
    if (forecast->parsed()) return run_forecast(forecast_args, forecast_data, forecast_ckpt);
    if (ad->parsed()) return run_ad_score(ad_args, ad_data, ad_ckpt, ad_window);
  } catch (const redf::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const redf::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const redf::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
