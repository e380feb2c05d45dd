#include "redf/pipeline.hpp"

#include "redf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <thread>

namespace redf {

using ad::Tape;
using ad::Var;

MspSampleSet generate_samples(const Tensor& series, long t_start, int lookback, int horizon,
                              int msp_count) {
  long T = series.cols();
  if (t_start < 0 || t_start + static_cast<long>(msp_count) * horizon + lookback + horizon > T)
    throw DataError("generate_samples: start index " + std::to_string(t_start) +
                    " out of bounds for series length " + std::to_string(T));
  MspSampleSet out;
  int C = series.rows();
  for (int k = 0; k <= msp_count; ++k) {
    long in_start = t_start + static_cast<long>(k) * horizon;
    TimeWindow w{Tensor(C, lookback), in_start};
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < lookback; ++i) w.values(c, i) = series(c, static_cast<int>(in_start + i));
    out.inputs.push_back(std::move(w));
    Tensor y(C, horizon);
    long tgt = in_start + lookback;
    for (int c = 0; c < C; ++c)
      for (int i = 0; i < horizon; ++i) y(c, i) = series(c, static_cast<int>(tgt + i));
    out.targets.push_back(std::move(y));
  }
  return out;
}

Model::Model(const Config& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.num_channels < 1) throw UsageError("model: num_channels must be set");
  Rng init_rng(Rng::mix(static_cast<uint64_t>(cfg_.seed), 0x1a17));
  rem_ = std::make_unique<RemModel>(cfg_, params_, init_rng);
  dfm_ = std::make_unique<DfmModel>(cfg_, params_, init_rng);
}

// ------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[4] = {'R', 'E', 'D', 'F'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
void read_pod(std::istream& is, T* v) {
  is.read(reinterpret_cast<char*>(v), sizeof(*v));
}

void write_string(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  uint64_t n = 0;
  read_pod(is, &n);
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  return s;
}

}  // namespace

void Model::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  write_pod(os, kVersion);
  write_string(os, cfg_.echo());
  auto items = params_.all();
  write_pod<uint64_t>(os, items.size());
  for (const nn::Parameter* p : items) {
    write_string(os, p->name);
    write_pod<uint32_t>(os, static_cast<uint32_t>(p->value.rows()));
    write_pod<uint32_t>(os, static_cast<uint32_t>(p->value.cols()));
    write_pod<uint8_t>(os, 0);  // dtype: f64
    os.write(reinterpret_cast<const char*>(p->value.data()),
             static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!os) throw DataError("checkpoint write failed: " + path);
}

std::unique_ptr<Model> Model::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw DataError("not a checkpoint file: " + path);
  uint32_t version = 0;
  read_pod(is, &version);
  if (version != kVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  std::string cfg_text = read_string(is);
  Config cfg;
  std::istringstream cs(cfg_text);
  std::string line;
  while (std::getline(cs, line)) {
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t");
      if (a == std::string::npos) return std::string();
      size_t b = s.find_last_not_of(" \t");
      return s.substr(a, b - a + 1);
    };
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  auto model = std::make_unique<Model>(cfg);
  uint64_t count = 0;
  read_pod(is, &count);
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    uint32_t rows = 0, cols = 0;
    uint8_t dtype = 0;
    read_pod(is, &rows);
    read_pod(is, &cols);
    read_pod(is, &dtype);
    if (dtype != 0) throw DataError("checkpoint: unsupported dtype");
    nn::Parameter& p = model->params_.find(name);
    if (p.value.rows() != static_cast<int>(rows) || p.value.cols() != static_cast<int>(cols))
      throw DataError("checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(double)));
  }
  if (!is) throw DataError("checkpoint truncated: " + path);
  return model;
}

// ---------------------------------------------------------------- training

Tensor validation_slice(const Tensor& train_series, double val_fraction) {
  long T = train_series.cols();
  long t_core = T - static_cast<long>(T * val_fraction);
  Tensor out(train_series.rows(), static_cast<int>(T - t_core));
  for (int c = 0; c < out.rows(); ++c)
    for (int i = 0; i < out.cols(); ++i) out(c, i) = train_series(c, static_cast<int>(t_core + i));
  return out;
}

Tensor training_slice(const Tensor& train_series, double val_fraction) {
  long T = train_series.cols();
  long t_core = T - static_cast<long>(T * val_fraction);
  Tensor out(train_series.rows(), static_cast<int>(t_core));
  for (int c = 0; c < out.rows(); ++c)
    for (int i = 0; i < out.cols(); ++i) out(c, i) = train_series(c, i);
  return out;
}

namespace {

struct SampleLosses {
  double l_rem = 0, l_pred = 0, l_contra = 0, total = 0;
};

// forward/backward for one start index; gradients are added into `grads`
// (one slot per parameter index)
SampleLosses run_sample(const Model& model, const Tensor& series, long start, uint64_t noise_key,
                        std::vector<Tensor>& grads) {
  const Config& cfg = model.config();
  MspSampleSet samples = generate_samples(series, start, cfg.lookback, cfg.horizon, cfg.msp_count);
  Rng rng(noise_key);
  Tape tape(true);
  nn::Binder bind(tape);

  RemOptions ropts;
  ropts.training = true;
  ropts.rng = &rng;
  RemForward rf = model.rem().forward(tape, bind, samples.inputs[0].values, ropts);
  Var l_rem = model.rem().loss(tape, rf);

  Var purified = cfg.detach_purified ? ad::detach(tape, rf.recon) : rf.recon;
  DfmOptions dopts;
  dopts.training = true;
  dopts.rng = &rng;
  Var x0 = tape.constant(samples.inputs[0].values);
  auto [orig, pure] = model.dfm().dual_stream_forward(tape, bind, x0, purified, dopts);

  std::vector<Var> yhat_msp;
  Var h_prev = orig.encoded;
  for (int k = 1; k <= cfg.msp_count; ++k) {
    Var xk = tape.constant(samples.inputs[k].values);
    auto [h_k, yhat_k] = model.dfm().msp_step(tape, bind, k, xk, h_prev, dopts);
    h_prev = h_k;
    yhat_msp.push_back(yhat_k);
  }
  DfmModel::LossParts dl =
      model.dfm().loss(tape, orig.forecast, yhat_msp, samples.targets, pure.forecast);
  Var total = ad::add(tape, l_rem, dl.total);

  SampleLosses out;
  out.l_rem = tape.val(l_rem).item();
  out.l_pred = tape.val(dl.pred).item();
  out.l_contra = tape.val(dl.contra).item();
  out.total = tape.val(total).item();
  if (!std::isfinite(out.total))
    throw NumericError("non-finite training loss at start index " + std::to_string(start));

  tape.backward(total);
  bind.accumulate_to(grads);
  return out;
}

void adam_step(nn::ParamStore& store, double lr, long step, double clip_norm) {
  constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  auto params = store.all();
  double norm_sq = 0;
  for (nn::Parameter* p : params)
    for (long i = 0; i < p->grad.size(); ++i) norm_sq += p->grad[i] * p->grad[i];
  double scale = 1.0;
  double norm = std::sqrt(norm_sq);
  if (clip_norm > 0 && norm > clip_norm) scale = clip_norm / norm;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (nn::Parameter* p : params) {
    for (long i = 0; i < p->value.size(); ++i) {
      double g = p->grad[i] * scale;
      p->adam_m[i] = beta1 * p->adam_m[i] + (1.0 - beta1) * g;
      p->adam_v[i] = beta2 * p->adam_v[i] + (1.0 - beta2) * g * g;
      double mhat = p->adam_m[i] / bc1;
      double vhat = p->adam_v[i] / bc2;
      p->value[i] -= lr * mhat / (std::sqrt(vhat) + adam_eps);
    }
  }
}

}  // namespace

std::vector<EpochLog> train(Model& model, const Tensor& train_series,
                            const std::function<void(const EpochLog&)>& on_epoch) {
  const Config& cfg = model.config();
  if (train_series.rows() != cfg.num_channels)
    throw DataError("train: channel count mismatch");
  Tensor core = training_slice(train_series, cfg.val_fraction);
  long span = static_cast<long>(cfg.lookback) + static_cast<long>(cfg.msp_count + 1) * cfg.horizon;
  long last_start = core.cols() - span;
  if (last_start < 0)
    throw DataError("train: series too short, need at least " + std::to_string(span) +
                    " timesteps after the validation split, have " + std::to_string(core.cols()));
  int stride = cfg.train_stride > 0 ? cfg.train_stride : cfg.horizon;
  std::vector<long> starts;
  for (long s = 0; s <= last_start; s += stride) starts.push_back(s);

  int shards = std::max(1, cfg.threads);
  long params_n = static_cast<long>(model.params().all().size());
  std::vector<EpochLog> log;
  long step = 0;
  uint64_t sample_counter = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle_rng(Rng::mix(static_cast<uint64_t>(cfg.seed), 0xe90c + epoch));
    std::vector<long> order = starts;
    shuffle_rng.shuffle(order);

    EpochLog ep;
    ep.epoch = epoch;
    long samples_seen = 0;

    for (size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      long bsz = static_cast<long>(b1 - b0);

      // fixed contiguous shard partition keeps accumulation order independent
      // of thread scheduling
      std::vector<std::vector<Tensor>> shard_grads(shards, std::vector<Tensor>(params_n));
      std::vector<SampleLosses> shard_losses(shards);
      std::vector<std::string> shard_errors(shards);
      uint64_t batch_base = sample_counter;

      auto work = [&](int shard) {
        try {
          for (size_t i = b0 + shard; i < b1; i += shards) {
            uint64_t key = Rng::mix(Rng::mix(static_cast<uint64_t>(cfg.seed), 0x77aa),
                                    batch_base + (i - b0));
            SampleLosses l = run_sample(model, core, order[i], key, shard_grads[shard]);
            shard_losses[shard].l_rem += l.l_rem;
            shard_losses[shard].l_pred += l.l_pred;
            shard_losses[shard].l_contra += l.l_contra;
            shard_losses[shard].total += l.total;
          }
        } catch (const std::exception& e) {
          shard_errors[shard] = e.what();
        }
      };
      if (shards == 1) {
        work(0);
      } else {
        std::vector<std::thread> pool;
        for (int s = 0; s < shards; ++s) pool.emplace_back(work, s);
        for (auto& th : pool) th.join();
      }
      for (const auto& err : shard_errors)
        if (!err.empty()) throw NumericError(err);

      model.params().zero_grads();
      auto plist = model.params().all();
      for (int s = 0; s < shards; ++s)
        for (long pi = 0; pi < params_n; ++pi)
          if (!shard_grads[s][pi].empty()) plist[pi]->grad.map() += shard_grads[s][pi].map();
      double inv = 1.0 / static_cast<double>(bsz);
      for (nn::Parameter* p : plist) p->grad.map() *= inv;

      adam_step(model.params(), cfg.learning_rate, ++step, cfg.clip_norm);

      for (int s = 0; s < shards; ++s) {
        ep.l_rem += shard_losses[s].l_rem;
        ep.l_pred += shard_losses[s].l_pred;
        ep.l_contra += shard_losses[s].l_contra;
        ep.total += shard_losses[s].total;
      }
      samples_seen += bsz;
      sample_counter += bsz;
    }

    if (samples_seen > 0) {
      ep.l_rem /= samples_seen;
      ep.l_pred /= samples_seen;
      ep.l_contra /= samples_seen;
      ep.total /= samples_seen;
    }
    log.push_back(ep);
    if (on_epoch) on_epoch(ep);
  }
  return log;
}

// ----------------------------------------------------------------- scoring

std::vector<double> pointwise_score(const Tensor& y_orig, const Tensor& y_pure) {
  int C = y_orig.rows(), H = y_orig.cols();
  std::vector<double> out(H, 0.0);
  for (int h = 0; h < H; ++h) {
    double s = 0;
    for (int c = 0; c < C; ++c) {
      double d = y_orig(c, h) - y_pure(c, h);
      s += d * d;
    }
    out[h] = s / C;
  }
  return out;
}

AnomalyScoreSeries score_series(const Model& model, const Tensor& series, StreamOverride ov) {
  const Config& cfg = model.config();
  int L = cfg.lookback, H = cfg.horizon;
  long T = series.cols();
  if (series.rows() != cfg.num_channels) throw DataError("score: channel count mismatch");
  if (T < L + H)
    throw DataError("score: series length " + std::to_string(T) + " shorter than lookback+horizon " +
                    std::to_string(L + H));
  int stride = cfg.scoring_stride > 0 ? cfg.scoring_stride : H;

  std::vector<double> sums(T, 0.0);
  std::vector<long> counts(T, 0);
  Tensor window(cfg.num_channels, L);
  for (long w = 0; w + L + H <= T; w += stride) {
    for (int c = 0; c < cfg.num_channels; ++c)
      for (int i = 0; i < L; ++i) window(c, i) = series(c, static_cast<int>(w + i));

    Tape tape(false);
    nn::Binder bind(tape);
    RemOptions ropts;  // inference: deterministic hard masks, no dropout
    RemForward rf = model.rem().forward(tape, bind, window, ropts);
    Var x0 = tape.constant(window);
    Var purified = ov == StreamOverride::UseOriginal ? x0 : rf.recon;
    DfmOptions dopts;
    auto [orig, pure] = model.dfm().dual_stream_forward(tape, bind, x0, purified, dopts);
    std::vector<double> s = pointwise_score(tape.val(orig.forecast), tape.val(pure.forecast));
    for (int h = 0; h < H; ++h) {
      sums[w + L + h] += s[h];
      counts[w + L + h] += 1;
    }
  }

  AnomalyScoreSeries out;
  for (long t = 0; t < T; ++t)
    if (counts[t] > 0) {
      out.timesteps.push_back(t);
      out.scores.push_back(sums[t] / counts[t]);
    }
  return out;
}

Threshold compute_threshold(const std::vector<double>& val_scores,
                            const std::vector<double>& test_scores, double r_pct) {
  std::vector<double> pool;
  pool.reserve(val_scores.size() + test_scores.size());
  pool.insert(pool.end(), val_scores.begin(), val_scores.end());
  pool.insert(pool.end(), test_scores.begin(), test_scores.end());
  if (pool.empty()) throw DataError("threshold: empty score pool");
  if (!(r_pct > 0 && r_pct < 100)) throw UsageError("threshold: r_pct must lie in (0,100)");
  std::sort(pool.begin(), pool.end(), std::greater<double>());
  long n = static_cast<long>(pool.size());
  long k = std::max<long>(1, static_cast<long>(std::floor(r_pct / 100.0 * n)));
  k = std::min(k, n);
  return Threshold{pool[k - 1], r_pct};
}

std::vector<int> apply_threshold(const std::vector<double>& scores, double delta) {
  std::vector<int> labels(scores.size(), 0);
  for (size_t i = 0; i < scores.size(); ++i) labels[i] = scores[i] > delta ? 1 : 0;
  return labels;
}

AnomalyScoreSeries rem_ad_score(const Model& model, const Tensor& series, int window) {
  const Config& cfg = model.config();
  if (window != cfg.lookback)
    throw DataError("ad-score: window " + std::to_string(window) +
                    " must equal the checkpoint lookback " + std::to_string(cfg.lookback));
  long T = series.cols();
  if (series.rows() != cfg.num_channels) throw DataError("ad-score: channel count mismatch");
  if (T < window) throw DataError("ad-score: series shorter than the window");

  AnomalyScoreSeries out;
  Tensor win(cfg.num_channels, window);
  for (long w = 0; w + window <= T; w += window) {
    for (int c = 0; c < cfg.num_channels; ++c)
      for (int i = 0; i < window; ++i) win(c, i) = series(c, static_cast<int>(w + i));
    Tape tape(false);
    nn::Binder bind(tape);
    RemOptions ropts;
    RemForward rf = model.rem().forward(tape, bind, win, ropts);
    const Tensor& xn = tape.val(rf.x_norm);
    const Tensor& rn = tape.val(rf.recon_norm);
    for (int i = 0; i < window; ++i) {
      double s = 0;
      for (int c = 0; c < cfg.num_channels; ++c) {
        double d = xn(c, i) - rn(c, i);
        s += d * d;
      }
      out.timesteps.push_back(w + i);
      out.scores.push_back(s / cfg.num_channels);
    }
  }
  return out;
}

ForecastResult forecast_only(const Model& model, const Tensor& series) {
  const Config& cfg = model.config();
  int L = cfg.lookback, H = cfg.horizon;
  long T = series.cols();
  if (series.rows() != cfg.num_channels) throw DataError("forecast: channel count mismatch");
  if (T < L + H) throw DataError("forecast: series shorter than lookback+horizon");

  std::vector<double> sums(T, 0.0);
  std::vector<long> counts(T, 0);
  std::vector<std::vector<double>> acc(cfg.num_channels, std::vector<double>(T, 0.0));
  Tensor window(cfg.num_channels, L);
  for (long w = 0; w + L + H <= T; w += H) {
    for (int c = 0; c < cfg.num_channels; ++c)
      for (int i = 0; i < L; ++i) window(c, i) = series(c, static_cast<int>(w + i));
    Tape tape(false);
    nn::Binder bind(tape);
    DfmOptions dopts;
    DfmStream s = model.dfm().run_stream(tape, bind, tape.constant(window), dopts);
    const Tensor& y = tape.val(s.forecast);
    for (int h = 0; h < H; ++h) {
      for (int c = 0; c < cfg.num_channels; ++c) acc[c][w + L + h] += y(c, h);
      counts[w + L + h] += 1;
    }
  }
  (void)sums;

  ForecastResult out;
  for (long t = 0; t < T; ++t)
    if (counts[t] > 0) out.timesteps.push_back(t);
  out.forecasts = Tensor(cfg.num_channels, static_cast<int>(out.timesteps.size()));
  double se = 0, ae = 0;
  long n = 0;
  for (size_t j = 0; j < out.timesteps.size(); ++j) {
    long t = out.timesteps[j];
    for (int c = 0; c < cfg.num_channels; ++c) {
      double v = acc[c][t] / counts[t];
      out.forecasts(c, static_cast<int>(j)) = v;
      double d = v - series(c, static_cast<int>(t));
      se += d * d;
      ae += std::fabs(d);
      ++n;
    }
  }
  if (n > 0) {
    out.mse = se / n;
    out.mae = ae / n;
  }
  return out;
}

}  // namespace redf
