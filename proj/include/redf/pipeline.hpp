#pragma once

#include "redf/config.hpp"
#include "redf/core.hpp"
#include "redf/data.hpp"
#include "redf/dfm.hpp"
#include "redf/nn.hpp"
#include "redf/rem.hpp"

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace redf {

// One training sample for MSP-augmented training: inputs X_0..X_n and
// horizon targets Y_0..Y_n. X_k spans [t+kH, t+kH+L), Y_k follows it.
struct MspSampleSet {
  std::vector<TimeWindow> inputs;
  std::vector<Tensor> targets;  // (C, H) each
};

MspSampleSet generate_samples(const Tensor& series, long t_start, int lookback, int horizon, int msp_count);

// Reconstruction model + forecaster sharing one parameter store; unit of
// checkpointing.
class Model {
 public:
  explicit Model(const Config& cfg);

  const Config& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const RemModel& rem() const { return *rem_; }
  const DfmModel& dfm() const { return *dfm_; }

  void save(const std::string& path) const;
  static std::unique_ptr<Model> load(const std::string& path);

 private:
  Config cfg_;
  nn::ParamStore params_;
  std::unique_ptr<RemModel> rem_;
  std::unique_ptr<DfmModel> dfm_;
};

struct EpochLog {
  int epoch = 0;
  double l_rem = 0;
  double l_pred = 0;
  double l_contra = 0;
  double total = 0;
};

// Joint training on the leading (1 - val_fraction) part of `train_series`:
// per batch, REM reconstruction losses plus dual-stream forecasting losses
// with MSP auxiliaries, one optimizer step over both parameter sets.
// Deterministic for a fixed config (seed, threads, batch/stride).
std::vector<EpochLog> train(Model& model, const Tensor& train_series,
                            const std::function<void(const EpochLog&)>& on_epoch = nullptr);

struct AnomalyScoreSeries {
  std::vector<long> timesteps;  // absolute index into the scored series
  std::vector<double> scores;   // >= 0
};

enum class StreamOverride {
  None,
  UseOriginal,  // testing hook: purified stream forced equal to the original
};

// per-timestep channel-mean squared gap between the two forecast streams
std::vector<double> pointwise_score(const Tensor& y_orig, const Tensor& y_pure);

// Slides a lookback window with the configured stride (default H) and emits
// pointwise_score over each horizon; overlapping horizons are averaged.
AnomalyScoreSeries score_series(const Model& model, const Tensor& series,
                                StreamOverride ov = StreamOverride::None);

struct Threshold {
  double delta = 0;
  double r_pct = 0;
};

// Nearest-rank percentile over the pooled scores: delta is the k-th largest
// pooled value with k = max(1, floor(r_pct/100 * n)). Labels are score > delta.
Threshold compute_threshold(const std::vector<double>& val_scores,
                            const std::vector<double>& test_scores, double r_pct);

std::vector<int> apply_threshold(const std::vector<double>& scores, double delta);

// REM-only detection: non-overlapping windows of the model's lookback length,
// per-timestep normalized-space reconstruction error.
AnomalyScoreSeries rem_ad_score(const Model& model, const Tensor& series, int window);

struct ForecastResult {
  std::vector<long> timesteps;
  Tensor forecasts;  // (C, timesteps.size()), data units
  double mse = 0;    // against the actual series, data units
  double mae = 0;
};

// Single-stream forecasting: emits the main forecast for each window.
ForecastResult forecast_only(const Model& model, const Tensor& series);

// last val_fraction columns of the training split
Tensor validation_slice(const Tensor& train_series, double val_fraction);
Tensor training_slice(const Tensor& train_series, double val_fraction);

}  // namespace redf
