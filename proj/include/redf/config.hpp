#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace redf {

// Runtime configuration shared by every model stage. Values are immutable
// once a model is built from them; loading/overriding happens up front.
struct Config {
  // shapes
  int num_channels = 0;  // 0 = take from the dataset
  int lookback = 192;    // L
  int horizon = 32;      // H
  int patch_size = 16;   // p
  int patch_stride = 8;  // s
  int hidden_dim = 256;  // D
  int encoder_layers = 3;  // M
  int msp_count = 2;       // n
  int attention_heads = 4;

  // loss weights
  double lambda_time = 1.0;
  double lambda_freq = 0.2;
  double lambda_main = 0.5;
  double lambda_msp = 0.5;
  double lambda_contra = 1.0;

  // numerics
  double epsilon = 1e-5;
  double gumbel_temperature = 0.5;
  double anomaly_ratio = 1.0;  // r percentile, in (0,100)
  double dropout = 0.1;
  double clip_norm = 5.0;

  // optimizer contract
  int64_t seed = 0;
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 10;

  // behavior switches
  std::string mask_mode = "binary";  // binary | soft
  bool detach_purified = false;
  bool use_graph = true;
  std::string threshold_split = "pooled";  // pooled | val-only
  double val_fraction = 0.2;
  int train_stride = 0;    // 0 = horizon
  int scoring_stride = 0;  // 0 = horizon
  int ad_window = 100;
  int threads = 1;

  int patch_count() const;  // N for (lookback, patch_size, patch_stride)

  // Throws UsageError on any violated invariant.
  void validate() const;

  // Flat `key = value` file, '#' comments, unknown keys rejected.
  static Config load(const std::string& path);
  void set(const std::string& key, const std::string& value);  // single override

  std::string echo() const;  // canonical key=value listing (checkpoint/meta)
  static const std::vector<std::string>& known_keys();
};

// N = floor((L - p) / s) + 1; rejects p > L or s < 1.
int patch_count(int lookback, int patch_size, int patch_stride);

}  // namespace redf
