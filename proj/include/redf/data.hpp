#pragma once

#include "redf/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace redf {

struct Dataset {
  std::string name;
  std::vector<std::string> channel_names;
  Tensor train;                  // (C, T_train), unlabeled normal data
  Tensor test;                   // (C, T_test)
  std::vector<int> test_labels;  // size T_test, 0/1
};

// Expects <dir>/{train.csv, test.csv, test_label.csv}; header row carries the
// channel names, one timestep per row. Missing cells are forward-filled per
// channel, leading gaps become 0. Non-binary labels and ragged rows are
// rejected.
Dataset load_dataset(const std::string& dir);

// Writes the three CSVs with round-trip-exact formatting.
void save_dataset(const Dataset& ds, const std::string& dir);

struct SynthEvent {
  std::string type;  // spike | level_shift
  long start = 0;    // index within the test split
  long duration = 1;
  double magnitude = 1.0;
};

// Recipe for the precursor-injection generator: sinusoid mixtures plus noise,
// anomaly events in the test split only, each preceded by an unlabeled
// precursor of amplitude alpha * magnitude.
struct SynthSpec {
  int channels = 4;
  long total_length = 20000;
  double train_fraction = 0.5;
  std::vector<std::vector<double>> periods;     // per channel
  std::vector<std::vector<double>> amplitudes;  // matching periods
  double noise_sigma = 0.1;
  std::vector<SynthEvent> events;
  long precursor_lead = 32;              // P
  double precursor_alpha = 0.3;          // fraction of event magnitude, (0,1]
  std::string precursor_shape = "ramp";  // ramp | oscillation
  uint64_t seed = 7;
  std::string name = "synthetic";

  long train_length() const { return static_cast<long>(total_length * train_fraction); }
  long test_length() const { return total_length - train_length(); }

  void validate() const;
  std::string to_json() const;
  static SynthSpec from_json_text(const std::string& text);
  static SynthSpec from_json_file(const std::string& path);

  // C=4, T=20000, 20 evenly spaced events alternating spike/level_shift
  static SynthSpec default_spec();
};

Dataset generate_synthetic(const SynthSpec& spec);

}  // namespace redf
