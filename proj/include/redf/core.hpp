#pragma once

#include "redf/tensor.hpp"

namespace redf {

// A C x L block of observations; the universal input unit.
struct TimeWindow {
  Tensor values;         // (C, L)
  long origin_index = 0;  // offset of column 0 in the source series

  int channels() const { return values.rows(); }
  int length() const { return values.cols(); }
};

// Per-channel normalization statistics, kept for denormalization.
struct InstanceStats {
  Tensor mean;   // (C, 1)
  Tensor stdev;  // (C, 1), clamped at epsilon
};

// Per-channel zero mean / unit population std; constant channels map to
// zeros with std clamped at eps.
std::pair<TimeWindow, InstanceStats> instance_normalize(const TimeWindow& w, double eps = 1e-5);

TimeWindow instance_denormalize(const TimeWindow& w, const InstanceStats& stats);

}  // namespace redf
