#include "redf/core.hpp"

#include "redf/errors.hpp"

#include <cmath>

namespace redf {

std::pair<TimeWindow, InstanceStats> instance_normalize(const TimeWindow& w, double eps) {
  const Tensor& x = w.values;
  int C = x.rows(), L = x.cols();
  InstanceStats st{Tensor(C, 1), Tensor(C, 1)};
  TimeWindow out{Tensor(C, L), w.origin_index};
  for (int c = 0; c < C; ++c) {
    double m = 0;
    for (int i = 0; i < L; ++i) m += x(c, i);
    m /= L;
    double var = 0;
    for (int i = 0; i < L; ++i) {
      double d = x(c, i) - m;
      var += d * d;
    }
    var /= L;  // population variance
    double sd = std::max(std::sqrt(var), eps);
    st.mean(c, 0) = m;
    st.stdev(c, 0) = sd;
    for (int i = 0; i < L; ++i) out.values(c, i) = (x(c, i) - m) / sd;
  }
  return {out, st};
}

TimeWindow instance_denormalize(const TimeWindow& w, const InstanceStats& stats) {
  const Tensor& x = w.values;
  int C = x.rows(), L = x.cols();
  if (stats.mean.rows() != C || stats.stdev.rows() != C)
    throw DataError("instance_denormalize: stats/window channel mismatch");
  TimeWindow out{Tensor(C, L), w.origin_index};
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < L; ++i) out.values(c, i) = x(c, i) * stats.stdev(c, 0) + stats.mean(c, 0);
  return out;
}

}  // namespace redf
