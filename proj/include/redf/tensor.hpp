#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cstddef>
#include <vector>

namespace redf {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

// Dense row-major matrix of doubles. Everything in the model is carried as a
// rank-2 tensor; higher-rank data (e.g. N patches of C channel tokens) is
// stored stacked along the rows with the logical layout documented at the
// call site. Length-n vectors are (n,1) when they index rows and (1,n) when
// they index columns.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols) : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {
    assert(rows >= 0 && cols >= 0);
  }

  static Tensor full(int rows, int cols, double v) {
    Tensor t(rows, cols);
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor scalar(double v) { return full(1, 1, v); }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  long size() const { return static_cast<long>(data_.size()); }
  bool empty() const { return data_.empty(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator()(int r, int c) { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<size_t>(r) * cols_ + c]; }
  double& operator[](long i) { return data_[i]; }
  double operator[](long i) const { return data_[i]; }

  MatMap map() { return MatMap(data_.data(), rows_, cols_); }
  ConstMatMap map() const { return ConstMatMap(data_.data(), rows_, cols_); }

  void set_zero() { std::fill(data_.begin(), data_.end(), 0.0); }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  double item() const {
    assert(size() == 1);
    return data_[0];
  }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

}  // namespace redf
