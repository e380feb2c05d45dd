#pragma once

#include "redf/autodiff.hpp"
#include "redf/core.hpp"
#include "redf/tensor.hpp"

namespace redf {

// Real and imaginary components of the full L-point DFT, each (C, L).
struct SpectralPair {
  Tensor real;
  Tensor imag;
};

// Cached DFT basis for one transform length:
//   cos_nk[n][k] = cos(2*pi*n*k/L), sin_nk[n][k] = sin(2*pi*n*k/L).
// Both matrices are symmetric, so they serve analysis and synthesis.
class DftBasis {
 public:
  explicit DftBasis(int length);
  int length() const { return len_; }
  const Tensor& cos() const { return cos_; }
  const Tensor& sin() const { return sin_; }

 private:
  int len_;
  Tensor cos_;
  Tensor sin_;
};

// X_k = sum_n x_n e^{-2i pi k n / L}, per channel row.
SpectralPair dft(const TimeWindow& w);
// Real part of x_n = (1/L) sum_k X_k e^{2i pi k n / L}; spectra produced by a
// learned projection are not Hermitian, so only the real part is meaningful.
TimeWindow idft(const SpectralPair& sp);

// Tape versions operating on (C, L) vars.
std::pair<ad::Var, ad::Var> dft(ad::Tape& t, ad::Var x, const DftBasis& basis);
ad::Var idft(ad::Tape& t, ad::Var re, ad::Var im, const DftBasis& basis);

}  // namespace redf
