#include "redf/spectral.hpp"

#include <cmath>

namespace redf {

DftBasis::DftBasis(int length) : len_(length), cos_(length, length), sin_(length, length) {
  for (int n = 0; n < length; ++n)
    for (int k = 0; k < length; ++k) {
      double a = 2.0 * M_PI * static_cast<double>(n) * static_cast<double>(k) / length;
      cos_(n, k) = std::cos(a);
      sin_(n, k) = std::sin(a);
    }
}

SpectralPair dft(const TimeWindow& w) {
  DftBasis b(w.length());
  SpectralPair sp{Tensor(w.channels(), w.length()), Tensor(w.channels(), w.length())};
  sp.real.map().noalias() = w.values.map() * b.cos().map();
  sp.imag.map().noalias() = -(w.values.map() * b.sin().map());
  return sp;
}

TimeWindow idft(const SpectralPair& sp) {
  int L = sp.real.cols();
  DftBasis b(L);
  TimeWindow out{Tensor(sp.real.rows(), L), 0};
  out.values.map().noalias() = (sp.real.map() * b.cos().map() - sp.imag.map() * b.sin().map()) / L;
  return out;
}

std::pair<ad::Var, ad::Var> dft(ad::Tape& t, ad::Var x, const DftBasis& basis) {
  ad::Var cosm = t.constant(basis.cos());
  ad::Var sinm = t.constant(basis.sin());
  ad::Var re = ad::matmul(t, x, cosm);
  ad::Var im = ad::scale(t, ad::matmul(t, x, sinm), -1.0);
  return {re, im};
}

ad::Var idft(ad::Tape& t, ad::Var re, ad::Var im, const DftBasis& basis) {
  ad::Var cosm = t.constant(basis.cos());
  ad::Var sinm = t.constant(basis.sin());
  ad::Var a = ad::matmul(t, re, cosm);
  ad::Var b = ad::matmul(t, im, sinm);
  return ad::scale(t, ad::sub(t, a, b), 1.0 / basis.length());
}

}  // namespace redf
