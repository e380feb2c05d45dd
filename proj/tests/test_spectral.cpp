#include "redf/rng.hpp"
#include "redf/spectral.hpp"

#include "fd.hpp"

#include <doctest.h>

#include <complex>

using namespace redf;

namespace {

// direct O(L^2) complex-sum oracle for the analysis transform
SpectralPair dft_oracle(const TimeWindow& w) {
  int C = w.channels(), L = w.length();
  SpectralPair sp{Tensor(C, L), Tensor(C, L)};
  for (int c = 0; c < C; ++c)
    for (int k = 0; k < L; ++k) {
      std::complex<double> acc(0, 0);
      for (int n = 0; n < L; ++n) {
        double a = -2.0 * M_PI * k * n / L;
        acc += w.values(c, n) * std::complex<double>(std::cos(a), std::sin(a));
      }
      sp.real(c, k) = acc.real();
      sp.imag(c, k) = acc.imag();
    }
  return sp;
}

// direct synthesis-sum oracle, real part
TimeWindow idft_oracle(const SpectralPair& sp) {
  int C = sp.real.rows(), L = sp.real.cols();
  TimeWindow out{Tensor(C, L), 0};
  for (int c = 0; c < C; ++c)
    for (int n = 0; n < L; ++n) {
      std::complex<double> acc(0, 0);
      for (int k = 0; k < L; ++k) {
        double a = 2.0 * M_PI * k * n / L;
        acc += std::complex<double>(sp.real(c, k), sp.imag(c, k)) *
               std::complex<double>(std::cos(a), std::sin(a));
      }
      out.values(c, n) = acc.real() / L;
    }
  return out;
}

}  // namespace

TEST_CASE("dft of a constant signal concentrates in the DC bin") {
  TimeWindow w{Tensor::full(1, 4, 1.0), 0};
  SpectralPair sp = dft(w);
  CHECK(sp.real(0, 0) == doctest::Approx(4.0).epsilon(1e-12));
  for (int k = 1; k < 4; ++k) CHECK(sp.real(0, k) == doctest::Approx(0.0).epsilon(1e-12));
  for (int k = 0; k < 4; ++k) CHECK(sp.imag(0, k) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dft of alternating signal matches the direct summation") {
  TimeWindow w{Tensor(1, 4), 0};
  w.values(0, 0) = 1;
  w.values(0, 1) = 0;
  w.values(0, 2) = -1;
  w.values(0, 3) = 0;
  SpectralPair sp = dft(w);
  double expect_re[4] = {0, 2, 0, 2};
  for (int k = 0; k < 4; ++k) {
    CHECK(sp.real(0, k) == doctest::Approx(expect_re[k]).epsilon(1e-12));
    CHECK(sp.imag(0, k) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("dft equals brute-force summation; idft inverts; Parseval holds") {
  Rng rng(101);
  for (int L : {7, 16, 33, 128}) {
    TimeWindow w{rng.gaussian_tensor(2, L), 0};
    SpectralPair sp = dft(w);
    SpectralPair oracle = dft_oracle(w);
    for (long i = 0; i < sp.real.size(); ++i) {
      CHECK(std::fabs(sp.real[i] - oracle.real[i]) < 1e-9 * std::max(1.0, std::fabs(oracle.real[i])));
      CHECK(std::fabs(sp.imag[i] - oracle.imag[i]) < 1e-9 * std::max(1.0, std::fabs(oracle.imag[i])));
    }
    TimeWindow back = idft(sp);
    for (long i = 0; i < w.values.size(); ++i) CHECK(std::fabs(back.values[i] - w.values[i]) < 1e-9);

    for (int c = 0; c < 2; ++c) {
      double time_e = 0, freq_e = 0;
      for (int n = 0; n < L; ++n) time_e += w.values(c, n) * w.values(c, n);
      for (int k = 0; k < L; ++k)
        freq_e += sp.real(c, k) * sp.real(c, k) + sp.imag(c, k) * sp.imag(c, k);
      CHECK(std::fabs(time_e - freq_e / L) < 1e-9 * std::max(1.0, time_e));
    }
  }
}

TEST_CASE("DC-only spectrum synthesizes a constant") {
  SpectralPair sp{Tensor(1, 4), Tensor(1, 4)};
  sp.real(0, 0) = 4.0;
  TimeWindow w = idft(sp);
  for (int n = 0; n < 4; ++n) CHECK(w.values(0, n) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("idft of a non-Hermitian spectrum equals the real part of the direct sum") {
  Rng rng(103);
  SpectralPair sp{rng.gaussian_tensor(2, 12), rng.gaussian_tensor(2, 12)};
  TimeWindow got = idft(sp);
  TimeWindow expect = idft_oracle(sp);
  for (long i = 0; i < got.values.size(); ++i)
    CHECK(std::fabs(got.values[i] - expect.values[i]) < 1e-9);
}

TEST_CASE("tape dft/idft agree with value-level and differentiate") {
  Rng rng(107);
  Tensor x = rng.gaussian_tensor(2, 16);
  DftBasis basis(16);

  ad::Tape t(true);
  ad::Var xv = t.leaf(x);
  auto [re, im] = dft(t, xv, basis);
  ad::Var back = idft(t, re, im, basis);
  const Tensor& bv = t.val(back);
  for (long i = 0; i < x.size(); ++i) CHECK(std::fabs(bv[i] - x[i]) < 1e-9);

  Rng prng(17);
  Tensor proj = prng.uniform_tensor(2, 16, -1, 1);
  ad::Var loss = ad::sum_all(t, ad::mul(t, ad::add(t, re, im), t.constant(proj)));
  t.backward(loss);
  Tensor grad = t.grad(xv);
  auto eval = [&]() {
    ad::Tape tt(false);
    auto [r2, i2] = dft(tt, tt.constant(x), basis);
    return tt.val(ad::sum_all(tt, ad::mul(tt, ad::add(tt, r2, i2), tt.constant(proj)))).item();
  };
  auto rep = testing::fd_check(&x, eval, grad);
  CHECK(rep.max_rel_err < 1e-3);
}
