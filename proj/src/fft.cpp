// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/fft.hpp"

#include <cmath>

#include "cdse/common.hpp"

namespace cdse {

bool IsPowerOfTwo(int n) { return n > 0 && (n & (n - 1)) == 0; }

void Fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  CDSE_CHECK(IsPowerOfTwo(static_cast<int>(n)), ErrorKind::kParameter,
             "FFT size must be a power of two, got ", n);
  // bit reversal permutation
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    const double ang = (inverse ? 2.0 : -2.0) * M_PI / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double scale = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= scale;
  }
}

std::vector<std::complex<double>> Rfft(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  std::vector<std::complex<double>> a(x.size());
  for (size_t i = 0; i < x.size(); ++i) a[i] = {x[i], 0.0};
  Fft(a, false);
  a.resize(static_cast<size_t>(n / 2 + 1));
  return a;
}

std::vector<double> Irfft(const std::vector<std::complex<double>>& half,
                          int n) {
  CDSE_CHECK(static_cast<int>(half.size()) == n / 2 + 1,
             ErrorKind::kDimension, "half spectrum of length ", half.size(),
             " does not match n=", n);
  std::vector<std::complex<double>> a(static_cast<size_t>(n));
  a[0] = {half[0].real(), 0.0};
  for (int f = 1; f < n / 2; ++f) {
    a[static_cast<size_t>(f)] = half[static_cast<size_t>(f)];
    a[static_cast<size_t>(n - f)] = std::conj(half[static_cast<size_t>(f)]);
  }
  a[static_cast<size_t>(n / 2)] = {half[static_cast<size_t>(n / 2)].real(),
                                   0.0};
  Fft(a, true);
  std::vector<double> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] =
      a[static_cast<size_t>(i)].real();
  return out;
}

}  // namespace cdse
