// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_FFT_HPP_
#define CDSE_FFT_HPP_

#include <complex>
#include <vector>

namespace cdse {

// Iterative radix-2 transform, double precision. Sizes are restricted to
// powers of two by the callers (the STFT layer rejects anything else).
// inverse=true applies the 1/n factor.
void Fft(std::vector<std::complex<double>>& a, bool inverse);

// Real-input forward transform: returns bins 0..n/2 (length n/2 + 1).
std::vector<std::complex<double>> Rfft(const std::vector<double>& x);

// Inverse of Rfft for a Hermitian-extended half spectrum of length n/2 + 1.
// The imaginary parts of bins 0 and n/2 do not contribute (the extension
// forces them out of the real output), matching the adjoint used by the
// autodiff rules.
std::vector<double> Irfft(const std::vector<std::complex<double>>& half,
                          int n);

bool IsPowerOfTwo(int n);

}  // namespace cdse

#endif  // CDSE_FFT_HPP_
