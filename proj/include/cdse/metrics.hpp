// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_METRICS_HPP_
#define CDSE_METRICS_HPP_

#include <cmath>
#include <cstdint>
#include <vector>

#include "cdse/autodiff.hpp"
#include "cdse/ops.hpp"
#include "cdse/rng.hpp"

namespace cdse {

constexpr double kSiSnrClampDb = 60.0;
constexpr double kSiSnrEps = 1e-8;

// Scale-invariant SNR in dB: zero-mean both signals, project the estimate
// onto the reference, and compare projection energy against the residual.
// Reported values are clamped to [-60, +60] dB.
template <typename T>
double SiSnrDb(const std::vector<T>& estimate, const std::vector<T>& reference,
               double eps = kSiSnrEps) {
  CDSE_CHECK(estimate.size() == reference.size(), ErrorKind::kDimension,
             "si_snr length mismatch: ", estimate.size(), " vs ",
             reference.size());
  CDSE_CHECK(!reference.empty(), ErrorKind::kDimension, "si_snr of empty");
  const size_t n = reference.size();
  double mean_e = 0.0, mean_r = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mean_e += static_cast<double>(estimate[i]);
    mean_r += static_cast<double>(reference[i]);
  }
  mean_e /= static_cast<double>(n);
  mean_r /= static_cast<double>(n);

  double dot = 0.0, ref_energy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = static_cast<double>(estimate[i]) - mean_e;
    const double r = static_cast<double>(reference[i]) - mean_r;
    dot += e * r;
    ref_energy += r * r;
  }
  CDSE_CHECK(ref_energy > 0.0, ErrorKind::kDomain,
             "si_snr reference has zero energy");
  const double alpha = dot / ref_energy;
  const double target_energy = alpha * alpha * ref_energy;
  double noise_energy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double e = static_cast<double>(estimate[i]) - mean_e;
    const double r = static_cast<double>(reference[i]) - mean_r;
    const double d = e - alpha * r;
    noise_energy += d * d;
  }
  const double ratio = target_energy / (noise_energy + eps);
  double snr = 10.0 * std::log10(ratio + 1e-300);
  if (snr > kSiSnrClampDb) snr = kSiSnrClampDb;
  if (snr < -kSiSnrClampDb) snr = -kSiSnrClampDb;
  return snr;
}

// Mean over the batch of -SI-SNR, built on the tape so it can be minimized.
// No clamp on this path; eps stabilizes the ratio inside the log instead so
// gradients stay finite even at exact reconstruction.
template <typename T>
Var<T> NegSiSnrLoss(const std::vector<Var<T>>& estimates,
                    const std::vector<Tensor<T>>& references,
                    T eps = static_cast<T>(kSiSnrEps)) {
  CDSE_CHECK(!estimates.empty(), ErrorKind::kParameter,
             "neg_si_snr_loss over an empty batch");
  CDSE_CHECK(estimates.size() == references.size(), ErrorKind::kDimension,
             "batch size mismatch: ", estimates.size(), " estimates vs ",
             references.size(), " references");
  const Var<T> eps_v = Var<T>::Constant(eps);
  Var<T> total;
  for (size_t b = 0; b < estimates.size(); ++b) {
    const Var<T>& est = estimates[b];
    CDSE_CHECK(est.value().rank() == 1 &&
                   est.numel() == references[b].numel(),
               ErrorKind::kDimension, "estimate/reference length mismatch in "
               "batch item ", b);
    // Zero-mean reference as a constant.
    Tensor<T> ref = references[b];
    double mean_r = 0.0;
    for (int64_t i = 0; i < ref.numel(); ++i)
      mean_r += static_cast<double>(ref[i]);
    mean_r /= static_cast<double>(ref.numel());
    for (int64_t i = 0; i < ref.numel(); ++i)
      ref[i] = static_cast<T>(static_cast<double>(ref[i]) - mean_r);
    Var<T> ref_v(std::move(ref));

    Var<T> est_zm = est - Mean(est);
    Var<T> dot = Sum(est_zm * ref_v);
    Var<T> ref_energy = Sum(ref_v * ref_v);
    Var<T> alpha = dot / (ref_energy + eps_v);
    Var<T> target = alpha * ref_v;
    Var<T> residual = est_zm - target;
    Var<T> ratio = (Sum(target * target) + eps_v) /
                   (Sum(residual * residual) + eps_v);
    const T scale = static_cast<T>(-10.0 / std::log(10.0));
    Var<T> item = Mul(Var<T>::Constant(scale), Log(ratio));
    total = total.defined() ? total + item : item;
  }
  return Mul(Var<T>::Constant(static_cast<T>(1.0 / estimates.size())), total);
}

// Calibrated additive mixing: crops the noise at a seeded offset, scales it
// so the energy SNR hits snr_db exactly, and returns mixture and gain.
template <typename T>
struct MixResult {
  std::vector<T> mixture;
  double gain = 0.0;
  int64_t noise_offset = 0;
};

template <typename T>
MixResult<T> MixAtSnr(const std::vector<T>& clean,
                      const std::vector<T>& noise, double snr_db,
                      uint64_t seed) {
  CDSE_CHECK(!clean.empty(), ErrorKind::kParameter, "empty clean signal");
  CDSE_CHECK(noise.size() >= clean.size(), ErrorKind::kParameter,
             "noise (", noise.size(), ") must be at least as long as clean (",
             clean.size(), ")");
  CDSE_CHECK(std::isfinite(snr_db), ErrorKind::kParameter,
             "snr_db must be finite");
  Rng rng(seed);
  const int64_t max_off =
      static_cast<int64_t>(noise.size() - clean.size());
  const int64_t off =
      max_off > 0 ? static_cast<int64_t>(rng.Below(
                        static_cast<uint64_t>(max_off + 1)))
                  : 0;
  double p_clean = 0.0, p_noise = 0.0;
  for (size_t i = 0; i < clean.size(); ++i) {
    p_clean += static_cast<double>(clean[i]) * clean[i];
    const double nv = noise[static_cast<size_t>(off) + i];
    p_noise += nv * nv;
  }
  CDSE_CHECK(p_clean > 0.0, ErrorKind::kDomain, "clean signal has zero power");
  CDSE_CHECK(p_noise > 0.0, ErrorKind::kDomain,
             "noise segment has zero power");
  const double gain =
      std::sqrt(p_clean / (p_noise * std::pow(10.0, snr_db / 10.0)));
  MixResult<T> result;
  result.gain = gain;
  result.noise_offset = off;
  result.mixture.resize(clean.size());
  for (size_t i = 0; i < clean.size(); ++i) {
    result.mixture[i] = static_cast<T>(
        static_cast<double>(clean[i]) +
        gain * static_cast<double>(noise[static_cast<size_t>(off) + i]));
  }
  return result;
}

}  // namespace cdse

#endif  // CDSE_METRICS_HPP_
