// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Deterministic signal framing, windowing, STFT analysis/synthesis and
// overlap-add reconstruction. The STFT/ISTFT also exist as autodiff nodes:
// they are linear in the signal, so their backward rules are the exact
// adjoint maps (validated by the adjoint-identity tests).

#ifndef CDSE_DSP_HPP_
#define CDSE_DSP_HPP_

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdse/autodiff.hpp"
#include "cdse/fft.hpp"
#include "cdse/ops.hpp"
#include "cdse/tensor.hpp"

namespace cdse {

enum class WindowKind { kRect, kHann };

inline const char* WindowName(WindowKind w) {
  return w == WindowKind::kHann ? "hann" : "rect";
}

// Periodic Hann: w[i] = 0.5 - 0.5*cos(2*pi*i/n). Sums to 1 across frames at
// hop n/2 (constant-overlap-add), which the reconstruction path relies on.
template <typename T>
Tensor<T> HannWindow(int n) {
  CDSE_CHECK(n >= 1, ErrorKind::kParameter, "window length must be >= 1, got ",
             n);
  Tensor<T> w({n});
  for (int i = 0; i < n; ++i) {
    w[i] = static_cast<T>(
        0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(i) / n));
  }
  return w;
}

template <typename T>
Tensor<T> MakeWindow(WindowKind kind, int n) {
  if (kind == WindowKind::kHann) return HannWindow<T>(n);
  CDSE_CHECK(n >= 1, ErrorKind::kParameter, "window length must be >= 1, got ",
             n);
  return Tensor<T>::Full({n}, T(1));
}

// Number of analysis frames covering a signal of length t: the contract is
// K = floor((t - frame_len)/hop) + 1 full frames, plus one zero-padded frame
// when trailing samples remain.
inline int NumFrames(int64_t t, int frame_len, int hop) {
  CDSE_CHECK(frame_len > 0 && hop > 0, ErrorKind::kParameter,
             "frame_len and hop must be positive, got L=", frame_len,
             " hop=", hop);
  CDSE_CHECK(t >= frame_len, ErrorKind::kParameter, "signal of length ", t,
             " shorter than one frame (", frame_len, ")");
  const int64_t full = (t - frame_len) / hop + 1;
  const int64_t covered = (full - 1) * hop + frame_len;
  return static_cast<int>(full + (covered < t ? 1 : 0));
}

// Grid length covered by K frames.
inline int64_t FrameGridLen(int num_frames, int frame_len, int hop) {
  return static_cast<int64_t>(num_frames - 1) * hop + frame_len;
}

template <typename T>
struct SignalFrameMatrix {
  Tensor<T> frames;  // [L x K], column k = x[k*hop .. k*hop+L-1]
  int frame_len = 0;
  int hop = 0;
};

template <typename T>
SignalFrameMatrix<T> FrameSignal(const std::vector<T>& x, int frame_len,
                                 int hop) {
  const int k = NumFrames(static_cast<int64_t>(x.size()), frame_len, hop);
  Tensor<T> frames({frame_len, k});
  for (int col = 0; col < k; ++col) {
    const int64_t start = static_cast<int64_t>(col) * hop;
    for (int i = 0; i < frame_len; ++i) {
      const int64_t src = start + i;
      frames.at(i, col) =
          src < static_cast<int64_t>(x.size()) ? x[static_cast<size_t>(src)]
                                               : T(0);
    }
  }
  return {std::move(frames), frame_len, hop};
}

// Squared-window overlap envelope, sum_k w[t - k*hop]^2 on the frame grid.
template <typename T>
std::vector<double> OlaEnvelope(const Tensor<T>& window, int num_frames,
                                int hop) {
  const int frame_len = window.dim(0);
  std::vector<double> env(
      static_cast<size_t>(FrameGridLen(num_frames, frame_len, hop)), 0.0);
  for (int k = 0; k < num_frames; ++k) {
    const int64_t start = static_cast<int64_t>(k) * hop;
    for (int i = 0; i < frame_len; ++i) {
      const double w = static_cast<double>(window[i]);
      env[static_cast<size_t>(start + i)] += w * w;
    }
  }
  return env;
}

// Plain scatter-add of (optionally windowed) columns at k*hop; this is the
// un-normalized half of overlap-add and also the time-domain decoder's
// "per-frame product then overlap-add" primitive.
template <typename T>
std::vector<T> OverlapAddRaw(const Tensor<T>& frames, int hop,
                             const Tensor<T>* window) {
  CDSE_CHECK(frames.rank() == 2, ErrorKind::kDimension,
             "overlap_add expects [L x K], got ", ShapeStr(frames.shape()));
  const int frame_len = frames.dim(0), num_frames = frames.dim(1);
  CDSE_CHECK(hop >= 1 && hop <= frame_len, ErrorKind::kParameter,
             "hop must satisfy 1 <= hop <= L, got hop=", hop, " L=",
             frame_len);
  if (window != nullptr) {
    CDSE_CHECK(window->rank() == 1 && window->dim(0) == frame_len,
               ErrorKind::kDimension, "synthesis window of length ",
               ShapeStr(window->shape()), " does not match frame length ",
               frame_len);
  }
  std::vector<T> out(
      static_cast<size_t>(FrameGridLen(num_frames, frame_len, hop)), T(0));
  for (int k = 0; k < num_frames; ++k) {
    const int64_t start = static_cast<int64_t>(k) * hop;
    for (int i = 0; i < frame_len; ++i) {
      const T w = window != nullptr ? (*window)[i] : T(1);
      out[static_cast<size_t>(start + i)] += w * frames.at(i, k);
    }
  }
  return out;
}

constexpr double kOlaEnvelopeFloor = 1e-8;

// Normalized overlap-add: scatter-add of windowed columns divided by the
// summed squared-window envelope (floored so boundary samples cannot blow
// up). With analysis window w applied upstream, this is the least-squares
// inverse of the windowed framing.
template <typename T>
std::vector<T> OverlapAdd(const Tensor<T>& frames, int hop,
                          const Tensor<T>* window) {
  std::vector<T> out = OverlapAddRaw(frames, hop, window);
  const Tensor<T> rect = Tensor<T>::Full({frames.dim(0)}, T(1));
  const std::vector<double> env =
      OlaEnvelope(window != nullptr ? *window : rect, frames.dim(1), hop);
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<T>(static_cast<double>(out[i]) /
                            std::max(env[i], kOlaEnvelopeFloor));
  }
  return out;
}

// ---------------------------------------------------------------------------
// STFT
// ---------------------------------------------------------------------------

struct StftConfig {
  int n_fft = 512;
  int win_len = 512;
  int hop = 256;
  WindowKind window = WindowKind::kHann;

  int bins() const { return n_fft / 2 + 1; }
  int rows() const { return 2 * bins(); }

  void Validate() const {
    CDSE_CHECK(IsPowerOfTwo(n_fft), ErrorKind::kParameter,
               "n_fft must be a power of two, got ", n_fft);
    CDSE_CHECK(win_len >= 1 && win_len <= n_fft, ErrorKind::kParameter,
               "win_len must satisfy 1 <= win_len <= n_fft, got ", win_len,
               " vs n_fft=", n_fft);
    CDSE_CHECK(hop >= 1 && hop <= win_len, ErrorKind::kParameter,
               "hop must satisfy 1 <= hop <= win_len, got ", hop);
  }
};

// Packed real spectrogram: rows 0..F-1 are real parts, rows F..2F-1 the
// imaginary parts of bins 0..F-1, one column per analysis frame.
template <typename T>
struct PackedSpectrogram {
  Tensor<T> values;  // [2F x K]
  StftConfig config;
};

namespace detail_dsp {

// Analysis of one frame held in a double scratch buffer.
inline void FrameToColumn(std::vector<double>& frame,
                          std::vector<std::complex<double>>& spec_out) {
  spec_out = Rfft(frame);
}

template <typename T>
Tensor<T> StftTensor(const std::vector<T>& x, const StftConfig& cfg) {
  cfg.Validate();
  const int k = NumFrames(static_cast<int64_t>(x.size()), cfg.win_len,
                          cfg.hop);
  const Tensor<double> window = MakeWindow<double>(cfg.window, cfg.win_len);
  const int bins = cfg.bins();
  Tensor<T> out({2 * bins, k});
  std::vector<double> frame(static_cast<size_t>(cfg.n_fft));
  std::vector<std::complex<double>> spec;
  for (int col = 0; col < k; ++col) {
    const int64_t start = static_cast<int64_t>(col) * cfg.hop;
    std::fill(frame.begin(), frame.end(), 0.0);
    for (int i = 0; i < cfg.win_len; ++i) {
      const int64_t src = start + i;
      if (src < static_cast<int64_t>(x.size()))
        frame[static_cast<size_t>(i)] =
            static_cast<double>(x[static_cast<size_t>(src)]) * window[i];
    }
    FrameToColumn(frame, spec);
    for (int f = 0; f < bins; ++f) {
      out.at(f, col) = static_cast<T>(spec[static_cast<size_t>(f)].real());
      out.at(bins + f, col) =
          static_cast<T>(spec[static_cast<size_t>(f)].imag());
    }
  }
  return out;
}

// Adjoint of StftTensor as a real-linear map, used as its backward rule.
template <typename T>
std::vector<T> StftAdjoint(const Tensor<T>& grad, const StftConfig& cfg,
                           int64_t sig_len) {
  const int bins = cfg.bins();
  const int k = grad.dim(1);
  const Tensor<double> window = MakeWindow<double>(cfg.window, cfg.win_len);
  std::vector<T> dx(static_cast<size_t>(sig_len), T(0));
  std::vector<std::complex<double>> c(static_cast<size_t>(cfg.n_fft));
  for (int col = 0; col < k; ++col) {
    std::fill(c.begin(), c.end(), std::complex<double>(0.0, 0.0));
    for (int f = 0; f < bins; ++f) {
      c[static_cast<size_t>(f)] = {static_cast<double>(grad.at(f, col)),
                                   static_cast<double>(grad.at(bins + f,
                                                               col))};
    }
    Fft(c, true);  // n * Re(IFFT(c)) is the adjoint of the half-band DFT
    const int64_t start = static_cast<int64_t>(col) * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i) {
      const int64_t dst = start + i;
      if (dst < sig_len) {
        dx[static_cast<size_t>(dst)] += static_cast<T>(
            static_cast<double>(cfg.n_fft) * c[static_cast<size_t>(i)].real() *
            window[i]);
      }
    }
  }
  return dx;
}

template <typename T>
std::vector<T> IstftTensor(const Tensor<T>& values, const StftConfig& cfg,
                           int64_t out_len) {
  cfg.Validate();
  CDSE_CHECK(values.rank() == 2 && values.dim(0) % 2 == 0 &&
                 values.dim(0) == cfg.rows(),
             ErrorKind::kDimension, "packed spectrogram must have ",
             cfg.rows(), " rows (real over imaginary), got ",
             ShapeStr(values.shape()));
  const int bins = cfg.bins();
  const int k = values.dim(1);
  const Tensor<double> window = MakeWindow<double>(cfg.window, cfg.win_len);
  const int64_t grid = FrameGridLen(k, cfg.win_len, cfg.hop);
  if (out_len < 0) out_len = grid;
  std::vector<double> acc(static_cast<size_t>(grid), 0.0);
  std::vector<std::complex<double>> half(static_cast<size_t>(bins));
  for (int col = 0; col < k; ++col) {
    for (int f = 0; f < bins; ++f) {
      half[static_cast<size_t>(f)] = {
          static_cast<double>(values.at(f, col)),
          static_cast<double>(values.at(bins + f, col))};
    }
    const std::vector<double> frame = Irfft(half, cfg.n_fft);
    const int64_t start = static_cast<int64_t>(col) * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i)
      acc[static_cast<size_t>(start + i)] +=
          frame[static_cast<size_t>(i)] * window[i];
  }
  const std::vector<double> env = OlaEnvelope(window, k, cfg.hop);
  std::vector<T> out(static_cast<size_t>(out_len), T(0));
  const int64_t copy = std::min<int64_t>(out_len, grid);
  for (int64_t i = 0; i < copy; ++i) {
    out[static_cast<size_t>(i)] = static_cast<T>(
        acc[static_cast<size_t>(i)] /
        std::max(env[static_cast<size_t>(i)], kOlaEnvelopeFloor));
  }
  return out;
}

// Adjoint of IstftTensor.
template <typename T>
Tensor<T> IstftAdjoint(const std::vector<T>& grad, const StftConfig& cfg,
                       int k) {
  const int bins = cfg.bins();
  const Tensor<double> window = MakeWindow<double>(cfg.window, cfg.win_len);
  const int64_t grid = FrameGridLen(k, cfg.win_len, cfg.hop);
  const std::vector<double> env = OlaEnvelope(window, k, cfg.hop);
  std::vector<double> g(static_cast<size_t>(grid), 0.0);
  const int64_t copy = std::min<int64_t>(static_cast<int64_t>(grad.size()),
                                         grid);
  for (int64_t i = 0; i < copy; ++i)
    g[static_cast<size_t>(i)] =
        static_cast<double>(grad[static_cast<size_t>(i)]) /
        std::max(env[static_cast<size_t>(i)], kOlaEnvelopeFloor);

  Tensor<T> out({2 * bins, k});
  std::vector<std::complex<double>> frame(static_cast<size_t>(cfg.n_fft));
  for (int col = 0; col < k; ++col) {
    std::fill(frame.begin(), frame.end(), std::complex<double>(0.0, 0.0));
    const int64_t start = static_cast<int64_t>(col) * cfg.hop;
    for (int i = 0; i < cfg.win_len; ++i) {
      frame[static_cast<size_t>(i)] = {
          g[static_cast<size_t>(start + i)] * window[i], 0.0};
    }
    Fft(frame, false);
    // adjoint of the Hermitian-extended inverse transform: scale by c_f/n,
    // with c_f = 1 at DC and Nyquist, 2 elsewhere; imaginary parts of DC and
    // Nyquist receive no gradient.
    const double inv_n = 1.0 / static_cast<double>(cfg.n_fft);
    for (int f = 0; f < bins; ++f) {
      const double cf = (f == 0 || f == cfg.n_fft / 2) ? 1.0 : 2.0;
      out.at(f, col) =
          static_cast<T>(cf * inv_n * frame[static_cast<size_t>(f)].real());
      out.at(bins + f, col) =
          (f == 0 || f == cfg.n_fft / 2)
              ? T(0)
              : static_cast<T>(cf * inv_n *
                               frame[static_cast<size_t>(f)].imag());
    }
  }
  return out;
}

}  // namespace detail_dsp

template <typename T>
PackedSpectrogram<T> Stft(const std::vector<T>& x, const StftConfig& cfg) {
  return {detail_dsp::StftTensor(x, cfg), cfg};
}

template <typename T>
std::vector<T> Istft(const PackedSpectrogram<T>& spec, int64_t out_len = -1) {
  return detail_dsp::IstftTensor(spec.values, spec.config, out_len);
}

// ---------------------------------------------------------------------------
// Autodiff wrappers (linear ops with adjoint backward rules)
// ---------------------------------------------------------------------------

// x: [T] samples -> packed [2F x K].
template <typename T>
Var<T> StftVar(const Var<T>& x, const StftConfig& cfg) {
  CDSE_CHECK(x.value().rank() == 1, ErrorKind::kDimension,
             "stft input must be a rank-1 signal, got ", ShapeStr(x.shape()));
  Tensor<T> value = detail_dsp::StftTensor(x.value().vec(), cfg);
  value.CheckFinite("stft");
  const int64_t sig_len = x.numel();
  return Var<T>::MakeOp(OpKind::kStft, std::move(value), {x},
                        [cfg, sig_len](Node<T>& n) {
                          auto& p = *n.parents[0];
                          if (!p.requires_grad) return;
                          if (p.grad.empty())
                            p.grad = Tensor<T>(p.value.shape());
                          std::vector<T> dx = detail_dsp::StftAdjoint(
                              n.grad, cfg, sig_len);
                          for (int64_t i = 0; i < p.grad.numel(); ++i)
                            p.grad[i] += dx[static_cast<size_t>(i)];
                        });
}

// spec: packed [2F x K] -> samples [out_len].
template <typename T>
Var<T> IstftVar(const Var<T>& spec, const StftConfig& cfg, int64_t out_len) {
  std::vector<T> samples =
      detail_dsp::IstftTensor(spec.value(), cfg, out_len);
  Tensor<T> value({static_cast<int>(samples.size())}, std::move(samples));
  value.CheckFinite("istft");
  const int k = spec.value().dim(1);
  return Var<T>::MakeOp(OpKind::kIstft, std::move(value), {spec},
                        [cfg, k](Node<T>& n) {
                          auto& p = *n.parents[0];
                          if (!p.requires_grad) return;
                          if (p.grad.empty())
                            p.grad = Tensor<T>(p.value.shape());
                          Tensor<T> ds = detail_dsp::IstftAdjoint(
                              n.grad.vec(), cfg, k);
                          for (int64_t i = 0; i < p.grad.numel(); ++i)
                            p.grad[i] += ds[i];
                        });
}

// frames: [L x K] -> un-normalized overlap-add, truncated/zero-extended to
// out_len. Rectangular synthesis (no window): this is exactly the transposed
// convolution's scatter stage, kept separate so the learned decoder can be
// expressed as matmul + scatter.
template <typename T>
Var<T> OlaScatterVar(const Var<T>& frames, int hop, int64_t out_len) {
  const std::vector<T> full = OverlapAddRaw(frames.value(), hop, nullptr);
  const int frame_len = frames.value().dim(0);
  std::vector<T> samples(static_cast<size_t>(out_len), T(0));
  const int64_t copy =
      std::min<int64_t>(out_len, static_cast<int64_t>(full.size()));
  std::copy(full.begin(), full.begin() + copy, samples.begin());
  Tensor<T> value({static_cast<int>(out_len)}, std::move(samples));
  value.CheckFinite("overlap_add");
  return Var<T>::MakeOp(
      OpKind::kOlaScatter, std::move(value), {frames},
      [hop, frame_len](Node<T>& n) {
        auto& p = *n.parents[0];
        if (!p.requires_grad) return;
        if (p.grad.empty()) p.grad = Tensor<T>(p.value.shape());
        const int k = p.value.dim(1);
        const int64_t out_len = n.grad.numel();
        for (int col = 0; col < k; ++col) {
          const int64_t start = static_cast<int64_t>(col) * hop;
          for (int i = 0; i < frame_len; ++i) {
            const int64_t src = start + i;
            if (src < out_len) p.grad.at(i, col) += n.grad[src];
          }
        }
      });
}

}  // namespace cdse

#endif  // CDSE_DSP_HPP_
