// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// The four enhancement systems behind one Model class: learned and STFT
// encoders, the dilated-convolution mask estimator with residual and skip
// paths, the bi-projection fusion gate, masking and decoding. Forward builds
// one autodiff graph per call; parameters are shared leaf nodes owned here.

#ifndef CDSE_MODEL_HPP_
#define CDSE_MODEL_HPP_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cdse/config.hpp"
#include "cdse/dsp.hpp"
#include "cdse/ops.hpp"
#include "cdse/rng.hpp"

namespace cdse {

template <typename T>
struct NamedParam {
  std::string name;
  Var<T> var;
};

constexpr double kGlnEps = 1e-8;

// Exact trainable-scalar count for a configuration, computed by closed-form
// arithmetic (the tests compare it against a walk over instantiated
// parameters).
int64_t ParamCount(const SystemConfig& cfg);

template <typename T>
class Model {
 public:
  explicit Model(SystemConfig cfg, uint64_t seed = 0)
      : cfg_(std::move(cfg)) {
    cfg_.Validate();
    Rng rng(seed);
    Build(rng);
  }

  const SystemConfig& config() const { return cfg_; }
  std::vector<NamedParam<T>>& params() { return params_; }
  const std::vector<NamedParam<T>>& params() const { return params_; }

  Var<T> Param(const std::string& name) const {
    auto it = index_.find(name);
    CDSE_CHECK(it != index_.end(), ErrorKind::kContract, "no parameter '",
               name, "'");
    return params_[it->second].var;
  }

  void ZeroGrad() {
    for (auto& p : params_) p.var.ZeroGrad();
  }

  int64_t ParamScalarCount() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.var.numel();
    return n;
  }

  // Copies `other`'s parameter values (e.g. a float32 checkpointed model
  // promoted to double for gradient verification).
  template <typename U>
  void CopyParamValues(const Model<U>& other) {
    const auto& src = other.params();
    CDSE_CHECK(src.size() == params_.size(), ErrorKind::kContract,
               "parameter lists differ");
    for (size_t i = 0; i < src.size(); ++i) {
      CDSE_CHECK(src[i].name == params_[i].name, ErrorKind::kContract,
                 "parameter order differs at ", src[i].name);
      params_[i].var.value() = src[i].var.value().template Cast<T>();
    }
  }

  // Noisy samples in, enhanced samples out (same length), as a graph.
  Var<T> Forward(const std::vector<T>& noisy) {
    const int frame_len = cfg_.FrameLen();
    const int hop = cfg_.Hop();
    CDSE_CHECK(static_cast<int64_t>(noisy.size()) >= frame_len,
               ErrorKind::kParameter, "input of ", noisy.size(),
               " samples is shorter than one frame (", frame_len, ")");
    const int num_frames =
        NumFrames(static_cast<int64_t>(noisy.size()), frame_len, hop);
    const int64_t grid = FrameGridLen(num_frames, frame_len, hop);
    std::vector<T> padded = noisy;
    padded.resize(static_cast<size_t>(grid), T(0));

    Var<T> time_feat;
    if (cfg_.time_encoder) {
      const auto& e = *cfg_.time_encoder;
      Var<T> xv(Tensor<T>({1, static_cast<int>(grid)}, padded));
      Var<T> w = Reshape(enc_u_, {e.num_filters, 1, e.frame_len});
      time_feat = Conv1d(xv, w, Conv1dSpec{e.stride, 0, 1, 1});
      if (e.relu) time_feat = Relu(time_feat);
    }
    Var<T> freq_feat;
    if (cfg_.freq_encoder) {
      const auto& f = *cfg_.freq_encoder;
      Var<T> sv(Tensor<T>({static_cast<int>(grid)}, std::move(padded)));
      freq_feat = StftVar(sv, f.stft);
      if (f.drop_nyquist) {
        const int bins = f.stft.bins();
        freq_feat = Concat<T>({SliceRows(freq_feat, 0, bins - 1),
                               SliceRows(freq_feat, bins, 2 * bins - 1)},
                              0);
      }
    }

    Var<T> tcn_in;
    Var<T> mask_target;
    switch (cfg_.variant) {
      case Variant::kStftTcn:
        tcn_in = freq_feat;
        mask_target = freq_feat;
        break;
      case Variant::kConvTasnet:
        tcn_in = time_feat;
        mask_target = time_feat;
        break;
      case Variant::kCdTcn:
        tcn_in = Concat<T>({time_feat, freq_feat}, 0);
        mask_target = time_feat;
        break;
      case Variant::kCdTcnBpf: {
        Var<T> fused = BpfFuse(time_feat, freq_feat);
        tcn_in = Concat<T>({time_feat, freq_feat, fused}, 0);
        mask_target = time_feat;
        break;
      }
    }

    Var<T> mask = TcnMask(tcn_in);
    Var<T> masked = Mul(mask, mask_target);

    const int64_t out_len = static_cast<int64_t>(noisy.size());
    if (cfg_.variant == Variant::kStftTcn) {
      return IstftVar(masked, cfg_.freq_encoder->stft, out_len);
    }
    return OlaScatterVar(Matmul(dec_v_, masked), hop, out_len);
  }

  // Inference path: no graph, returns plain samples.
  std::vector<T> Enhance(const std::vector<T>& noisy) {
    NoGradGuard no_grad;
    return Forward(noisy).value().vec();
  }

  // Bi-projection fusion: project both branches to the fusion width, gate
  // them with a sigmoid ratio mask estimated from their concatenation, and
  // blend: fused = m * proj_time + (1 - m) * proj_freq.
  Var<T> BpfFuse(const Var<T>& time_feat, const Var<T>& freq_feat) {
    CDSE_CHECK(time_feat.value().dim(1) == freq_feat.value().dim(1),
               ErrorKind::kDimension, "branch frame counts differ: ",
               time_feat.value().dim(1), " vs ", freq_feat.value().dim(1));
    Var<T> pc = Pointwise(bpf_c_, time_feat);
    Var<T> ps = Pointwise(bpf_s_, freq_feat);
    Var<T> gate = Sigmoid(Pointwise(bpf_m_, Concat<T>({pc, ps}, 0)));
    Var<T> one = Var<T>::Constant(T(1));
    return Add(Mul(gate, pc), Mul(Sub(one, gate), ps));
  }

  // Mask estimation: bottleneck, R repeats of X dilated blocks with residual
  // and skip heads, then PReLU -> 1x1 -> sigmoid over the summed skips.
  Var<T> TcnMask(const Var<T>& input) {
    CDSE_CHECK(input.value().dim(0) == cfg_.TcnInputWidth(),
               ErrorKind::kDimension, "mask estimator expects ",
               cfg_.TcnInputWidth(), " input channels, got ",
               input.value().dim(0));
    Var<T> y = Pointwise(bottleneck_, input);
    Var<T> skip_total;
    for (const auto& blk : blocks_) {
      Var<T> h = Pointwise(blk.conv_in, y);
      h = Prelu(h, blk.prelu1);
      h = GlobalLayerNorm(h, blk.gln1_gamma, blk.gln1_beta,
                          static_cast<T>(kGlnEps));
      const int pad = blk.dilation * (cfg_.tcn.kernel_size - 1) / 2;
      h = Conv1d(h, blk.depthwise_w, blk.depthwise_b,
                 Conv1dSpec{1, pad, blk.dilation, cfg_.tcn.hidden_channels});
      h = Prelu(h, blk.prelu2);
      h = GlobalLayerNorm(h, blk.gln2_gamma, blk.gln2_beta,
                          static_cast<T>(kGlnEps));
      y = Add(y, Pointwise(blk.conv_res, h));
      Var<T> sk = Pointwise(blk.conv_skip, h);
      skip_total = skip_total.defined() ? Add(skip_total, sk) : sk;
    }
    Var<T> pooled = Prelu(skip_total, out_prelu_);
    return Sigmoid(Pointwise(mask_head_, pooled));
  }

 private:
  struct PointwiseConv {
    Var<T> w;  // [out x in x 1]
    Var<T> b;  // [out]
  };

  struct Block {
    PointwiseConv conv_in;
    Var<T> prelu1;
    Var<T> gln1_gamma, gln1_beta;
    Var<T> depthwise_w;  // [H x 1 x P]
    Var<T> depthwise_b;  // [H]
    Var<T> prelu2;
    Var<T> gln2_gamma, gln2_beta;
    PointwiseConv conv_res;
    PointwiseConv conv_skip;
    int dilation = 1;
  };

  Var<T> Pointwise(const PointwiseConv& pw, const Var<T>& x) {
    return Conv1d(x, pw.w, pw.b, Conv1dSpec{});
  }

  Var<T> Register(const std::string& name, Tensor<T> init) {
    CDSE_CHECK(index_.find(name) == index_.end(), ErrorKind::kContract,
               "duplicate parameter name ", name);
    Var<T> v(std::move(init), /*requires_grad=*/true);
    index_[name] = params_.size();
    params_.push_back({name, v});
    return v;
  }

  Tensor<T> UniformInit(Rng& rng, Shape shape, double bound) {
    Tensor<T> t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i)
      t[i] = static_cast<T>(rng.Uniform(-bound, bound));
    return t;
  }

  PointwiseConv RegisterPointwise(Rng& rng, const std::string& prefix,
                                  int in_ch, int out_ch) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_ch));
    PointwiseConv pw;
    pw.w = Register(prefix + ".w", UniformInit(rng, {out_ch, in_ch, 1}, bound));
    pw.b = Register(prefix + ".b", Tensor<T>({out_ch}));
    return pw;
  }

  void Build(Rng& rng) {
    if (cfg_.time_encoder) {
      const auto& e = *cfg_.time_encoder;
      const double bound = 1.0 / std::sqrt(static_cast<double>(e.frame_len));
      enc_u_ = Register(
          "enc.U", UniformInit(rng, {e.num_filters, e.frame_len}, bound));
    }
    if (cfg_.bpf) {
      const int d = cfg_.bpf->dim;
      bpf_c_ = RegisterPointwise(rng, "bpf.c",
                                 cfg_.time_encoder->num_filters, d);
      bpf_s_ = RegisterPointwise(rng, "bpf.s", cfg_.freq_encoder->rows(), d);
      bpf_m_ = RegisterPointwise(rng, "bpf.m", 2 * d, d);
    }

    const auto& t = cfg_.tcn;
    bottleneck_ = RegisterPointwise(rng, "tcn.in", cfg_.TcnInputWidth(),
                                    t.bottleneck_channels);
    for (int r = 0; r < t.repeats; ++r) {
      for (int x = 0; x < t.blocks_per_repeat; ++x) {
        const std::string p =
            "tcn.r" + std::to_string(r) + ".b" + std::to_string(x);
        Block blk;
        blk.dilation = 1 << x;
        blk.conv_in = RegisterPointwise(rng, p + ".in",
                                        t.bottleneck_channels,
                                        t.hidden_channels);
        blk.prelu1 = Register(p + ".prelu1",
                              Tensor<T>::Full({t.hidden_channels},
                                              static_cast<T>(0.25)));
        blk.gln1_gamma = Register(p + ".gln1.gamma",
                                  Tensor<T>::Full({t.hidden_channels}, T(1)));
        blk.gln1_beta = Register(p + ".gln1.beta",
                                 Tensor<T>({t.hidden_channels}));
        const double dw_bound =
            1.0 / std::sqrt(static_cast<double>(t.kernel_size));
        blk.depthwise_w = Register(
            p + ".dw.w",
            UniformInit(rng, {t.hidden_channels, 1, t.kernel_size},
                        dw_bound));
        blk.depthwise_b = Register(p + ".dw.b",
                                   Tensor<T>({t.hidden_channels}));
        blk.prelu2 = Register(p + ".prelu2",
                              Tensor<T>::Full({t.hidden_channels},
                                              static_cast<T>(0.25)));
        blk.gln2_gamma = Register(p + ".gln2.gamma",
                                  Tensor<T>::Full({t.hidden_channels}, T(1)));
        blk.gln2_beta = Register(p + ".gln2.beta",
                                 Tensor<T>({t.hidden_channels}));
        blk.conv_res = RegisterPointwise(rng, p + ".res", t.hidden_channels,
                                         t.bottleneck_channels);
        blk.conv_skip = RegisterPointwise(rng, p + ".skip", t.hidden_channels,
                                          t.skip_channels);
        blocks_.push_back(std::move(blk));
      }
    }
    out_prelu_ = Register("tcn.out.prelu",
                          Tensor<T>::Full({t.skip_channels},
                                          static_cast<T>(0.25)));
    mask_head_ = RegisterPointwise(rng, "tcn.mask", t.skip_channels,
                                   t.mask_channels);

    if (cfg_.variant != Variant::kStftTcn) {
      const auto& e = *cfg_.time_encoder;
      const double bound = 1.0 / std::sqrt(static_cast<double>(e.frame_len));
      dec_v_ = Register(
          "dec.V", UniformInit(rng, {e.frame_len, e.num_filters}, bound));
    }
  }

  SystemConfig cfg_;
  std::vector<NamedParam<T>> params_;
  std::unordered_map<std::string, size_t> index_;

  Var<T> enc_u_;  // [N x L]
  Var<T> dec_v_;  // [L x N]
  PointwiseConv bpf_c_, bpf_s_, bpf_m_;
  PointwiseConv bottleneck_;
  std::vector<Block> blocks_;
  Var<T> out_prelu_;
  PointwiseConv mask_head_;
};

inline int64_t ParamCount(const SystemConfig& cfg) {
  cfg.Validate();
  const auto& t = cfg.tcn;
  int64_t total = 0;
  if (cfg.time_encoder) {
    total += static_cast<int64_t>(cfg.time_encoder->num_filters) *
             cfg.time_encoder->frame_len;
  }
  if (cfg.bpf) {
    const int64_t d = cfg.bpf->dim;
    const int64_t nc = cfg.time_encoder->num_filters;
    const int64_t ns = cfg.freq_encoder->rows();
    total += d * nc + d + d * ns + d + d * (2 * d) + d;
  }
  const int64_t cin = cfg.TcnInputWidth();
  const int64_t b = t.bottleneck_channels, h = t.hidden_channels,
                s = t.skip_channels, p = t.kernel_size,
                m = t.mask_channels;
  total += b * cin + b;  // bottleneck
  const int64_t per_block = (h * b + h)    // conv_in
                            + h            // prelu1
                            + 2 * h        // gln1
                            + (h * p + h)  // depthwise
                            + h            // prelu2
                            + 2 * h        // gln2
                            + (b * h + b)  // residual head
                            + (s * h + s); // skip head
  total += per_block * t.blocks_per_repeat * t.repeats;
  total += s;          // output prelu
  total += m * s + m;  // mask head
  if (cfg.variant != Variant::kStftTcn) {
    total += static_cast<int64_t>(cfg.time_encoder->frame_len) *
             cfg.time_encoder->num_filters;  // decoder basis
  }
  return total;
}

}  // namespace cdse

#endif  // CDSE_MODEL_HPP_
