// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_CONFIG_HPP_
#define CDSE_CONFIG_HPP_

#include <optional>
#include <string>
#include <vector>

#include "cdse/dsp.hpp"

namespace cdse {

enum class Variant { kStftTcn, kConvTasnet, kCdTcn, kCdTcnBpf };

const char* VariantName(Variant v);
Variant VariantFromName(const std::string& name);
std::vector<std::string> VariantNames();

// Mask-estimation TCN. Dilation of block i within a repeat is 2^i.
struct TcnConfig {
  int blocks_per_repeat = 8;     // X
  int repeats = 3;               // R
  int bottleneck_channels = 128; // B
  int hidden_channels = 512;     // H
  int skip_channels = 128;       // S
  int kernel_size = 3;           // P
  int mask_channels = 512;
  bool causal = false;
};

// Analytic receptive field of the dilated stack, in frames.
int TcnReceptiveFieldFrames(const TcnConfig& tcn);

// Learned analysis basis U[N x L] applied at `stride`, optionally rectified.
struct TimeEncoderConfig {
  int num_filters = 512;  // N
  int frame_len = 16;     // L
  int stride = 8;
  bool relu = true;
};

// Fixed STFT branch. drop_nyquist discards the top bin so the packed
// real/imaginary feature has exactly 2*(n_fft/2) rows; the cross-domain
// presets use it to hit their stated feature width.
struct FreqEncoderConfig {
  StftConfig stft;
  bool drop_nyquist = false;

  int rows() const {
    return drop_nyquist ? 2 * (stft.bins() - 1) : stft.rows();
  }
};

struct BpfConfig {
  int dim = 128;  // width of both projected branches and of the fused output
};

struct SystemConfig {
  Variant variant = Variant::kCdTcnBpf;
  std::optional<TimeEncoderConfig> time_encoder;
  std::optional<FreqEncoderConfig> freq_encoder;
  TcnConfig tcn;
  std::optional<BpfConfig> bpf;
  int sample_rate = 16000;

  // Width of the mask-estimation input for this variant.
  int TcnInputWidth() const;
  // Frame geometry shared by every branch of the variant.
  int FrameLen() const;
  int Hop() const;

  void Validate() const;
};

// The four built-in systems with their published hyperparameters
// (TCN X=8 R=3 B=128 H=512 S=128 P=3; STFT 512/64/32 Hann; learned encoders
// with 16-sample windows at 1/2 overlap; 128-dim fusion features).
SystemConfig PresetConfig(Variant v, int sample_rate = 16000);

// Scaled-down variants: `Toy` is the desk-training size (N=64, B=32, H=64,
// S=32, X=4, R=2, P=3), `Micro` the finite-difference-check size (N=8, B=4,
// H=8, S=4, X=2, R=1, P=3).
SystemConfig ToyConfig(Variant v, int sample_rate = 8000);
SystemConfig MicroConfig(Variant v, int sample_rate = 8000);

std::string SystemConfigToJson(const SystemConfig& cfg);
SystemConfig SystemConfigFromJson(const std::string& json_text);

}  // namespace cdse

#endif  // CDSE_CONFIG_HPP_
