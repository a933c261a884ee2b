// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/config.hpp"

#include "json.hpp"

namespace cdse {

using nlohmann::json;

const char* VariantName(Variant v) {
  switch (v) {
    case Variant::kStftTcn: return "stft-tcn";
    case Variant::kConvTasnet: return "conv-tasnet";
    case Variant::kCdTcn: return "cd-tcn";
    case Variant::kCdTcnBpf: return "cd-tcn-bpf";
  }
  return "?";
}

std::vector<std::string> VariantNames() {
  return {"stft-tcn", "conv-tasnet", "cd-tcn", "cd-tcn-bpf"};
}

Variant VariantFromName(const std::string& name) {
  if (name == "stft-tcn") return Variant::kStftTcn;
  if (name == "conv-tasnet") return Variant::kConvTasnet;
  if (name == "cd-tcn") return Variant::kCdTcn;
  if (name == "cd-tcn-bpf") return Variant::kCdTcnBpf;
  std::string all;
  for (const auto& n : VariantNames()) all += " " + n;
  ThrowF(ErrorKind::kConfig, "unknown variant '", name, "'; valid names:",
         all);
}

int TcnReceptiveFieldFrames(const TcnConfig& tcn) {
  // Each block with dilation d extends the field by d*(P-1) frames, split
  // symmetrically; dilations run 1,2,...,2^(X-1) in every repeat.
  int64_t span = 0;
  for (int i = 0; i < tcn.blocks_per_repeat; ++i)
    span += (static_cast<int64_t>(1) << i) * (tcn.kernel_size - 1);
  return static_cast<int>(1 + tcn.repeats * span);
}

int SystemConfig::TcnInputWidth() const {
  int width = 0;
  if (time_encoder) width += time_encoder->num_filters;
  if (freq_encoder) width += freq_encoder->rows();
  if (bpf) width += bpf->dim;
  return width;
}

int SystemConfig::FrameLen() const {
  if (time_encoder) return time_encoder->frame_len;
  return freq_encoder->stft.win_len;
}

int SystemConfig::Hop() const {
  if (time_encoder) return time_encoder->stride;
  return freq_encoder->stft.hop;
}

void SystemConfig::Validate() const {
  CDSE_CHECK(sample_rate > 0, ErrorKind::kConfig, "sample_rate must be > 0");
  CDSE_CHECK(tcn.blocks_per_repeat > 0 && tcn.repeats > 0 &&
                 tcn.bottleneck_channels > 0 && tcn.hidden_channels > 0 &&
                 tcn.skip_channels > 0 && tcn.kernel_size > 0 &&
                 tcn.mask_channels > 0,
             ErrorKind::kConfig, "TCN hyperparameters must all be positive");
  CDSE_CHECK(!tcn.causal, ErrorKind::kConfig,
             "causal TCN inference is not supported");
  CDSE_CHECK(tcn.kernel_size % 2 == 1, ErrorKind::kConfig,
             "noncausal TCN requires an odd kernel for symmetric padding, "
             "got P=", tcn.kernel_size);
  switch (variant) {
    case Variant::kStftTcn:
      CDSE_CHECK(!time_encoder && freq_encoder && !bpf, ErrorKind::kConfig,
                 "stft-tcn uses exactly the STFT encoder");
      CDSE_CHECK(tcn.mask_channels == freq_encoder->rows(),
                 ErrorKind::kConfig, "stft-tcn mask width must equal the ",
                 "packed spectrogram rows (", freq_encoder->rows(), ")");
      break;
    case Variant::kConvTasnet:
      CDSE_CHECK(time_encoder && !freq_encoder && !bpf, ErrorKind::kConfig,
                 "conv-tasnet uses exactly the learned encoder");
      CDSE_CHECK(tcn.mask_channels == time_encoder->num_filters,
                 ErrorKind::kConfig,
                 "conv-tasnet mask width must equal the filter count");
      break;
    case Variant::kCdTcn:
    case Variant::kCdTcnBpf:
      CDSE_CHECK(time_encoder && freq_encoder, ErrorKind::kConfig,
                 "cross-domain variants need both encoders");
      CDSE_CHECK(time_encoder->frame_len == freq_encoder->stft.win_len &&
                     time_encoder->stride == freq_encoder->stft.hop,
                 ErrorKind::kConfig,
                 "cross-domain branches must share frame geometry: conv ",
                 time_encoder->frame_len, "/", time_encoder->stride,
                 " vs stft ", freq_encoder->stft.win_len, "/",
                 freq_encoder->stft.hop);
      CDSE_CHECK(tcn.mask_channels == time_encoder->num_filters,
                 ErrorKind::kConfig,
                 "cross-domain mask is applied to the learned branch; mask ",
                 "width must equal its filter count");
      CDSE_CHECK((variant == Variant::kCdTcnBpf) == bpf.has_value(),
                 ErrorKind::kConfig, "bpf block present iff variant fuses");
      break;
  }
  if (time_encoder) {
    CDSE_CHECK(time_encoder->num_filters >= 1 && time_encoder->frame_len >= 1,
               ErrorKind::kConfig, "encoder sizes must be positive");
    CDSE_CHECK(time_encoder->stride >= 1 &&
                   time_encoder->stride <= time_encoder->frame_len,
               ErrorKind::kConfig, "encoder stride must lie in [1, L]");
  }
  if (freq_encoder) freq_encoder->stft.Validate();
  if (bpf) CDSE_CHECK(bpf->dim >= 1, ErrorKind::kConfig, "bpf dim >= 1");
}

namespace {

SystemConfig ScaledConfig(Variant v, int sample_rate, int n, int b, int h,
                          int s, int x, int r, int p, int bpf_dim,
                          int cd_n_fft, StftConfig stft_tcn_cfg) {
  SystemConfig cfg;
  cfg.variant = v;
  cfg.sample_rate = sample_rate;
  cfg.tcn = TcnConfig{x, r, b, h, s, p, /*mask_channels=*/n,
                      /*causal=*/false};
  switch (v) {
    case Variant::kStftTcn:
      cfg.freq_encoder = FreqEncoderConfig{stft_tcn_cfg, false};
      cfg.tcn.mask_channels = cfg.freq_encoder->rows();
      break;
    case Variant::kConvTasnet:
      cfg.time_encoder = TimeEncoderConfig{n, 16, 8, true};
      break;
    case Variant::kCdTcnBpf:
      cfg.bpf = BpfConfig{bpf_dim};
      [[fallthrough]];
    case Variant::kCdTcn:
      cfg.time_encoder = TimeEncoderConfig{n, 16, 8, true};
      cfg.freq_encoder =
          FreqEncoderConfig{StftConfig{cd_n_fft, 16, 8, WindowKind::kHann},
                            /*drop_nyquist=*/true};
      break;
  }
  cfg.Validate();
  return cfg;
}

}  // namespace

SystemConfig PresetConfig(Variant v, int sample_rate) {
  // Full-size systems: conv-tasnet N=512; cross-domain 256-dim features per
  // branch (16-sample windows zero-padded to a 256-point FFT, Nyquist
  // dropped) plus 128-dim fusion; STFT front-end 512/64/32 Hann.
  const int n = (v == Variant::kConvTasnet) ? 512 : 256;
  return ScaledConfig(v, sample_rate, n, 128, 512, 128, 8, 3, 3,
                      /*bpf_dim=*/128, /*cd_n_fft=*/256,
                      StftConfig{512, 64, 32, WindowKind::kHann});
}

SystemConfig ToyConfig(Variant v, int sample_rate) {
  return ScaledConfig(v, sample_rate, 64, 32, 64, 32, 4, 2, 3,
                      /*bpf_dim=*/32, /*cd_n_fft=*/64,
                      StftConfig{512, 64, 32, WindowKind::kHann});
}

SystemConfig MicroConfig(Variant v, int sample_rate) {
  return ScaledConfig(v, sample_rate, 8, 4, 8, 4, 2, 1, 3,
                      /*bpf_dim=*/4, /*cd_n_fft=*/16,
                      StftConfig{32, 16, 8, WindowKind::kHann});
}

namespace {

json StftToJson(const StftConfig& s) {
  return json{{"n_fft", s.n_fft},
              {"win_len", s.win_len},
              {"hop", s.hop},
              {"window", WindowName(s.window)}};
}

StftConfig StftFromJson(const json& j) {
  StftConfig s;
  s.n_fft = j.at("n_fft").get<int>();
  s.win_len = j.at("win_len").get<int>();
  s.hop = j.at("hop").get<int>();
  const std::string w = j.at("window").get<std::string>();
  if (w == "hann") {
    s.window = WindowKind::kHann;
  } else if (w == "rect") {
    s.window = WindowKind::kRect;
  } else {
    ThrowF(ErrorKind::kConfig, "unknown window kind '", w, "'");
  }
  return s;
}

}  // namespace

std::string SystemConfigToJson(const SystemConfig& cfg) {
  json j;
  j["variant"] = VariantName(cfg.variant);
  j["sample_rate"] = cfg.sample_rate;
  j["tcn"] = json{{"blocks_per_repeat", cfg.tcn.blocks_per_repeat},
                  {"repeats", cfg.tcn.repeats},
                  {"bottleneck", cfg.tcn.bottleneck_channels},
                  {"hidden", cfg.tcn.hidden_channels},
                  {"skip", cfg.tcn.skip_channels},
                  {"kernel", cfg.tcn.kernel_size},
                  {"mask_channels", cfg.tcn.mask_channels},
                  {"causal", cfg.tcn.causal}};
  if (cfg.time_encoder) {
    j["time_encoder"] = json{{"num_filters", cfg.time_encoder->num_filters},
                             {"frame_len", cfg.time_encoder->frame_len},
                             {"stride", cfg.time_encoder->stride},
                             {"relu", cfg.time_encoder->relu}};
  }
  if (cfg.freq_encoder) {
    json f = StftToJson(cfg.freq_encoder->stft);
    f["drop_nyquist"] = cfg.freq_encoder->drop_nyquist;
    j["stft"] = f;
  }
  if (cfg.bpf) j["bpf"] = json{{"dim", cfg.bpf->dim}};
  return j.dump();
}

SystemConfig SystemConfigFromJson(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    ThrowF(ErrorKind::kParse, "invalid config JSON: ", e.what());
  }
  try {
    SystemConfig cfg;
    cfg.variant = VariantFromName(j.at("variant").get<std::string>());
    cfg.sample_rate = j.value("sample_rate", 16000);
    const json& t = j.at("tcn");
    cfg.tcn.blocks_per_repeat = t.at("blocks_per_repeat").get<int>();
    cfg.tcn.repeats = t.at("repeats").get<int>();
    cfg.tcn.bottleneck_channels = t.at("bottleneck").get<int>();
    cfg.tcn.hidden_channels = t.at("hidden").get<int>();
    cfg.tcn.skip_channels = t.at("skip").get<int>();
    cfg.tcn.kernel_size = t.at("kernel").get<int>();
    cfg.tcn.mask_channels = t.at("mask_channels").get<int>();
    cfg.tcn.causal = t.value("causal", false);
    if (j.contains("time_encoder")) {
      const json& e = j.at("time_encoder");
      cfg.time_encoder = TimeEncoderConfig{
          e.at("num_filters").get<int>(), e.at("frame_len").get<int>(),
          e.at("stride").get<int>(), e.value("relu", true)};
    }
    if (j.contains("stft")) {
      FreqEncoderConfig f;
      f.stft = StftFromJson(j.at("stft"));
      f.drop_nyquist = j.at("stft").value("drop_nyquist", false);
      cfg.freq_encoder = f;
    }
    if (j.contains("bpf")) cfg.bpf = BpfConfig{j.at("bpf").at("dim").get<int>()};
    cfg.Validate();
    return cfg;
  } catch (const json::exception& e) {
    ThrowF(ErrorKind::kParse, "config JSON missing fields: ", e.what());
  }
}

}  // namespace cdse
