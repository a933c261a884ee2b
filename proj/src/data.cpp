// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/data.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <set>

#include "cdse/common.hpp"
#include "cdse/fft.hpp"
#include "cdse/metrics.hpp"
#include "cdse/rng.hpp"
#include "json.hpp"

namespace cdse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kTwoPi = 6.283185307179586;

void CheckSynthArgs(double dur_s, int sample_rate) {
  CDSE_CHECK(dur_s >= 0.25 && dur_s <= 10.0, ErrorKind::kParameter,
             "duration must lie in [0.25, 10] s, got ", dur_s);
  CDSE_CHECK(sample_rate == 8000 || sample_rate == 16000,
             ErrorKind::kParameter, "sample rate must be 8000 or 16000, got ",
             sample_rate);
}

void PeakNormalize(std::vector<float>& x, double peak) {
  double max_abs = 0.0;
  for (float v : x) max_abs = std::max(max_abs, std::abs(double(v)));
  CDSE_CHECK(max_abs > 0.0, ErrorKind::kDomain, "silent synthesis output");
  const double g = peak / max_abs;
  for (float& v : x) v = static_cast<float>(v * g);
}

std::vector<float> HarmonicVoice(Rng& rng, int64_t n, int sr, double f0_lo,
                                 double f0_hi, int max_harmonics) {
  const double f0 = rng.Uniform(f0_lo, f0_hi);
  const int harmonics = 3 + static_cast<int>(rng.Below(
                                static_cast<uint64_t>(max_harmonics - 2)));
  const double am_rate = rng.Uniform(2.0, 6.0);
  const double am_phase = rng.Uniform(0.0, kTwoPi);
  std::vector<double> phases(static_cast<size_t>(harmonics));
  for (auto& p : phases) p = rng.Uniform(0.0, kTwoPi);
  std::vector<float> x(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0.0;
    for (int h = 0; h < harmonics; ++h) {
      v += std::sin(kTwoPi * f0 * (h + 1) * t + phases[size_t(h)]) / (h + 1);
    }
    // modulation depth 0.7: envelope swings in [0.3, 1]
    const double am =
        1.0 - 0.7 * (0.5 - 0.5 * std::cos(kTwoPi * am_rate * t + am_phase));
    x[static_cast<size_t>(i)] = static_cast<float>(v * am);
  }
  return x;
}

std::vector<float> ChirpFormant(Rng& rng, int64_t n, int sr) {
  const double f_start = rng.Uniform(100.0, 250.0);
  const double f_end = f_start * rng.Uniform(1.5, 2.5);
  const double formant = rng.Uniform(400.0, 900.0);
  const double bandwidth = rng.Uniform(150.0, 300.0);
  const double am_rate = rng.Uniform(2.0, 6.0);
  std::vector<float> x(static_cast<size_t>(n));
  double phase = rng.Uniform(0.0, kTwoPi);
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double tt = static_cast<double>(i) / static_cast<double>(n);
    const double f0 = f_start + (f_end - f_start) * tt;
    phase += kTwoPi * f0 / sr;
    double v = 0.0;
    for (int h = 1; h <= 4; ++h) {
      const double fh = h * f0;
      const double resonance =
          1.0 / (1.0 + std::pow((fh - formant) / bandwidth, 2.0));
      v += (0.4 + resonance) / h * std::sin(h * phase);
    }
    const double am = 1.0 - 0.6 * (0.5 - 0.5 * std::cos(kTwoPi * am_rate * t));
    x[static_cast<size_t>(i)] = static_cast<float>(v * am);
  }
  return x;
}

// Exact 1/f power spectrum via random-phase spectral synthesis.
std::vector<float> PinkNoise(Rng& rng, int64_t n) {
  int64_t n_fft = 1;
  while (n_fft < n) n_fft <<= 1;
  std::vector<std::complex<double>> half(static_cast<size_t>(n_fft / 2 + 1),
                                         {0.0, 0.0});
  for (int64_t f = 1; f <= n_fft / 2; ++f) {
    const double mag = 1.0 / std::sqrt(static_cast<double>(f));
    const double ph = rng.Uniform(0.0, kTwoPi);
    half[static_cast<size_t>(f)] = std::polar(mag, ph);
  }
  const std::vector<double> full = Irfft(half, static_cast<int>(n_fft));
  std::vector<float> x(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i)
    x[static_cast<size_t>(i)] = static_cast<float>(full[static_cast<size_t>(i)]);
  return x;
}

std::vector<float> TonalInterference(Rng& rng, int64_t n, int sr) {
  const int tones = 3;
  std::vector<double> freq(tones), fm_depth(tones), fm_rate(tones),
      phase(tones);
  for (int k = 0; k < tones; ++k) {
    freq[size_t(k)] = rng.Uniform(300.0, std::min(3000.0, sr / 2.0 * 0.8));
    fm_depth[size_t(k)] = rng.Uniform(2.0, 12.0);
    fm_rate[size_t(k)] = rng.Uniform(0.2, 1.0);
    phase[size_t(k)] = rng.Uniform(0.0, kTwoPi);
  }
  std::vector<float> x(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    double v = 0.0;
    for (int k = 0; k < tones; ++k) {
      const double f = freq[size_t(k)] +
                       fm_depth[size_t(k)] *
                           std::sin(kTwoPi * fm_rate[size_t(k)] * t);
      v += std::sin(kTwoPi * f * t + phase[size_t(k)]) / (k + 1);
    }
    x[static_cast<size_t>(i)] = static_cast<float>(v);
  }
  // faint wideband floor keeps the signal non-degenerate for SNR math
  Rng floor_rng(rng.NextU64());
  for (auto& v : x)
    v += static_cast<float>(0.01 * (floor_rng.Uniform() * 2.0 - 1.0));
  return x;
}

}  // namespace

const char* CleanKindName(CleanKind k) {
  return k == CleanKind::kHarmonicAm ? "harmonic_am" : "chirp_formant";
}

const char* NoiseKindName(NoiseKind k) {
  switch (k) {
    case NoiseKind::kWhite: return "white";
    case NoiseKind::kPink: return "pink";
    case NoiseKind::kBabbleLike: return "babble_like";
    case NoiseKind::kTonalInterf: return "tonal_interf";
  }
  return "?";
}

NoiseKind NoiseKindFromName(const std::string& name) {
  if (name == "white") return NoiseKind::kWhite;
  if (name == "pink") return NoiseKind::kPink;
  if (name == "babble_like") return NoiseKind::kBabbleLike;
  if (name == "tonal_interf") return NoiseKind::kTonalInterf;
  ThrowF(ErrorKind::kConfig, "unknown noise kind '", name,
         "' (white|pink|babble_like|tonal_interf)");
}

AudioClip SynthClean(CleanKind kind, double dur_s, int sample_rate,
                     uint64_t seed) {
  CheckSynthArgs(dur_s, sample_rate);
  const int64_t n = static_cast<int64_t>(std::llround(dur_s * sample_rate));
  Rng rng(seed);
  std::vector<float> x;
  switch (kind) {
    case CleanKind::kHarmonicAm:
      x = HarmonicVoice(rng, n, sample_rate, 100.0, 250.0, 5);
      break;
    case CleanKind::kChirpFormant:
      x = ChirpFormant(rng, n, sample_rate);
      break;
  }
  PeakNormalize(x, 0.5);
  return {std::move(x), sample_rate};
}

AudioClip SynthNoise(NoiseKind kind, double dur_s, int sample_rate,
                     uint64_t seed) {
  CheckSynthArgs(dur_s, sample_rate);
  const int64_t n = static_cast<int64_t>(std::llround(dur_s * sample_rate));
  Rng rng(seed);
  std::vector<float> x;
  switch (kind) {
    case NoiseKind::kWhite: {
      x.resize(static_cast<size_t>(n));
      for (auto& v : x)
        v = static_cast<float>(rng.Uniform() * 2.0 - 1.0);
      break;
    }
    case NoiseKind::kPink:
      x = PinkNoise(rng, n);
      break;
    case NoiseKind::kBabbleLike: {
      x.assign(static_cast<size_t>(n), 0.0f);
      for (int voice = 0; voice < 8; ++voice) {
        Rng vr(rng.NextU64());
        const std::vector<float> v =
            HarmonicVoice(vr, n, sample_rate, 120.0, 320.0, 4);
        for (int64_t i = 0; i < n; ++i) x[size_t(i)] += v[size_t(i)];
      }
      break;
    }
    case NoiseKind::kTonalInterf:
      x = TonalInterference(rng, n, sample_rate);
      break;
  }
  PeakNormalize(x, 0.5);
  return {std::move(x), sample_rate};
}

std::vector<const MixtureRecord*> MixtureManifest::Split(
    const std::string& split) const {
  std::vector<const MixtureRecord*> out;
  for (const auto& r : records)
    if (r.split == split) out.push_back(&r);
  return out;
}

std::string MixtureManifest::Resolve(const std::string& rel_path) const {
  if (rel_path.empty() || rel_path.front() == '/') return rel_path;
  if (base_dir.empty()) return rel_path;
  return (fs::path(base_dir) / rel_path).string();
}

std::vector<std::string> MixtureManifest::SplitNames() const {
  std::set<std::string> names;
  for (const auto& r : records) names.insert(r.split);
  return {names.begin(), names.end()};
}

std::string CorpusSpecToJson(const CorpusSpec& spec) {
  json j;
  j["n_train"] = spec.n_train;
  j["n_valid"] = spec.n_valid;
  j["n_test"] = spec.n_test;
  j["train_snr_db"] = spec.train_snr_db;
  j["snr_grid"] = spec.snr_grid;
  json seen = json::array(), unseen = json::array();
  for (auto k : spec.seen_kinds) seen.push_back(NoiseKindName(k));
  for (auto k : spec.unseen_kinds) unseen.push_back(NoiseKindName(k));
  j["seen_kinds"] = seen;
  j["unseen_kinds"] = unseen;
  j["sample_rate"] = spec.sample_rate;
  j["dur_s"] = spec.dur_s;
  j["seed"] = spec.seed;
  if (!spec.out_dir.empty()) j["out_dir"] = spec.out_dir;
  return j.dump();
}

CorpusSpec CorpusSpecFromJson(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    ThrowF(ErrorKind::kParse, "invalid corpus spec JSON: ", e.what());
  }
  CorpusSpec spec;
  try {
    spec.n_train = j.value("n_train", spec.n_train);
    spec.n_valid = j.value("n_valid", spec.n_valid);
    spec.n_test = j.value("n_test", spec.n_test);
    spec.train_snr_db = j.value("train_snr_db", spec.train_snr_db);
    if (j.contains("snr_grid"))
      spec.snr_grid = j.at("snr_grid").get<std::vector<double>>();
    auto parse_kinds = [&](const char* key,
                           std::vector<NoiseKind>& out) {
      if (!j.contains(key)) return;
      out.clear();
      for (const auto& name : j.at(key))
        out.push_back(NoiseKindFromName(name.get<std::string>()));
    };
    parse_kinds("seen_kinds", spec.seen_kinds);
    parse_kinds("unseen_kinds", spec.unseen_kinds);
    spec.sample_rate = j.value("sample_rate", spec.sample_rate);
    spec.dur_s = j.value("dur_s", spec.dur_s);
    spec.seed = j.value("seed", spec.seed);
    spec.out_dir = j.value("out_dir", spec.out_dir);
  } catch (const json::exception& e) {
    ThrowF(ErrorKind::kParse, "corpus spec fields: ", e.what());
  }
  return spec;
}

namespace {

struct RecordPlan {
  std::string split;
  double snr_db;
  int clean_id;       // index into the split's clean pool
  CleanKind clean_kind;
  NoiseKind noise_kind;
  std::string stem;   // file stem without extension
};

void WriteRecord(const CorpusSpec& spec, const RecordPlan& plan,
                 uint64_t record_seed, std::vector<std::string>* written,
                 std::vector<MixtureRecord>* records) {
  const fs::path out_dir(spec.out_dir);
  // Clean clips are unique per (split, clean_id): shared across the SNR grid
  // inside a test split, like corrupting one test set at several SNRs.
  const uint64_t clean_seed =
      Rng::Derive(spec.seed, std::hash<std::string>{}(plan.split) * 1000003ULL +
                                 static_cast<uint64_t>(plan.clean_id))
          .NextU64();
  AudioClip clean =
      SynthClean(plan.clean_kind, spec.dur_s, spec.sample_rate, clean_seed);
  AudioClip noise = SynthNoise(plan.noise_kind, spec.dur_s + 0.25,
                               spec.sample_rate, record_seed);

  MixResult<float> mix = MixAtSnr(clean.samples, noise.samples, plan.snr_db,
                                  record_seed ^ 0x5eedULL);
  // Joint rescale when the mixture clips; ratios (and thus the SNR) are
  // untouched.
  double peak = 0.0;
  for (float v : mix.mixture) peak = std::max(peak, std::abs(double(v)));
  const double scale = peak > 0.99 ? 0.99 / peak : 1.0;
  std::vector<float> clean_out(clean.samples), noise_out(clean.samples.size());
  for (size_t i = 0; i < noise_out.size(); ++i) {
    noise_out[i] = static_cast<float>(
        scale * mix.gain *
        noise.samples[static_cast<size_t>(mix.noise_offset) + i]);
  }
  std::vector<float> mix_out(mix.mixture);
  if (scale != 1.0) {
    for (auto& v : clean_out) v = static_cast<float>(v * scale);
    for (auto& v : mix_out) v = static_cast<float>(v * scale);
  }

  MixtureRecord rec;
  rec.clean_path = "clean/" + plan.stem + ".wav";
  rec.noise_path = "noise/" + plan.stem + ".wav";
  rec.mixture_path = "mix/" + plan.stem + ".wav";
  rec.snr_db = plan.snr_db;
  rec.split = plan.split;

  for (const auto& [rel, samples] :
       {std::pair<std::string, const std::vector<float>*>{rec.clean_path,
                                                          &clean_out},
        {rec.noise_path, &noise_out},
        {rec.mixture_path, &mix_out}}) {
    const std::string full = (out_dir / rel).string();
    WriteWav(full, {*samples, spec.sample_rate});
    written->push_back(full);
  }
  records->push_back(std::move(rec));
}

}  // namespace

MixtureManifest BuildCorpus(const CorpusSpec& spec) {
  CDSE_CHECK(!spec.out_dir.empty(), ErrorKind::kParameter,
             "corpus out_dir not set");
  CDSE_CHECK(!spec.seen_kinds.empty() && !spec.unseen_kinds.empty(),
             ErrorKind::kConfig, "seen and unseen noise kinds must be given");
  for (auto k : spec.seen_kinds) {
    for (auto u : spec.unseen_kinds) {
      CDSE_CHECK(k != u, ErrorKind::kConfig, "noise kind '",
                 NoiseKindName(k), "' appears in both seen and unseen sets");
    }
  }
  CDSE_CHECK(spec.n_train > 0 && spec.n_valid >= 0 && spec.n_test > 0,
             ErrorKind::kParameter, "corpus sizes must be positive");

  const fs::path out_dir(spec.out_dir);
  std::error_code ec;
  fs::create_directories(out_dir / "clean", ec);
  fs::create_directories(out_dir / "noise", ec);
  fs::create_directories(out_dir / "mix", ec);
  CDSE_CHECK(fs::exists(out_dir / "mix"), ErrorKind::kIo,
             "cannot create corpus directories under ", spec.out_dir);

  // Plan all records deterministically, then synthesize.
  std::vector<RecordPlan> plans;
  auto clean_kind_for = [](int id) {
    return id % 2 == 0 ? CleanKind::kHarmonicAm : CleanKind::kChirpFormant;
  };
  auto add_block = [&](const std::string& split, int count, double snr,
                       const std::vector<NoiseKind>& kinds, int clean_base) {
    for (int i = 0; i < count; ++i) {
      RecordPlan p;
      p.split = split;
      p.snr_db = snr;
      p.clean_id = clean_base + i;
      p.clean_kind = clean_kind_for(p.clean_id);
      p.noise_kind = kinds[static_cast<size_t>(i) % kinds.size()];
      char stem[96];
      std::snprintf(stem, sizeof(stem), "%s_%04d_snr%+g", split.c_str(), i,
                    snr);
      p.stem = stem;
      plans.push_back(std::move(p));
    }
  };
  add_block("train", spec.n_train, spec.train_snr_db, spec.seen_kinds, 0);
  add_block("valid", spec.n_valid, spec.train_snr_db, spec.seen_kinds, 0);
  for (double snr : spec.snr_grid)
    add_block("test_seen", spec.n_test, snr, spec.seen_kinds, 0);
  for (double snr : spec.snr_grid)
    add_block("test_unseen", spec.n_test, snr, spec.unseen_kinds, 0);

  MixtureManifest manifest;
  manifest.base_dir = spec.out_dir;
  manifest.sample_rate = spec.sample_rate;
  std::vector<std::string> written;
  try {
    for (size_t i = 0; i < plans.size(); ++i) {
      const uint64_t record_seed =
          Rng::Derive(spec.seed, 0xC0DE0000ULL + i).NextU64();
      WriteRecord(spec, plans[i], record_seed, &written, &manifest.records);
    }
    SaveManifest((out_dir / "manifest.jsonl").string(), manifest);
  } catch (...) {
    for (const auto& f : written) fs::remove(f, ec);
    fs::remove(out_dir / "manifest.jsonl", ec);
    throw;
  }
  return manifest;
}

void SaveManifest(const std::string& path, const MixtureManifest& manifest) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    CDSE_CHECK(f.good(), ErrorKind::kIo, "cannot open ", tmp, " for writing");
    for (const auto& r : manifest.records) {
      json j;
      j["clean_path"] = r.clean_path;
      j["noise_path"] = r.noise_path;
      j["mixture_path"] = r.mixture_path;
      j["snr_db"] = r.snr_db;
      j["split"] = r.split;
      f << j.dump() << "\n";
    }
    f.flush();
    CDSE_CHECK(f.good(), ErrorKind::kIo, "write failed for ", tmp);
  }
  CDSE_CHECK(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorKind::kIo,
             "cannot move ", tmp, " into place");
}

MixtureManifest LoadManifest(const std::string& path,
                             bool strict_check_files) {
  std::ifstream in(path);
  CDSE_CHECK(in.good(), ErrorKind::kIo, "cannot open manifest ", path);
  MixtureManifest manifest;
  manifest.base_dir = fs::path(path).parent_path().string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
      MixtureRecord r;
      r.clean_path = j.at("clean_path").get<std::string>();
      r.noise_path = j.at("noise_path").get<std::string>();
      r.mixture_path = j.at("mixture_path").get<std::string>();
      r.snr_db = j.at("snr_db").get<double>();
      r.split = j.at("split").get<std::string>();
      manifest.records.push_back(std::move(r));
    } catch (const json::exception& e) {
      ThrowF(ErrorKind::kParse, path, ":", line_no,
             ": malformed manifest line: ", e.what());
    }
  }
  if (strict_check_files) {
    for (const auto& r : manifest.records) {
      for (const auto& p :
           {r.clean_path, r.noise_path, r.mixture_path}) {
        const std::string full = manifest.Resolve(p);
        CDSE_CHECK(fs::exists(full), ErrorKind::kIo,
                   "manifest references missing file ", full);
      }
    }
  }
  if (!manifest.records.empty()) {
    const std::string first =
        manifest.Resolve(manifest.records.front().mixture_path);
    if (fs::exists(first)) manifest.sample_rate = ReadWav(first).sample_rate;
  }
  return manifest;
}

}  // namespace cdse
