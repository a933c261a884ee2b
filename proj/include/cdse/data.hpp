// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Synthetic clean/noise generation and SNR-calibrated corpus construction.
// Clean material is speech-like (harmonic series with amplitude modulation,
// or formant-shaped chirps); noise covers white, pink, babble-like and tonal
// interference. Corpora are bitwise-reproducible functions of their spec.

#ifndef CDSE_DATA_HPP_
#define CDSE_DATA_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "cdse/wav.hpp"

namespace cdse {

enum class CleanKind { kHarmonicAm, kChirpFormant };
enum class NoiseKind { kWhite, kPink, kBabbleLike, kTonalInterf };

const char* CleanKindName(CleanKind k);
const char* NoiseKindName(NoiseKind k);
NoiseKind NoiseKindFromName(const std::string& name);

// Deterministic speech-like clean signal, peak-normalized to 0.5.
// dur_s in [0.25, 10], sr in {8000, 16000}.
AudioClip SynthClean(CleanKind kind, double dur_s, int sample_rate,
                     uint64_t seed);

// Deterministic noise of the stated color/structure, peak-normalized to 0.5.
AudioClip SynthNoise(NoiseKind kind, double dur_s, int sample_rate,
                     uint64_t seed);

struct MixtureRecord {
  std::string clean_path;
  std::string noise_path;
  std::string mixture_path;
  double snr_db = 0.0;
  std::string split;  // train | valid | test_seen | test_unseen
};

struct MixtureManifest {
  std::vector<MixtureRecord> records;
  std::string base_dir;  // directory the relative paths resolve against
  int sample_rate = 0;   // filled when files are inspected

  std::vector<const MixtureRecord*> Split(const std::string& split) const;
  std::string Resolve(const std::string& rel_path) const;
  std::vector<std::string> SplitNames() const;
};

struct CorpusSpec {
  int n_train = 200;
  int n_valid = 20;
  int n_test = 30;  // clips per SNR point in each test split
  double train_snr_db = 5.0;
  std::vector<double> snr_grid = {-5.0, 5.0, 15.0};
  std::vector<NoiseKind> seen_kinds = {NoiseKind::kWhite,
                                       NoiseKind::kBabbleLike};
  std::vector<NoiseKind> unseen_kinds = {NoiseKind::kPink,
                                         NoiseKind::kTonalInterf};
  int sample_rate = 8000;
  double dur_s = 1.0;
  std::string out_dir;
  uint64_t seed = 17;
};

std::string CorpusSpecToJson(const CorpusSpec& spec);
CorpusSpec CorpusSpecFromJson(const std::string& json_text);

// Synthesizes all clips, mixes each record at its target SNR (joint peak
// rescale keeps everything in [-1,1] without disturbing the ratio), writes
// WAVs and the JSONL manifest. Cleans up written files if the build fails.
MixtureManifest BuildCorpus(const CorpusSpec& spec);

// JSONL manifest: one record per line, fields exactly
// {clean_path, noise_path, mixture_path, snr_db, split}.
void SaveManifest(const std::string& path, const MixtureManifest& manifest);
MixtureManifest LoadManifest(const std::string& path,
                             bool strict_check_files = false);

}  // namespace cdse

#endif  // CDSE_DATA_HPP_
