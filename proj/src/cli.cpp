// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "cdse/checkpoint.hpp"
#include "cdse/data.hpp"
#include "cdse/metrics.hpp"
#include "cdse/model.hpp"
#include "cdse/train.hpp"
#include "cdse/verify.hpp"

namespace cdse {
namespace cli {

namespace fs = std::filesystem;

namespace {

int ExitCodeFor(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kParameter:
    case ErrorKind::kConfig:
    case ErrorKind::kContract:
      return kExitUsage;
    case ErrorKind::kNumeric:
      return kExitNumeric;
    default:
      return kExitData;
  }
}

void WriteTextFile(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::trunc);
    CDSE_CHECK(f.good(), ErrorKind::kIo, "cannot open ", tmp, " for writing");
    f << text;
    f.flush();
    CDSE_CHECK(f.good(), ErrorKind::kIo, "write failed for ", tmp);
  }
  CDSE_CHECK(std::rename(tmp.c_str(), path.c_str()) == 0, ErrorKind::kIo,
             "cannot move ", tmp, " to ", path);
}

std::string ReadTextFile(const std::string& path) {
  std::ifstream f(path);
  CDSE_CHECK(f.good(), ErrorKind::kIo, "cannot open ", path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------

struct MixArgs {
  std::string spec_path;
  std::string out_dir;
};

int RunMix(const MixArgs& a) {
  CorpusSpec spec;
  if (!a.spec_path.empty()) spec = CorpusSpecFromJson(ReadTextFile(a.spec_path));
  spec.out_dir = a.out_dir;
  const MixtureManifest manifest = BuildCorpus(spec);

  std::map<std::pair<std::string, double>, int> counts;
  for (const auto& r : manifest.records)
    ++counts[{r.split, r.snr_db}];
  std::printf("split,snr_db,count\n");
  for (const auto& [key, n] : counts)
    std::printf("%s,%g,%d\n", key.first.c_str(), key.second, n);
  std::fprintf(stderr, "manifest: %s\n",
               (fs::path(spec.out_dir) / "manifest.jsonl").string().c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string manifest_path;
  std::string variant;
  std::string out_dir;
  int epochs = 30;
  uint64_t seed = 0;
  double lr = 1e-3;
  int batch = 4;
  double clip = 5.0;
  bool quiet = false;
};

SystemConfig ResolveVariant(const std::string& variant, int data_rate) {
  const auto names = VariantNames();
  if (std::find(names.begin(), names.end(), variant) != names.end()) {
    return PresetConfig(VariantFromName(variant), data_rate);
  }
  if (fs::exists(variant)) {
    SystemConfig cfg = SystemConfigFromJson(ReadTextFile(variant));
    CDSE_CHECK(cfg.sample_rate == data_rate, ErrorKind::kFormat,
               "config sample_rate ", cfg.sample_rate,
               " does not match the corpus rate ", data_rate);
    return cfg;
  }
  std::string all;
  for (const auto& n : names) all += " " + n;
  ThrowF(ErrorKind::kConfig, "unknown variant '", variant,
         "' (not a preset and not a config file); valid presets:", all);
}

int RunTrain(const TrainArgs& a) {
  MixtureManifest manifest = LoadManifest(a.manifest_path);
  CDSE_CHECK(manifest.sample_rate > 0, ErrorKind::kParse,
             "could not determine the corpus sample rate from ",
             a.manifest_path);
  SystemConfig cfg = ResolveVariant(a.variant, manifest.sample_rate);

  fs::create_directories(a.out_dir);
  Model<float> model(cfg, a.seed);
  TrainOptions opts;
  opts.epochs = a.epochs;
  opts.batch_size = a.batch;
  opts.lr = a.lr;
  opts.clip_norm = a.clip;
  opts.seed = a.seed;
  opts.checkpoint_dir = a.out_dir;
  opts.verbose = !a.quiet;
  const std::vector<EpochStats> history = Train(model, manifest, opts);
  WriteTextFile((fs::path(a.out_dir) / "history.csv").string(),
                HistoryCsv(history));
  if (!history.empty()) {
    std::printf("trained %s for %d epochs; final valid si_snr %+.4f dB\n",
                VariantName(cfg.variant), a.epochs,
                history.back().valid_si_snr);
  } else {
    std::printf("wrote initial checkpoint only (epochs=0)\n");
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EnhanceArgs {
  std::string ckpt_path;
  std::string in_path;
  std::string out_dir;
};

int RunEnhance(const EnhanceArgs& a) {
  const Checkpoint ckpt = LoadCheckpoint(a.ckpt_path);
  Model<float> model = ModelFromCheckpoint(ckpt);
  fs::create_directories(a.out_dir);

  std::vector<fs::path> inputs;
  if (fs::is_directory(a.in_path)) {
    for (const auto& entry : fs::directory_iterator(a.in_path)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().extension() == ".wav") {
        inputs.push_back(entry.path());
      } else {
        std::fprintf(stderr, "warning: skipping non-wav file %s\n",
                     entry.path().string().c_str());
      }
    }
    std::sort(inputs.begin(), inputs.end());
  } else {
    CDSE_CHECK(fs::exists(a.in_path), ErrorKind::kIo, "no such input ",
               a.in_path);
    inputs.emplace_back(a.in_path);
  }

  for (const auto& in : inputs) {
    AudioClip clip = ReadWav(in.string());
    CDSE_CHECK(clip.sample_rate == model.config().sample_rate,
               ErrorKind::kFormat, in.string(), ": sample rate ",
               clip.sample_rate, " does not match the checkpoint's ",
               model.config().sample_rate);
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples = model.Enhance(clip.samples);
    WriteWav((fs::path(a.out_dir) / in.filename()).string(), out);
  }
  std::printf("enhanced %zu file(s) into %s\n", inputs.size(),
              a.out_dir.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string manifest_path;
  std::string split;
  std::string ckpt_path;
};

int RunEval(const EvalArgs& a) {
  MixtureManifest manifest = LoadManifest(a.manifest_path);
  const auto records = manifest.Split(a.split);
  if (records.empty()) {
    std::string all;
    for (const auto& s : manifest.SplitNames()) all += " " + s;
    ThrowF(ErrorKind::kParse, "split '", a.split,
           "' is empty or missing; available splits:", all);
  }

  std::unique_ptr<Model<float>> model;
  if (!a.ckpt_path.empty()) {
    model = std::make_unique<Model<float>>(
        ModelFromCheckpoint(LoadCheckpoint(a.ckpt_path)));
  }

  std::map<double, std::pair<int, std::pair<double, double>>> by_snr;
  for (const auto* r : records) {
    const AudioClip mix = ReadWav(manifest.Resolve(r->mixture_path));
    const AudioClip clean = ReadWav(manifest.Resolve(r->clean_path));
    const double unproc = SiSnrDb(mix.samples, clean.samples);
    double enhanced = 0.0;
    if (model) {
      CDSE_CHECK(mix.sample_rate == model->config().sample_rate,
                 ErrorKind::kFormat, r->mixture_path, ": rate mismatch vs ",
                 "checkpoint");
      enhanced = SiSnrDb(model->Enhance(mix.samples), clean.samples);
    }
    auto& cell = by_snr[r->snr_db];
    cell.first += 1;
    cell.second.first += unproc;
    cell.second.second += enhanced;
  }

  if (model) {
    std::printf("split,snr_db,count,si_snr_unprocessed,si_snr_enhanced\n");
  } else {
    std::printf("split,snr_db,count,si_snr_unprocessed\n");
  }
  int total = 0;
  double sum_u = 0.0, sum_e = 0.0;
  for (const auto& [snr, cell] : by_snr) {
    const int n = cell.first;
    const double mu = cell.second.first / n;
    total += n;
    sum_u += cell.second.first;
    sum_e += cell.second.second;
    if (model) {
      std::printf("%s,%g,%d,%.4f,%.4f\n", a.split.c_str(), snr, n, mu,
                  cell.second.second / n);
    } else {
      std::printf("%s,%g,%d,%.4f\n", a.split.c_str(), snr, n, mu);
    }
  }
  if (by_snr.size() > 1) {
    if (model) {
      std::printf("%s,all,%d,%.4f,%.4f\n", a.split.c_str(), total,
                  sum_u / total, sum_e / total);
    } else {
      std::printf("%s,all,%d,%.4f\n", a.split.c_str(), total, sum_u / total);
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::string variant;
  std::string dtype = "f32";
  uint64_t seed = 123;
};

int RunGradcheck(const GradcheckArgs& a) {
  const Variant v = VariantFromName(a.variant);
  const SystemConfig cfg = MicroConfig(v);
  const double threshold = a.dtype == "f64" ? 1e-6 : 1e-3;
  double err = 0.0;
  std::string worst;
  if (a.dtype == "f64") {
    Model<double> model(cfg, a.seed);
    std::vector<double> noisy, clean;
    MakeGradCheckSignals<double>(400, a.seed ^ 0xABCDULL, &noisy, &clean);
    const auto report = ModelLossGradCheck(model, noisy, clean, 1e-5);
    err = report.max_rel_err;
    worst = report.worst_param;
  } else if (a.dtype == "f32") {
    Model<float> model(cfg, a.seed);
    std::vector<float> noisy, clean;
    MakeGradCheckSignals<float>(400, a.seed ^ 0xABCDULL, &noisy, &clean);
    const auto report = ModelLossGradCheck(model, noisy, clean, 1e-4);
    err = report.max_rel_err;
    worst = report.worst_param;
  } else {
    ThrowF(ErrorKind::kParameter, "--dtype must be f32 or f64, got ",
           a.dtype);
  }
  std::printf("variant=%s dtype=%s max_rel_err=%.3e (threshold %.0e)\n",
              a.variant.c_str(), a.dtype.c_str(), err, threshold);
  CDSE_CHECK(err <= threshold, ErrorKind::kNumeric,
             "gradient check failed: max rel err ", err, " at ", worst,
             " exceeds ", threshold);
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SpecArgs {
  std::string in_path;
  std::string out_path;
  int n_fft = 512;
  int hop = 128;
};

int RunSpec(const SpecArgs& a) {
  const AudioClip clip = ReadWav(a.in_path);
  StftConfig cfg;
  cfg.n_fft = a.n_fft;
  cfg.win_len = a.n_fft;
  cfg.hop = a.hop;
  cfg.window = WindowKind::kHann;
  CDSE_CHECK(static_cast<int>(clip.samples.size()) >= cfg.win_len,
             ErrorKind::kFormat, a.in_path, ": too short for one frame");
  const PackedSpectrogram<float> spec = Stft(clip.samples, cfg);
  const int bins = cfg.bins();
  const int k = spec.values.dim(1);

  std::string csv;
  csv.reserve(static_cast<size_t>(bins + 1) * (k + 1) * 8);
  char cell[64];
  csv += "hz";
  for (int col = 0; col < k; ++col) {
    std::snprintf(cell, sizeof(cell), ",%.6g",
                  static_cast<double>(col) * cfg.hop / clip.sample_rate);
    csv += cell;
  }
  csv += "\n";
  for (int f = 0; f < bins; ++f) {
    std::snprintf(cell, sizeof(cell), "%.6g",
                  static_cast<double>(f) * clip.sample_rate / cfg.n_fft);
    csv += cell;
    for (int col = 0; col < k; ++col) {
      const double re = spec.values.at(f, col);
      const double im = spec.values.at(bins + f, col);
      const double mag = std::sqrt(re * re + im * im);
      double db = 20.0 * std::log10(mag);
      if (!std::isfinite(db) || db < -80.0) db = -80.0;
      std::snprintf(cell, sizeof(cell), ",%.2f", db);
      csv += cell;
    }
    csv += "\n";
  }
  WriteTextFile(a.out_path, csv);
  std::printf("wrote %d x %d log-magnitude cells to %s\n", bins, k,
              a.out_path.c_str());
  return kExitOk;
}

}  // namespace

int Run(const std::vector<std::string>& args) {
  CLI::App app{"single-channel speech enhancement toolkit"};
  app.require_subcommand(1);

  MixArgs mix;
  auto* mix_cmd = app.add_subcommand(
      "mix", "synthesize an SNR-calibrated noisy corpus with a manifest");
  mix_cmd->add_option("--spec", mix.spec_path,
                      "corpus spec JSON (defaults: desk-scale corpus)");
  mix_cmd->add_option("--out", mix.out_dir, "output directory")->required();

  TrainArgs train;
  auto* train_cmd =
      app.add_subcommand("train", "train a system on a mixed corpus");
  train_cmd->add_option("--manifest", train.manifest_path, "manifest.jsonl")
      ->required();
  train_cmd->add_option("--variant", train.variant,
                        "preset name or config JSON path")
      ->required();
  train_cmd->add_option("--epochs", train.epochs, "training epochs");
  train_cmd->add_option("--seed", train.seed, "rng seed");
  train_cmd->add_option("--out", train.out_dir,
                        "checkpoint/history directory")
      ->required();
  train_cmd->add_option("--lr", train.lr, "Adam learning rate");
  train_cmd->add_option("--batch", train.batch, "batch size");
  train_cmd->add_option("--clip", train.clip, "global gradient-norm clip");
  train_cmd->add_flag("--quiet", train.quiet, "suppress per-epoch logging");

  EnhanceArgs enhance;
  auto* enh_cmd = app.add_subcommand("enhance",
                                     "enhance WAV file(s) with a checkpoint");
  enh_cmd->add_option("--ckpt", enhance.ckpt_path, "checkpoint path")
      ->required();
  enh_cmd->add_option("--in", enhance.in_path, "input wav or directory")
      ->required();
  enh_cmd->add_option("--out", enhance.out_dir, "output directory")
      ->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand(
      "eval", "per-SNR mean SI-SNR of a manifest split (CSV on stdout)");
  eval_cmd->add_option("--manifest", eval.manifest_path, "manifest.jsonl")
      ->required();
  eval_cmd->add_option("--split", eval.split, "split name")->required();
  eval_cmd->add_option("--ckpt", eval.ckpt_path,
                       "checkpoint (adds the enhanced column)");

  GradcheckArgs gc;
  auto* gc_cmd = app.add_subcommand(
      "gradcheck", "finite-difference check of the end-to-end loss gradient");
  gc_cmd->add_option("--variant", gc.variant, "system variant")->required();
  gc_cmd->add_option("--dtype", gc.dtype, "f32 or f64");
  gc_cmd->add_option("--seed", gc.seed, "rng seed");

  SpecArgs spec;
  auto* spec_cmd = app.add_subcommand(
      "spec", "dump a log-magnitude spectrogram as CSV");
  spec_cmd->add_option("--in", spec.in_path, "input wav")->required();
  spec_cmd->add_option("--out", spec.out_path, "output csv")->required();
  spec_cmd->add_option("--n-fft", spec.n_fft, "FFT size (power of two)");
  spec_cmd->add_option("--hop", spec.hop, "hop in samples");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (mix_cmd->parsed()) return RunMix(mix);
    if (train_cmd->parsed()) return RunTrain(train);
    if (enh_cmd->parsed()) return RunEnhance(enhance);
    if (eval_cmd->parsed()) return RunEval(eval);
    if (gc_cmd->parsed()) return RunGradcheck(gc);
    if (spec_cmd->parsed()) return RunSpec(spec);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return ExitCodeFor(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace cli
}  // namespace cdse
