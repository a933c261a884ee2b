// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "cdse/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <unordered_map>

#include "cdse/metrics.hpp"

namespace cdse {

namespace fs = std::filesystem;

AdamOptimizer::AdamOptimizer(std::vector<NamedParam<float>>* params,
                             AdamHyper hyper)
    : params_(params), hyper_(hyper) {
  CDSE_CHECK(hyper_.lr > 0, ErrorKind::kParameter, "Adam lr must be > 0");
  m_.reserve(params_->size());
  v_.reserve(params_->size());
  for (const auto& p : *params_) {
    m_.emplace_back(p.var.shape());
    v_.emplace_back(p.var.shape());
  }
}

void AdamOptimizer::Step() {
  ++step_;
  const double b1 = hyper_.beta1, b2 = hyper_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (size_t i = 0; i < params_->size(); ++i) {
    auto& p = (*params_)[i];
    CDSE_CHECK(p.var.has_grad(), ErrorKind::kContract,
               "adam_step: parameter '", p.name, "' has no gradient");
    Tensor<float>& w = p.var.value();
    const Tensor<float>& g = p.var.grad();
    Tensor<float>& m = m_[i];
    Tensor<float>& v = v_[i];
    for (int64_t j = 0; j < w.numel(); ++j) {
      const double gj = g[j];
      const double mj = b1 * m[j] + (1.0 - b1) * gj;
      const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double m_hat = mj / bc1;
      const double v_hat = vj / bc2;
      w[j] = static_cast<float>(w[j] - hyper_.lr * m_hat /
                                           (std::sqrt(v_hat) + hyper_.eps));
    }
    w.CheckFinite("adam_step");
  }
}

OptimizerSnapshot AdamOptimizer::Snapshot() const {
  OptimizerSnapshot snap;
  snap.hyper = hyper_;
  snap.step = step_;
  for (size_t i = 0; i < params_->size(); ++i) {
    snap.first_moment.emplace((*params_)[i].name, m_[i]);
    snap.second_moment.emplace((*params_)[i].name, v_[i]);
  }
  return snap;
}

void AdamOptimizer::Restore(const OptimizerSnapshot& snap) {
  hyper_ = snap.hyper;
  step_ = snap.step;
  for (size_t i = 0; i < params_->size(); ++i) {
    const auto& name = (*params_)[i].name;
    auto mi = snap.first_moment.find(name);
    auto vi = snap.second_moment.find(name);
    CDSE_CHECK(mi != snap.first_moment.end() &&
                   vi != snap.second_moment.end(),
               ErrorKind::kParse, "optimizer state missing moments for ",
               name);
    CDSE_CHECK(mi->second.SameShape(m_[i]), ErrorKind::kDimension,
               "moment shape mismatch for ", name);
    m_[i] = mi->second;
    v_[i] = vi->second;
  }
}

double ClipGradNorm(std::vector<NamedParam<float>>& params, double max_norm) {
  CDSE_CHECK(max_norm > 0, ErrorKind::kParameter, "max_norm must be > 0");
  double sq = 0.0;
  for (auto& p : params) {
    if (!p.var.has_grad()) continue;
    const Tensor<float>& g = p.var.grad();
    for (int64_t j = 0; j < g.numel(); ++j)
      sq += static_cast<double>(g[j]) * g[j];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const float scale = static_cast<float>(max_norm / norm);
    for (auto& p : params) {
      if (!p.var.has_grad()) continue;
      Tensor<float>& g = p.var.grad();
      for (int64_t j = 0; j < g.numel(); ++j) g[j] *= scale;
    }
  }
  return norm;
}

Checkpoint SnapshotModel(const Model<float>& model, int epoch, uint64_t seed,
                         const AdamOptimizer* opt) {
  Checkpoint ckpt;
  ckpt.config = model.config();
  ckpt.epoch = epoch;
  ckpt.rng_seed = seed;
  for (const auto& p : model.params())
    ckpt.tensors.emplace(p.name, p.var.value());
  if (opt != nullptr) ckpt.optimizer = opt->Snapshot();
  return ckpt;
}

Model<float> ModelFromCheckpoint(const Checkpoint& ckpt) {
  Model<float> model(ckpt.config, ckpt.rng_seed);
  auto& params = model.params();
  CDSE_CHECK(params.size() == ckpt.tensors.size(), ErrorKind::kParse,
             "checkpoint holds ", ckpt.tensors.size(), " tensors but the ",
             "configuration instantiates ", params.size(), " parameters");
  for (auto& p : params) {
    auto it = ckpt.tensors.find(p.name);
    CDSE_CHECK(it != ckpt.tensors.end(), ErrorKind::kParse,
               "checkpoint missing parameter ", p.name);
    CDSE_CHECK(it->second.SameShape(p.var.value()), ErrorKind::kDimension,
               "checkpoint shape ", ShapeStr(it->second.shape()),
               " does not match parameter ", p.name, " ",
               ShapeStr(p.var.value().shape()));
    p.var.value() = it->second;
  }
  return model;
}

namespace {

struct ClipPair {
  std::vector<float> mixture;
  std::vector<float> clean;
};

ClipPair LoadPair(const MixtureManifest& manifest, const MixtureRecord& rec) {
  AudioClip mix = ReadWav(manifest.Resolve(rec.mixture_path));
  AudioClip clean = ReadWav(manifest.Resolve(rec.clean_path));
  CDSE_CHECK(mix.samples.size() == clean.samples.size(), ErrorKind::kParse,
             "mixture/clean length mismatch for ", rec.mixture_path);
  return {std::move(mix.samples), std::move(clean.samples)};
}

}  // namespace

std::vector<EpochStats> Train(Model<float>& model,
                              const MixtureManifest& manifest,
                              const TrainOptions& opts) {
  CDSE_CHECK(opts.epochs >= 0 && opts.batch_size >= 1, ErrorKind::kParameter,
             "epochs must be >= 0 and batch_size >= 1");
  const auto train_recs = manifest.Split("train");
  const auto valid_recs = manifest.Split("valid");
  CDSE_CHECK(!train_recs.empty(), ErrorKind::kConfig,
             "manifest has no train split");
  CDSE_CHECK(!valid_recs.empty(), ErrorKind::kConfig,
             "manifest has no valid split");

  // Clips are small at desk scale; decode once up front.
  std::vector<ClipPair> train_data;
  train_data.reserve(train_recs.size());
  for (const auto* r : train_recs) train_data.push_back(LoadPair(manifest, *r));
  std::vector<ClipPair> valid_data;
  valid_data.reserve(valid_recs.size());
  for (const auto* r : valid_recs) valid_data.push_back(LoadPair(manifest, *r));

  const int64_t crop = static_cast<int64_t>(
      std::llround(opts.crop_seconds * model.config().sample_rate));

  AdamOptimizer adam(&model.params(),
                     AdamHyper{opts.lr, 0.9, 0.999, 1e-8});

  auto write_ckpt = [&](int epoch) {
    if (opts.checkpoint_dir.empty()) return;
    char name[64];
    if (epoch == 0) {
      std::snprintf(name, sizeof(name), "init.ckpt");
    } else {
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
    }
    SaveCheckpoint((fs::path(opts.checkpoint_dir) / name).string(),
                   SnapshotModel(model, epoch, opts.seed, &adam));
  };
  if (!opts.checkpoint_dir.empty())
    fs::create_directories(opts.checkpoint_dir);
  write_ckpt(0);

  std::vector<EpochStats> history;
  std::vector<size_t> order(train_data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= opts.epochs; ++epoch) {
    Rng rng = Rng::Derive(opts.seed, 0xE70C0000ULL + uint64_t(epoch));
    rng.Shuffle(order);

    double loss_sum = 0.0;
    int64_t loss_count = 0;
    for (size_t start = 0; start < order.size();
         start += static_cast<size_t>(opts.batch_size)) {
      const size_t end = std::min(order.size(),
                                  start + static_cast<size_t>(opts.batch_size));
      std::vector<Var<float>> estimates;
      std::vector<Tensor<float>> references;
      for (size_t bi = start; bi < end; ++bi) {
        const ClipPair& pair = train_data[order[bi]];
        const int64_t len = static_cast<int64_t>(pair.mixture.size());
        const int64_t use = std::min(crop, len);
        const int64_t max_off = len - use;
        const int64_t off =
            max_off > 0
                ? static_cast<int64_t>(rng.Below(uint64_t(max_off) + 1))
                : 0;
        std::vector<float> mix_crop(pair.mixture.begin() + off,
                                    pair.mixture.begin() + off + use);
        std::vector<float> ref_crop(pair.clean.begin() + off,
                                    pair.clean.begin() + off + use);
        estimates.push_back(model.Forward(mix_crop));
        references.emplace_back(Shape{static_cast<int>(use)},
                                std::move(ref_crop));
      }
      Var<float> loss = NegSiSnrLoss(estimates, references);
      const double loss_value = loss.value()[0];
      CDSE_CHECK(std::isfinite(loss_value), ErrorKind::kNumeric,
                 "non-finite training loss at epoch ", epoch,
                 "; last good checkpoint retained");
      model.ZeroGrad();
      Backward(loss);
      ClipGradNorm(model.params(), opts.clip_norm);
      adam.Step();
      loss_sum += loss_value * static_cast<double>(end - start);
      loss_count += static_cast<int64_t>(end - start);
    }

    double valid_sum = 0.0;
    for (const auto& pair : valid_data) {
      const std::vector<float> enhanced = model.Enhance(pair.mixture);
      valid_sum += SiSnrDb(enhanced, pair.clean);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(loss_count);
    stats.valid_si_snr = valid_sum / static_cast<double>(valid_data.size());
    history.push_back(stats);
    if (opts.verbose) {
      std::fprintf(stderr, "epoch %3d  train_loss %+9.4f  valid_si_snr %+8.4f\n",
                   stats.epoch, stats.train_loss, stats.valid_si_snr);
    }
    write_ckpt(epoch);
  }
  return history;
}

std::string HistoryCsv(const std::vector<EpochStats>& history) {
  std::string out = "epoch,train_loss,valid_si_snr\n";
  char line[128];
  for (const auto& h : history) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g\n", h.epoch, h.train_loss,
                  h.valid_si_snr);
    out += line;
  }
  return out;
}

}  // namespace cdse
