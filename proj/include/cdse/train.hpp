// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef CDSE_TRAIN_HPP_
#define CDSE_TRAIN_HPP_

#include <string>
#include <vector>

#include "cdse/checkpoint.hpp"
#include "cdse/data.hpp"
#include "cdse/model.hpp"

namespace cdse {

// Adam with bias correction over a model's parameter list. Buffers mirror
// parameter shapes; Step() consumes the gradients accumulated by Backward.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<NamedParam<float>>* params, AdamHyper hyper);

  void Step();
  int64_t step_count() const { return step_; }
  const AdamHyper& hyper() const { return hyper_; }

  OptimizerSnapshot Snapshot() const;
  void Restore(const OptimizerSnapshot& snap);

 private:
  std::vector<NamedParam<float>>* params_;
  AdamHyper hyper_;
  int64_t step_ = 0;
  std::vector<Tensor<float>> m_;
  std::vector<Tensor<float>> v_;
};

// Scales all gradients so their global L2 norm is at most max_norm; returns
// the pre-clip norm.
double ClipGradNorm(std::vector<NamedParam<float>>& params, double max_norm);

struct TrainOptions {
  int epochs = 30;
  int batch_size = 4;
  double lr = 1e-3;
  double clip_norm = 5.0;
  uint64_t seed = 0;
  double crop_seconds = 1.0;
  std::string checkpoint_dir;  // empty: no checkpoints written
  bool verbose = false;        // per-epoch lines on stderr
};

struct EpochStats {
  int epoch = 0;          // 1-based
  double train_loss = 0;  // epoch mean of the batch losses
  double valid_si_snr = 0;
};

// Deterministic training loop: fixed shuffle and crop offsets per (seed,
// epoch), one checkpoint per epoch plus the initial state. A non-finite
// loss aborts with the last good checkpoint still on disk.
std::vector<EpochStats> Train(Model<float>& model,
                              const MixtureManifest& manifest,
                              const TrainOptions& opts);

std::string HistoryCsv(const std::vector<EpochStats>& history);

// Restores parameter values (and optionally optimizer state) from a
// checkpoint into a freshly constructed model.
Model<float> ModelFromCheckpoint(const Checkpoint& ckpt);

Checkpoint SnapshotModel(const Model<float>& model, int epoch, uint64_t seed,
                         const AdamOptimizer* opt);

}  // namespace cdse

#endif  // CDSE_TRAIN_HPP_
