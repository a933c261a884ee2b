// Copyright 2026 CDSE Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Versioned binary container for trained systems: magic "CDTN", a little-
// endian u32 format version and u64 header length, a JSON header (system
// configuration, epoch, RNG seed, optimizer scalars and the tensor table of
// name/dtype/shape/offset), then raw little-endian float32 tensor data.

#ifndef CDSE_CHECKPOINT_HPP_
#define CDSE_CHECKPOINT_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cdse/config.hpp"
#include "cdse/tensor.hpp"

namespace cdse {

constexpr uint32_t kCheckpointVersion = 1;

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimizerSnapshot {
  AdamHyper hyper;
  int64_t step = 0;
  // Moment buffers keyed by parameter name.
  std::map<std::string, Tensor<float>> first_moment;
  std::map<std::string, Tensor<float>> second_moment;
};

struct Checkpoint {
  SystemConfig config;
  int epoch = 0;
  uint64_t rng_seed = 0;
  std::map<std::string, Tensor<float>> tensors;  // model parameters by name
  std::optional<OptimizerSnapshot> optimizer;
};

// Atomic save: written to a sibling temp file, then renamed into place.
void SaveCheckpoint(const std::string& path, const Checkpoint& ckpt);

// Rejects unsupported versions and truncated or inconsistent tensor tables
// without yielding a partial model.
Checkpoint LoadCheckpoint(const std::string& path);

}  // namespace cdse

#endif  // CDSE_CHECKPOINT_HPP_
