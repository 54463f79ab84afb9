#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "phe/data.hpp"
#include "phe/losses.hpp"
#include "phe/model.hpp"
#include "phe/rng.hpp"

namespace phe::trainer {

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 128;
  double lr_encoder = 1e-4;
  double lr_heads = 1e-3;
  double weight_decay = 0.05;
  double ema_decay = 0.999;
  losses::LossWeights weights;  // d_max filled in by train()
  model::ModelConfig model;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AdamConstants {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<model::ParamTensor> m;  // first moments, mirroring parameter names/shapes
  std::vector<model::ParamTensor> v;  // second moments
  std::uint64_t step = 0;
};

// Decoupled-weight-decay Adam update for one tensor; step is 1-based.
void adamw_step(std::vector<double>& param, const std::vector<double>& grad, std::vector<double>& m,
                std::vector<double>& v, std::uint64_t step, double lr, double weight_decay,
                const AdamConstants& k = {});

void ema_update(std::vector<double>& shadow, const std::vector<double>& live, double decay);

struct Checkpoint {
  TrainConfig config;
  model::ParamSet live;
  model::ParamSet ema;  // used at inference
  AdamState opt;
  std::array<std::uint64_t, 6> mask_rng_state{};
  std::array<std::uint64_t, 6> shuffle_rng_state{};
  int d_max = 1;
};

// Raised when a training step produces a non-finite loss.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Full training loop: shuffled mini-batches over the support split, joint
// loss, AdamW with encoder/head parameter groups, EMA shadow weights.
Checkpoint train(const data::FeatureDataset& dataset, TrainConfig config);

// Versioned little-endian binary: magic "PHECKPT1", length-prefixed key=value
// metadata block, then named arrays (u32 name length, name bytes, u32 rank,
// u64 dims, raw 64-bit values).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace phe::trainer
