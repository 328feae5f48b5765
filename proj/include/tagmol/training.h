//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_TRAINING_H_
#define TAGMOL_TRAINING_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tagmol/dataset.h"
#include "tagmol/losses.h"
#include "tagmol/networks.h"

namespace tagmol {

struct TrainConfig {
  NetConfig net;
  LossWeights loss;

  std::size_t epochs = 1000;
  std::size_t critic_steps = 5; // m
  std::size_t batch_size = 64;

  Scalar lr = 1e-4;
  Scalar lr_decayed = 1e-5;
  std::size_t lr_decay_epoch = 200;
  Scalar adam_beta1 = 0.0;
  Scalar adam_beta2 = 0.9;
  Scalar adam_eps = 1e-8;

  std::uint64_t seed = 0;
  // Energy, reward and generator updates share one fresh minibatch.
  bool shared_batch = true;
  // Test pairs used by the per-epoch evaluation.
  std::size_t eval_samples = 512;

  // Run plumbing, not part of the config hash.
  std::size_t checkpoint_every = 50;
  std::string train_path;
  std::string test_path;
  std::string out_dir;

  bool operator==(const TrainConfig &) const = default;
};

// Throws ConfigError naming the first offending field.
void validate_config(const TrainConfig &cfg);

// Flat JSON object keyed by field name (network and loss fields inlined).
std::string config_to_json(const TrainConfig &cfg);
// Overlays the keys present in `json` onto `base`. Unknown keys and wrong
// types throw ConfigError. The result is not validated.
TrainConfig apply_config_json(TrainConfig base, std::string_view json);
TrainConfig config_from_json(std::string_view json);

// Hash of every field that affects the trained parameters except the epoch
// count, so a checkpoint can seed a longer run.
std::uint64_t config_hash(const TrainConfig &cfg);

/* Optimizer and schedule */

struct AdamState {
  std::uint64_t step = 0;
  std::vector<std::vector<Scalar>> m;
  std::vector<std::vector<Scalar>> v;

  bool operator==(const AdamState &) const = default;
};

AdamState adam_init(const ParamGroup &group);

// Bias-corrected Adam. `grads` holds one array per parameter of `group`.
// Throws ContractViolation on a shape mismatch and DivergenceError on a
// non-finite gradient, in both cases before touching any state.
void adam_step(AdamState &state, ParamGroup &group,
               std::span<const std::vector<Scalar>> grads, Scalar lr,
               Scalar beta1, Scalar beta2, Scalar eps = 1e-8);

// 1e-4 before epoch 200, 1e-5 from epoch 200 on (epochs count from 0).
Scalar lr_at_epoch(std::size_t epoch);
Scalar lr_at_epoch(const TrainConfig &cfg, std::size_t epoch);

/* Checkpoints */

struct Optimizers {
  AdamState encoder;
  AdamState generator;
  AdamState critic;
  AdamState energy;
  AdamState reward;

  bool operator==(const Optimizers &) const = default;
};

struct Checkpoint {
  TrainConfig config;
  Networks nets;
  Optimizers opt;
  std::uint64_t epoch = 0; // completed epochs

  bool operator==(const Checkpoint &) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Fresh networks from cfg.seed and zeroed optimizer state.
Checkpoint initial_checkpoint(const TrainConfig &cfg);

// Little-endian layout: magic "TAGMOLCK", u32 version, u64 config hash,
// config JSON, group table (names, shapes, values), Adam state per group,
// u64 epoch, trailing u64 FNV-1a over everything before it.
std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt);
// Throws CheckpointError (magic, version, checksum, truncated, mismatch).
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt);
Checkpoint load_checkpoint(const std::filesystem::path &path);

/* Metrics */

struct MetricRecord {
  std::size_t epoch = 0; // 1-based
  Scalar loss_d = 0;
  Scalar loss_g = 0;
  Scalar loss_e = 0;
  Scalar loss_r = 0;
  Scalar energy_real = 0; // held-out mean E(x, y)
  Scalar energy_fake = 0; // held-out mean E(x, y_hat)
  Scalar energy_gap = 0;  // energy_real - energy_fake
  Scalar mse_term = 0;    // held-out mean alpha (E(x,y)^2 + E(x,y_hat)^2)
  Scalar fd = 0;
  Scalar valid_fraction = 0;
  Scalar wall_seconds = 0;

  bool operator==(const MetricRecord &) const = default;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricRecord &r);
std::string metrics_json_line(const MetricRecord &r);
void write_metrics_csv(const std::filesystem::path &path,
                       std::span<const MetricRecord> records);
void write_metrics_jsonl(const std::filesystem::path &path,
                         std::span<const MetricRecord> records);

inline constexpr Scalar kCriticLossLimit = 1e4;
inline constexpr std::size_t kFdRiseWindow = 50;

// Why training should stop, judged on the records so far: a non-finite loss,
// |loss_d| above 1e4, or FD rising at every step over the last 50 records.
std::optional<std::string> divergence_reason(std::span<const MetricRecord> records);
bool divergence_check(std::span<const MetricRecord> records);

/* Evaluation and phases */

struct EvalSnapshot {
  Scalar energy_real = 0;
  Scalar energy_fake = 0;
  Scalar mse_term = 0;
  Scalar fd = 0;
  Scalar valid_fraction = 0;
};

// Held-out metrics on the first min(|test|, eval_samples) pairs with one
// argmax sample per pair; latents come from `seed`.
EvalSnapshot evaluate(const TrainConfig &cfg, const Networks &nets,
                      std::span<const PairRecord> testset, std::uint64_t seed);

// The seed evaluate() receives during training.
std::uint64_t eval_seed(const TrainConfig &cfg);

// One energy-network update on fixed embeddings and ligands; only
// nets.energy and `state` change.
EnergyLossParts energy_step(const TrainConfig &cfg, Networks &nets,
                            AdamState &state, const Matrix &x,
                            std::span<const Molecule> real,
                            std::span<const Molecule> fake, Scalar lr);

struct PhaseCounters {
  std::size_t critic_updates = 0;
  std::size_t energy_updates = 0;
  std::size_t reward_updates = 0;
  std::size_t generator_updates = 0;
  std::size_t isolation_checks = 0;
};

struct TrainResult {
  Checkpoint final;
  std::vector<MetricRecord> metrics;
  std::string stop_reason; // empty unless stopped early
  PhaseCounters counters;
};

struct TrainHooks {
  // After every completed epoch, with the state at its end.
  std::function<void(const Checkpoint &, const MetricRecord &)> on_epoch;
};

// Runs epochs start.epoch .. start.config.epochs. Each epoch has
// ceil(|train| / batch) iterations of m critic updates followed by one
// energy, one reward and one joint generator+encoder update. Every phase is
// checked to change only its own groups. Divergence stops early with the
// state of the last completed epoch.
TrainResult train(Checkpoint start, std::span<const PairRecord> trainset,
                  std::span<const PairRecord> testset,
                  const TrainHooks &hooks = {});
TrainResult train(const TrainConfig &cfg, std::span<const PairRecord> trainset,
                  std::span<const PairRecord> testset,
                  const TrainHooks &hooks = {});

} // namespace tagmol

#endif // TAGMOL_TRAINING_H_
