//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <gtest/gtest.h>
#include <json.hpp>

#include "tagmol/error.h"
#include "tagmol/training.h"

namespace tagmol {
namespace {

constexpr std::size_t kN = 5;

TrainConfig tiny_config() {
  TrainConfig c;
  c.net.max_atoms = kN;
  c.net.xdim = 4;
  c.net.zdim = 4;
  c.net.encoder_hidden = 8;
  c.net.generator_hidden = { 16, 16, 16 };
  c.net.graph_width = 8;
  c.net.graph_layers = 1;
  c.net.energy_hidden = 8;
  c.batch_size = 8;
  c.critic_steps = 5;
  c.epochs = 2;
  c.seed = 11;
  return c;
}

struct Data {
  std::vector<PairRecord> train, test;
};

Data tiny_data() {
  const auto all = synthesize_dataset(3, 24, kN);
  Data d;
  d.train.assign(all.begin(), all.begin() + 16);
  d.test.assign(all.begin() + 16, all.end());
  return d;
}

std::vector<MetricRecord> without_wall(std::vector<MetricRecord> v) {
  for (MetricRecord &r: v)
    r.wall_seconds = 0;
  return v;
}

std::filesystem::path scratch(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / "tagmol_training_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

/* Schedule */

TEST(Schedule, StepsDownAtEpoch200) {
  EXPECT_EQ(lr_at_epoch(0), 1e-4);
  EXPECT_EQ(lr_at_epoch(199), 1e-4);
  EXPECT_EQ(lr_at_epoch(200), 1e-5);
  EXPECT_EQ(lr_at_epoch(500), 1e-5);
}

TEST(Schedule, FollowsConfig) {
  TrainConfig c;
  c.lr = 0.5;
  c.lr_decayed = 0.25;
  c.lr_decay_epoch = 3;
  EXPECT_EQ(lr_at_epoch(c, 2), 0.5);
  EXPECT_EQ(lr_at_epoch(c, 3), 0.25);
}

/* Adam */

ParamGroup one_param(Scalar v) {
  ParamGroup g("p");
  g.add("w", { 1 }, { v });
  return g;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  ParamGroup g("p");
  g.add("w", { 2, 2 }, { 1, -2, 3, 0.5 });
  const ParamGroup before = g;
  AdamState s = adam_init(g);
  const std::vector<std::vector<Scalar>> zero { std::vector<Scalar>(4, 0.0) };
  for (int i = 0; i < 3; ++i)
    adam_step(s, g, zero, 1e-3, 0.0, 0.9);
  EXPECT_EQ(g, before);
  EXPECT_EQ(s.step, 3u);
}

TEST(Adam, StepCountIncrementsByOne) {
  ParamGroup g = one_param(0);
  AdamState s = adam_init(g);
  const std::vector<std::vector<Scalar>> grad { { 0.3 } };
  for (std::uint64_t i = 1; i <= 5; ++i) {
    adam_step(s, g, grad, 1e-3, 0.0, 0.9);
    EXPECT_EQ(s.step, i);
  }
}

TEST(Adam, ConstantGradientMovesByLearningRate) {
  // With bias correction both moment estimates are exact for a constant g,
  // so every step moves by lr * g / (|g| + eps). Simulated independently.
  for (const Scalar beta1: { 0.0, 0.5 }) {
    const Scalar g0 = -0.37, lr = 1e-3, b2 = 0.9, eps = 1e-8;
    ParamGroup g = one_param(2.0);
    AdamState s = adam_init(g);
    Scalar m = 0, v = 0, w = 2.0;
    for (int t = 1; t <= 200; ++t) {
      const Scalar prev = g[0].value[0];
      adam_step(s, g, std::vector<std::vector<Scalar>> { { g0 } }, lr, beta1, b2,
                eps);
      m = beta1 * m + (1 - beta1) * g0;
      v = b2 * v + (1 - b2) * g0 * g0;
      w -= lr * (m / (1 - std::pow(beta1, t)))
           / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
      EXPECT_NEAR(g[0].value[0], w, 1e-15);
      EXPECT_NEAR(g[0].value[0] - prev, lr, 1e-10) << "step " << t;
    }
  }
}

TEST(Adam, NonFiniteGradientThrowsBeforeMutating) {
  ParamGroup g = one_param(1.0);
  AdamState s = adam_init(g);
  const ParamGroup before = g;
  const AdamState s0 = s;
  const std::vector<std::vector<Scalar>> bad {
    { std::numeric_limits<Scalar>::quiet_NaN() }
  };
  EXPECT_THROW(adam_step(s, g, bad, 1e-3, 0.0, 0.9), DivergenceError);
  EXPECT_EQ(g, before);
  EXPECT_EQ(s, s0);
}

TEST(Adam, ShapeMismatchIsAContractViolation) {
  ParamGroup g = one_param(1.0);
  AdamState s = adam_init(g);
  const std::vector<std::vector<Scalar>> wrong { { 1.0, 2.0 } };
  EXPECT_THROW(adam_step(s, g, wrong, 1e-3, 0.0, 0.9), ContractViolation);
  EXPECT_THROW(adam_step(s, g, {}, 1e-3, 0.0, 0.9), ContractViolation);
}

/* Divergence */

MetricRecord finite_record(std::size_t epoch) {
  MetricRecord r;
  r.epoch = epoch;
  r.loss_d = 1;
  r.loss_g = 2;
  r.loss_e = -0.5;
  r.loss_r = 0.1;
  r.fd = 10;
  return r;
}

TEST(Divergence, NanInGeneratorLoss) {
  std::vector<MetricRecord> v { finite_record(1) };
  v[0].loss_g = std::numeric_limits<Scalar>::quiet_NaN();
  EXPECT_TRUE(divergence_check(v));
}

TEST(Divergence, FlatFiniteLossesAreFine) {
  std::vector<MetricRecord> v;
  for (std::size_t i = 1; i <= 120; ++i)
    v.push_back(finite_record(i));
  EXPECT_FALSE(divergence_check(v));
}

TEST(Divergence, CriticLossLimit) {
  std::vector<MetricRecord> v { finite_record(1) };
  v[0].loss_d = -2e4;
  EXPECT_TRUE(divergence_check(v));
  v[0].loss_d = 9e3;
  EXPECT_FALSE(divergence_check(v));
}

TEST(Divergence, RisingFdOverFiftyRecords) {
  std::vector<MetricRecord> v;
  for (std::size_t i = 1; i <= 49; ++i) {
    v.push_back(finite_record(i));
    v.back().fd = static_cast<Scalar>(i);
  }
  EXPECT_FALSE(divergence_check(v));
  v.push_back(finite_record(50));
  v.back().fd = 50;
  EXPECT_TRUE(divergence_check(v));
  ASSERT_TRUE(divergence_reason(v).has_value());
  EXPECT_NE(divergence_reason(v)->find("FD"), std::string::npos);

  // One dip inside the window resets it.
  v[20].fd = 0;
  EXPECT_FALSE(divergence_check(v));
}

/* Config */

TEST(Config, JsonRoundTrip) {
  TrainConfig c = tiny_config();
  c.net.variant = LayerVariant::kGcn;
  c.loss.literal_energy_sign = true;
  c.loss.reward_coef = 0.125;
  c.shared_batch = false;
  c.train_path = "a/train.jsonl";
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
}

TEST(Config, OverlayKeepsUnsetFields) {
  const TrainConfig base = tiny_config();
  const TrainConfig c = apply_config_json(base, R"({"seed": 99, "lr": 0.002})");
  EXPECT_EQ(c.seed, 99u);
  EXPECT_EQ(c.lr, 0.002);
  EXPECT_EQ(c.net, base.net);
  EXPECT_EQ(c.batch_size, base.batch_size);
}

TEST(Config, RejectsUnknownKeysAndWrongTypes) {
  EXPECT_THROW(config_from_json(R"({"sedd": 1})"), ConfigError);
  EXPECT_THROW(config_from_json(R"({"batch_size": "big"})"), ConfigError);
  EXPECT_THROW(config_from_json("[1, 2]"), ConfigError);
  EXPECT_THROW(config_from_json("{"), ConfigError);
}

TEST(Config, ValidationNamesTheField) {
  TrainConfig c;
  c.critic_steps = 0;
  try {
    validate_config(c);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError &e) {
    EXPECT_NE(std::string(e.what()).find("critic_steps"), std::string::npos);
  }
  c = TrainConfig {};
  c.lr = 0;
  EXPECT_THROW(validate_config(c), ConfigError);
  c = TrainConfig {};
  c.batch_size = 0;
  EXPECT_THROW(validate_config(c), ConfigError);
  EXPECT_NO_THROW(validate_config(TrainConfig {}));
}

TEST(Config, HashIgnoresEpochsAndPlumbing) {
  TrainConfig a = tiny_config(), b = a;
  b.epochs = 500;
  b.out_dir = "elsewhere";
  b.checkpoint_every = 7;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed += 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.net.xdim = 0;
  EXPECT_NE(config_hash(a), config_hash(b));
}

/* Checkpoints */

Checkpoint sample_checkpoint() {
  Checkpoint c = initial_checkpoint(tiny_config());
  c.epoch = 3;
  c.opt.critic.step = 17;
  c.opt.critic.m[0][0] = 0.25;
  c.opt.critic.v[0][0] = 1.0 / 3.0;
  return c;
}

TEST(Checkpoint, EncodeDecodeIsExact) {
  const Checkpoint c = sample_checkpoint();
  const auto bytes = encode_checkpoint(c);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back, c);
  EXPECT_EQ(encode_checkpoint(back), bytes);
}

TEST(Checkpoint, SaveLoadFileRoundTrip) {
  const Checkpoint c = sample_checkpoint();
  const auto path = scratch("roundtrip.bin");
  save_checkpoint(path, c);
  EXPECT_EQ(load_checkpoint(path), c);
  std::ifstream in(path, std::ios::binary);
  const std::vector<std::uint8_t> disk((std::istreambuf_iterator<char>(in)),
                                       std::istreambuf_iterator<char>());
  EXPECT_EQ(disk, encode_checkpoint(c));
}

CheckpointError::Kind decode_kind(std::span<const std::uint8_t> bytes) {
  try {
    decode_checkpoint(bytes);
  } catch (const CheckpointError &e) {
    return e.kind();
  }
  ADD_FAILURE() << "decode succeeded";
  return CheckpointError::Kind::kIo;
}

TEST(Checkpoint, TruncatedFileIsAChecksumError) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes.resize(bytes.size() / 2);
  EXPECT_EQ(decode_kind(bytes), CheckpointError::Kind::kChecksum);
}

TEST(Checkpoint, FlippedValueByteIsAChecksumError) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[bytes.size() / 2] ^= 0x10;
  EXPECT_EQ(decode_kind(bytes), CheckpointError::Kind::kChecksum);
}

TEST(Checkpoint, WrongVersionByte) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[8] = static_cast<std::uint8_t>(kCheckpointVersion + 1);
  EXPECT_EQ(decode_kind(bytes), CheckpointError::Kind::kVersion);
}

TEST(Checkpoint, BadMagicAndTinyInput) {
  auto bytes = encode_checkpoint(sample_checkpoint());
  bytes[0] = 'X';
  EXPECT_EQ(decode_kind(bytes), CheckpointError::Kind::kMagic);
  const std::vector<std::uint8_t> tiny { 'T', 'A' };
  EXPECT_EQ(decode_kind(tiny), CheckpointError::Kind::kMagic);
}

TEST(Checkpoint, MissingFileIsAnIoError) {
  try {
    load_checkpoint(scratch("does_not_exist.bin"));
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError &e) {
    EXPECT_EQ(e.kind(), CheckpointError::Kind::kIo);
  }
}

/* Metrics output */

TEST(Metrics, CsvHeaderAndRowsAlign) {
  MetricRecord r = finite_record(4);
  r.fd = 0.1;
  const auto cols = [](const std::string &s) {
    return std::count(s.begin(), s.end(), ',') + 1;
  };
  EXPECT_EQ(cols(metrics_csv_header()), cols(metrics_csv_row(r)));
  EXPECT_EQ(metrics_csv_header().rfind("epoch,", 0), 0u);
  // %.17g keeps doubles exact.
  const std::string row = metrics_csv_row(r);
  EXPECT_NE(row.find("0.10000000000000001"), std::string::npos);
}

TEST(Metrics, JsonLineMirrorsRecord) {
  MetricRecord r = finite_record(4);
  r.valid_fraction = 0.75;
  const auto j = nlohmann::json::parse(metrics_json_line(r));
  EXPECT_EQ(j.at("epoch").get<std::size_t>(), 4u);
  EXPECT_EQ(j.at("loss_e").get<Scalar>(), -0.5);
  EXPECT_EQ(j.at("valid_fraction").get<Scalar>(), 0.75);
}

/* Energy phase */

TEST(EnergyStep, SeparableToySeparatesMonotonically) {
  // Real ligands from the synthetic set, fake = empty graphs; the sets are
  // fixed, so only theta moves.
  TrainConfig cfg = tiny_config();
  const Data d = tiny_data();
  std::vector<Molecule> real, fake;
  Matrix x(8, static_cast<Eigen::Index>(cfg.net.xdim));
  std::mt19937_64 rng(5);
  std::normal_distribution<Scalar> nd;
  for (std::size_t b = 0; b < 8; ++b) {
    real.push_back(d.train[b].ligand);
    fake.emplace_back(kN);
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      x(static_cast<Eigen::Index>(b), c) = nd(rng);
  }
  Networks nets = init_networks(cfg.net, cfg.seed);
  const Networks before = nets;
  AdamState st = adam_init(nets.energy);
  Scalar prev = std::numeric_limits<Scalar>::infinity();
  for (int i = 0; i < 50; ++i) {
    const EnergyLossParts p = energy_step(cfg, nets, st, x, real, fake, 1e-3);
    const Scalar gap = p.real - p.fake;
    EXPECT_LT(gap, prev) << "update " << i;
    prev = gap;
  }
  EXPECT_EQ(nets.encoder, before.encoder);
  EXPECT_EQ(nets.generator, before.generator);
  EXPECT_EQ(nets.critic, before.critic);
  EXPECT_EQ(nets.reward, before.reward);
  EXPECT_NE(nets.energy, before.energy);
  EXPECT_EQ(st.step, 50u);
}

/* Training loop */

TEST(Train, ZeroEpochsReturnsInitialParameters) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 0;
  const Data d = tiny_data();
  const TrainResult r = train(cfg, d.train, d.test);
  EXPECT_TRUE(r.metrics.empty());
  EXPECT_EQ(r.final, initial_checkpoint(cfg));
  EXPECT_TRUE(r.stop_reason.empty());
}

TEST(Train, RejectsMismatchedData) {
  TrainConfig cfg = tiny_config();
  const Data d = tiny_data();
  cfg.net.max_atoms = kN + 1;
  EXPECT_THROW(train(cfg, d.train, d.test), ConfigError);
  cfg = tiny_config();
  EXPECT_THROW(train(cfg, {}, d.test), ConfigError);
  EXPECT_THROW(train(cfg, d.train, std::span(d.test).first(1)), ConfigError);
}

TEST(Train, DeterministicForConfigAndSeed) {
  const TrainConfig cfg = tiny_config();
  const Data d = tiny_data();
  const TrainResult a = train(cfg, d.train, d.test);
  const TrainResult b = train(cfg, d.train, d.test);
  ASSERT_EQ(a.metrics.size(), 2u);
  EXPECT_EQ(without_wall(a.metrics), without_wall(b.metrics));
  EXPECT_EQ(a.final, b.final);

  TrainConfig other = cfg;
  other.seed += 1;
  const TrainResult c = train(other, d.train, d.test);
  EXPECT_NE(without_wall(a.metrics), without_wall(c.metrics));
}

TEST(Train, ResumeMatchesContinuousRun) {
  const TrainConfig cfg = tiny_config();
  const Data d = tiny_data();
  const TrainResult full = train(cfg, d.train, d.test);

  TrainConfig first = cfg;
  first.epochs = 1;
  const TrainResult half = train(first, d.train, d.test);
  Checkpoint resume = decode_checkpoint(encode_checkpoint(half.final));
  resume.config.epochs = 2;
  const TrainResult rest = train(resume, d.train, d.test);
  ASSERT_EQ(rest.metrics.size(), 1u);
  EXPECT_EQ(rest.final.nets, full.final.nets);
  EXPECT_EQ(rest.final.opt, full.final.opt);
  EXPECT_EQ(without_wall(rest.metrics)[0], without_wall(full.metrics)[1]);
}

TEST(Train, TenEpochSmokeKeepsPhasesIsolated) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 10;
  cfg.critic_steps = 5;
  const Data d = tiny_data();
  std::vector<std::size_t> seen;
  TrainHooks hooks;
  hooks.on_epoch = [&](const Checkpoint &ck, const MetricRecord &rec) {
    EXPECT_EQ(ck.epoch, rec.epoch);
    seen.push_back(rec.epoch);
  };
  const TrainResult r = train(cfg, d.train, d.test, hooks);
  ASSERT_TRUE(r.stop_reason.empty()) << r.stop_reason;
  ASSERT_EQ(r.metrics.size(), 10u);
  for (std::size_t i = 0; i < 10; ++i) {
    EXPECT_EQ(r.metrics[i].epoch, i + 1);
    EXPECT_EQ(seen[i], i + 1);
  }
  const PhaseCounters &c = r.counters;
  const std::size_t iters = 10 * (d.train.size() / cfg.batch_size);
  EXPECT_EQ(c.generator_updates, iters);
  EXPECT_EQ(c.critic_updates, 5 * c.generator_updates);
  EXPECT_EQ(c.energy_updates, iters);
  EXPECT_EQ(c.reward_updates, iters);
  EXPECT_EQ(c.isolation_checks, (5 + 3) * iters);
  EXPECT_EQ(r.final.opt.critic.step, c.critic_updates);
  EXPECT_EQ(r.final.opt.generator.step, c.generator_updates);
  EXPECT_EQ(r.final.opt.encoder.step, c.generator_updates);
}

TEST(Train, UnsharedBatchesAlsoRun) {
  TrainConfig cfg = tiny_config();
  cfg.shared_batch = false;
  cfg.epochs = 1;
  const Data d = tiny_data();
  const TrainResult r = train(cfg, d.train, d.test);
  ASSERT_EQ(r.metrics.size(), 1u);
  EXPECT_TRUE(std::isfinite(r.metrics[0].loss_e));
}

TEST(Evaluate, DeterministicInSeed) {
  const TrainConfig cfg = tiny_config();
  const Data d = tiny_data();
  const Networks nets = init_networks(cfg.net, cfg.seed);
  const EvalSnapshot a = evaluate(cfg, nets, d.test, 42);
  const EvalSnapshot b = evaluate(cfg, nets, d.test, 42);
  EXPECT_EQ(a.fd, b.fd);
  EXPECT_EQ(a.energy_fake, b.energy_fake);
  EXPECT_GE(a.fd, 0);
  EXPECT_GE(a.valid_fraction, 0);
  EXPECT_LE(a.valid_fraction, 1);
}

} // namespace
} // namespace tagmol
