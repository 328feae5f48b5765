//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/training.h"

#include <algorithm>
#include <array>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "tagmol/autodiff.h"
#include "tagmol/error.h"
#include "tagmol/evalmetrics.h"
#include "tagmol/hash.h"

namespace tagmol {
namespace {
using json = nlohmann::ordered_json;
using ad::Tape;
using ad::Tensor;

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

void require(bool ok, const std::string &msg) {
  if (!ok)
    throw ContractViolation(msg);
}

/* Config JSON */

template <typename T>
void read_value(const json &v, const std::string &key, T &out) {
  auto bad = [&](const char *want) {
    throw ConfigError("config key '" + key + "': expected " + want + ", got "
                      + v.dump());
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean())
      bad("a boolean");
    out = v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string())
      bad("a string");
    out = v.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_unsigned())
      bad("a non-negative integer");
    out = v.get<T>();
  } else {
    if (!v.is_number())
      bad("a number");
    out = v.get<T>();
  }
}

json config_object(const TrainConfig &c) {
  json j;
  j["epochs"] = c.epochs;
  j["critic_steps"] = c.critic_steps;
  j["batch_size"] = c.batch_size;
  j["lambda"] = c.loss.lambda;
  j["alpha"] = c.loss.alpha;
  j["beta"] = c.loss.beta;
  j["gamma"] = c.loss.gamma;
  j["reward_coef"] = c.loss.reward_coef;
  j["literal_energy_sign"] = c.loss.literal_energy_sign;
  j["max_atoms"] = c.net.max_atoms;
  j["protein_features"] = c.net.protein_features;
  j["xdim"] = c.net.xdim;
  j["zdim"] = c.net.zdim;
  j["encoder_hidden"] = c.net.encoder_hidden;
  j["generator_hidden"] = c.net.generator_hidden;
  j["graph_width"] = c.net.graph_width;
  j["graph_layers"] = c.net.graph_layers;
  j["energy_hidden"] = c.net.energy_hidden;
  j["property_count"] = c.net.property_count;
  j["variant"] = std::string(variant_name(c.net.variant));
  j["lr"] = c.lr;
  j["lr_decayed"] = c.lr_decayed;
  j["lr_decay_epoch"] = c.lr_decay_epoch;
  j["adam_beta1"] = c.adam_beta1;
  j["adam_beta2"] = c.adam_beta2;
  j["adam_eps"] = c.adam_eps;
  j["seed"] = c.seed;
  j["shared_batch"] = c.shared_batch;
  j["eval_samples"] = c.eval_samples;
  j["checkpoint_every"] = c.checkpoint_every;
  j["train"] = c.train_path;
  j["test"] = c.test_path;
  j["out"] = c.out_dir;
  return j;
}

void set_field(TrainConfig &c, const std::string &key, const json &v) {
  if (key == "epochs")
    return read_value(v, key, c.epochs);
  if (key == "critic_steps")
    return read_value(v, key, c.critic_steps);
  if (key == "batch_size")
    return read_value(v, key, c.batch_size);
  if (key == "lambda")
    return read_value(v, key, c.loss.lambda);
  if (key == "alpha")
    return read_value(v, key, c.loss.alpha);
  if (key == "beta")
    return read_value(v, key, c.loss.beta);
  if (key == "gamma")
    return read_value(v, key, c.loss.gamma);
  if (key == "reward_coef")
    return read_value(v, key, c.loss.reward_coef);
  if (key == "literal_energy_sign")
    return read_value(v, key, c.loss.literal_energy_sign);
  if (key == "max_atoms")
    return read_value(v, key, c.net.max_atoms);
  if (key == "protein_features")
    return read_value(v, key, c.net.protein_features);
  if (key == "xdim")
    return read_value(v, key, c.net.xdim);
  if (key == "zdim")
    return read_value(v, key, c.net.zdim);
  if (key == "encoder_hidden")
    return read_value(v, key, c.net.encoder_hidden);
  if (key == "generator_hidden") {
    if (!v.is_array() || v.size() != c.net.generator_hidden.size())
      throw ConfigError("config key 'generator_hidden': expected an array of "
                        + std::to_string(c.net.generator_hidden.size())
                        + " integers");
    for (std::size_t i = 0; i < v.size(); ++i)
      read_value(v[i], key, c.net.generator_hidden[i]);
    return;
  }
  if (key == "graph_width")
    return read_value(v, key, c.net.graph_width);
  if (key == "graph_layers")
    return read_value(v, key, c.net.graph_layers);
  if (key == "energy_hidden")
    return read_value(v, key, c.net.energy_hidden);
  if (key == "property_count")
    return read_value(v, key, c.net.property_count);
  if (key == "variant") {
    std::string s;
    read_value(v, key, s);
    c.net.variant = parse_variant(s);
    return;
  }
  if (key == "lr")
    return read_value(v, key, c.lr);
  if (key == "lr_decayed")
    return read_value(v, key, c.lr_decayed);
  if (key == "lr_decay_epoch")
    return read_value(v, key, c.lr_decay_epoch);
  if (key == "adam_beta1")
    return read_value(v, key, c.adam_beta1);
  if (key == "adam_beta2")
    return read_value(v, key, c.adam_beta2);
  if (key == "adam_eps")
    return read_value(v, key, c.adam_eps);
  if (key == "seed")
    return read_value(v, key, c.seed);
  if (key == "shared_batch")
    return read_value(v, key, c.shared_batch);
  if (key == "eval_samples")
    return read_value(v, key, c.eval_samples);
  if (key == "checkpoint_every")
    return read_value(v, key, c.checkpoint_every);
  if (key == "train")
    return read_value(v, key, c.train_path);
  if (key == "test")
    return read_value(v, key, c.test_path);
  if (key == "out")
    return read_value(v, key, c.out_dir);
  throw ConfigError("unknown config key '" + key + "'");
}

/* Checkpoint bytes */

constexpr char kMagic[8] = { 'T', 'A', 'G', 'M', 'O', 'L', 'C', 'K' };

class Writer {
public:
  template <typename T>
  void put(T v) {
    const auto *p = reinterpret_cast<const std::uint8_t *>(&v);
    buf_.insert(buf_.end(), p, p + sizeof(T));
  }
  void bytes(const void *data, std::size_t n) {
    const auto *p = static_cast<const std::uint8_t *>(data);
    buf_.insert(buf_.end(), p, p + n);
  }
  void str(const std::string &s) {
    put<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }
  void values(const std::vector<Scalar> &v) {
    put<std::uint64_t>(v.size());
    bytes(v.data(), v.size() * sizeof(Scalar));
  }
  std::vector<std::uint8_t> take() { return std::move(buf_); }
  const std::vector<std::uint8_t> &buffer() const { return buf_; }

private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
public:
  explicit Reader(std::span<const std::uint8_t> b): b_(b) { }

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, need(sizeof(T)), sizeof(T));
    return v;
  }
  std::string str() {
    const auto n = get<std::uint64_t>();
    const auto *p = need(n);
    return std::string(reinterpret_cast<const char *>(p), n);
  }
  std::vector<Scalar> values() {
    const auto n = get<std::uint64_t>();
    if (n > b_.size() / sizeof(Scalar))
      truncated();
    std::vector<Scalar> v(n);
    std::memcpy(v.data(), need(n * sizeof(Scalar)), n * sizeof(Scalar));
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

private:
  const std::uint8_t *need(std::size_t n) {
    if (n > b_.size() - pos_)
      truncated();
    const auto *p = b_.data() + pos_;
    pos_ += n;
    return p;
  }
  [[noreturn]] static void truncated() {
    throw CheckpointError(CheckpointError::Kind::kTruncated,
                          "checkpoint: unexpected end of data");
  }

  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

std::array<const ParamGroup *, 5> groups_of(const Networks &n) {
  return { &n.encoder, &n.generator, &n.critic, &n.energy, &n.reward };
}
std::array<ParamGroup *, 5> groups_of(Networks &n) {
  return { &n.encoder, &n.generator, &n.critic, &n.energy, &n.reward };
}
std::array<const AdamState *, 5> states_of(const Optimizers &o) {
  return { &o.encoder, &o.generator, &o.critic, &o.energy, &o.reward };
}
std::array<AdamState *, 5> states_of(Optimizers &o) {
  return { &o.encoder, &o.generator, &o.critic, &o.energy, &o.reward };
}

[[noreturn]] void mismatch(const std::string &what) {
  throw CheckpointError(CheckpointError::Kind::kMismatch, "checkpoint: " + what);
}

/* Training internals */

struct Minibatch {
  Matrix xp;
  std::vector<Molecule> ligands;
};

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq { static_cast<std::uint32_t>(seed),
                      static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a),
                      static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b) };
  return std::mt19937_64(seq);
}

Minibatch gather(std::span<const PairRecord> data,
                 std::span<const std::size_t> idx) {
  Minibatch mb;
  mb.xp.resize(static_cast<Eigen::Index>(idx.size()),
               static_cast<Eigen::Index>(kProteinFeatures));
  mb.ligands.reserve(idx.size());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    mb.xp.row(static_cast<Eigen::Index>(r))
        = data[idx[r]].protein.features.transpose();
    mb.ligands.push_back(data[idx[r]].ligand);
  }
  return mb;
}

// Partial Fisher-Yates: min(batch, n) distinct indices.
Minibatch draw(std::span<const PairRecord> data, std::size_t batch,
               std::mt19937_64 &rng) {
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t k = std::min(batch, idx.size());
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return gather(data, idx);
}

std::vector<std::vector<Scalar>> grads_of(const Tensor &loss,
                                          const BoundParams &p) {
  const auto g = ad::grad(loss, p.tensors);
  std::vector<std::vector<Scalar>> out(g.size());
  for (std::size_t k = 0; k < g.size(); ++k)
    out[k].assign(g[k].values().begin(), g[k].values().end());
  return out;
}

void step(const TrainConfig &cfg, AdamState &s, ParamGroup &g,
          const Tensor &loss, const BoundParams &bound, Scalar lr) {
  adam_step(s, g, grads_of(loss, bound), lr, cfg.adam_beta1, cfg.adam_beta2,
            cfg.adam_eps);
}

using Hashes = std::array<std::uint64_t, 5>;

Hashes hashes(const Networks &n) {
  Hashes h;
  const auto g = groups_of(n);
  for (std::size_t i = 0; i < g.size(); ++i)
    h[i] = g[i]->hash();
  return h;
}

constexpr const char *kGroupNames[5]
    = { "encoder", "generator", "critic", "energy", "reward" };

// `allowed` marks groups the phase may change. Frozen groups are bound as
// constants, so a failure here is a wiring bug, not a data condition.
void check_isolation(const Hashes &before, const Hashes &after,
                     std::array<bool, 5> allowed, const char *phase) {
  for (std::size_t i = 0; i < 5; ++i)
    if (!allowed[i] && before[i] != after[i])
      throw ContractViolation(std::string("phase isolation: ") + phase
                              + " update changed the " + kGroupNames[i]
                              + " parameters");
}

Scalar critic_step(const TrainConfig &cfg, Networks &nets, Optimizers &opt,
                   const Minibatch &mb, std::mt19937_64 &rng, Scalar lr) {
  Tape tape;
  const BoundParams tau = bind(tape, nets.encoder, false);
  const BoundParams phi = bind(tape, nets.generator, false);
  const BoundParams psi = bind(tape, nets.critic, true);
  const std::size_t bt = mb.ligands.size();
  const Tensor x = encode_protein(cfg.net, tau, tape.constant(mb.xp));
  const GraphBatch fake = generate(
      cfg.net, phi, x, tape.constant(sample_latent(bt, cfg.net.zdim, rng)));
  std::vector<Scalar> eps(bt);
  std::uniform_real_distribution<Scalar> u(0, 1);
  for (Scalar &e: eps)
    e = u(rng);
  const Tensor loss = critic_loss(critic_fn(cfg.net, psi),
                                  to_batch(tape, std::span(mb.ligands)), fake,
                                  eps, cfg.loss.lambda);
  step(cfg, opt.critic, nets.critic, loss, psi, lr);
  return loss.item();
}

Matrix as_matrix(const Tensor &t) {
  Matrix m(static_cast<Eigen::Index>(t.dim(0)),
           static_cast<Eigen::Index>(t.dim(1)));
  std::copy(t.values().begin(), t.values().end(), m.data());
  return m;
}

struct FakeDraw {
  Matrix z;
  Matrix x;                     // embedding values, detached
  std::vector<Molecule> hard;   // straight-through argmax sample
};

FakeDraw draw_fakes(const TrainConfig &cfg, const Networks &nets,
                    const Minibatch &mb, std::mt19937_64 &rng) {
  Tape tape;
  FakeDraw f;
  f.z = sample_latent(mb.ligands.size(), cfg.net.zdim, rng);
  const Tensor x = encode_protein(cfg.net, bind(tape, nets.encoder, false),
                                  tape.constant(mb.xp));
  f.x = as_matrix(x);
  const GraphBatch soft = generate(cfg.net, bind(tape, nets.generator, false),
                                   x, tape.constant(f.z));
  f.hard = straight_through_sample(soft).molecules;
  return f;
}

Scalar reward_step(const TrainConfig &cfg, Networks &nets, AdamState &state,
                   std::span<const Molecule> real,
                   std::span<const Molecule> fake, Scalar lr) {
  Tape tape;
  const BoundParams omega = bind(tape, nets.reward, true);
  const std::size_t p = cfg.net.property_count;
  const Tensor loss = reward_loss(
      reward_fn(cfg.net, omega), to_batch(tape, real), oracle_targets(real, p),
      to_batch(tape, fake), oracle_targets(fake, p), cfg.loss.reward_coef);
  step(cfg, state, nets.reward, loss, omega, lr);
  return loss.item();
}

Scalar generator_step(const TrainConfig &cfg, Networks &nets, Optimizers &opt,
                      const Minibatch &mb, const Matrix &z, Scalar lr) {
  Tape tape;
  const BoundParams tau = bind(tape, nets.encoder, true);
  const BoundParams phi = bind(tape, nets.generator, true);
  const BoundParams psi = bind(tape, nets.critic, false);
  const BoundParams theta = bind(tape, nets.energy, false);
  const BoundParams omega = bind(tape, nets.reward, false);
  const Tensor x = encode_protein(cfg.net, tau, tape.constant(mb.xp));
  const GraphBatch soft = generate(cfg.net, phi, x, tape.constant(z));
  const DiscreteSample hard = straight_through_sample(soft);
  const std::size_t p = cfg.net.property_count;
  const Tensor loss = generator_loss(
      critic_fn(cfg.net, psi), energy_fn(cfg.net, theta),
      reward_fn(cfg.net, omega), x, to_batch(tape, std::span(mb.ligands)), soft,
      hard.hard, oracle_targets(mb.ligands, p),
      oracle_targets(hard.molecules, p), cfg.loss);
  // Both gradients come from one backward pass before either update.
  const auto g_tau = grads_of(loss, tau);
  const auto g_phi = grads_of(loss, phi);
  adam_step(opt.encoder, nets.encoder, g_tau, lr, cfg.adam_beta1,
            cfg.adam_beta2, cfg.adam_eps);
  adam_step(opt.generator, nets.generator, g_phi, lr, cfg.adam_beta1,
            cfg.adam_beta2, cfg.adam_eps);
  return loss.item();
}

void check_data(const TrainConfig &cfg, std::span<const PairRecord> data,
                const char *which, std::size_t min_size) {
  if (data.size() < min_size)
    throw ConfigError(std::string(which) + " set needs at least "
                      + std::to_string(min_size) + " pairs, got "
                      + std::to_string(data.size()));
  for (const PairRecord &r: data)
    if (r.ligand.num_atoms() != cfg.net.max_atoms)
      throw ConfigError(std::string(which) + " pair '" + r.protein.id
                        + "' has " + std::to_string(r.ligand.num_atoms())
                        + " atom slots, config max_atoms is "
                        + std::to_string(cfg.net.max_atoms));
}

std::string fmt(Scalar v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
} // namespace

/* Config */

void validate_config(const TrainConfig &c) {
  auto check = [](bool ok, const char *msg) {
    if (!ok)
      throw ConfigError(msg);
  };
  check(c.critic_steps >= 1, "critic_steps must be >= 1");
  check(c.batch_size >= 1, "batch_size must be >= 1");
  check(c.lr > 0 && std::isfinite(c.lr), "lr must be positive");
  check(c.lr_decayed > 0 && std::isfinite(c.lr_decayed),
        "lr_decayed must be positive");
  check(c.adam_beta1 >= 0 && c.adam_beta1 < 1, "adam_beta1 must be in [0,1)");
  check(c.adam_beta2 >= 0 && c.adam_beta2 < 1, "adam_beta2 must be in [0,1)");
  check(c.adam_eps > 0, "adam_eps must be positive");
  check(c.loss.lambda >= 0, "lambda must be >= 0");
  check(c.loss.alpha >= 0, "alpha must be >= 0");
  check(std::isfinite(c.loss.beta) && std::isfinite(c.loss.gamma)
            && std::isfinite(c.loss.reward_coef),
        "beta, gamma and reward_coef must be finite");
  check(c.net.max_atoms >= 1, "max_atoms must be >= 1");
  check(c.net.protein_features == kProteinFeatures,
        "protein_features must be 21");
  check(c.net.zdim >= 1, "zdim must be >= 1");
  check(c.net.xdim == 0 || c.net.encoder_hidden >= 1,
        "encoder_hidden must be >= 1");
  check(std::all_of(c.net.generator_hidden.begin(), c.net.generator_hidden.end(),
                    [](std::size_t h) { return h >= 1; }),
        "generator_hidden entries must be >= 1");
  check(c.net.graph_width >= 1, "graph_width must be >= 1");
  check(c.net.graph_layers >= 1, "graph_layers must be >= 1");
  check(c.net.energy_hidden >= 1, "energy_hidden must be >= 1");
  check(c.net.property_count >= 1 && c.net.property_count <= kPropertyCount,
        "property_count must be in [1,3]");
  check(c.eval_samples >= 2, "eval_samples must be >= 2");
  check(c.checkpoint_every >= 1, "checkpoint_every must be >= 1");
}

std::string config_to_json(const TrainConfig &cfg) {
  return config_object(cfg).dump(2);
}

TrainConfig apply_config_json(TrainConfig base, std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error &e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object())
    throw ConfigError("config must be a JSON object");
  for (const auto &[key, value]: j.items())
    set_field(base, key, value);
  return base;
}

TrainConfig config_from_json(std::string_view json) {
  return apply_config_json(TrainConfig {}, json);
}

std::uint64_t config_hash(const TrainConfig &cfg) {
  json j = config_object(cfg);
  for (const char *k: { "epochs", "checkpoint_every", "train", "test", "out" })
    j.erase(k);
  return fnv1a(j.dump());
}

/* Optimizer and schedule */

AdamState adam_init(const ParamGroup &group) {
  AdamState s;
  for (const Param &p: group) {
    s.m.emplace_back(p.value.size(), 0.0);
    s.v.emplace_back(p.value.size(), 0.0);
  }
  return s;
}

void adam_step(AdamState &state, ParamGroup &group,
               std::span<const std::vector<Scalar>> grads, Scalar lr,
               Scalar beta1, Scalar beta2, Scalar eps) {
  require(grads.size() == group.size() && state.m.size() == group.size()
              && state.v.size() == group.size(),
          "adam_step: " + group.name() + " has " + std::to_string(group.size())
              + " parameters, got " + std::to_string(grads.size())
              + " gradients");
  for (std::size_t k = 0; k < group.size(); ++k) {
    const std::size_t n = group[k].value.size();
    require(grads[k].size() == n && state.m[k].size() == n
                && state.v[k].size() == n,
            "adam_step: size mismatch for " + group.name() + "."
                + group[k].name);
    for (Scalar g: grads[k])
      if (!std::isfinite(g))
        throw DivergenceError("non-finite gradient for " + group.name() + "."
                              + group[k].name);
  }

  ++state.step;
  const Scalar t = static_cast<Scalar>(state.step);
  const Scalar c1 = 1 - std::pow(beta1, t);
  const Scalar c2 = 1 - std::pow(beta2, t);
  using Map = Eigen::Map<Eigen::ArrayXd>;
  using CMap = Eigen::Map<const Eigen::ArrayXd>;
  for (std::size_t k = 0; k < group.size(); ++k) {
    const auto n = static_cast<Eigen::Index>(grads[k].size());
    CMap g(grads[k].data(), n);
    Map m(state.m[k].data(), n);
    Map v(state.v[k].data(), n);
    Map p(group[k].value.data(), n);
    m = beta1 * m + (1 - beta1) * g;
    v = beta2 * v + (1 - beta2) * g.square();
    p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

Scalar lr_at_epoch(std::size_t epoch) {
  return lr_at_epoch(TrainConfig {}, epoch);
}

Scalar lr_at_epoch(const TrainConfig &cfg, std::size_t epoch) {
  return epoch < cfg.lr_decay_epoch ? cfg.lr : cfg.lr_decayed;
}

/* Checkpoints */

Checkpoint initial_checkpoint(const TrainConfig &cfg) {
  Checkpoint c;
  c.config = cfg;
  c.nets = init_networks(cfg.net, cfg.seed);
  const auto g = groups_of(c.nets);
  const auto s = states_of(c.opt);
  for (std::size_t i = 0; i < g.size(); ++i)
    *s[i] = adam_init(*g[i]);
  return c;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(config_hash(ckpt.config));
  w.str(config_to_json(ckpt.config));

  const auto groups = groups_of(ckpt.nets);
  w.put<std::uint32_t>(groups.size());
  for (const ParamGroup *g: groups) {
    w.str(g->name());
    w.put<std::uint32_t>(g->size());
    for (const Param &p: *g) {
      w.str(p.name);
      w.put<std::uint32_t>(p.shape.size());
      for (std::size_t d: p.shape)
        w.put<std::uint64_t>(d);
      w.values(p.value);
    }
  }
  for (const AdamState *s: states_of(ckpt.opt)) {
    w.put<std::uint64_t>(s->step);
    w.put<std::uint32_t>(s->m.size());
    for (std::size_t k = 0; k < s->m.size(); ++k) {
      w.values(s->m[k]);
      w.values(s->v[k]);
    }
  }
  w.put<std::uint64_t>(ckpt.epoch);
  const std::uint64_t sum
      = fnv1a_pod(w.buffer().data(), w.buffer().size(), 0xcbf29ce484222325ULL);
  w.put(sum);
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  using Kind = CheckpointError::Kind;
  if (bytes.size() < sizeof kMagic
      || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0)
    throw CheckpointError(Kind::kMagic, "checkpoint: not a tagmol checkpoint");
  Reader head(bytes.subspan(sizeof kMagic));
  const auto version = head.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(Kind::kVersion,
                          "checkpoint: format version "
                              + std::to_string(version) + ", expected "
                              + std::to_string(kCheckpointVersion));
  if (bytes.size() < sizeof kMagic + 4 + 8)
    throw CheckpointError(Kind::kChecksum, "checkpoint: checksum missing");
  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored;
  std::memcpy(&stored, bytes.data() + body.size(), 8);
  if (fnv1a_pod(body.data(), body.size(), 0xcbf29ce484222325ULL) != stored)
    throw CheckpointError(Kind::kChecksum,
                          "checkpoint: checksum mismatch (truncated or "
                          "corrupted file)");

  Reader r(body.subspan(sizeof kMagic + 4));
  Checkpoint c;
  const auto hash = r.get<std::uint64_t>();
  try {
    c.config = config_from_json(r.str());
  } catch (const ConfigError &e) {
    mismatch(std::string("embedded config unreadable: ") + e.what());
  }
  if (config_hash(c.config) != hash)
    mismatch("config hash does not match the embedded config");

  // The stored layout must be exactly what this config builds.
  const Checkpoint fresh = initial_checkpoint(c.config);
  const auto want = groups_of(fresh.nets);
  const auto groups = groups_of(c.nets);
  if (r.get<std::uint32_t>() != groups.size())
    mismatch("wrong number of parameter groups");
  for (std::size_t i = 0; i < groups.size(); ++i) {
    const std::string name = r.str();
    if (name != want[i]->name())
      mismatch("expected group " + want[i]->name() + ", found " + name);
    ParamGroup g(name);
    const auto count = r.get<std::uint32_t>();
    if (count != want[i]->size())
      mismatch("group " + name + " has a different parameter count");
    for (std::size_t k = 0; k < count; ++k) {
      std::string pname = r.str();
      ad::Shape shape(r.get<std::uint32_t>());
      for (std::size_t &d: shape)
        d = r.get<std::uint64_t>();
      std::vector<Scalar> value = r.values();
      const Param &expect = (*want[i])[k];
      if (pname != expect.name || shape != expect.shape)
        mismatch("parameter " + name + "." + pname + " " + ad::shape_str(shape)
                 + " does not match " + expect.name + " "
                 + ad::shape_str(expect.shape));
      if (value.size() != expect.value.size())
        mismatch("parameter " + name + "." + pname + " has the wrong size");
      g.add(std::move(pname), std::move(shape), std::move(value));
    }
    *groups[i] = std::move(g);
  }
  const auto states = states_of(c.opt);
  for (std::size_t i = 0; i < states.size(); ++i) {
    AdamState &s = *states[i];
    s.step = r.get<std::uint64_t>();
    if (r.get<std::uint32_t>() != groups[i]->size())
      mismatch("optimizer state of " + groups[i]->name() + " has the wrong size");
    for (std::size_t k = 0; k < groups[i]->size(); ++k) {
      s.m.push_back(r.values());
      s.v.push_back(r.values());
      const std::size_t n = (*groups[i])[k].value.size();
      if (s.m.back().size() != n || s.v.back().size() != n)
        mismatch("optimizer moments of " + groups[i]->name()
                 + " have the wrong size");
    }
  }
  c.epoch = r.get<std::uint64_t>();
  if (!r.done())
    throw CheckpointError(Kind::kTruncated, "checkpoint: trailing bytes");
  return c;
}

void save_checkpoint(const std::filesystem::path &path, const Checkpoint &ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
      throw CheckpointError(CheckpointError::Kind::kIo,
                            "cannot write checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "cannot move checkpoint into place at "
                              + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw CheckpointError(CheckpointError::Kind::kIo,
                          "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const CheckpointError &e) {
    throw CheckpointError(e.kind(), path.string() + ": " + e.what());
  }
}

/* Metrics */

std::string metrics_csv_header() {
  return "epoch,loss_d,loss_g,loss_e,loss_r,energy_real,energy_fake,"
         "energy_gap,mse_term,fd,valid_fraction,wall_seconds";
}

std::string metrics_csv_row(const MetricRecord &r) {
  std::string s = std::to_string(r.epoch);
  for (Scalar v: { r.loss_d, r.loss_g, r.loss_e, r.loss_r, r.energy_real,
                   r.energy_fake, r.energy_gap, r.mse_term, r.fd,
                   r.valid_fraction, r.wall_seconds })
    s += "," + fmt(v);
  return s;
}

std::string metrics_json_line(const MetricRecord &r) {
  json j;
  j["epoch"] = r.epoch;
  j["loss_d"] = r.loss_d;
  j["loss_g"] = r.loss_g;
  j["loss_e"] = r.loss_e;
  j["loss_r"] = r.loss_r;
  j["energy_real"] = r.energy_real;
  j["energy_fake"] = r.energy_fake;
  j["energy_gap"] = r.energy_gap;
  j["mse_term"] = r.mse_term;
  j["fd"] = r.fd;
  j["valid_fraction"] = r.valid_fraction;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

void write_metrics_csv(const std::filesystem::path &path,
                       std::span<const MetricRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  out << metrics_csv_header() << '\n';
  for (const MetricRecord &r: records)
    out << metrics_csv_row(r) << '\n';
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
}

void write_metrics_jsonl(const std::filesystem::path &path,
                         std::span<const MetricRecord> records) {
  std::ofstream out(path, std::ios::trunc);
  for (const MetricRecord &r: records)
    out << metrics_json_line(r) << '\n';
  if (!out)
    throw std::runtime_error("cannot write " + path.string());
}

std::optional<std::string>
divergence_reason(std::span<const MetricRecord> records) {
  if (records.empty())
    return std::nullopt;
  const MetricRecord &last = records.back();
  const std::string at = " at epoch " + std::to_string(last.epoch);
  const std::pair<const char *, Scalar> losses[] = {
    { "loss_d", last.loss_d },
    { "loss_g", last.loss_g },
    { "loss_e", last.loss_e },
    { "loss_r", last.loss_r },
  };
  for (const auto &[name, v]: losses)
    if (!std::isfinite(v))
      return std::string("non-finite ") + name + at;
  if (std::abs(last.loss_d) > kCriticLossLimit)
    return "critic loss " + fmt(last.loss_d) + " exceeds 1e4" + at;
  if (records.size() >= kFdRiseWindow) {
    const auto tail = records.last(kFdRiseWindow);
    bool rising = true;
    for (std::size_t i = 1; i < tail.size() && rising; ++i)
      rising = tail[i].fd > tail[i - 1].fd;
    if (rising)
      return "FD rose for " + std::to_string(kFdRiseWindow)
             + " consecutive evaluations" + at;
  }
  return std::nullopt;
}

bool divergence_check(std::span<const MetricRecord> records) {
  return divergence_reason(records).has_value();
}

/* Evaluation and phases */

std::uint64_t eval_seed(const TrainConfig &cfg) {
  return fnv1a("eval", cfg.seed);
}

EvalSnapshot evaluate(const TrainConfig &cfg, const Networks &nets,
                      std::span<const PairRecord> testset, std::uint64_t seed) {
  const std::size_t n = std::min(testset.size(), cfg.eval_samples);
  require(n >= 2, "evaluate: need at least two test pairs");
  std::mt19937_64 rng(seed);
  std::vector<Molecule> real, fake;
  Scalar sum_real = 0, sum_fake = 0, sum_mse = 0;
  std::size_t valid = 0;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t rows = std::min(cfg.batch_size, n - start);
    std::vector<std::size_t> idx(rows);
    std::iota(idx.begin(), idx.end(), start);
    const Minibatch mb = gather(testset, idx);

    Tape tape;
    const Tensor x = encode_protein(cfg.net, bind(tape, nets.encoder, false),
                                    tape.constant(mb.xp));
    const GraphBatch soft = generate(
        cfg.net, bind(tape, nets.generator, false), x,
        tape.constant(sample_latent(rows, cfg.net.zdim, rng)));
    DiscreteSample d = straight_through_sample(soft);
    const BoundParams theta = bind(tape, nets.energy, false);
    const auto er = energy_score(cfg.net, theta, x,
                                 to_batch(tape, std::span(mb.ligands)))
                        .values();
    const auto ef = energy_score(cfg.net, theta, x, d.hard).values();
    for (std::size_t b = 0; b < rows; ++b) {
      sum_real += er[b];
      sum_fake += ef[b];
      sum_mse += cfg.loss.alpha * (er[b] * er[b] + ef[b] * ef[b]);
      valid += is_chemically_valid(d.molecules[b]) ? 1 : 0;
    }
    real.insert(real.end(), mb.ligands.begin(), mb.ligands.end());
    fake.insert(fake.end(), std::make_move_iterator(d.molecules.begin()),
                std::make_move_iterator(d.molecules.end()));
  }
  EvalSnapshot s;
  const Scalar count = static_cast<Scalar>(n);
  s.energy_real = sum_real / count;
  s.energy_fake = sum_fake / count;
  s.mse_term = sum_mse / count;
  s.valid_fraction = static_cast<Scalar>(valid) / count;
  s.fd = frechet_distance(FeatureCloud::of(real), FeatureCloud::of(fake));
  return s;
}

EnergyLossParts energy_step(const TrainConfig &cfg, Networks &nets,
                            AdamState &state, const Matrix &x,
                            std::span<const Molecule> real,
                            std::span<const Molecule> fake, Scalar lr) {
  Tape tape;
  const BoundParams theta = bind(tape, nets.energy, true);
  EnergyLossParts parts;
  const Tensor loss
      = energy_loss(energy_fn(cfg.net, theta), tape.constant(x),
                    to_batch(tape, real), to_batch(tape, fake), cfg.loss.alpha,
                    &parts);
  step(cfg, state, nets.energy, loss, theta, lr);
  return parts;
}

TrainResult train(const TrainConfig &cfg, std::span<const PairRecord> trainset,
                  std::span<const PairRecord> testset,
                  const TrainHooks &hooks) {
  validate_config(cfg);
  return train(initial_checkpoint(cfg), trainset, testset, hooks);
}

TrainResult train(Checkpoint start, std::span<const PairRecord> trainset,
                  std::span<const PairRecord> testset,
                  const TrainHooks &hooks) {
  const TrainConfig cfg = start.config;
  validate_config(cfg);
  check_data(cfg, trainset, "training", 1);
  check_data(cfg, testset, "test", 2);

  TrainResult res;
  res.final = std::move(start);
  Checkpoint &ck = res.final;
  Networks &nets = ck.nets;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t iters
      = (trainset.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::array<bool, 5> only_critic { false, false, true, false, false };
  const std::array<bool, 5> only_energy { false, false, false, true, false };
  const std::array<bool, 5> only_reward { false, false, false, false, true };
  const std::array<bool, 5> only_gen { true, true, false, false, false };

  for (std::size_t epoch = ck.epoch; epoch < cfg.epochs; ++epoch) {
    const Scalar lr = lr_at_epoch(cfg, epoch);
    std::mt19937_64 rng = stream(cfg.seed, epoch, 0x7472);
    const Checkpoint snapshot = ck;
    Scalar sum_d = 0, sum_g = 0, sum_e = 0, sum_r = 0;
    PhaseCounters counters = res.counters;
    try {
      Hashes h = hashes(nets);
      auto advance = [&](std::array<bool, 5> allowed, const char *phase) {
        const Hashes after = hashes(nets);
        check_isolation(h, after, allowed, phase);
        h = after;
        ++counters.isolation_checks;
      };
      for (std::size_t it = 0; it < iters; ++it) {
        const std::size_t critic_before = counters.critic_updates;
        for (std::size_t s = 0; s < cfg.critic_steps; ++s) {
          const Minibatch mb = draw(trainset, cfg.batch_size, rng);
          sum_d += critic_step(cfg, nets, ck.opt, mb, rng, lr);
          ++counters.critic_updates;
          advance(only_critic, "critic");
        }

        const Minibatch mb = draw(trainset, cfg.batch_size, rng);
        const FakeDraw f = draw_fakes(cfg, nets, mb, rng);
        EnergyLossParts pe;
        if (cfg.shared_batch) {
          pe = energy_step(cfg, nets, ck.opt.energy, f.x, mb.ligands, f.hard,
                           lr);
        } else {
          const Minibatch me = draw(trainset, cfg.batch_size, rng);
          const FakeDraw fe = draw_fakes(cfg, nets, me, rng);
          pe = energy_step(cfg, nets, ck.opt.energy, fe.x, me.ligands, fe.hard,
                           lr);
        }
        sum_e += pe.real - pe.fake + pe.mse;
        ++counters.energy_updates;
        advance(only_energy, "energy");

        if (cfg.shared_batch) {
          sum_r += reward_step(cfg, nets, ck.opt.reward, mb.ligands, f.hard, lr);
        } else {
          const Minibatch mr = draw(trainset, cfg.batch_size, rng);
          const FakeDraw fr = draw_fakes(cfg, nets, mr, rng);
          sum_r += reward_step(cfg, nets, ck.opt.reward, mr.ligands, fr.hard,
                               lr);
        }
        ++counters.reward_updates;
        advance(only_reward, "reward");

        sum_g += generator_step(cfg, nets, ck.opt, mb, f.z, lr);
        ++counters.generator_updates;
        advance(only_gen, "generator");

        if (counters.critic_updates - critic_before != cfg.critic_steps)
          throw ContractViolation("critic update count per generator update "
                                  "differs from critic_steps");
      }
    } catch (const DivergenceError &e) {
      ck = snapshot;
      res.stop_reason = e.what();
      break;
    }
    res.counters = counters;

    const EvalSnapshot ev = evaluate(cfg, nets, testset, eval_seed(cfg));
    MetricRecord rec;
    rec.epoch = epoch + 1;
    const Scalar n_it = static_cast<Scalar>(iters);
    rec.loss_d = sum_d / (n_it * static_cast<Scalar>(cfg.critic_steps));
    rec.loss_g = sum_g / n_it;
    rec.loss_e = sum_e / n_it;
    rec.loss_r = sum_r / n_it;
    rec.energy_real = ev.energy_real;
    rec.energy_fake = ev.energy_fake;
    rec.energy_gap = ev.energy_real - ev.energy_fake;
    rec.mse_term = ev.mse_term;
    rec.fd = ev.fd;
    rec.valid_fraction = ev.valid_fraction;
    rec.wall_seconds = std::chrono::duration<Scalar>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    ck.epoch = epoch + 1;
    res.metrics.push_back(rec);
    if (hooks.on_epoch)
      hooks.on_epoch(ck, rec);
    if (auto why = divergence_reason(res.metrics)) {
      res.stop_reason = *why;
      break;
    }
  }
  return res;
}

} // namespace tagmol
