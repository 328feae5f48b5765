//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

// Acceptance runner. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. Criteria 6-8 train three 300-epoch runs on the
// synthetic benchmark; their metrics land in <out>/ for inspection.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "cli.h"
#include "tagmol/autodiff.h"
#include "tagmol/dataset.h"
#include "tagmol/evalmetrics.h"
#include "tagmol/losses.h"
#include "tagmol/training.h"

#include "fixtures.h"
#include "oracles.h"

namespace tagmol {
namespace {

namespace fs = std::filesystem;
using namespace tagmol::testing;
using ad::Tape;
using ad::Tensor;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

GraphBatch batch_of(Tape &tape, const std::vector<Molecule> &m) {
  return to_batch(tape, std::span<const Molecule>(m));
}

/* 1. Gradient correctness */

constexpr std::size_t kToyN = 8;
constexpr std::size_t kToyBatch = 3;

struct Toy {
  NetConfig cfg;
  Networks nets;
  std::vector<Molecule> real, fake;
  std::vector<Scalar> eps;
  Matrix x, xp, z;
};

Toy make_toy(LayerVariant v, std::uint64_t seed) {
  Toy t;
  t.cfg = small_config(v);
  t.cfg.max_atoms = kToyN;
  t.nets = init_networks(t.cfg, seed);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<Scalar> u(0, 1);
  for (std::size_t b = 0; b < kToyBatch; ++b) {
    t.real.push_back(random_molecule(rng, kToyN));
    t.fake.push_back(as_molecule(random_soft(rng, kToyN)));
    t.eps.push_back(u(rng));
  }
  t.x = random_matrix(rng, kToyBatch, Eigen::Index(t.cfg.xdim));
  t.xp = random_matrix(rng, kToyBatch, Eigen::Index(t.cfg.protein_features));
  t.z = random_matrix(rng, kToyBatch, Eigen::Index(t.cfg.zdim));
  return t;
}

struct CheckLog {
  Scalar worst = 0;
  std::string worst_name;
  std::size_t coordinates = 0;
  std::vector<std::string> problems;

  void check(const std::string &name, const ParamGroup &group,
             const std::function<Tensor(Tape &, const BoundParams &)> &body) {
    const std::vector<Scalar> flat = group.flatten();
    const ad::GradCheckResult r = ad::finite_diff_check(
        [&](Tape &tape, const Tensor &p) { return body(tape, unflatten(group, p)); },
        { flat.size() }, flat);
    coordinates += r.coordinates_checked;
    if (r.coordinates_checked != flat.size())
      problems.push_back(name + " skipped coordinates");
    if (r.max_rel_error >= 1e-4)
      problems.push_back(fmt("%s rel err %.3g", name.c_str(), r.max_rel_error));
    if (r.max_rel_error >= worst) {
      worst = r.max_rel_error;
      worst_name = name;
    }
  }
};

void gradcheck_variant(LayerVariant v, CheckLog &log) {
  const std::string tag = std::string(variant_name(v)) + "/";

  Toy t = make_toy(v, 101);
  log.check(tag + "critic", t.nets.critic, [&](Tape &tape, const BoundParams &psi) {
    return critic_loss(critic_fn(t.cfg, psi), batch_of(tape, t.real),
                       batch_of(tape, t.fake), t.eps, 10.0);
  });
  log.check(tag + "energy", t.nets.energy, [&](Tape &tape, const BoundParams &th) {
    return energy_loss(energy_fn(t.cfg, th), tape.constant(t.x),
                       batch_of(tape, t.real), batch_of(tape, t.fake), 0.1);
  });
  std::mt19937_64 rng(102);
  const Matrix tf = random_matrix(rng, kToyBatch, 3).cwiseAbs().cwiseMin(1.0);
  log.check(tag + "reward", t.nets.reward, [&](Tape &tape, const BoundParams &om) {
    return reward_loss(reward_fn(t.cfg, om), batch_of(tape, t.real),
                       oracle_targets(t.real), batch_of(tape, t.fake), tf, 1.0 / 3);
  });

  // Generator and encoder: central differences on the relaxed path, then the
  // straight-through gradient against the surrogate hard0 + soft - soft0.
  LossWeights w;
  w.beta = 0.8;
  w.gamma = 1.2;
  std::vector<Scalar> soft_a, soft_b, hard_a, hard_b;
  Matrix hard_targets;
  {
    Tape tape;
    const Tensor x = encode_protein(t.cfg, bind(tape, t.nets.encoder, false),
                                    tape.constant(t.xp));
    const GraphBatch soft = generate(t.cfg, bind(tape, t.nets.generator, false),
                                     x, tape.constant(t.z));
    const DiscreteSample d = straight_through_sample(soft);
    soft_a.assign(soft.atoms.values().begin(), soft.atoms.values().end());
    soft_b.assign(soft.bonds.values().begin(), soft.bonds.values().end());
    hard_a.assign(d.hard.atoms.values().begin(), d.hard.atoms.values().end());
    hard_b.assign(d.hard.bonds.values().begin(), d.hard.bonds.values().end());
    hard_targets = oracle_targets(d.molecules);
  }
  const ad::Shape sa { kToyBatch, kToyN, kAtomTypes };
  const ad::Shape sb { kToyBatch, kToyN, kToyN, kBondTypes };
  auto loss = [&](Tape &tape, const BoundParams &tau, const BoundParams &phi,
                  bool relaxed) {
    const Tensor x = encode_protein(t.cfg, tau, tape.constant(t.xp));
    const GraphBatch soft = generate(t.cfg, phi, x, tape.constant(t.z));
    const GraphBatch hard
        = relaxed ? soft
                  : GraphBatch { tape.constant(sa, hard_a)
                                     + (soft.atoms - tape.constant(sa, soft_a)),
                                 tape.constant(sb, hard_b)
                                     + (soft.bonds - tape.constant(sb, soft_b)) };
    return generator_loss(critic_fn(t.cfg, bind(tape, t.nets.critic, false)),
                          energy_fn(t.cfg, bind(tape, t.nets.energy, false)),
                          reward_fn(t.cfg, bind(tape, t.nets.reward, false)), x,
                          batch_of(tape, t.real), soft, hard,
                          oracle_targets(t.real), hard_targets, w);
  };
  log.check(tag + "generator", t.nets.generator,
            [&](Tape &tape, const BoundParams &phi) {
              return loss(tape, bind(tape, t.nets.encoder, false), phi, true);
            });
  log.check(tag + "encoder", t.nets.encoder, [&](Tape &tape, const BoundParams &tau) {
    return loss(tape, tau, bind(tape, t.nets.generator, false), true);
  });

  Tape t1, t2;
  const BoundParams phi1 = bind(t1, t.nets.generator, true);
  const Tensor x1 = encode_protein(t.cfg, bind(t1, t.nets.encoder, false),
                                   t1.constant(t.xp));
  const GraphBatch soft1 = generate(t.cfg, phi1, x1, t1.constant(t.z));
  const Tensor l1 = generator_loss(
      critic_fn(t.cfg, bind(t1, t.nets.critic, false)),
      energy_fn(t.cfg, bind(t1, t.nets.energy, false)),
      reward_fn(t.cfg, bind(t1, t.nets.reward, false)), x1, batch_of(t1, t.real),
      soft1, straight_through_sample(soft1).hard, oracle_targets(t.real),
      hard_targets, w);
  const BoundParams phi2 = bind(t2, t.nets.generator, true);
  const Tensor l2 = loss(t2, bind(t2, t.nets.encoder, false), phi2, false);
  if (l1.item() != l2.item())
    log.problems.push_back(tag + "straight-through value differs");
  const auto g1 = ad::grad(l1, phi1.tensors);
  const auto g2 = ad::grad(l2, phi2.tensors);
  Scalar st = 0;
  for (std::size_t k = 0; k < g1.size(); ++k)
    for (std::size_t i = 0; i < g1[k].size(); ++i)
      st = std::max(st, std::abs(g1[k].values()[i] - g2[k].values()[i]));
  if (st > 1e-12)
    log.problems.push_back(fmt("%sstraight-through grad differs by %.3g",
                               tag.c_str(), st));
}

Outcome gradient_correctness() {
  CheckLog log;
  gradcheck_variant(LayerVariant::kGat, log);
  gradcheck_variant(LayerVariant::kGcn, log);
  std::string detail = fmt("max rel err %.3g (%s) over %zu coordinates, N=%zu",
                           log.worst, log.worst_name.c_str(), log.coordinates,
                           kToyN);
  for (const std::string &p: log.problems)
    detail += "; " + p;
  return { log.problems.empty(), detail };
}

/* 2. Attention normalization */

Outcome attention_normalization() {
  constexpr std::size_t n = 8;
  constexpr std::size_t rel = kBondTypes - 1;
  std::mt19937_64 rng(2);
  std::size_t nodes = 0, light = 0, isolated = 0, bad = 0;
  Scalar worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const bool soft = trial % 2 == 0;
    const Molecule m = soft ? as_molecule(random_soft(rng, n)) : random_molecule(rng, n);
    Tape tape;
    RelationalWeights rw;
    for (std::size_t r = 0; r < rel; ++r) {
      rw.w.push_back(tape.constant(random_matrix(rng, kAtomTypes, 4)));
      rw.a_src.push_back(tape.constant(random_matrix(rng, 4, 1)));
      rw.a_dst.push_back(tape.constant(random_matrix(rng, 4, 1)));
    }
    const GraphBatch g = to_batch(tape, std::span<const Molecule>(&m, 1));
    std::vector<Tensor> alpha;
    rgat_layer(rw, g.atoms, g.bonds, &alpha);
    for (std::size_t i = 0; i < n; ++i) {
      Scalar total = 0, mass = 0;
      for (std::size_t r = 0; r < rel; ++r)
        for (std::size_t j = 0; j < n; ++j) {
          total += alpha[r].values()[i * n + j];
          mass += m.bond(i, j, r + 1);
        }
      if (mass == 0) {
        ++isolated;
        bad += total != 0;
        continue;
      }
      // Soft nodes whose expected neighbour count is below one keep part of
      // their weight on the null neighbour by construction.
      if (mass < 1) {
        ++light;
        bad += !(total < 1);
        continue;
      }
      ++nodes;
      worst = std::max(worst, std::abs(total - 1));
    }
  }
  const bool pass = worst <= 1e-9 && bad == 0 && nodes > 0;
  return { pass,
           fmt("%zu nodes with neighbours, max |sum-1| %.3g; %zu isolated, %zu "
               "soft nodes with expected degree < 1, %zu violations",
               nodes, worst, isolated, light, bad) };
}

/* 3. Gradient penalty identity */

Outcome penalty_identity() {
  std::mt19937_64 rng(3);
  Scalar worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const Toy t = make_toy(LayerVariant::kGat, 300 + std::uint64_t(trial));
    std::vector<Scalar> ua = values_of(random_matrix(rng, 1, kToyN * kAtomTypes));
    std::vector<Scalar> ub
        = values_of(random_matrix(rng, 1, kToyN * kToyN * kBondTypes));
    Scalar norm = 0;
    for (Scalar v: ua)
      norm += v * v;
    for (Scalar v: ub)
      norm += v * v;
    norm = std::sqrt(norm);
    for (auto &v: ua)
      v /= norm;
    for (auto &v: ub)
      v /= norm;
    Tape tape;
    CriticLossParts parts;
    critic_loss(linear_critic(ua, ub, 0.25 * trial), batch_of(tape, t.real),
                batch_of(tape, t.fake), t.eps, 10.0, &parts);
    worst = std::max(worst, parts.penalty);
  }
  std::vector<Scalar> zero_losses;
  for (LayerVariant v: { LayerVariant::kGat, LayerVariant::kGcn }) {
    Toy t = make_toy(v, 310);
    t.nets.critic.fill(0);
    Tape tape;
    zero_losses.push_back(
        critic_loss(critic_fn(t.cfg, bind(tape, t.nets.critic, true)),
                    batch_of(tape, t.real), batch_of(tape, t.fake), t.eps, 10.0)
            .item());
  }
  const bool pass = worst < 1e-9 && zero_losses[0] == 10.0 && zero_losses[1] == 10.0;
  return { pass, fmt("unit-norm penalty max %.3g over 50 critics; D=0 loss %.17g "
                     "(gat) %.17g (gcn)",
                     worst, zero_losses[0], zero_losses[1]) };
}

/* 4. Property oracle equivalence */

Outcome oracle_equivalence() {
  std::size_t enumerated = 0, valid = 0, mismatches = 0;
  enumerate_four_slot_molecules(
      [&](const Molecule &m, const std::vector<int> &atom, const Matrix &order) {
        ++enumerated;
        if (!validate_molecule(m).ok())
          return;
        ++valid;
        if (!(property_oracle(m) == brute_force_properties(atom, order)))
          ++mismatches;
      });
  return { mismatches == 0 && valid > 0,
           fmt("%zu assignments, %zu valid molecules, %zu mismatches", enumerated,
               valid, mismatches) };
}

/* 5. Frechet distance */

Outcome frechet_oracle() {
  Scalar worst = 0;
  auto closed = [&](const Vector &mu1, const Vector &sd1, const Vector &mu2,
                    const Vector &sd2, std::uint64_t seed) {
    const FeatureCloud a(exact_diag_cloud(mu1, sd1, 400, seed));
    const FeatureCloud b(exact_diag_cloud(mu2, sd2, 300, seed + 1));
    const Scalar want = diagonal_frechet(mu1, sd1, mu2, sd2, kFrechetRegularization);
    worst = std::max(worst, std::abs(frechet_distance(a, b) - want));
  };
  Vector m1(1), s1(1), m2(1), s2(1);
  m1 << 0.3;
  s1 << 1.2;
  m2 << -1.1;
  s2 << 0.4;
  closed(m1, s1, m2, s2, 1);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<Scalar> mu(-2, 2), sd(0.05, 3);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index d = 2 + trial;
    Vector a(d), b(d), c(d), e(d);
    for (Eigen::Index k = 0; k < d; ++k) {
      a(k) = mu(rng);
      b(k) = sd(rng);
      c(k) = mu(rng);
      e(k) = sd(rng);
    }
    closed(a, b, c, e, 10 + std::uint64_t(trial));
  }

  Scalar self = 0;
  for (const Eigen::Index d: { 1, 5, 40 }) {
    const FeatureCloud c(random_matrix(rng, 60, d));
    self = std::max(self, frechet_distance(c, c));
  }
  std::vector<Molecule> mols;
  for (int k = 0; k < 30; ++k)
    mols.push_back(random_molecule(rng, 8));
  const FeatureCloud mc = FeatureCloud::of(mols);
  self = std::max(self, frechet_distance(mc, mc));
  return { worst <= 1e-6 && self <= 1e-6,
           fmt("closed-form max err %.3g over 11 cloud pairs; FD(X,X) max %.3g",
               worst, self) };
}

/* 6-8. Synthetic benchmark runs */

struct Benchmark {
  std::vector<PairRecord> train, test;
};

Benchmark benchmark() {
  const std::vector<PairRecord> all = synthesize_dataset(7, 250, 8);
  return { { all.begin(), all.begin() + 200 }, { all.begin() + 200, all.end() } };
}

TrainConfig benchmark_config(LayerVariant v, std::size_t xdim) {
  TrainConfig cfg;
  cfg.net.max_atoms = 8;
  cfg.net.variant = v;
  cfg.net.xdim = xdim;
  cfg.epochs = 300;
  cfg.seed = 1;
  return cfg;
}

struct RunResult {
  std::vector<MetricRecord> metrics;
  std::string stop_reason;
  double seconds = 0;
};

RunResult benchmark_run(const std::string &name, const TrainConfig &cfg,
                        const Benchmark &data, const fs::path &dir) {
  fs::create_directories(dir);
  const fs::path csv = dir / (name + ".csv");
  std::ofstream out(csv);
  out << metrics_csv_header() << '\n';
  TrainHooks hooks;
  hooks.on_epoch = [&](const Checkpoint &, const MetricRecord &r) {
    out << metrics_csv_row(r) << '\n' << std::flush;
    if (r.epoch % 50 == 0)
      std::fprintf(stderr, "  [%s] epoch %zu gap %.4f fd %.3f\n", name.c_str(),
                   r.epoch, r.energy_gap, r.fd);
  };
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult res = train(cfg, data.train, data.test, hooks);
  const double secs
      = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return { std::move(res.metrics), res.stop_reason, secs };
}

struct Runs {
  RunResult gat16, gat0, gcn16;
};

Runs &benchmark_runs(const fs::path &dir) {
  static Runs runs = [&] {
    const Benchmark data = benchmark();
    auto launch = [&](std::string name, LayerVariant v, std::size_t xdim) {
      return std::async(std::launch::async, [&data, &dir, name, v, xdim] {
        return benchmark_run(name, benchmark_config(v, xdim), data, dir);
      });
    };
    auto a = launch("gat_xdim16", LayerVariant::kGat, 16);
    auto b = launch("gat_xdim0", LayerVariant::kGat, 0);
    auto c = launch("gcn_xdim16", LayerVariant::kGcn, 16);
    return Runs { a.get(), b.get(), c.get() };
  }();
  return runs;
}

bool complete(const RunResult &r, std::string &why) {
  if (!r.stop_reason.empty() || r.metrics.size() != 300) {
    why = fmt("run stopped after %zu epochs: %s", r.metrics.size(),
              r.stop_reason.c_str());
    return false;
  }
  return true;
}

Outcome energy_separation(const fs::path &dir) {
  const RunResult &r = benchmark_runs(dir).gat16;
  std::string why;
  if (!complete(r, why))
    return { false, why };
  const Scalar g50 = r.metrics[49].energy_gap, g300 = r.metrics[299].energy_gap;
  const bool pass = g300 < 0 && std::abs(g300) <= 0.5 * std::abs(g50);
  return { pass, fmt("gap epoch 50 %.5f, epoch 300 %.5f (ratio %.3f), run %.0f s",
                     g50, g300, std::abs(g300) / std::abs(g50), r.seconds) };
}

Outcome conditioning_ablation(const fs::path &dir) {
  const Runs &runs = benchmark_runs(dir);
  std::string why;
  if (!complete(runs.gat16, why) || !complete(runs.gat0, why))
    return { false, why };
  const Scalar a = runs.gat16.metrics.back().fd, b = runs.gat0.metrics.back().fd;
  return { a < 0.8 * b, fmt("final FD xdim16 %.4f vs xdim0 %.4f (ratio %.3f)", a,
                            b, a / b) };
}

// Variance of the epoch-to-epoch change in E(real) over the last 100 epochs.
Scalar step_variance(const std::vector<MetricRecord> &m) {
  std::vector<Scalar> d;
  for (std::size_t e = m.size() - 100; e < m.size(); ++e)
    d.push_back(m[e].energy_real - m[e - 1].energy_real);
  Scalar mean = 0, var = 0;
  for (Scalar v: d)
    mean += v / Scalar(d.size());
  for (Scalar v: d)
    var += (v - mean) * (v - mean) / Scalar(d.size() - 1);
  return var;
}

Scalar level_variance(const std::vector<MetricRecord> &m) {
  Scalar mean = 0, var = 0;
  for (std::size_t e = m.size() - 100; e < m.size(); ++e)
    mean += m[e].energy_real / 100;
  for (std::size_t e = m.size() - 100; e < m.size(); ++e)
    var += (m[e].energy_real - mean) * (m[e].energy_real - mean) / 99;
  return var;
}

Outcome layer_stability(const fs::path &dir) {
  const Runs &runs = benchmark_runs(dir);
  std::string why;
  if (!complete(runs.gat16, why) || !complete(runs.gcn16, why))
    return { false, why };
  const Scalar a = step_variance(runs.gat16.metrics);
  const Scalar b = step_variance(runs.gcn16.metrics);
  return { a <= b, fmt("var of dE_real/epoch, last 100: gat %.4g gcn %.4g (level "
                       "variance gat %.4g gcn %.4g)",
                       a, b, level_variance(runs.gat16.metrics),
                       level_variance(runs.gcn16.metrics)) };
}

/* 9. Determinism through the command line */

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string drop_wall_column(const std::string &csv) {
  std::istringstream in(csv);
  std::string out;
  for (std::string l; std::getline(in, l);)
    out += l.substr(0, l.rfind(',')) + "\n";
  return out;
}

Outcome cli_determinism(const fs::path &dir) {
  const fs::path root = dir / "determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  std::ostringstream sink;
  auto run = [&](std::vector<std::string> args) {
    return cli::run(args, sink, sink);
  };
  if (run({ "synth-data", "--seed", "5", "--count", "60", "--max-atoms", "8",
            "--out", (root / "data").string() })
      != 0)
    return { false, "synth-data failed: " + sink.str() };
  std::ofstream(root / "config.json")
      << R"({"max_atoms": 8, "xdim": 8, "zdim": 8, "encoder_hidden": 16,
  "generator_hidden": [32, 32, 32], "graph_width": 16, "graph_layers": 2,
  "energy_hidden": 16, "batch_size": 16, "epochs": 4, "eval_samples": 64,
  "seed": 9})";
  std::vector<std::string> csv;
  for (const char *name: { "a", "b" }) {
    if (run({ "train", "--config", (root / "config.json").string(), "--train",
              (root / "data/train.jsonl").string(), "--test",
              (root / "data/test.jsonl").string(), "--out", (root / name).string() })
        != 0)
      return { false, "train failed: " + sink.str() };
    csv.push_back(slurp(root / name / "metrics.csv"));
  }
  const std::string a = drop_wall_column(csv[0]), b = drop_wall_column(csv[1]);
  const auto rows = std::count(a.begin(), a.end(), '\n');
  return { a == b && rows == 5,
           fmt("metrics.csv without wall_seconds %s across two runs (%ld lines)",
               a == b ? "identical" : "DIFFERS", long(rows)) };
}

/* 10. Schedule and phase isolation */

Outcome schedule_and_isolation() {
  std::vector<std::string> problems;
  for (std::size_t e: { 0, 1, 100, 199 })
    if (lr_at_epoch(e) != 1e-4)
      problems.push_back(fmt("lr(%zu) = %g", e, lr_at_epoch(e)));
  for (std::size_t e: { 200, 201, 500, 999 })
    if (lr_at_epoch(e) != 1e-5)
      problems.push_back(fmt("lr(%zu) = %g", e, lr_at_epoch(e)));

  const Benchmark data = benchmark();
  TrainConfig cfg = benchmark_config(LayerVariant::kGat, 16);
  cfg.epochs = 10;
  cfg.critic_steps = 5;
  const TrainResult r = train(cfg, data.train, data.test);
  const std::size_t iters
      = 10 * ((data.train.size() + cfg.batch_size - 1) / cfg.batch_size);
  const PhaseCounters &c = r.counters;
  if (!r.stop_reason.empty() || r.metrics.size() != 10)
    problems.push_back("stopped early: " + r.stop_reason);
  if (c.generator_updates != iters || c.energy_updates != iters
      || c.reward_updates != iters || c.critic_updates != 5 * iters
      || c.isolation_checks != 8 * iters)
    problems.push_back("phase counters off");
  std::string detail = fmt("lr steps at 200; 10 epochs, %zu iterations, %zu critic "
                           "updates, %zu isolation checks passed",
                           iters, c.critic_updates, c.isolation_checks);
  for (const std::string &p: problems)
    detail += "; " + p;
  return { problems.empty(), detail };
}

} // namespace
} // namespace tagmol

int main(int argc, char **argv) {
  using namespace tagmol;
  CLI::App app { "tagmol acceptance runner" };
  std::string out = "acceptance_runs";
  std::vector<int> only;
  app.add_option("--out", out, "directory for run artifacts");
  app.add_option("--only", only, "criteria to run (default all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const fs::path dir(out);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria {
    { "gradient correctness", gradient_correctness },
    { "attention normalization", attention_normalization },
    { "gradient penalty identity", penalty_identity },
    { "property oracle equivalence", oracle_equivalence },
    { "frechet distance oracle", frechet_oracle },
    { "energy separation", [&] { return energy_separation(dir); } },
    { "conditioning ablation", [&] { return conditioning_ablation(dir); } },
    { "gat vs gcn stability", [&] { return layer_stability(dir); } },
    { "cli determinism", [&] { return cli_determinism(dir); } },
    { "schedule and isolation", schedule_and_isolation },
  };
  const std::set<int> selected(only.begin(), only.end());

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = int(k) + 1;
    if (!selected.empty() && !selected.count(id))
      continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception &e) {
      o = { false, std::string("exception: ") + e.what() };
    }
    const double secs
        = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id,
                criteria[k].first.c_str(), o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
