//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/evalmetrics.h"

#include <algorithm>
#include <random>

#include <Eigen/Eigenvalues>

#include "tagmol/autodiff.h"
#include "tagmol/error.h"

namespace tagmol {
namespace {
using ad::Tape;
using ad::Tensor;

void require(bool ok, const std::string &msg) {
  if (!ok)
    throw ContractViolation(msg);
}

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

Matrix regularized(const Matrix &cov) {
  return cov + kFrechetRegularization * Matrix::Identity(cov.rows(), cov.cols());
}
} // namespace

Vector mol_feature_vector(const Molecule &m) {
  ValidityReport report = validate_molecule(m);
  if (!report.ok())
    throw InvalidMolecule(std::move(report));
  const std::size_t n = m.num_atoms();
  const std::size_t pairs = n * (n - 1) / 2;
  Vector f(idx(n * kAtomTypes + pairs * kBondTypes));
  f.head(idx(n * kAtomTypes))
      = Eigen::Map<const Vector>(m.atoms().data(), idx(n * kAtomTypes));
  Eigen::Index k = idx(n * kAtomTypes);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      f.segment(k, idx(kBondTypes))
          = m.bonds().row(idx(i)).segment(idx(j * kBondTypes), idx(kBondTypes)).transpose();
      k += idx(kBondTypes);
    }
  return f;
}

FeatureCloud::FeatureCloud(Matrix samples): samples_(std::move(samples)) {
  require(samples_.rows() >= 1, "FeatureCloud: no samples");
  mean_ = samples_.colwise().mean().transpose();
  const Matrix centered = samples_.rowwise() - mean_.transpose();
  const Scalar denom = std::max<Scalar>(1, Scalar(samples_.rows() - 1));
  cov_ = (centered.transpose() * centered) / denom;
}

FeatureCloud FeatureCloud::of(std::span<const Molecule> mols) {
  require(!mols.empty(), "FeatureCloud::of: no molecules");
  Matrix s(idx(mols.size()), mol_feature_vector(mols[0]).size());
  for (std::size_t r = 0; r < mols.size(); ++r) {
    const Vector f = mol_feature_vector(mols[r]);
    require(f.size() == s.cols(), "FeatureCloud::of: molecules differ in size");
    s.row(idx(r)) = f.transpose();
  }
  return FeatureCloud(std::move(s));
}

FeatureCloud FeatureCloud::of_batches(std::span<const Molecule> mols,
                                      std::size_t group) {
  require(group >= 1 && mols.size() >= group,
          "FeatureCloud::of_batches: need at least one full group");
  const FeatureCloud single = of(mols);
  const std::size_t rows = mols.size() / group;
  const Eigen::Index d = single.samples().cols();
  Matrix s(idx(rows), d * idx(group));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t g = 0; g < group; ++g)
      s.block(idx(r), idx(g) * d, 1, d) = single.samples().row(idx(r * group + g));
  return FeatureCloud(std::move(s));
}

Matrix psd_sqrt(const Matrix &m) {
  require(m.rows() == m.cols(), "psd_sqrt: matrix must be square");
  const Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  const Vector root = es.eigenvalues().cwiseMax(0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

Scalar frechet_distance(const FeatureCloud &real, const FeatureCloud &fake) {
  require(real.dim() == fake.dim(),
          "frechet_distance: feature dimensions differ ("
              + std::to_string(real.dim()) + " vs " + std::to_string(fake.dim())
              + ")");
  require(real.size() >= 2 && fake.size() >= 2,
          "frechet_distance: need at least two samples per cloud");
  const Matrix sr = regularized(real.covariance());
  const Matrix sf = regularized(fake.covariance());
  const Matrix root = psd_sqrt(sr);
  Matrix inner = root * sf * root;
  inner = (0.5 * (inner + inner.transpose())).eval();
  const Eigen::SelfAdjointEigenSolver<Matrix> es(inner, Eigen::EigenvaluesOnly);
  const Scalar cross = es.eigenvalues().cwiseMax(0).cwiseSqrt().sum();
  const Scalar fd = (real.mean() - fake.mean()).squaredNorm() + sr.trace()
                    + sf.trace() - 2 * cross;
  return std::max<Scalar>(fd, 0);
}

std::vector<Molecule> generate_ligands(const Checkpoint &ckpt,
                                       const ProteinRecord &protein,
                                       std::size_t count, std::uint64_t seed) {
  require(count >= 1, "generate_ligands: count must be >= 1");
  const NetConfig &net = ckpt.config.net;
  require(static_cast<std::size_t>(protein.features.size()) == net.protein_features,
          "generate_ligands: protein '" + protein.id + "' has "
              + std::to_string(protein.features.size()) + " features");
  std::mt19937_64 rng(seed);
  Tape tape;
  const Tensor x = encode_protein(
      net, bind(tape, ckpt.nets.encoder, false),
      tape.constant(protein.features.transpose().replicate(idx(count), 1)));
  const GraphBatch soft = generate(net, bind(tape, ckpt.nets.generator, false), x,
                                   tape.constant(sample_latent(count, net.zdim, rng)));
  return straight_through_sample(soft).molecules;
}

EnergyReport binding_energy_report(const Checkpoint &ckpt,
                                   std::span<const PairRecord> data,
                                   std::size_t sample_count,
                                   std::uint64_t seed) {
  require(sample_count >= 1, "binding_energy_report: sample_count must be >= 1");
  const TrainConfig &cfg = ckpt.config;
  const NetConfig &net = cfg.net;
  std::mt19937_64 rng(seed);
  EnergyReport rep;
  for (const PairRecord &pair: data) {
    require(pair.ligand.num_atoms() == net.max_atoms,
            "binding_energy_report: pair '" + pair.protein.id
                + "' does not match the checkpoint's max_atoms");
    Tape tape;
    const Matrix xp = pair.protein.features.transpose().replicate(
        idx(sample_count), 1);
    const Tensor x = encode_protein(net, bind(tape, ckpt.nets.encoder, false),
                                    tape.constant(xp));
    const GraphBatch soft = generate(
        net, bind(tape, ckpt.nets.generator, false), x,
        tape.constant(sample_latent(sample_count, net.zdim, rng)));
    const DiscreteSample d = straight_through_sample(soft);
    const BoundParams theta = bind(tape, ckpt.nets.energy, false);
    const std::vector<Molecule> real(sample_count, pair.ligand);
    const Tensor x0 = ad::slice(x, 0, 0, 1);
    const Scalar er = energy_score(net, theta, x0,
                                   to_batch(tape, std::span(real).first(1)))
                          .item();
    const auto ef = energy_score(net, theta, x, d.hard).values();

    EnergyRow row;
    row.id = pair.protein.id;
    row.energy_real = er;
    Scalar sq = 0;
    for (Scalar e: ef) {
      row.energy_fake += e;
      sq += e * e;
    }
    row.energy_fake /= static_cast<Scalar>(sample_count);
    sq /= static_cast<Scalar>(sample_count);
    row.gap = er - row.energy_fake;
    row.mse = cfg.loss.alpha * (er * er + sq);
    rep.rows.push_back(row);
  }
  if (!rep.rows.empty()) {
    for (const EnergyRow &r: rep.rows) {
      rep.mean_real += r.energy_real;
      rep.mean_fake += r.energy_fake;
      rep.mean_gap += r.gap;
      rep.mean_mse += r.mse;
    }
    const Scalar n = static_cast<Scalar>(rep.rows.size());
    rep.mean_real /= n;
    rep.mean_fake /= n;
    rep.mean_gap /= n;
    rep.mean_mse /= n;
  }
  return rep;
}

std::map<std::size_t, AblationRun>
xdim_ablation(const TrainConfig &base, std::span<const std::size_t> xdims,
              std::size_t epochs, std::uint64_t seed,
              std::span<const PairRecord> trainset,
              std::span<const PairRecord> testset) {
  require(!xdims.empty(), "xdim_ablation: no embedding dimensions given");
  std::map<std::size_t, AblationRun> out;
  for (std::size_t d: xdims) {
    TrainConfig cfg = base;
    cfg.net.xdim = d;
    cfg.epochs = epochs;
    cfg.seed = seed;
    AblationRun &run = out[d];
    try {
      TrainResult r = train(cfg, trainset, testset);
      run.metrics = std::move(r.metrics);
      run.stop_reason = std::move(r.stop_reason);
    } catch (const std::exception &e) {
      run.error = e.what();
    }
  }
  return out;
}

} // namespace tagmol
