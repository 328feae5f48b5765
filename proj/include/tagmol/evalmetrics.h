//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_EVALMETRICS_H_
#define TAGMOL_EVALMETRICS_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tagmol/dataset.h"
#include "tagmol/molecule.h"
#include "tagmol/training.h"

namespace tagmol {

/* Feature clouds and the Frechet distance */

// Atom matrix row-major, then the strict upper triangle of the bond tensor
// (i < j, row-major), each entry a B-vector. Length N*A + N(N-1)/2*B.
// Throws InvalidMolecule on a structurally invalid molecule.
Vector mol_feature_vector(const Molecule &m);

// Rows are samples. Mean and covariance (unbiased) are fitted on
// construction.
class FeatureCloud {
public:
  explicit FeatureCloud(Matrix samples);

  static FeatureCloud of(std::span<const Molecule> mols);
  // One point per consecutive group of `group` molecules, each the
  // concatenation of its members' features. Trailing partial groups are
  // dropped.
  static FeatureCloud of_batches(std::span<const Molecule> mols,
                                 std::size_t group);

  const Matrix &samples() const { return samples_; }
  const Vector &mean() const { return mean_; }
  const Matrix &covariance() const { return cov_; }
  std::size_t size() const { return static_cast<std::size_t>(samples_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(samples_.cols()); }

private:
  Matrix samples_;
  Vector mean_;
  Matrix cov_;
};

inline constexpr Scalar kFrechetRegularization = 1e-6;

// Symmetric PSD square root by eigendecomposition; negative eigenvalues are
// clamped to zero.
Matrix psd_sqrt(const Matrix &m);

// |mu_r - mu_f|^2 + Tr(S_r + S_f - 2 (S_r S_f)^(1/2)) with S = cov + 1e-6 I.
// The cross term is evaluated as Tr((S_r^(1/2) S_f S_r^(1/2))^(1/2)).
// Clamped to >= 0.
Scalar frechet_distance(const FeatureCloud &real, const FeatureCloud &fake);

/* Sampling */

// `count` argmax-discretized ligands for one protein, latents drawn from
// `seed`. Every result satisfies the Molecule invariants; chemical validity
// is not guaranteed.
std::vector<Molecule> generate_ligands(const Checkpoint &ckpt,
                                       const ProteinRecord &protein,
                                       std::size_t count, std::uint64_t seed);

/* Binding-energy report */

struct EnergyRow {
  std::string id;
  Scalar energy_real = 0; // E(x, y)
  Scalar energy_fake = 0; // mean over samples of E(x, y_hat)
  Scalar gap = 0;         // energy_real - energy_fake
  Scalar mse = 0;         // alpha (E(x,y)^2 + mean of E(x,y_hat)^2)
};

struct EnergyReport {
  std::vector<EnergyRow> rows;
  Scalar mean_real = 0;
  Scalar mean_fake = 0;
  Scalar mean_gap = 0;
  Scalar mean_mse = 0;
};

// Draws `sample_count` latents per pair, generates, discretizes by argmax and
// scores with the energy network. Deterministic in `seed`.
EnergyReport binding_energy_report(const Checkpoint &ckpt,
                                   std::span<const PairRecord> data,
                                   std::size_t sample_count, std::uint64_t seed);

/* Embedding-dimension ablation */

inline const std::vector<std::size_t> kDefaultAblationDims { 0, 8, 16, 32, 64 };

struct AblationRun {
  std::vector<MetricRecord> metrics;
  std::string stop_reason; // empty when all epochs completed
  std::string error;       // sub-run failure, recorded rather than rethrown
};

// One training run per xdim, all with `seed` and `epochs`; other settings
// come from `base`.
std::map<std::size_t, AblationRun>
xdim_ablation(const TrainConfig &base, std::span<const std::size_t> xdims,
              std::size_t epochs, std::uint64_t seed,
              std::span<const PairRecord> trainset,
              std::span<const PairRecord> testset);

} // namespace tagmol

#endif // TAGMOL_EVALMETRICS_H_
