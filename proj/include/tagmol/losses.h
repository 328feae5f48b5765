//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_LOSSES_H_
#define TAGMOL_LOSSES_H_

#include <functional>
#include <span>
#include <vector>

#include "tagmol/networks.h"

namespace tagmol {

struct LossWeights {
  Scalar lambda = 10.0;  // gradient penalty
  Scalar alpha = 1e-3;   // energy L2
  Scalar beta = 1.0;     // generator energy term
  Scalar gamma = 1.0;    // generator reward term
  Scalar reward_coef = 1.0 / 3.0;
  // false: generator minimizes +E(x, fake). true: E(x, real) - E(x, fake).
  bool literal_energy_sign = false;

  bool operator==(const LossWeights &) const = default;
};

// Batched scorers: critic and reward map a graph batch to [Bt] / [Bt,P],
// energy additionally takes the embedding [Bt,xdim].
using CriticFn = std::function<ad::Tensor(const GraphBatch &)>;
using EnergyFn =
    std::function<ad::Tensor(const ad::Tensor &, const GraphBatch &)>;
using RewardFn = std::function<ad::Tensor(const GraphBatch &)>;

// Adapters over the networks; they hold references to `cfg` and the bound
// parameters.
CriticFn critic_fn(const NetConfig &cfg, const BoundParams &psi);
EnergyFn energy_fn(const NetConfig &cfg, const BoundParams &theta);
RewardFn reward_fn(const NetConfig &cfg, const BoundParams &omega);

struct CriticLossParts {
  Scalar real = 0;    // mean D(y)
  Scalar fake = 0;    // mean D(fake)
  Scalar penalty = 0; // mean (|grad| - 1)^2, unweighted
};

// mean D(fake) - mean D(real) + lambda * mean_b (|grad_xhat D(xhat_b)| - 1)^2
// with xhat = eps_b * real + (1 - eps_b) * fake on atoms and bonds. The
// gradient norm runs over the flattened atoms and bonds of each element. The
// interpolate is a fresh leaf, so the fake batch is treated as data here.
ad::Tensor critic_loss(const CriticFn &critic, const GraphBatch &real,
                       const GraphBatch &fake, std::span<const Scalar> eps,
                       Scalar lambda, CriticLossParts *parts = nullptr);

struct EnergyLossParts {
  Scalar real = 0; // mean E(x, y)
  Scalar fake = 0; // mean E(x, fake)
  Scalar mse = 0;  // mean alpha (E(x,y)^2 + E(x,fake)^2)
};

// mean_b [E(x,y) - E(x,fake) + alpha (E(x,y)^2 + E(x,fake)^2)]
ad::Tensor energy_loss(const EnergyFn &energy, const ad::Tensor &x,
                       const GraphBatch &real, const GraphBatch &fake,
                       Scalar alpha, EnergyLossParts *parts = nullptr);

// Property targets [Bt,P] from the oracle. Molecules that fail validation get
// fallback_properties (validity 0). Only the first `count` properties are
// kept.
Matrix oracle_targets(std::span<const Molecule> mols,
                      std::size_t count = kPropertyCount);

// coef * mean_b [|R(y) - t(y)|^2 + |R(fake) - t(fake)|^2]; targets are
// constants.
ad::Tensor reward_loss(const RewardFn &reward, const GraphBatch &real,
                       const Matrix &real_targets, const GraphBatch &fake,
                       const Matrix &fake_targets, Scalar coef);

struct GeneratorLossParts {
  Scalar adversarial = 0; // -mean D(fake_soft)
  Scalar energy = 0;      // generator energy term before beta
  Scalar reward = 0;      // reward loss before gamma
};

// -mean D(fake_soft) + beta * energy term + gamma * reward loss. The critic
// sees the soft generator output; the energy and reward networks see
// `fake_hard`, normally the straight-through sample of fake_soft. `x` carries
// gradients back to the encoder.
ad::Tensor generator_loss(const CriticFn &critic, const EnergyFn &energy,
                          const RewardFn &reward, const ad::Tensor &x,
                          const GraphBatch &real, const GraphBatch &fake_soft,
                          const GraphBatch &fake_hard,
                          const Matrix &real_targets,
                          const Matrix &fake_targets, const LossWeights &w,
                          GeneratorLossParts *parts = nullptr);

} // namespace tagmol

#endif // TAGMOL_LOSSES_H_
