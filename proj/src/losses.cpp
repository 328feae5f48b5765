//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/losses.h"

#include <string>

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

void check_pair(const GraphBatch &a, const GraphBatch &b, const char *op) {
  require(a.atoms.shape() == b.atoms.shape()
              && a.bonds.shape() == b.bonds.shape(),
          std::string(op) + ": real and fake batches differ in shape ("
              + ad::shape_str(a.atoms.shape()) + " vs "
              + ad::shape_str(b.atoms.shape()) + ")");
}

Tensor interpolate(Tape &tape, const Tensor &real, const Tensor &fake,
                   std::span<const Scalar> eps) {
  const auto rv = real.values();
  const auto fv = fake.values();
  const std::size_t inner = rv.size() / real.dim(0);
  std::vector<Scalar> v(rv.size());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const Scalar e = eps[k / inner];
    v[k] = e * rv[k] + (1 - e) * fv[k];
  }
  return tape.variable(real.shape(), std::move(v));
}

Tensor flat_rows(const Tensor &t) {
  return ad::reshape(t, { t.dim(0), t.size() / t.dim(0) });
}

Tensor squared_error(const Tensor &pred, const Matrix &target) {
  require(pred.rank() == 2
              && pred.dim(0) == static_cast<std::size_t>(target.rows())
              && pred.dim(1) == static_cast<std::size_t>(target.cols()),
          "reward_loss: predictions " + ad::shape_str(pred.shape())
              + " do not match targets " + std::to_string(target.rows()) + "x"
              + std::to_string(target.cols()));
  return ad::sum(ad::square(pred - pred.tape().constant(target)), 1);
}
} // namespace

CriticFn critic_fn(const NetConfig &cfg, const BoundParams &psi) {
  return [&cfg, &psi](const GraphBatch &g) { return critic_score(cfg, psi, g); };
}

EnergyFn energy_fn(const NetConfig &cfg, const BoundParams &theta) {
  return [&cfg, &theta](const Tensor &x, const GraphBatch &g) {
    return energy_score(cfg, theta, x, g);
  };
}

RewardFn reward_fn(const NetConfig &cfg, const BoundParams &omega) {
  return [&cfg, &omega](const GraphBatch &g) {
    return reward_predict(cfg, omega, g);
  };
}

Tensor critic_loss(const CriticFn &critic, const GraphBatch &real,
                   const GraphBatch &fake, std::span<const Scalar> eps,
                   Scalar lambda, CriticLossParts *parts) {
  check_pair(real, fake, "critic_loss");
  const std::size_t bt = real.batch();
  require(eps.size() == bt, "critic_loss: need one interpolation weight per "
                            "batch element");
  Tape &tape = real.atoms.tape();

  const Tensor d_real = ad::mean(critic(real));
  const Tensor d_fake = ad::mean(critic(fake));

  const GraphBatch xhat { interpolate(tape, real.atoms, fake.atoms, eps),
                          interpolate(tape, real.bonds, fake.bonds, eps) };
  const Tensor leaves[] = { xhat.atoms, xhat.bonds };
  const auto g = ad::grad(ad::sum(critic(xhat)), leaves, true);
  const Tensor norm
      = ad::l2_norm(ad::concat({ flat_rows(g[0]), flat_rows(g[1]) }, 1), 1);
  const Tensor penalty = ad::mean(ad::square(norm - 1.0));

  if (parts)
    *parts = { d_real.item(), d_fake.item(), penalty.item() };
  return d_fake - d_real + penalty * lambda;
}

Tensor energy_loss(const EnergyFn &energy, const Tensor &x,
                   const GraphBatch &real, const GraphBatch &fake,
                   Scalar alpha, EnergyLossParts *parts) {
  check_pair(real, fake, "energy_loss");
  const Tensor e_real = energy(x, real);
  const Tensor e_fake = energy(x, fake);
  const Tensor mse = (ad::square(e_real) + ad::square(e_fake)) * alpha;
  if (parts)
    *parts = { ad::mean(e_real).item(), ad::mean(e_fake).item(),
               ad::mean(mse).item() };
  return ad::mean(e_real - e_fake + mse);
}

Matrix oracle_targets(std::span<const Molecule> mols, std::size_t count) {
  require(count >= 1 && count <= kPropertyCount,
          "oracle_targets: property count must be in [1, "
              + std::to_string(kPropertyCount) + "]");
  Matrix t(static_cast<Eigen::Index>(mols.size()),
           static_cast<Eigen::Index>(count));
  for (std::size_t b = 0; b < mols.size(); ++b) {
    const PropertyVector p = validate_molecule(mols[b]).ok()
                                 ? property_oracle(mols[b])
                                 : fallback_properties(mols[b]);
    const auto arr = p.as_array();
    for (std::size_t k = 0; k < count; ++k)
      t(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(k)) = arr[k];
  }
  return t;
}

Tensor reward_loss(const RewardFn &reward, const GraphBatch &real,
                   const Matrix &real_targets, const GraphBatch &fake,
                   const Matrix &fake_targets, Scalar coef) {
  check_pair(real, fake, "reward_loss");
  const Tensor err = squared_error(reward(real), real_targets)
                     + squared_error(reward(fake), fake_targets);
  return ad::mean(err) * coef;
}

Tensor generator_loss(const CriticFn &critic, const EnergyFn &energy,
                      const RewardFn &reward, const Tensor &x,
                      const GraphBatch &real, const GraphBatch &fake_soft,
                      const GraphBatch &fake_hard, const Matrix &real_targets,
                      const Matrix &fake_targets, const LossWeights &w,
                      GeneratorLossParts *parts) {
  check_pair(real, fake_soft, "generator_loss");
  check_pair(real, fake_hard, "generator_loss");
  const Tensor adv = -ad::mean(critic(fake_soft));
  Tensor total = adv;
  GeneratorLossParts p;
  p.adversarial = adv.item();

  if (w.beta != 0) {
    Tensor e = ad::mean(energy(x, fake_hard));
    if (w.literal_energy_sign)
      e = ad::mean(energy(x, real)) - e;
    p.energy = e.item();
    total = total + e * w.beta;
  }
  if (w.gamma != 0) {
    const Tensor r = reward_loss(reward, real, real_targets, fake_hard,
                                 fake_targets, w.reward_coef);
    p.reward = r.item();
    total = total + r * w.gamma;
  }
  if (parts)
    *parts = p;
  return total;
}

} // namespace tagmol
