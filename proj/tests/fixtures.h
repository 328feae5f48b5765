//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_TESTS_FIXTURES_H_
#define TAGMOL_TESTS_FIXTURES_H_

#include <random>

#include "tagmol/networks.h"

namespace tagmol::testing {

inline NetConfig small_config(LayerVariant v = LayerVariant::kGat) {
  NetConfig cfg;
  cfg.max_atoms = 5;
  cfg.xdim = 3;
  cfg.zdim = 4;
  cfg.encoder_hidden = 6;
  cfg.generator_hidden = { 7, 8, 9 };
  cfg.graph_width = 4;
  cfg.graph_layers = 2;
  cfg.energy_hidden = 5;
  cfg.variant = v;
  return cfg;
}

// Valid hard molecule with random atoms and random non-none bonds.
inline Molecule random_molecule(std::mt19937_64 &rng, std::size_t n) {
  Molecule m(n);
  for (std::size_t i = 0; i < n; ++i)
    m.set_atom(i, static_cast<AtomType>(rng() % kAtomTypes));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (m.atom_type(i) != AtomType::kEmpty
          && m.atom_type(j) != AtomType::kEmpty && rng() % 2 == 0)
        m.set_bond(i, j, static_cast<BondType>(1 + rng() % (kBondTypes - 1)));
  return m;
}

// Strictly positive probabilities satisfying the soft invariants.
inline SoftMolecule random_soft(std::mt19937_64 &rng, std::size_t n) {
  std::uniform_real_distribution<Scalar> u(0.01, 1.0);
  const auto ni = static_cast<Eigen::Index>(n);
  const auto B = static_cast<Eigen::Index>(kBondTypes);
  SoftMolecule s { Matrix(ni, Eigen::Index(kAtomTypes)),
                   Matrix::Zero(ni, ni * B) };
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (Eigen::Index k = 0; k < s.atom_probs.cols(); ++k)
      s.atom_probs(i, k) = u(rng);
    s.atom_probs.row(i) /= s.atom_probs.row(i).sum();
    s.bond_probs(i, i * B) = 1;
    for (Eigen::Index j = i + 1; j < ni; ++j) {
      Matrix p(1, B);
      for (Eigen::Index k = 0; k < B; ++k)
        p(0, k) = u(rng);
      p /= p.sum();
      s.bond_probs.block(i, j * B, 1, B) = p;
      s.bond_probs.block(j, i * B, 1, B) = p;
    }
  }
  return s;
}

inline Molecule as_molecule(const SoftMolecule &s) {
  return Molecule(s.atom_probs, s.bond_probs);
}

inline Matrix random_matrix(std::mt19937_64 &rng, Eigen::Index r,
                            Eigen::Index c) {
  std::normal_distribution<Scalar> d(0, 1);
  Matrix m(r, c);
  for (Eigen::Index k = 0; k < m.size(); ++k)
    m.data()[k] = d(rng);
  return m;
}

inline std::vector<Scalar> values_of(const Matrix &m) {
  return { m.data(), m.data() + m.size() };
}

} // namespace tagmol::testing

#endif // TAGMOL_TESTS_FIXTURES_H_
