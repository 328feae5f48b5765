//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/molecule.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace tagmol {
namespace {
using Index = Eigen::Index;

Index ix(std::size_t v) {
  return static_cast<Index>(v);
}

bool is_one_hot(const auto &row) {
  int ones = 0;
  for (Index k = 0; k < row.size(); ++k) {
    if (row[k] == 1.0)
      ++ones;
    else if (row[k] != 0.0)
      return false;
  }
  return ones == 1;
}

std::size_t argmax(const auto &row) {
  Index best = 0;
  for (Index k = 1; k < row.size(); ++k)
    if (row[k] > row[best])
      best = k;
  return static_cast<std::size_t>(best);
}

// Non-empty atom indices and the bond-type adjacency of an argmax-decoded
// molecule.
struct Decoded {
  std::vector<AtomType> atoms;
  std::vector<std::size_t> present;
  std::vector<BondType> bonds; // n*n

  BondType bond(std::size_t i, std::size_t j) const {
    return bonds[i * atoms.size() + j];
  }
};

Decoded decode(const Molecule &m) {
  const std::size_t n = m.num_atoms();
  Decoded d;
  d.atoms.resize(n);
  d.bonds.resize(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    d.atoms[i] = m.atom_type(i);
    if (d.atoms[i] != AtomType::kEmpty)
      d.present.push_back(i);
    for (std::size_t j = 0; j < n; ++j)
      d.bonds[i * n + j] = m.bond_type(i, j);
  }
  return d;
}

PropertyVector properties_of(const Decoded &d) {
  PropertyVector p;
  const std::size_t count = d.present.size();
  const std::size_t n = d.atoms.size();
  if (count == 0) {
    p.valency_validity = 1.0;
    p.connectivity = 1.0;
    p.heteroatom_ratio = 0.0;
    return p;
  }

  std::size_t valency_ok = 0, hetero = 0;
  for (std::size_t i: d.present) {
    double used = 0;
    for (std::size_t j: d.present)
      if (j != i)
        used += BondVocab::valency_weight[index_of(d.bond(i, j))];
    if (used <= AtomVocab::max_valency[index_of(d.atoms[i])])
      ++valency_ok;
    if (d.atoms[i] != AtomType::kC)
      ++hetero;
  }

  // Largest component by union-find over present atoms.
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), std::size_t { 0 });
  auto find = [&](std::size_t v) {
    while (parent[v] != v)
      v = parent[v] = parent[parent[v]];
    return v;
  };
  for (std::size_t a = 0; a < count; ++a)
    for (std::size_t b = a + 1; b < count; ++b) {
      const std::size_t i = d.present[a], j = d.present[b];
      if (d.bond(i, j) != BondType::kNone)
        parent[find(i)] = find(j);
    }
  std::vector<std::size_t> sizes(n, 0);
  for (std::size_t i: d.present)
    ++sizes[find(i)];
  const std::size_t largest = *std::max_element(sizes.begin(), sizes.end());

  p.valency_validity =
      static_cast<double>(valency_ok) / static_cast<double>(count);
  p.connectivity =
      count <= 1 ? 1.0
                 : static_cast<double>(largest) / static_cast<double>(count);
  p.heteroatom_ratio = static_cast<double>(hetero) / static_cast<double>(count);
  return p;
}
} // namespace

Molecule::Molecule(std::size_t n)
    : atoms_(Matrix::Zero(ix(n), ix(kAtomTypes))),
      bonds_(Matrix::Zero(ix(n), ix(n * kBondTypes))) {
  for (std::size_t i = 0; i < n; ++i) {
    atoms_(ix(i), ix(kEmptyIndex)) = 1.0;
    for (std::size_t j = 0; j < n; ++j)
      bonds_(ix(i), ix(j * kBondTypes + kNoneIndex)) = 1.0;
  }
}

void Molecule::set_atom(std::size_t i, AtomType type) {
  atoms_.row(ix(i)).setZero();
  atoms_(ix(i), ix(index_of(type))) = 1.0;
}

void Molecule::set_bond(std::size_t i, std::size_t j, BondType type) {
  for (auto [a, b]: { std::pair { i, j }, std::pair { j, i } }) {
    bonds_.block(ix(a), ix(b * kBondTypes), 1, ix(kBondTypes)).setZero();
    bonds_(ix(a), ix(b * kBondTypes + index_of(type))) = 1.0;
  }
}

AtomType Molecule::atom_type(std::size_t i) const {
  return static_cast<AtomType>(argmax(atoms_.row(ix(i))));
}

BondType Molecule::bond_type(std::size_t i, std::size_t j) const {
  return static_cast<BondType>(argmax(
      bonds_.block(ix(i), ix(j * kBondTypes), 1, ix(kBondTypes)).row(0)));
}

SoftMolecule to_soft(const Molecule &m) {
  return SoftMolecule { m.atoms(), m.bonds() };
}

Scalar soft_invariant_error(const SoftMolecule &m) {
  const std::size_t n = m.num_atoms();
  Scalar worst = 0;
  for (std::size_t i = 0; i < n; ++i) {
    worst = std::max(worst, std::abs(m.atom_probs.row(ix(i)).sum() - 1.0));
    for (std::size_t j = 0; j < n; ++j) {
      Scalar fiber = 0;
      for (std::size_t t = 0; t < kBondTypes; ++t) {
        fiber += m.bond(i, j, t);
        worst = std::max(worst, std::abs(m.bond(i, j, t) - m.bond(j, i, t)));
        if (i == j)
          worst = std::max(worst, std::abs(m.bond(i, i, t)
                                           - (t == kNoneIndex ? 1.0 : 0.0)));
      }
      worst = std::max(worst, std::abs(fiber - 1.0));
    }
  }
  return worst;
}

std::string Violation::describe() const {
  std::ostringstream os;
  switch (kind) {
  case Kind::kAtomNotOneHot: os << "atom row " << i << " is not one-hot"; break;
  case Kind::kBondNotOneHot:
    os << "bond fiber (" << i << "," << j << ") is not one-hot";
    break;
  case Kind::kAsymmetricBond:
    os << "bond fibers (" << i << "," << j << ") and (" << j << "," << i
       << ") differ";
    break;
  case Kind::kSelfBond: os << "diagonal fiber " << i << " is not none"; break;
  case Kind::kEmptyAtomBond:
    os << "empty atom " << i << " bonded to " << j;
    break;
  }
  return os.str();
}

std::string ValidityReport::describe() const {
  if (violations.empty())
    return "ok";
  std::string out;
  for (std::size_t k = 0; k < violations.size(); ++k) {
    if (k == 8) {
      out += "; ... (" + std::to_string(violations.size()) + " total)";
      break;
    }
    out += (k ? "; " : "") + violations[k].describe();
  }
  return out;
}

ValidityReport validate_molecule(const Molecule &m) {
  const std::size_t n = m.num_atoms();
  if (m.atoms().cols() != ix(kAtomTypes) || m.bonds().rows() != ix(n)
      || m.bonds().cols() != ix(n * kBondTypes))
    throw ContractViolation(
        "validate_molecule: expected atoms " + std::to_string(n) + "x"
        + std::to_string(kAtomTypes) + " and bonds " + std::to_string(n) + "x"
        + std::to_string(n * kBondTypes) + ", got "
        + std::to_string(m.atoms().rows()) + "x"
        + std::to_string(m.atoms().cols()) + " and "
        + std::to_string(m.bonds().rows()) + "x"
        + std::to_string(m.bonds().cols()));

  using Kind = Violation::Kind;
  ValidityReport report;
  auto fiber = [&](std::size_t i, std::size_t j) {
    return m.bonds().block(ix(i), ix(j * kBondTypes), 1, ix(kBondTypes)).row(0);
  };

  std::vector<bool> atom_ok(n);
  for (std::size_t i = 0; i < n; ++i) {
    atom_ok[i] = is_one_hot(m.atoms().row(ix(i)));
    if (!atom_ok[i])
      report.violations.push_back({ Kind::kAtomNotOneHot, i, i });
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const bool hot = is_one_hot(fiber(i, j));
      if (!hot)
        report.violations.push_back({ Kind::kBondNotOneHot, i, j });
      if (i == j) {
        if (hot && m.bond(i, i, kNoneIndex) != 1.0)
          report.violations.push_back({ Kind::kSelfBond, i, i });
        continue;
      }
      if (i < j && fiber(i, j) != fiber(j, i))
        report.violations.push_back({ Kind::kAsymmetricBond, i, j });
      if (atom_ok[i] && m.atoms()(ix(i), ix(kEmptyIndex)) == 1.0 && hot
          && m.bond(i, j, kNoneIndex) != 1.0)
        report.violations.push_back({ Kind::kEmptyAtomBond, i, j });
    }
  return report;
}

PropertyVector property_oracle(const Molecule &m) {
  ValidityReport report = validate_molecule(m);
  if (!report.ok())
    throw InvalidMolecule(std::move(report));
  return properties_of(decode(m));
}

PropertyVector fallback_properties(const Molecule &m) {
  PropertyVector p = properties_of(decode(m));
  p.valency_validity = 0.0;
  return p;
}

bool is_chemically_valid(const Molecule &m) {
  if (!validate_molecule(m).ok())
    return false;
  const Decoded d = decode(m);
  if (d.present.empty())
    return false;
  const PropertyVector p = properties_of(d);
  return p.valency_validity == 1.0 && p.connectivity == 1.0;
}

Molecule from_raw(const RawMolecule &raw, std::size_t slots) {
  if (raw.atoms.size() > slots)
    throw ContractViolation("from_raw: " + std::to_string(raw.atoms.size())
                            + " atoms exceed " + std::to_string(slots)
                            + " slots");
  Molecule m(slots);
  for (std::size_t i = 0; i < raw.atoms.size(); ++i)
    m.set_atom(i, raw.atoms[i]);
  for (const BondEntry &b: raw.bonds) {
    if (b.i >= raw.atoms.size() || b.j >= raw.atoms.size() || b.i == b.j)
      throw ContractViolation("from_raw: bad bond (" + std::to_string(b.i)
                              + "," + std::to_string(b.j) + ")");
    m.set_bond(b.i, b.j, b.type);
  }
  return m;
}

Molecule trim_ligand(const RawMolecule &raw, std::size_t slots) {
  std::vector<std::size_t> alive(raw.atoms.size());
  std::iota(alive.begin(), alive.end(), std::size_t { 0 });
  std::vector<BondEntry> bonds;
  for (const BondEntry &b: raw.bonds)
    if (b.type != BondType::kNone)
      bonds.push_back(b);

  while (alive.size() > slots) {
    std::size_t victim = alive.front();
    std::size_t fewest = std::numeric_limits<std::size_t>::max();
    for (std::size_t a: alive) {
      const auto degree = static_cast<std::size_t>(
          std::count_if(bonds.begin(), bonds.end(), [a](const BondEntry &b) {
            return b.i == a || b.j == a;
          }));
      if (degree < fewest) {
        fewest = degree;
        victim = a;
      }
    }
    alive.erase(std::find(alive.begin(), alive.end(), victim));
    std::erase_if(bonds, [victim](const BondEntry &b) {
      return b.i == victim || b.j == victim;
    });
  }

  std::vector<std::size_t> slot_of(raw.atoms.size(), slots);
  RawMolecule kept;
  for (std::size_t k = 0; k < alive.size(); ++k) {
    slot_of[alive[k]] = k;
    kept.atoms.push_back(raw.atoms[alive[k]]);
  }
  for (const BondEntry &b: bonds)
    kept.bonds.push_back({ slot_of[b.i], slot_of[b.j], b.type });
  return from_raw(kept, slots);
}

Molecule permute(const Molecule &m, std::span<const std::size_t> perm) {
  const std::size_t n = m.num_atoms();
  if (perm.size() != n)
    throw ContractViolation("permute: permutation size mismatch");
  Matrix atoms(ix(n), ix(kAtomTypes));
  Matrix bonds(ix(n), ix(n * kBondTypes));
  for (std::size_t i = 0; i < n; ++i) {
    atoms.row(ix(i)) = m.atoms().row(ix(perm[i]));
    for (std::size_t j = 0; j < n; ++j)
      bonds.block(ix(i), ix(j * kBondTypes), 1, ix(kBondTypes)) =
          m.bonds().block(ix(perm[i]), ix(perm[j] * kBondTypes), 1,
                          ix(kBondTypes));
  }
  return Molecule(std::move(atoms), std::move(bonds));
}

} // namespace tagmol
