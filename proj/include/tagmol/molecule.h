//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_MOLECULE_H_
#define TAGMOL_MOLECULE_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tagmol/error.h"
#include "tagmol/tensor.h"

namespace tagmol {

/* Vocabularies. The last atom type is the explicit empty slot and the first
 * bond type is the explicit "no bond" category. */

enum class AtomType : std::uint8_t { kC, kN, kO, kF, kS, kCl, kEmpty };
enum class BondType : std::uint8_t {
  kNone,
  kSingle,
  kDouble,
  kTriple,
  kAromatic
};

inline constexpr std::size_t kAtomTypes = 7;
inline constexpr std::size_t kBondTypes = 5;
inline constexpr std::size_t kDefaultMaxAtoms = 32;
inline constexpr std::size_t kEmptyIndex = kAtomTypes - 1;
inline constexpr std::size_t kNoneIndex = 0;

struct AtomVocab {
  static constexpr std::array<std::string_view, kAtomTypes> symbols {
    "C", "N", "O", "F", "S", "Cl", "*"
  };
  static constexpr std::array<int, kAtomTypes> max_valency {
    4, 3, 2, 1, 6, 1, 0
  };
  static constexpr std::array<double, kAtomTypes> mass {
    12.011, 14.007, 15.999, 18.998, 32.06, 35.45, 0.0
  };
};

struct BondVocab {
  static constexpr std::array<std::string_view, kBondTypes> names {
    "none", "single", "double", "triple", "aromatic"
  };
  static constexpr std::array<double, kBondTypes> valency_weight {
    0.0, 1.0, 2.0, 3.0, 1.5
  };
};

constexpr std::size_t index_of(AtomType t) {
  return static_cast<std::size_t>(t);
}
constexpr std::size_t index_of(BondType t) {
  return static_cast<std::size_t>(t);
}

// Discrete molecular graph: one-hot atom matrix (N x A) and one-hot bond
// tensor (N x N x B) stored as an N x (N*B) matrix, bonds(i, j*B + t).
// Construction does not enforce the one-hot invariants; validate_molecule
// reports violations.
class Molecule {
public:
  Molecule() = default;
  // All-empty molecule with `n` slots.
  explicit Molecule(std::size_t n);
  Molecule(Matrix atoms, Matrix bonds)
      : atoms_(std::move(atoms)), bonds_(std::move(bonds)) { }

  std::size_t num_atoms() const {
    return static_cast<std::size_t>(atoms_.rows());
  }

  const Matrix &atoms() const { return atoms_; }
  const Matrix &bonds() const { return bonds_; }
  Matrix &atoms() { return atoms_; }
  Matrix &bonds() { return bonds_; }

  Scalar bond(std::size_t i, std::size_t j, std::size_t t) const {
    return bonds_(static_cast<Eigen::Index>(i),
                  static_cast<Eigen::Index>(j * kBondTypes + t));
  }

  void set_atom(std::size_t i, AtomType type);
  // Sets the one-hot fibers (i,j) and (j,i).
  void set_bond(std::size_t i, std::size_t j, BondType type);

  // Argmax decoding; meaningful for valid molecules.
  AtomType atom_type(std::size_t i) const;
  BondType bond_type(std::size_t i, std::size_t j) const;

  bool operator==(const Molecule &other) const {
    return atoms_ == other.atoms_ && bonds_ == other.bonds_;
  }

private:
  Matrix atoms_;
  Matrix bonds_;
};

// Continuous relaxation with the same layout: row-stochastic atoms,
// fiber-stochastic symmetric bonds with "none" on the diagonal.
struct SoftMolecule {
  Matrix atom_probs;
  Matrix bond_probs;

  std::size_t num_atoms() const {
    return static_cast<std::size_t>(atom_probs.rows());
  }
  Scalar bond(std::size_t i, std::size_t j, std::size_t t) const {
    return bond_probs(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(j * kBondTypes + t));
  }
};

// Lifts a hard molecule into the soft representation.
SoftMolecule to_soft(const Molecule &m);

// Maximum deviation from the soft invariants (row sums, fiber sums,
// symmetry, diagonal). Zero for an exact SoftMolecule.
Scalar soft_invariant_error(const SoftMolecule &m);

/* Validation */

struct Violation {
  enum class Kind {
    kAtomNotOneHot,
    kBondNotOneHot,
    kAsymmetricBond,
    kSelfBond,
    kEmptyAtomBond,
  };
  Kind kind;
  std::size_t i = 0;
  std::size_t j = 0;

  std::string describe() const;
};

struct ValidityReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

// Throws ContractViolation on wrong shapes.
ValidityReport validate_molecule(const Molecule &m);

// A molecule that failed validation where a valid one was required.
class InvalidMolecule: public ContractViolation {
public:
  explicit InvalidMolecule(ValidityReport report)
      : ContractViolation("invalid molecule: " + report.describe()),
        report_(std::move(report)) { }
  const ValidityReport &report() const { return report_; }

private:
  ValidityReport report_;
};

/* Property oracle */

inline constexpr std::size_t kPropertyCount = 3;

struct PropertyVector {
  double valency_validity = 0;
  double connectivity = 0;
  double heteroatom_ratio = 0;

  std::array<double, kPropertyCount> as_array() const {
    return { valency_validity, connectivity, heteroatom_ratio };
  }
  bool operator==(const PropertyVector &) const = default;
};

// Deterministic graph properties standing in for an external cheminformatics
// toolkit:
//   valency_validity  fraction of non-empty atoms whose summed bond weights
//                     do not exceed the atom's max valency (1 if none)
//   connectivity      largest connected component / non-empty atoms (1 if
//                     at most one atom)
//   heteroatom_ratio  non-carbon atoms / non-empty atoms (0 if none)
// Throws InvalidMolecule if `m` fails validation.
PropertyVector property_oracle(const Molecule &m);

// Same properties for a structurally invalid molecule, decoded by argmax with
// validity forced to 0. Used where training must not stop on bad samples.
PropertyVector fallback_properties(const Molecule &m);

// A molecule is "valid" for reporting when it passes validation, has at
// least one atom, every atom respects its valency and the graph is connected.
bool is_chemically_valid(const Molecule &m);

/* Raw molecules and trimming */

struct BondEntry {
  std::size_t i = 0;
  std::size_t j = 0;
  BondType type = BondType::kSingle;
};

// Variable-size molecule before fitting into N slots.
struct RawMolecule {
  std::vector<AtomType> atoms;
  std::vector<BondEntry> bonds;
};

Molecule from_raw(const RawMolecule &raw, std::size_t slots);

// Removes the atom with the fewest bonds (lowest index on ties) until at most
// `slots` atoms remain, then pads with empty atoms.
Molecule trim_ligand(const RawMolecule &raw,
                     std::size_t slots = kDefaultMaxAtoms);

// Applies a node permutation: atom i of the result is atom perm[i] of `m`.
Molecule permute(const Molecule &m, std::span<const std::size_t> perm);

} // namespace tagmol

#endif // TAGMOL_MOLECULE_H_
