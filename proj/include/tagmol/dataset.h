//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_DATASET_H_
#define TAGMOL_DATASET_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tagmol/hash.h"
#include "tagmol/molecule.h"

namespace tagmol {

// 20 amino-acid composition fractions (order "ACDEFGHIKLMNPQRSTVWY") followed
// by sequence length / 1000.
inline constexpr std::size_t kProteinFeatures = 21;
inline constexpr std::string_view kAminoAcids = "ACDEFGHIKLMNPQRSTVWY";

struct ProteinRecord {
  std::string id;
  Vector features = Vector::Zero(kProteinFeatures);

  bool operator==(const ProteinRecord &o) const {
    return id == o.id && features == o.features;
  }
};

struct PairRecord {
  ProteinRecord protein;
  Molecule ligand;

  bool operator==(const PairRecord &) const = default;
};

// Fraction of polar and charged residues (D E H K N Q R S T Y). The synthetic
// ligands are conditioned on this statistic.
double protein_polarity(const ProteinRecord &p);

// One JSON object per line:
//   {"id": str, "protein_features": [21 numbers],
//    "atoms": [N atom-type indices], "bonds": [[i, j, type], ...]}
// with bonds listing only non-none entries with i < j. Throws ParseError
// carrying `line_no`.
PairRecord parse_pair_record(std::string_view line, std::size_t line_no = 0);
std::string serialize_pair_record(const PairRecord &record);

std::vector<PairRecord> read_dataset(const std::filesystem::path &path);
void write_dataset(const std::filesystem::path &path,
                   const std::vector<PairRecord> &records);

// Deterministic synthetic protein-ligand pairs. Proteins come from a few
// composition families; each ligand's heteroatom fraction, heteroatom types
// and bond orders follow the protein's polarity, so the pairing is learnable.
// Every ligand passes validation with full valency validity.
std::vector<PairRecord> synthesize_dataset(std::uint64_t seed,
                                           std::size_t count,
                                           std::size_t max_atoms
                                           = kDefaultMaxAtoms);

} // namespace tagmol

#endif // TAGMOL_DATASET_H_
