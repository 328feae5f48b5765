//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/dataset.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <utility>

#include <json.hpp>

namespace tagmol {
namespace {
using json = nlohmann::json;

constexpr std::array<bool, 20> kPolar = {
  // A  C  D  E  F  G  H  I  K  L  M  N  P  Q  R  S  T  V  W  Y
  0, 0, 1, 1, 0, 0, 1, 0, 1, 0, 0, 1, 0, 1, 1, 1, 1, 0, 0, 1,
};

[[noreturn]] void fail(const std::string &msg, std::size_t line) {
  throw ParseError(msg, line);
}

std::size_t as_index(const json &v, std::size_t limit, const char *what,
                     std::size_t line) {
  if (!v.is_number_integer())
    fail(std::string(what) + " must be an integer", line);
  const auto x = v.get<std::int64_t>();
  if (x < 0 || static_cast<std::uint64_t>(x) >= limit)
    fail(std::string(what) + " " + std::to_string(x) + " out of range [0, "
             + std::to_string(limit) + ")",
         line);
  return static_cast<std::size_t>(x);
}
} // namespace

double protein_polarity(const ProteinRecord &p) {
  double s = 0;
  for (std::size_t k = 0; k < 20; ++k)
    if (kPolar[k])
      s += p.features[static_cast<Eigen::Index>(k)];
  return s;
}

PairRecord parse_pair_record(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error &e) {
    fail(std::string("malformed JSON: ") + e.what(), line_no);
  }
  if (!j.is_object())
    fail("record must be a JSON object", line_no);
  for (const char *key: { "id", "protein_features", "atoms", "bonds" })
    if (!j.contains(key))
      fail(std::string("missing field '") + key + "'", line_no);

  PairRecord rec;
  if (!j["id"].is_string())
    fail("id must be a string", line_no);
  rec.protein.id = j["id"].get<std::string>();

  const json &feats = j["protein_features"];
  if (!feats.is_array() || feats.size() != kProteinFeatures)
    fail("protein_features must hold " + std::to_string(kProteinFeatures)
             + " numbers",
         line_no);
  double composition = 0;
  for (std::size_t k = 0; k < kProteinFeatures; ++k) {
    if (!feats[k].is_number())
      fail("protein_features must be numeric", line_no);
    const double v = feats[k].get<double>();
    if (!std::isfinite(v) || v < 0)
      fail("protein_features entries must be finite and non-negative",
           line_no);
    rec.protein.features[static_cast<Eigen::Index>(k)] = v;
    if (k < 20)
      composition += v;
  }
  if (std::abs(composition - 1.0) > 1e-6)
    fail("amino-acid composition sums to " + std::to_string(composition),
         line_no);

  const json &atoms = j["atoms"];
  if (!atoms.is_array() || atoms.empty())
    fail("atoms must be a non-empty array", line_no);
  const std::size_t n = atoms.size();
  Molecule mol(n);
  for (std::size_t i = 0; i < n; ++i)
    mol.set_atom(i, static_cast<AtomType>(
                        as_index(atoms[i], kAtomTypes, "atom type", line_no)));

  const json &bonds = j["bonds"];
  if (!bonds.is_array())
    fail("bonds must be an array", line_no);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const json &b: bonds) {
    if (!b.is_array() || b.size() != 3)
      fail("bond entries must be [i, j, type]", line_no);
    const std::size_t bi = as_index(b[0], n, "bond atom", line_no);
    const std::size_t bj = as_index(b[1], n, "bond atom", line_no);
    const std::size_t bt = as_index(b[2], kBondTypes, "bond type", line_no);
    if (bi >= bj)
      fail("bond (" + std::to_string(bi) + "," + std::to_string(bj)
               + ") must satisfy i < j",
           line_no);
    if (bt == kNoneIndex)
      fail("bond list must not contain none bonds", line_no);
    if (!seen.emplace(bi, bj).second)
      fail("duplicate bond (" + std::to_string(bi) + "," + std::to_string(bj)
               + ")",
           line_no);
    mol.set_bond(bi, bj, static_cast<BondType>(bt));
  }

  const ValidityReport report = validate_molecule(mol);
  if (!report.ok())
    fail("invalid ligand: " + report.describe(), line_no);
  rec.ligand = std::move(mol);
  return rec;
}

std::string serialize_pair_record(const PairRecord &record) {
  json j;
  j["id"] = record.protein.id;
  std::vector<double> feats(record.protein.features.data(),
                            record.protein.features.data()
                                + record.protein.features.size());
  j["protein_features"] = feats;
  const Molecule &m = record.ligand;
  std::vector<std::size_t> atoms(m.num_atoms());
  json bonds = json::array();
  for (std::size_t i = 0; i < m.num_atoms(); ++i) {
    atoms[i] = index_of(m.atom_type(i));
    for (std::size_t k = i + 1; k < m.num_atoms(); ++k)
      if (const BondType t = m.bond_type(i, k); t != BondType::kNone)
        bonds.push_back({ i, k, index_of(t) });
  }
  j["atoms"] = atoms;
  j["bonds"] = bonds;
  return j.dump();
}

std::vector<PairRecord> read_dataset(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in)
    throw std::runtime_error("cannot open dataset " + path.string());
  std::vector<PairRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos)
      continue;
    records.push_back(parse_pair_record(line, line_no));
  }
  return records;
}

void write_dataset(const std::filesystem::path &path,
                   const std::vector<PairRecord> &records) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("cannot write dataset " + path.string());
  for (const PairRecord &r: records)
    out << serialize_pair_record(r) << '\n';
  if (!out)
    throw std::runtime_error("write failed for " + path.string());
}

std::vector<PairRecord> synthesize_dataset(std::uint64_t seed,
                                           std::size_t count,
                                           std::size_t max_atoms) {
  if (count == 0)
    throw ContractViolation("synthesize_dataset: count must be >= 1");
  if (max_atoms < 2)
    throw ContractViolation("synthesize_dataset: need at least 2 atom slots");

  // Family polarity targets; proteins scatter around them.
  constexpr std::array<double, 4> kFamilyPolarity { 0.15, 0.4, 0.6, 0.85 };
  constexpr double kConcentration = 60.0;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> family_dist(
      0, kFamilyPolarity.size() - 1);
  std::uniform_int_distribution<int> length_dist(80, 1000);
  const std::size_t min_atoms = std::max<std::size_t>(2, (max_atoms + 1) / 2);
  std::uniform_int_distribution<std::size_t> size_dist(min_atoms, max_atoms);

  std::vector<PairRecord> out;
  out.reserve(count);
  for (std::size_t r = 0; r < count; ++r) {
    PairRecord rec;
    rec.protein.id = "synth-" + std::to_string(seed) + "-" + std::to_string(r);

    // Dirichlet composition via normalized gamma draws.
    const double target = kFamilyPolarity[family_dist(rng)];
    double total = 0;
    std::array<double, 20> comp {};
    for (std::size_t k = 0; k < 20; ++k) {
      const double share = kPolar[k] ? target / 10.0 : (1.0 - target) / 10.0;
      std::gamma_distribution<double> g(kConcentration * share, 1.0);
      comp[k] = g(rng) + 1e-12;
      total += comp[k];
    }
    double check = 0;
    for (std::size_t k = 0; k < 20; ++k) {
      rec.protein.features[static_cast<Eigen::Index>(k)] = comp[k] / total;
      check += comp[k] / total;
    }
    // Fold rounding residue into the largest entry so the sum is 1.
    auto largest = std::max_element(rec.protein.features.data(),
                                    rec.protein.features.data() + 20);
    *largest += 1.0 - check;
    rec.protein.features[20] = length_dist(rng) / 1000.0;

    const double polarity = protein_polarity(rec.protein);
    const double hetero_p = std::clamp(0.05 + 0.8 * polarity, 0.0, 0.9);

    // Random tree skeleton, carbon-valency bounded.
    const std::size_t n = size_dist(rng);
    std::vector<std::size_t> degree(n, 0);
    RawMolecule raw;
    raw.atoms.assign(n, AtomType::kC);
    for (std::size_t i = 1; i < n; ++i) {
      std::size_t parent;
      do {
        parent = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
      } while (degree[parent] >= 4);
      raw.bonds.push_back({ parent, i, BondType::kSingle });
      ++degree[parent];
      ++degree[i];
    }

    // Heteroatoms: polar proteins favour N/O, apolar ones halogens and S.
    for (std::size_t i = 0; i < n; ++i) {
      if (unit(rng) >= hetero_p)
        continue;
      std::vector<std::pair<AtomType, double>> options;
      auto allow = [&](AtomType t, double w) {
        if (static_cast<std::size_t>(AtomVocab::max_valency[index_of(t)])
            >= degree[i])
          options.emplace_back(t, w);
      };
      allow(AtomType::kN, 0.2 + polarity);
      allow(AtomType::kO, 0.1 + polarity);
      allow(AtomType::kS, 0.3 * (1.0 - polarity) + 0.05);
      allow(AtomType::kF, 1.0 - polarity);
      allow(AtomType::kCl, 0.6 * (1.0 - polarity));
      double sum = 0;
      for (auto &o: options)
        sum += o.second;
      double pick = unit(rng) * sum;
      for (auto &o: options) {
        pick -= o.second;
        if (pick <= 0) {
          raw.atoms[i] = o.first;
          break;
        }
      }
    }

    // Bond-order upgrades where both ends have spare valency.
    std::vector<double> used(n);
    for (std::size_t i = 0; i < n; ++i)
      used[i] = static_cast<double>(degree[i]);
    const double double_p = 0.15 + 0.3 * polarity;
    for (BondEntry &b: raw.bonds) {
      auto spare = [&](std::size_t a) {
        return AtomVocab::max_valency[index_of(raw.atoms[a])] - used[a];
      };
      const double u = unit(rng);
      if (u < 0.04 && spare(b.i) >= 2 && spare(b.j) >= 2) {
        b.type = BondType::kTriple;
        used[b.i] += 2;
        used[b.j] += 2;
      } else if (u < double_p && spare(b.i) >= 1 && spare(b.j) >= 1) {
        b.type = BondType::kDouble;
        used[b.i] += 1;
        used[b.j] += 1;
      }
    }

    rec.ligand = from_raw(raw, max_atoms);
    out.push_back(std::move(rec));
  }
  return out;
}

} // namespace tagmol
