//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/networks.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "tagmol/error.h"

namespace tagmol {
namespace {
using ad::Shape;
using ad::Tape;
using ad::Tensor;

constexpr std::size_t kRelations = kBondTypes - 1;

void require(bool ok, const std::string &msg) {
  if (!ok)
    throw ContractViolation(msg);
}

Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b) {
  return ad::matmul(x, w) + ad::expand(b, 0, x.dim(0));
}

std::size_t layer_input(const NetConfig &cfg, std::size_t layer) {
  return layer == 0 ? kAtomTypes : cfg.graph_width;
}

std::size_t per_layer(const NetConfig &cfg) {
  return (cfg.variant == LayerVariant::kGcn ? 1 : 0) + 3 * kRelations;
}

std::size_t trunk_size(const NetConfig &cfg) {
  return cfg.graph_layers * per_layer(cfg);
}

void add_trunk(ParamGroup &g, const NetConfig &cfg, std::mt19937_64 &rng) {
  require(cfg.graph_layers >= 1 && cfg.graph_width >= 1,
          "graph trunk needs at least one layer of positive width");
  const std::size_t f_out = cfg.graph_width;
  for (std::size_t l = 0; l < cfg.graph_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    const std::size_t f_in = layer_input(cfg, l);
    if (cfg.variant == LayerVariant::kGcn)
      g.add_glorot(pre + "self", { f_in, f_out }, rng);
    for (std::size_t r = 1; r <= kRelations; ++r) {
      const std::string rel = std::to_string(r);
      g.add_glorot(pre + "w" + rel, { f_in, f_out }, rng);
      g.add_glorot(pre + "a_src" + rel, { f_out, 1 }, rng);
      g.add_glorot(pre + "a_dst" + rel, { f_out, 1 }, rng);
    }
  }
}

std::size_t argmax_of(std::span<const Scalar> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end())
                                  - v.begin());
}

std::size_t sample_of(std::span<const Scalar> p, Scalar temperature,
                      std::mt19937_64 &rng) {
  std::vector<Scalar> w(p.size());
  Scalar total = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    w[k] = std::pow(std::max<Scalar>(p[k], 0), 1.0 / temperature);
    total += w[k];
  }
  if (!(total > 0) || !std::isfinite(total))
    return argmax_of(p);
  Scalar u = std::uniform_real_distribution<Scalar>(0, total)(rng);
  for (std::size_t k = 0; k < w.size(); ++k) {
    u -= w[k];
    if (u < 0)
      return k;
  }
  return argmax_of(p);
}

void check_graph(const Tensor &h, const Tensor &bonds, const char *op) {
  require(h.rank() == 3 && bonds.rank() == 4 && bonds.dim(0) == h.dim(0)
              && bonds.dim(1) == h.dim(1) && bonds.dim(2) == h.dim(1)
              && bonds.dim(3) == kBondTypes,
          std::string(op) + ": expected H [Bt,N,F] and bonds [Bt,N,N,"
              + std::to_string(kBondTypes) + "], got "
              + ad::shape_str(h.shape()) + " and "
              + ad::shape_str(bonds.shape()));
}

Tensor relation_probs(const Tensor &bonds, std::size_t r) {
  const std::size_t bt = bonds.dim(0), n = bonds.dim(1);
  return ad::reshape(ad::slice(bonds, 3, r, 1), { bt, n, n });
}
} // namespace

std::string_view variant_name(LayerVariant v) {
  return v == LayerVariant::kGat ? "gat" : "gcn";
}

LayerVariant parse_variant(std::string_view s) {
  if (s == "gat")
    return LayerVariant::kGat;
  if (s == "gcn")
    return LayerVariant::kGcn;
  throw ConfigError("unknown layer variant '" + std::string(s)
                    + "' (expected gat or gcn)");
}

ParamGroup make_encoder(const NetConfig &cfg, std::mt19937_64 &rng) {
  ParamGroup g("encoder");
  if (cfg.xdim == 0)
    return g;
  g.add_glorot("l1.w", { cfg.protein_features, cfg.encoder_hidden }, rng);
  g.add_zeros("l1.b", { cfg.encoder_hidden });
  g.add_glorot("l2.w", { cfg.encoder_hidden, cfg.xdim }, rng);
  g.add_zeros("l2.b", { cfg.xdim });
  return g;
}

ParamGroup make_generator(const NetConfig &cfg, std::mt19937_64 &rng) {
  require(cfg.zdim >= 1, "make_generator: zdim must be >= 1");
  ParamGroup g("generator");
  std::size_t in = cfg.xdim + cfg.zdim;
  for (std::size_t l = 0; l < cfg.generator_hidden.size(); ++l) {
    const std::string pre = "l" + std::to_string(l + 1) + ".";
    g.add_glorot(pre + "w", { in, cfg.generator_hidden[l] }, rng);
    g.add_zeros(pre + "b", { cfg.generator_hidden[l] });
    in = cfg.generator_hidden[l];
  }
  const std::size_t n = cfg.max_atoms;
  g.add_glorot("atom.w", { in, n * kAtomTypes }, rng);
  g.add_zeros("atom.b", { n * kAtomTypes });
  g.add_glorot("bond.w", { in, n * n * kBondTypes }, rng);
  g.add_zeros("bond.b", { n * n * kBondTypes });
  return g;
}

ParamGroup make_critic(const NetConfig &cfg, std::mt19937_64 &rng) {
  ParamGroup g("critic");
  add_trunk(g, cfg, rng);
  g.add_glorot("head.w", { 2 * cfg.graph_width, 1 }, rng);
  g.add_zeros("head.b", { 1 });
  return g;
}

ParamGroup make_energy(const NetConfig &cfg, std::mt19937_64 &rng) {
  ParamGroup g("energy");
  add_trunk(g, cfg, rng);
  g.add_glorot("fuse.w", { 2 * cfg.graph_width + cfg.xdim, cfg.energy_hidden },
               rng);
  g.add_zeros("fuse.b", { cfg.energy_hidden });
  g.add_glorot("out.w", { cfg.energy_hidden, 1 }, rng);
  g.add_zeros("out.b", { 1 });
  return g;
}

ParamGroup make_reward(const NetConfig &cfg, std::mt19937_64 &rng) {
  require(cfg.property_count >= 1, "make_reward: property_count must be >= 1");
  ParamGroup g("reward");
  add_trunk(g, cfg, rng);
  g.add_glorot("head.w", { 2 * cfg.graph_width, cfg.property_count }, rng);
  g.add_zeros("head.b", { cfg.property_count });
  return g;
}

Networks init_networks(const NetConfig &cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Networks nets;
  nets.encoder = make_encoder(cfg, rng);
  nets.generator = make_generator(cfg, rng);
  nets.critic = make_critic(cfg, rng);
  nets.energy = make_energy(cfg, rng);
  nets.reward = make_reward(cfg, rng);
  return nets;
}

GraphBatch to_batch(Tape &tape, std::span<const Molecule> mols) {
  require(!mols.empty(), "to_batch: empty batch");
  const std::size_t n = mols[0].num_atoms();
  std::vector<Scalar> atoms, bonds;
  atoms.reserve(mols.size() * n * kAtomTypes);
  bonds.reserve(mols.size() * n * n * kBondTypes);
  for (const Molecule &m: mols) {
    require(m.num_atoms() == n && m.atoms().cols() == Eigen::Index(kAtomTypes)
                && m.bonds().cols() == Eigen::Index(n * kBondTypes),
            "to_batch: molecules differ in shape");
    atoms.insert(atoms.end(), m.atoms().data(),
                 m.atoms().data() + m.atoms().size());
    bonds.insert(bonds.end(), m.bonds().data(),
                 m.bonds().data() + m.bonds().size());
  }
  return { tape.constant({ mols.size(), n, kAtomTypes }, std::move(atoms)),
           tape.constant({ mols.size(), n, n, kBondTypes }, std::move(bonds)) };
}

GraphBatch to_batch(Tape &tape, std::span<const SoftMolecule> mols) {
  std::vector<Molecule> wrapped;
  wrapped.reserve(mols.size());
  for (const SoftMolecule &m: mols)
    wrapped.emplace_back(m.atom_probs, m.bond_probs);
  return to_batch(tape, std::span<const Molecule>(wrapped));
}

SoftMolecule soft_at(const GraphBatch &g, std::size_t b) {
  const Molecule m = molecule_at(g, b);
  return { m.atoms(), m.bonds() };
}

Molecule molecule_at(const GraphBatch &g, std::size_t b) {
  require(b < g.batch(), "molecule_at: index out of range");
  const std::size_t n = g.num_atoms();
  const auto n_ix = static_cast<Eigen::Index>(n);
  Matrix atoms(n_ix, static_cast<Eigen::Index>(kAtomTypes));
  Matrix bonds(n_ix, static_cast<Eigen::Index>(n * kBondTypes));
  const auto av = g.atoms.values().subspan(b * n * kAtomTypes,
                                           n * kAtomTypes);
  const auto bv = g.bonds.values().subspan(b * n * n * kBondTypes,
                                           n * n * kBondTypes);
  std::copy(av.begin(), av.end(), atoms.data());
  std::copy(bv.begin(), bv.end(), bonds.data());
  return Molecule(std::move(atoms), std::move(bonds));
}

Tensor encode_protein(const NetConfig &cfg, const BoundParams &tau,
                      const Tensor &xp) {
  require(xp.rank() == 2 && xp.dim(1) == cfg.protein_features,
          "encode_protein: expected protein features [Bt,"
              + std::to_string(cfg.protein_features) + "], got "
              + ad::shape_str(xp.shape()));
  if (cfg.xdim == 0)
    return xp.tape().constant({ xp.dim(0), 0 }, {});
  const Tensor h = ad::leaky_relu(linear(xp, tau[0], tau[1]));
  return linear(h, tau[2], tau[3]);
}

Matrix sample_latent(std::size_t batch, std::size_t zdim,
                     std::mt19937_64 &rng) {
  std::normal_distribution<Scalar> normal(0.0, 1.0);
  Matrix z(static_cast<Eigen::Index>(batch), static_cast<Eigen::Index>(zdim));
  for (Eigen::Index i = 0; i < z.size(); ++i)
    z.data()[i] = normal(rng);
  return z;
}

GraphBatch generate(const NetConfig &cfg, const BoundParams &phi,
                    const Tensor &x, const Tensor &z) {
  require(x.rank() == 2 && z.rank() == 2 && x.dim(0) == z.dim(0)
              && x.dim(1) == cfg.xdim && z.dim(1) == cfg.zdim,
          "generate: expected x [Bt," + std::to_string(cfg.xdim) + "] and z [Bt,"
              + std::to_string(cfg.zdim) + "], got " + ad::shape_str(x.shape())
              + " and " + ad::shape_str(z.shape()));
  const std::size_t bt = z.dim(0), n = cfg.max_atoms;
  Tensor h = cfg.xdim == 0 ? z : ad::concat({ x, z }, 1);
  std::size_t k = 0;
  for (std::size_t l = 0; l < cfg.generator_hidden.size(); ++l, k += 2)
    h = ad::leaky_relu(linear(h, phi[k], phi[k + 1]));

  const Tensor atoms = ad::softmax(
      ad::reshape(linear(h, phi[k], phi[k + 1]), { bt, n, kAtomTypes }), 2);
  const Tensor t = ad::reshape(linear(h, phi[k + 2], phi[k + 3]),
                               { bt, n, n, kBondTypes });
  const Tensor sym = (t + ad::transpose(t, 1, 2)) * 0.5;
  const Tensor probs = ad::softmax(sym, 3);

  std::vector<Scalar> mask(bt * n * n * kBondTypes, 1.0);
  std::vector<Scalar> diag(mask.size(), 0.0);
  for (std::size_t b = 0; b < bt; ++b)
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = ((b * n + i) * n + i) * kBondTypes;
      std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(base), kBondTypes,
                  0.0);
      diag[base + kNoneIndex] = 1.0;
    }
  Tape &tape = z.tape();
  const Shape bshape { bt, n, n, kBondTypes };
  const Tensor bonds = probs * tape.constant(bshape, std::move(mask))
                       + tape.constant(bshape, std::move(diag));
  return { atoms, bonds };
}

DiscreteSample straight_through_sample(const GraphBatch &soft,
                                       Scalar temperature,
                                       std::mt19937_64 *rng) {
  require(temperature <= 0 || rng != nullptr,
          "straight_through_sample: stochastic mode needs an rng");
  const std::size_t bt = soft.batch(), n = soft.num_atoms();
  const auto av = soft.atoms.values();
  const auto bv = soft.bonds.values();
  std::vector<Scalar> atoms(av.size(), 0.0), bonds(bv.size(), 0.0);
  auto pick = [&](std::span<const Scalar> p) {
    return temperature > 0 ? sample_of(p, temperature, *rng) : argmax_of(p);
  };

  std::vector<std::size_t> type(n);
  for (std::size_t b = 0; b < bt; ++b) {
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t base = (b * n + i) * kAtomTypes;
      type[i] = pick(av.subspan(base, kAtomTypes));
      atoms[base + type[i]] = 1.0;
    }
    for (std::size_t i = 0; i < n; ++i) {
      bonds[((b * n + i) * n + i) * kBondTypes + kNoneIndex] = 1.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const std::size_t ij = ((b * n + i) * n + j) * kBondTypes;
        const std::size_t ji = ((b * n + j) * n + i) * kBondTypes;
        std::size_t t = pick(bv.subspan(ij, kBondTypes));
        if (type[i] == kEmptyIndex || type[j] == kEmptyIndex)
          t = kNoneIndex;
        bonds[ij + t] = 1.0;
        bonds[ji + t] = 1.0;
      }
    }
  }

  Tape &tape = soft.atoms.tape();
  const Tensor hard_atoms = tape.constant(soft.atoms.shape(), std::move(atoms));
  const Tensor hard_bonds = tape.constant(soft.bonds.shape(), std::move(bonds));
  DiscreteSample out;
  // hard + (soft - sg(soft)): the bracket is exactly zero in value.
  out.hard.atoms = hard_atoms + (soft.atoms - ad::stop_gradient(soft.atoms));
  out.hard.bonds = hard_bonds + (soft.bonds - ad::stop_gradient(soft.bonds));
  out.molecules.reserve(bt);
  GraphBatch values { hard_atoms, hard_bonds };
  for (std::size_t b = 0; b < bt; ++b)
    out.molecules.push_back(molecule_at(values, b));
  return out;
}

Tensor rgat_layer(const RelationalWeights &rw, const Tensor &h,
                  const Tensor &bonds, std::vector<Tensor> *alpha) {
  check_graph(h, bonds, "rgat_layer");
  require(rw.w.size() == kRelations && rw.a_src.size() == kRelations
              && rw.a_dst.size() == kRelations,
          "rgat_layer: expected weights for " + std::to_string(kRelations)
              + " relations");
  const std::size_t bt = h.dim(0), n = h.dim(1);
  Tape &tape = h.tape();

  std::vector<Tensor> wh(kRelations), e(kRelations), p(kRelations);
  for (std::size_t r = 0; r < kRelations; ++r) {
    wh[r] = ad::matmul(h, rw.w[r]);
    const Tensor s = ad::reshape(ad::matmul(wh[r], rw.a_src[r]), { bt, n });
    const Tensor t = ad::reshape(ad::matmul(wh[r], rw.a_dst[r]), { bt, n });
    e[r] = ad::leaky_relu(ad::expand(s, 2, n) + ad::expand(t, 1, n));
    p[r] = relation_probs(bonds, r + 1);
  }

  // A null neighbour with logit 0 takes the mass max(0, 1 - sum p). A hard
  // node with any neighbour has sum p >= 1, so it sees the plain softmax; an
  // isolated node puts all weight on the null neighbour and outputs zero. On
  // soft input this keeps the weights bounded as the bond mass goes to zero.
  Tensor mass;
  for (std::size_t r = 0; r < kRelations; ++r)
    mass = mass.valid() ? mass + ad::sum(p[r], 2) : ad::sum(p[r], 2);
  const Tensor null_mass = ad::leaky_relu(-mass + 1.0, 0.0);

  // Per-node shift: the largest logit among present edges and the null
  // logit. It cancels exactly; it only keeps exp() in range.
  std::vector<Scalar> top(bt * n, 0.0);
  for (std::size_t r = 0; r < kRelations; ++r) {
    const auto ev = e[r].values();
    const auto pv = p[r].values();
    for (std::size_t k = 0; k < ev.size(); ++k)
      if (pv[k] > 0)
        top[k / n] = std::max(top[k / n], ev[k]);
  }
  std::vector<Scalar> null_scale(top.size());
  for (std::size_t k = 0; k < top.size(); ++k)
    null_scale[k] = std::exp(-top[k]);

  Tensor denom = null_mass * tape.constant({ bt, n }, std::move(null_scale));
  std::vector<Tensor> w(kRelations);
  for (std::size_t r = 0; r < kRelations; ++r) {
    const auto ev = e[r].values();
    std::vector<Scalar> shift(ev.size());
    // Absent edges far above the shift would overflow to inf * 0.
    for (std::size_t k = 0; k < ev.size(); ++k)
      shift[k] = std::max(top[k / n], ev[k] - 600);
    w[r] = p[r] * ad::exp(e[r] - tape.constant({ bt, n, n }, std::move(shift)));
    denom = denom + ad::sum(w[r], 2);
  }

  const Tensor norm = ad::expand(denom, 2, n);
  Tensor out;
  if (alpha)
    alpha->clear();
  for (std::size_t r = 0; r < kRelations; ++r) {
    const Tensor a = w[r] / norm;
    if (alpha)
      alpha->push_back(a);
    const Tensor msg = ad::matmul(a, wh[r]);
    out = out.valid() ? out + msg : msg;
  }
  return ad::leaky_relu(out);
}

Tensor rgcn_layer(const RelationalWeights &rw, const Tensor &h,
                  const Tensor &bonds) {
  check_graph(h, bonds, "rgcn_layer");
  require(rw.w.size() == kRelations,
          "rgcn_layer: expected weights for " + std::to_string(kRelations)
              + " relations");
  const std::size_t n = h.dim(1);
  Tensor out;
  if (rw.self.valid())
    out = ad::matmul(h, rw.self);
  for (std::size_t r = 0; r < kRelations; ++r) {
    const Tensor p = relation_probs(bonds, r + 1);
    // Mean over neighbours; below unit degree (soft input, or none at all)
    // the plain probability-weighted sum.
    const Tensor deg = ad::leaky_relu(ad::sum(p, 2) - 1.0, 0.0) + 1.0;
    const Tensor coef = p / ad::expand(deg, 2, n);
    const Tensor msg = ad::matmul(coef, ad::matmul(h, rw.w[r]));
    out = out.valid() ? out + msg : msg;
  }
  return ad::leaky_relu(out);
}

Tensor aggregate_graph(const Tensor &h) {
  require(h.rank() == 3 && h.dim(1) >= 1,
          "aggregate_graph: expected [Bt,N,F] with N >= 1, got "
              + ad::shape_str(h.shape()));
  return ad::concat({ ad::mean(h, 1), ad::max(h, 1) }, 1);
}

RelationalWeights layer_weights(const NetConfig &cfg, const BoundParams &p,
                                std::size_t layer) {
  require(layer < cfg.graph_layers, "layer_weights: layer out of range");
  std::size_t k = layer * per_layer(cfg);
  RelationalWeights rw;
  if (cfg.variant == LayerVariant::kGcn)
    rw.self = p[k++];
  for (std::size_t r = 0; r < kRelations; ++r) {
    rw.w.push_back(p[k++]);
    rw.a_src.push_back(p[k++]);
    rw.a_dst.push_back(p[k++]);
  }
  return rw;
}

Tensor graph_features(const NetConfig &cfg, const BoundParams &p,
                      const GraphBatch &g) {
  require(g.atoms.rank() == 3 && g.atoms.dim(2) == kAtomTypes,
          "graph_features: atoms must be [Bt,N," + std::to_string(kAtomTypes)
              + "], got " + ad::shape_str(g.atoms.shape()));
  Tensor h = g.atoms;
  for (std::size_t l = 0; l < cfg.graph_layers; ++l) {
    const RelationalWeights rw = layer_weights(cfg, p, l);
    h = cfg.variant == LayerVariant::kGat ? rgat_layer(rw, h, g.bonds)
                                          : rgcn_layer(rw, h, g.bonds);
  }
  return aggregate_graph(h);
}

Tensor critic_score(const NetConfig &cfg, const BoundParams &psi,
                    const GraphBatch &g) {
  const std::size_t k = trunk_size(cfg);
  const Tensor feat = graph_features(cfg, psi, g);
  return ad::reshape(linear(feat, psi[k], psi[k + 1]), { g.batch() });
}

Tensor energy_score(const NetConfig &cfg, const BoundParams &theta,
                    const Tensor &x, const GraphBatch &g) {
  require(x.rank() == 2 && x.dim(0) == g.batch() && x.dim(1) == cfg.xdim,
          "energy_score: expected x [" + std::to_string(g.batch()) + ","
              + std::to_string(cfg.xdim) + "], got "
              + ad::shape_str(x.shape()));
  const std::size_t k = trunk_size(cfg);
  Tensor feat = graph_features(cfg, theta, g);
  if (cfg.xdim > 0)
    feat = ad::concat({ feat, x }, 1);
  const Tensor hidden = ad::leaky_relu(linear(feat, theta[k], theta[k + 1]));
  return ad::reshape(linear(hidden, theta[k + 2], theta[k + 3]), { g.batch() });
}

Tensor reward_predict(const NetConfig &cfg, const BoundParams &omega,
                      const GraphBatch &g) {
  const std::size_t k = trunk_size(cfg);
  const Tensor feat = graph_features(cfg, omega, g);
  return ad::sigmoid(linear(feat, omega[k], omega[k + 1]));
}

} // namespace tagmol
