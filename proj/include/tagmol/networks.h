//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_NETWORKS_H_
#define TAGMOL_NETWORKS_H_

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "tagmol/molecule.h"
#include "tagmol/params.h"
#include "tagmol/tensor.h"

namespace tagmol {

enum class LayerVariant { kGat, kGcn };

std::string_view variant_name(LayerVariant v);
// Accepts "gat" or "gcn"; throws ConfigError otherwise.
LayerVariant parse_variant(std::string_view s);

struct NetConfig {
  std::size_t max_atoms = kDefaultMaxAtoms;
  std::size_t protein_features = 21;
  std::size_t xdim = 16;
  std::size_t zdim = 32;
  std::size_t encoder_hidden = 64;
  std::array<std::size_t, 3> generator_hidden { 128, 256, 512 };
  std::size_t graph_width = 64;
  std::size_t graph_layers = 2;
  std::size_t energy_hidden = 64;
  std::size_t property_count = kPropertyCount;
  LayerVariant variant = LayerVariant::kGat;

  bool operator==(const NetConfig &) const = default;
};

// The five parameter groups, in update order of the training loop.
struct Networks {
  ParamGroup encoder;   // tau
  ParamGroup generator; // phi
  ParamGroup critic;    // psi
  ParamGroup energy;    // theta
  ParamGroup reward;    // omega

  bool operator==(const Networks &) const = default;
};

ParamGroup make_encoder(const NetConfig &cfg, std::mt19937_64 &rng);
ParamGroup make_generator(const NetConfig &cfg, std::mt19937_64 &rng);
// Graph trunk plus the head for the given role.
ParamGroup make_critic(const NetConfig &cfg, std::mt19937_64 &rng);
ParamGroup make_energy(const NetConfig &cfg, std::mt19937_64 &rng);
ParamGroup make_reward(const NetConfig &cfg, std::mt19937_64 &rng);

// Glorot weights and zero biases from one seeded stream.
Networks init_networks(const NetConfig &cfg, std::uint64_t seed);

/* Batched graph tensors */

// atoms [Bt,N,A], bonds [Bt,N,N,B]. Holds either hard one-hots or
// probabilities.
struct GraphBatch {
  ad::Tensor atoms;
  ad::Tensor bonds;

  std::size_t batch() const { return atoms.dim(0); }
  std::size_t num_atoms() const { return atoms.dim(1); }
};

GraphBatch to_batch(ad::Tape &tape, std::span<const Molecule> mols);
GraphBatch to_batch(ad::Tape &tape, std::span<const SoftMolecule> mols);
SoftMolecule soft_at(const GraphBatch &g, std::size_t b);
// Reads one batch element as a molecule without decoding.
Molecule molecule_at(const GraphBatch &g, std::size_t b);

/* Encoder and generator */

// x_p [Bt,21] -> [Bt,xdim]; with xdim = 0 the result is an empty [Bt,0].
ad::Tensor encode_protein(const NetConfig &cfg, const BoundParams &tau,
                          const ad::Tensor &xp);

// Standard normal latents [Bt,zdim].
Matrix sample_latent(std::size_t batch, std::size_t zdim, std::mt19937_64 &rng);

// x [Bt,xdim], z [Bt,zdim] -> soft molecules.
GraphBatch generate(const NetConfig &cfg, const BoundParams &phi,
                    const ad::Tensor &x, const ad::Tensor &z);

struct DiscreteSample {
  GraphBatch hard; // forward value is one-hot, gradient passes to the soft input
  std::vector<Molecule> molecules;
};

// Argmax per atom row and per upper-triangle bond fiber, mirrored; bonds that
// touch an Empty atom become None. With temperature > 0, categorical samples
// from p^(1/temperature) replace the argmax (rng required).
DiscreteSample straight_through_sample(const GraphBatch &soft,
                                       Scalar temperature = 0,
                                       std::mt19937_64 *rng = nullptr);

/* Relational graph layers */

struct RelationalWeights {
  ad::Tensor self;               // [F,F'], GCN only
  std::vector<ad::Tensor> w;     // per relation r = 1..B-1, [F,F']
  std::vector<ad::Tensor> a_src; // [F',1]
  std::vector<ad::Tensor> a_dst; // [F',1]
};

// H [Bt,N,F], bonds [Bt,N,N,B] -> [Bt,N,F']. Attention over all relations and
// neighbours of a node shares one softmax; each unnormalized weight is
// multiplied by the bond probability of its relation. A null neighbour with
// logit 0 and mass max(0, 1 - sum of bond probabilities) joins the softmax
// and contributes no message, so nodes without neighbours output zero and
// the weights sum to 1 once the expected neighbour count reaches 1. If
// `alpha` is given it receives the per-relation coefficients [Bt,N,N].
ad::Tensor rgat_layer(const RelationalWeights &rw, const ad::Tensor &h,
                      const ad::Tensor &bonds,
                      std::vector<ad::Tensor> *alpha = nullptr);

// Self connection plus the per-relation probability-weighted neighbour mean.
ad::Tensor rgcn_layer(const RelationalWeights &rw, const ad::Tensor &h,
                      const ad::Tensor &bonds);

// [Bt,N,F] -> [Bt,2F]: node mean followed by node max.
ad::Tensor aggregate_graph(const ad::Tensor &h);

// Index layout shared by the critic, energy and reward groups.
RelationalWeights layer_weights(const NetConfig &cfg, const BoundParams &p,
                                std::size_t layer);
// Graph trunk output [Bt,2F'].
ad::Tensor graph_features(const NetConfig &cfg, const BoundParams &p,
                          const GraphBatch &g);

// [Bt]
ad::Tensor critic_score(const NetConfig &cfg, const BoundParams &psi,
                        const GraphBatch &g);
// x [Bt,xdim] -> [Bt]
ad::Tensor energy_score(const NetConfig &cfg, const BoundParams &theta,
                        const ad::Tensor &x, const GraphBatch &g);
// [Bt,property_count], each in (0,1)
ad::Tensor reward_predict(const NetConfig &cfg, const BoundParams &omega,
                          const GraphBatch &g);

} // namespace tagmol

#endif // TAGMOL_NETWORKS_H_
