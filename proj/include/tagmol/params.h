//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_PARAMS_H_
#define TAGMOL_PARAMS_H_

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tagmol/tensor.h"

namespace tagmol {

struct Param {
  std::string name;
  ad::Shape shape;
  std::vector<Scalar> value;

  bool operator==(const Param &) const = default;
};

// Named, ordered collection of parameter arrays owned outside any tape.
class ParamGroup {
public:
  ParamGroup() = default;
  explicit ParamGroup(std::string name): name_(std::move(name)) { }

  const std::string &name() const { return name_; }

  // Returns the slot index of the new parameter.
  std::size_t add(std::string name, ad::Shape shape, std::vector<Scalar> value);
  std::size_t add_zeros(std::string name, ad::Shape shape);
  // Glorot-uniform over the last two axes' fan-in/fan-out.
  std::size_t add_glorot(std::string name, ad::Shape shape,
                         std::mt19937_64 &rng);

  std::size_t size() const { return params_.size(); }
  Param &operator[](std::size_t i) { return params_.at(i); }
  const Param &operator[](std::size_t i) const { return params_.at(i); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t numel() const;
  std::vector<Scalar> flatten() const;
  void assign(std::span<const Scalar> flat);
  void fill(Scalar v);
  bool all_finite() const;

  // FNV-1a over names, shapes and value bytes.
  std::uint64_t hash() const;

  bool operator==(const ParamGroup &) const = default;

private:
  std::string name_;
  std::vector<Param> params_;
};

// Tape handles for one group. Trainable groups become gradient-requiring
// leaves; frozen groups become constants.
struct BoundParams {
  std::vector<ad::Tensor> tensors;

  const ad::Tensor &operator[](std::size_t i) const { return tensors.at(i); }
};

BoundParams bind(ad::Tape &tape, const ParamGroup &group, bool trainable);

// Views a flat [numel] tensor as the group's parameters, in order. Used to
// differentiate with respect to a whole group at once.
BoundParams unflatten(const ParamGroup &layout, const ad::Tensor &flat);

} // namespace tagmol

#endif // TAGMOL_PARAMS_H_
