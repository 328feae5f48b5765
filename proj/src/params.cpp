//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/params.h"

#include <algorithm>
#include <cmath>

#include "tagmol/hash.h"
#include "tagmol/error.h"

namespace tagmol {

std::size_t ParamGroup::add(std::string name, ad::Shape shape,
                            std::vector<Scalar> value) {
  if (ad::numel(shape) != value.size())
    throw ContractViolation("ParamGroup::add: " + name + " has shape "
                            + ad::shape_str(shape) + " but "
                            + std::to_string(value.size()) + " values");
  params_.push_back({ std::move(name), std::move(shape), std::move(value) });
  return params_.size() - 1;
}

std::size_t ParamGroup::add_zeros(std::string name, ad::Shape shape) {
  std::vector<Scalar> v(ad::numel(shape), 0.0);
  return add(std::move(name), std::move(shape), std::move(v));
}

std::size_t ParamGroup::add_glorot(std::string name, ad::Shape shape,
                                   std::mt19937_64 &rng) {
  if (shape.size() < 2)
    throw ContractViolation("add_glorot: need a rank >= 2 shape for " + name);
  const double fan_in = static_cast<double>(shape[shape.size() - 2]);
  const double fan_out = static_cast<double>(shape.back());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<Scalar> v(ad::numel(shape));
  for (auto &x: v)
    x = dist(rng);
  return add(std::move(name), std::move(shape), std::move(v));
}

std::size_t ParamGroup::numel() const {
  std::size_t n = 0;
  for (const auto &p: params_)
    n += p.value.size();
  return n;
}

std::vector<Scalar> ParamGroup::flatten() const {
  std::vector<Scalar> out;
  out.reserve(numel());
  for (const auto &p: params_)
    out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

void ParamGroup::assign(std::span<const Scalar> flat) {
  if (flat.size() != numel())
    throw ContractViolation("ParamGroup::assign: size mismatch for " + name_);
  std::size_t k = 0;
  for (auto &p: params_)
    for (auto &x: p.value)
      x = flat[k++];
}

void ParamGroup::fill(Scalar v) {
  for (auto &p: params_)
    std::fill(p.value.begin(), p.value.end(), v);
}

bool ParamGroup::all_finite() const {
  for (const auto &p: params_)
    for (Scalar x: p.value)
      if (!std::isfinite(x))
        return false;
  return true;
}

std::uint64_t ParamGroup::hash() const {
  std::uint64_t h = fnv1a(name_);
  for (const auto &p: params_) {
    h = fnv1a(p.name, h);
    for (std::size_t d: p.shape) {
      const auto d64 = static_cast<std::uint64_t>(d);
      h = fnv1a_pod(&d64, 1, h);
    }
    h = fnv1a_pod(p.value.data(), p.value.size(), h);
  }
  return h;
}

BoundParams bind(ad::Tape &tape, const ParamGroup &group, bool trainable) {
  BoundParams out;
  out.tensors.reserve(group.size());
  for (const auto &p: group)
    out.tensors.push_back(trainable ? tape.variable(p.shape, p.value)
                                    : tape.constant(p.shape, p.value));
  return out;
}

BoundParams unflatten(const ParamGroup &layout, const ad::Tensor &flat) {
  if (flat.rank() != 1 || flat.size() != layout.numel())
    throw ContractViolation("unflatten: expected [" + std::to_string(layout.numel())
                            + "], got " + ad::shape_str(flat.shape()));
  BoundParams out;
  std::size_t offset = 0;
  for (const auto &p: layout) {
    out.tensors.push_back(
        ad::reshape(ad::slice(flat, 0, offset, p.value.size()), p.shape));
    offset += p.value.size();
  }
  return out;
}

} // namespace tagmol
