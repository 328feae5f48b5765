//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/autodiff.h"

#include <cmath>
#include <numeric>
#include <optional>

namespace tagmol::ad {

Tensor GradMap::operator[](const Tensor &t) const {
  if (auto it = grads_.find(t.id()); it != grads_.end())
    return it->second;
  return t.tape().zeros(t.shape());
}

GradMap backward(const Tensor &root, bool create_graph) {
  if (!root.valid())
    throw ContractViolation("backward: invalid root");
  if (root.rank() != 0)
    throw ContractViolation("backward: root must be a scalar, got shape "
                            + shape_str(root.shape()));

  Tape &tape = root.tape();
  GradMap result;
  if (!root.requires_grad())
    return result;

  std::optional<Tape::NoRecord> guard;
  if (!create_graph)
    guard.emplace(tape);

  // Inputs always precede their record's output, so a dense table sized to
  // the arena at sweep start covers every node the sweep can reach. Records
  // appended while sweeping (create_graph) are not part of this sweep.
  std::vector<Tensor> grads(tape.node_count());
  grads[root.id()] = tape.scalar(1.0);

  const std::int64_t first = tape.record_of(root.id());
  for (std::int64_t r = first; r >= 0; --r) {
    const Record &rec = tape.records()[static_cast<std::size_t>(r)];
    const Tensor g = grads[rec.output];
    if (!g.valid())
      continue;
    ++result.visited_;
    std::vector<Tensor> in_grads = rec.backward(g, tape.handle(rec.output));
    for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
      if (i >= in_grads.size() || !in_grads[i].valid())
        continue;
      Tensor &slot = grads[rec.inputs[i]];
      slot = slot.valid() ? add(slot, in_grads[i]) : in_grads[i];
    }
  }

  for (std::uint32_t id = 0; id < grads.size(); ++id)
    if (grads[id].valid() && tape.record_of(id) < 0)
      result.grads_.emplace(id, grads[id]);
  return result;
}

std::vector<Tensor> grad(const Tensor &root, std::span<const Tensor> wrt,
                         bool create_graph) {
  GradMap map = backward(root, create_graph);
  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Tensor &t: wrt)
    out.push_back(map[t]);
  return out;
}

GradCheckResult finite_diff_check(const ScalarFn &f, const Shape &shape,
                                  std::span<const Scalar> x, Scalar h,
                                  std::span<const std::size_t> coordinates) {
  if (h <= 0)
    throw ContractViolation("finite_diff_check: step must be positive");
  if (numel(shape) != x.size())
    throw ContractViolation("finite_diff_check: shape " + shape_str(shape)
                            + " does not match " + std::to_string(x.size())
                            + " values");

  std::vector<Scalar> analytic;
  {
    Tape tape;
    Tensor xt = tape.variable(shape, std::vector<Scalar>(x.begin(), x.end()));
    Tensor y = f(tape, xt);
    if (!std::isfinite(y.item()))
      throw GradCheckError("finite_diff_check: f is non-finite at x", 0);
    Tensor g = backward(y)[xt];
    analytic.assign(g.values().begin(), g.values().end());
  }

  auto eval = [&](std::vector<Scalar> point, std::size_t coord) {
    Tape tape;
    Tensor xt = tape.constant(shape, std::move(point));
    const Scalar v = f(tape, xt).item();
    if (!std::isfinite(v))
      throw GradCheckError("finite_diff_check: f is non-finite at coordinate "
                               + std::to_string(coord),
                           coord);
    return v;
  };

  std::vector<std::size_t> all;
  if (coordinates.empty()) {
    all.resize(x.size());
    std::iota(all.begin(), all.end(), std::size_t { 0 });
    coordinates = all;
  }

  GradCheckResult result;
  std::vector<Scalar> point(x.begin(), x.end());
  for (std::size_t c: coordinates) {
    if (c >= x.size())
      throw ContractViolation("finite_diff_check: coordinate out of range");
    point[c] = x[c] + h;
    const Scalar up = eval(point, c);
    point[c] = x[c] - h;
    const Scalar down = eval(point, c);
    point[c] = x[c];
    const Scalar fd = (up - down) / (2 * h);
    const Scalar err =
        std::abs(analytic[c] - fd) / std::max(Scalar { 1 }, std::abs(fd));
    if (err > result.max_rel_error || result.coordinates_checked == 0) {
      result.max_rel_error = err;
      result.worst_coordinate = c;
    }
    ++result.coordinates_checked;
  }
  return result;
}

} // namespace tagmol::ad
