//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_AUTODIFF_H_
#define TAGMOL_AUTODIFF_H_

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "tagmol/tensor.h"

namespace tagmol::ad {

// Gradients of a scalar root with respect to tensors on the same tape.
class GradMap {
public:
  // Gradient of `t`; a zero tensor of t's shape when the root does not
  // depend on it.
  Tensor operator[](const Tensor &t) const;
  bool contains(const Tensor &t) const { return grads_.count(t.id()) > 0; }
  std::size_t size() const { return grads_.size(); }

  // Number of tape records the reverse sweep visited.
  std::size_t records_visited() const { return visited_; }

private:
  friend GradMap backward(const Tensor &root, bool create_graph);

  std::unordered_map<std::uint32_t, Tensor> grads_;
  std::size_t visited_ = 0;
};

// Reverse sweep from a scalar root. Returns d(root)/d(leaf) for every leaf on
// the root's history that requires a gradient. With `create_graph` the sweep
// itself is recorded, so the returned gradients can be differentiated again.
GradMap backward(const Tensor &root, bool create_graph = false);

// Gradients of `root` with respect to `wrt`, in order.
std::vector<Tensor> grad(const Tensor &root, std::span<const Tensor> wrt,
                         bool create_graph = false);

class GradCheckError: public std::runtime_error {
public:
  GradCheckError(const std::string &what, std::size_t coordinate)
      : std::runtime_error(what), coordinate_(coordinate) { }
  std::size_t coordinate() const { return coordinate_; }

private:
  std::size_t coordinate_;
};

struct GradCheckResult {
  // max_i |g_analytic - g_fd| / max(1, |g_fd|)
  Scalar max_rel_error = 0;
  std::size_t worst_coordinate = 0;
  std::size_t coordinates_checked = 0;
};

// Builds a scalar on the given tape from the input tensor.
using ScalarFn = std::function<Tensor(Tape &, const Tensor &)>;

// Compares the reverse-mode gradient of `f` at `x` with central differences
// of step `h`. When `coordinates` is non-empty only those entries of x are
// perturbed.
GradCheckResult finite_diff_check(const ScalarFn &f, const Shape &shape,
                                  std::span<const Scalar> x, Scalar h = 1e-5,
                                  std::span<const std::size_t> coordinates = {});

} // namespace tagmol::ad

#endif // TAGMOL_AUTODIFF_H_
