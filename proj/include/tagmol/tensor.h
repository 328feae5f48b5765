//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#ifndef TAGMOL_TENSOR_H_
#define TAGMOL_TENSOR_H_

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tagmol/error.h"

namespace tagmol {

using Scalar = double;
using Matrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape &shape);
std::string shape_str(const Shape &shape);

enum class Op : std::uint8_t {
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kScale,
  kAddScalar,
  kMatmul,
  kTranspose,
  kReshape,
  kConcat,
  kSlice,
  kPad,
  kExpand,
  kSum,
  kSumAll,
  kMean,
  kMax,
  kSoftmax,
  kLeakyRelu,
  kTanh,
  kSigmoid,
  kExp,
  kLog,
  kSquare,
  kSqrt,
  kL2Norm,
};

std::string_view op_name(Op op);

class Tape;

// Lightweight handle to a value stored on a Tape. The tape must outlive every
// handle that refers to it.
class Tensor {
public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  Tape &tape() const;
  std::uint32_t id() const { return id_; }

  const Shape &shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const { return shape().at(axis); }
  std::size_t size() const;
  std::span<const Scalar> values() const;
  bool requires_grad() const;

  // Value of a tensor with exactly one element.
  Scalar item() const;

private:
  friend class Tape;
  Tensor(Tape *tape, std::uint32_t id): tape_(tape), id_(id) { }

  Tape *tape_ = nullptr;
  std::uint32_t id_ = 0;
};

// Backward rule for one recorded primitive. Receives the gradient of the
// output and the output itself, and returns one gradient per input (invalid
// handle where the input does not require a gradient). Rules are written in
// terms of tensor ops, so they are themselves differentiable when the sweep
// records.
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor &grad, const Tensor &out)>;

struct Record {
  Op op;
  std::vector<std::uint32_t> inputs;
  std::uint32_t output;
  BackwardFn backward;
};

// Ordered record of primitive applications. Every value produced on the tape
// lives in its arena; only applications with at least one gradient-requiring
// input are recorded, and records are appended in evaluation order, so the
// record list is topologically sorted by construction.
//
// A tape is confined to a single thread.
class Tape {
public:
  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  Tensor constant(Shape shape, std::vector<Scalar> values);
  Tensor constant(const Matrix &m);
  Tensor scalar(Scalar v) { return constant({}, { v }); }
  Tensor zeros(Shape shape);
  Tensor ones(Shape shape);
  Tensor full(Shape shape, Scalar v);

  // Leaf tensor that requires a gradient.
  Tensor variable(Shape shape, std::vector<Scalar> values);
  Tensor variable(const Matrix &m);

  bool recording() const { return recording_; }

  const std::deque<Record> &records() const { return records_; }
  std::size_t node_count() const { return nodes_.size(); }
  // Index of the record that produced node `id`, or -1 for leaves and
  // constants.
  std::int64_t record_of(std::uint32_t id) const { return nodes_[id].record; }

  // Internal: create the output of a primitive and record it when needed.
  Tensor emit(Op op, std::initializer_list<Tensor> inputs, Shape shape,
              std::vector<Scalar> values, BackwardFn backward);
  Tensor emit(Op op, std::span<const Tensor> inputs, Shape shape,
              std::vector<Scalar> values, BackwardFn backward);

  Tensor handle(std::uint32_t id) { return Tensor(this, id); }

  // Disables recording for the lifetime of the guard.
  class NoRecord {
  public:
    explicit NoRecord(Tape &tape): tape_(tape), prev_(tape.recording_) {
      tape_.recording_ = false;
    }
    ~NoRecord() { tape_.recording_ = prev_; }
    NoRecord(const NoRecord &) = delete;
    NoRecord &operator=(const NoRecord &) = delete;

  private:
    Tape &tape_;
    bool prev_;
  };

private:
  friend class Tensor;

  struct Node {
    Shape shape;
    std::vector<Scalar> values;
    bool requires_grad = false;
    std::int64_t record = -1;
  };

  std::uint32_t push(Shape shape, std::vector<Scalar> values,
                     bool requires_grad);

  std::deque<Node> nodes_;
  std::deque<Record> records_;
  bool recording_ = true;
};

/* Arithmetic. Binary ops require equal shapes unless one side is a scalar
 * (shape []), which is broadcast. */

Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor div(const Tensor &a, const Tensor &b);
Tensor neg(const Tensor &a);
Tensor scale(const Tensor &a, Scalar c);
Tensor add_scalar(const Tensor &a, Scalar c);

inline Tensor operator+(const Tensor &a, const Tensor &b) { return add(a, b); }
inline Tensor operator-(const Tensor &a, const Tensor &b) { return sub(a, b); }
inline Tensor operator*(const Tensor &a, const Tensor &b) { return mul(a, b); }
inline Tensor operator/(const Tensor &a, const Tensor &b) { return div(a, b); }
inline Tensor operator-(const Tensor &a) { return neg(a); }
inline Tensor operator*(Scalar c, const Tensor &a) { return scale(a, c); }
inline Tensor operator*(const Tensor &a, Scalar c) { return scale(a, c); }
inline Tensor operator+(const Tensor &a, Scalar c) { return add_scalar(a, c); }
inline Tensor operator-(const Tensor &a, Scalar c) {
  return add_scalar(a, -c);
}

// [n,k]x[k,m], batched [b,n,k]x[b,k,m], or [b,n,k]x[k,m] with a shared right
// operand.
Tensor matmul(const Tensor &a, const Tensor &b);

/* Shape manipulation. */

Tensor transpose(const Tensor &a, std::size_t axis0, std::size_t axis1);
// Swaps the last two axes.
Tensor transpose(const Tensor &a);
Tensor reshape(const Tensor &a, Shape shape);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis);
Tensor slice(const Tensor &a, std::size_t axis, std::size_t start,
             std::size_t length);
Tensor pad(const Tensor &a, std::size_t axis, std::size_t before,
           std::size_t after);
// Inserts a new axis of extent n at position `axis`, repeating the input.
Tensor expand(const Tensor &a, std::size_t axis, std::size_t n);

/* Reductions remove the reduced axis. */

Tensor sum(const Tensor &a, std::size_t axis);
Tensor sum(const Tensor &a);
Tensor mean(const Tensor &a, std::size_t axis);
Tensor mean(const Tensor &a);
// Ties resolve to the lowest index.
Tensor max(const Tensor &a, std::size_t axis);
Tensor softmax(const Tensor &a, std::size_t axis);
Tensor l2_norm(const Tensor &a, std::size_t axis);

/* Elementwise nonlinearities. */

inline constexpr Scalar kDefaultLeakySlope = 0.2;

Tensor leaky_relu(const Tensor &a, Scalar slope = kDefaultLeakySlope);
Tensor tanh(const Tensor &a);
Tensor sigmoid(const Tensor &a);
Tensor exp(const Tensor &a);
Tensor log(const Tensor &a);
Tensor square(const Tensor &a);
Tensor sqrt(const Tensor &a);

// Same value, cut from the tape.
Tensor stop_gradient(const Tensor &a);

// Copies a rank-2 tensor into a row-major matrix.
Matrix to_matrix(const Tensor &a);

} // namespace ad
} // namespace tagmol

#endif // TAGMOL_TENSOR_H_
