//
// Project tagmol - Copyright 2026 The tagmol Authors.
// SPDX-License-Identifier: Apache-2.0
//

#include "tagmol/tensor.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <utility>

namespace tagmol::ad {
namespace {
using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;
using Index = Eigen::Index;

[[noreturn]] void violation(Op op, const std::string &msg) {
  throw ContractViolation(std::string(op_name(op)) + ": " + msg);
}

Tape &common_tape(Op op, const Tensor &a, const Tensor &b) {
  if (!a.valid() || !b.valid())
    violation(op, "invalid tensor handle");
  if (&a.tape() != &b.tape())
    violation(op, "operands live on different tapes");
  return a.tape();
}

void require_valid(Op op, const Tensor &a) {
  if (!a.valid())
    violation(op, "invalid tensor handle");
}

void require_axis(Op op, const Tensor &a, std::size_t axis) {
  if (axis >= a.rank())
    violation(op, "axis " + std::to_string(axis) + " out of range for shape "
                      + shape_str(a.shape()));
}

// (outer, n, inner) decomposition of a shape around one axis.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_at(const Shape &shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i)
    s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i)
    s.inner *= shape[i];
  return s;
}

Shape remove_axis(Shape shape, std::size_t axis) {
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  return shape;
}

bool is_scalar(const Tensor &t) {
  return t.rank() == 0;
}

// Sums a gradient back down to a broadcast scalar operand.
Tensor reduce_like(const Tensor &g, const Tensor &target) {
  if (is_scalar(target) && !is_scalar(g))
    return sum(g);
  return g;
}

template <class F>
Tensor binary(Op op, const Tensor &a, const Tensor &b, F f, BackwardFn bw) {
  Tape &tape = common_tape(op, a, b);
  const bool sa = is_scalar(a), sb = is_scalar(b);
  if (!sa && !sb && a.shape() != b.shape())
    violation(op, "shape mismatch " + shape_str(a.shape()) + " vs "
                      + shape_str(b.shape()));
  Shape shape = sa ? b.shape() : a.shape();
  const auto av = a.values(), bv = b.values();
  std::vector<Scalar> out(numel(shape));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
  return tape.emit(op, { a, b }, std::move(shape), std::move(out),
                   std::move(bw));
}

template <class F>
Tensor unary(Op op, const Tensor &a, F f, BackwardFn bw) {
  require_valid(op, a);
  const auto av = a.values();
  std::vector<Scalar> out(av.size());
  std::transform(av.begin(), av.end(), out.begin(), f);
  return a.tape().emit(op, { a }, a.shape(), std::move(out), std::move(bw));
}

template <class F>
Tensor constant_like(const Tensor &a, F f) {
  const auto av = a.values();
  std::vector<Scalar> out(av.size());
  std::transform(av.begin(), av.end(), out.begin(), f);
  return a.tape().constant(a.shape(), std::move(out));
}
} // namespace

std::size_t numel(const Shape &shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t { 1 },
                         std::multiplies<> {});
}

std::string shape_str(const Shape &shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i)
    os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

std::string_view op_name(Op op) {
  switch (op) {
  case Op::kAdd: return "add";
  case Op::kSub: return "sub";
  case Op::kMul: return "mul";
  case Op::kDiv: return "div";
  case Op::kNeg: return "neg";
  case Op::kScale: return "scale";
  case Op::kAddScalar: return "add_scalar";
  case Op::kMatmul: return "matmul";
  case Op::kTranspose: return "transpose";
  case Op::kReshape: return "reshape";
  case Op::kConcat: return "concat";
  case Op::kSlice: return "slice";
  case Op::kPad: return "pad";
  case Op::kExpand: return "expand";
  case Op::kSum: return "sum";
  case Op::kSumAll: return "sum_all";
  case Op::kMean: return "mean";
  case Op::kMax: return "max";
  case Op::kSoftmax: return "softmax";
  case Op::kLeakyRelu: return "leaky_relu";
  case Op::kTanh: return "tanh";
  case Op::kSigmoid: return "sigmoid";
  case Op::kExp: return "exp";
  case Op::kLog: return "log";
  case Op::kSquare: return "square";
  case Op::kSqrt: return "sqrt";
  case Op::kL2Norm: return "l2_norm";
  }
  return "unknown";
}

/* Tensor */

Tape &Tensor::tape() const {
  if (tape_ == nullptr)
    throw ContractViolation("tensor: invalid handle");
  return *tape_;
}

const Shape &Tensor::shape() const {
  return tape().nodes_[id_].shape;
}

std::size_t Tensor::size() const {
  return tape().nodes_[id_].values.size();
}

std::span<const Scalar> Tensor::values() const {
  return tape().nodes_[id_].values;
}

bool Tensor::requires_grad() const {
  return tape().nodes_[id_].requires_grad;
}

Scalar Tensor::item() const {
  const auto v = values();
  if (v.size() != 1)
    throw ContractViolation("item: tensor of shape " + shape_str(shape())
                            + " is not a single value");
  return v[0];
}

/* Tape */

std::uint32_t Tape::push(Shape shape, std::vector<Scalar> values,
                         bool requires_grad) {
  if (numel(shape) != values.size())
    throw ContractViolation("tape: shape " + shape_str(shape) + " holds "
                            + std::to_string(numel(shape)) + " values, got "
                            + std::to_string(values.size()));
  nodes_.push_back(Node { std::move(shape), std::move(values), requires_grad });
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Tensor Tape::constant(Shape shape, std::vector<Scalar> values) {
  return Tensor(this, push(std::move(shape), std::move(values), false));
}

Tensor Tape::constant(const Matrix &m) {
  return constant({ static_cast<std::size_t>(m.rows()),
                    static_cast<std::size_t>(m.cols()) },
                  std::vector<Scalar>(m.data(), m.data() + m.size()));
}

Tensor Tape::zeros(Shape shape) {
  return full(std::move(shape), 0.0);
}

Tensor Tape::ones(Shape shape) {
  return full(std::move(shape), 1.0);
}

Tensor Tape::full(Shape shape, Scalar v) {
  const std::size_t n = numel(shape);
  return constant(std::move(shape), std::vector<Scalar>(n, v));
}

Tensor Tape::variable(Shape shape, std::vector<Scalar> values) {
  return Tensor(this, push(std::move(shape), std::move(values), true));
}

Tensor Tape::variable(const Matrix &m) {
  return variable({ static_cast<std::size_t>(m.rows()),
                    static_cast<std::size_t>(m.cols()) },
                  std::vector<Scalar>(m.data(), m.data() + m.size()));
}

Tensor Tape::emit(Op op, std::initializer_list<Tensor> inputs, Shape shape,
                  std::vector<Scalar> values, BackwardFn backward) {
  return emit(op, std::span<const Tensor>(inputs.begin(), inputs.size()),
              std::move(shape), std::move(values), std::move(backward));
}

Tensor Tape::emit(Op op, std::span<const Tensor> inputs, Shape shape,
                  std::vector<Scalar> values, BackwardFn backward) {
  const bool record =
      recording_
      && std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor &t) { return t.requires_grad(); });
  const std::uint32_t id = push(std::move(shape), std::move(values), record);
  if (record) {
    Record r { op, {}, id, std::move(backward) };
    r.inputs.reserve(inputs.size());
    for (const Tensor &t: inputs)
      r.inputs.push_back(t.id());
    records_.push_back(std::move(r));
    nodes_[id].record = static_cast<std::int64_t>(records_.size() - 1);
  }
  return Tensor(this, id);
}

/* Arithmetic */

Tensor add(const Tensor &a, const Tensor &b) {
  return binary(
      Op::kAdd, a, b, [](Scalar x, Scalar y) { return x + y; },
      [a, b](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { a.requires_grad() ? reduce_like(g, a) : Tensor(),
                 b.requires_grad() ? reduce_like(g, b) : Tensor() };
      });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  return binary(
      Op::kSub, a, b, [](Scalar x, Scalar y) { return x - y; },
      [a, b](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { a.requires_grad() ? reduce_like(g, a) : Tensor(),
                 b.requires_grad() ? reduce_like(neg(g), b) : Tensor() };
      });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  return binary(
      Op::kMul, a, b, [](Scalar x, Scalar y) { return x * y; },
      [a, b](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { a.requires_grad() ? reduce_like(mul(g, b), a) : Tensor(),
                 b.requires_grad() ? reduce_like(mul(g, a), b) : Tensor() };
      });
}

Tensor div(const Tensor &a, const Tensor &b) {
  return binary(
      Op::kDiv, a, b, [](Scalar x, Scalar y) { return x / y; },
      [a, b](const Tensor &g, const Tensor &out) -> std::vector<Tensor> {
        return { a.requires_grad() ? reduce_like(div(g, b), a) : Tensor(),
                 b.requires_grad() ? reduce_like(neg(div(mul(g, out), b)), b)
                                   : Tensor() };
      });
}

Tensor neg(const Tensor &a) {
  return unary(Op::kNeg, a, [](Scalar x) { return -x; },
               [](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
                 return { neg(g) };
               });
}

Tensor scale(const Tensor &a, Scalar c) {
  return unary(Op::kScale, a, [c](Scalar x) { return c * x; },
               [c](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
                 return { scale(g, c) };
               });
}

Tensor add_scalar(const Tensor &a, Scalar c) {
  return unary(Op::kAddScalar, a, [c](Scalar x) { return x + c; },
               [](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
                 return { g };
               });
}

/* Matmul */

namespace {
// op(A) op(B) where op transposes the last two axes when its flag is set.
// A rank-3 lhs with a rank-2 rhs shares the rhs across the batch; that case
// never transposes the lhs.
Tensor matmul_t(const Tensor &a, const Tensor &b, bool ta, bool tb) {
  Tape &tape = common_tape(Op::kMatmul, a, b);
  const Shape &sa = a.shape(), &sb = b.shape();
  auto mismatch = [&] {
    violation(Op::kMatmul, "incompatible shapes " + shape_str(sa) + " x "
                               + shape_str(sb));
  };
  auto rows = [](const Shape &s, bool t) { return t ? s.back() : s[s.size() - 2]; };
  auto cols = [](const Shape &s, bool t) { return t ? s[s.size() - 2] : s.back(); };

  std::size_t batch = 1;
  bool shared_rhs = false;
  if (sa.size() == 3 && sb.size() == 3) {
    batch = sa[0];
    if (sb[0] != batch)
      mismatch();
  } else if (sa.size() == 3 && sb.size() == 2 && !ta) {
    batch = sa[0];
    shared_rhs = true;
  } else if (sa.size() != 2 || sb.size() != 2) {
    mismatch();
  }
  const std::size_t n = rows(sa, ta), k = cols(sa, ta), m = cols(sb, tb);
  if (rows(sb, tb) != k)
    mismatch();

  std::vector<Scalar> out(batch * n * m);
  const Scalar *pa = a.values().data(), *pb = b.values().data();
  auto block = [&](const Scalar *p, std::size_t r, std::size_t c) {
    return ConstMap(p, static_cast<Index>(r), static_cast<Index>(c));
  };
  auto product = [&](Scalar *dst, const Scalar *lhs, const Scalar *rhs,
                     std::size_t nr) {
    MutMap o(dst, static_cast<Index>(nr), static_cast<Index>(m));
    const std::size_t ar = ta ? k : nr, ac = ta ? nr : k;
    const std::size_t br = tb ? m : k, bc = tb ? k : m;
    if (!ta && !tb)
      o.noalias() = block(lhs, ar, ac) * block(rhs, br, bc);
    else if (!ta)
      o.noalias() = block(lhs, ar, ac) * block(rhs, br, bc).transpose();
    else if (!tb)
      o.noalias() = block(lhs, ar, ac).transpose() * block(rhs, br, bc);
    else
      o.noalias() = block(lhs, ar, ac).transpose() * block(rhs, br, bc).transpose();
  };
  if (shared_rhs) {
    product(out.data(), pa, pb, batch * n);
  } else {
    for (std::size_t i = 0; i < batch; ++i)
      product(out.data() + i * n * m, pa + i * n * k, pb + i * k * m, n);
  }

  Shape shape = sa.size() == 2 ? Shape { n, m } : Shape { batch, n, m };
  return tape.emit(
      Op::kMatmul, { a, b }, std::move(shape), std::move(out),
      [a, b, ta, tb, shared_rhs, batch, n, k,
       m](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        Tensor ga, gb;
        if (a.requires_grad())
          ga = ta ? matmul_t(b, g, tb, true) : matmul_t(g, b, false, !tb);
        if (b.requires_grad()) {
          if (shared_rhs) {
            const Tensor af = reshape(a, { batch * n, k });
            const Tensor gf = reshape(g, { batch * n, m });
            gb = tb ? matmul_t(gf, af, true, false) : matmul_t(af, gf, true, false);
          } else {
            gb = tb ? matmul_t(g, a, true, ta) : matmul_t(a, g, !ta, false);
          }
        }
        return { ga, gb };
      });
}
} // namespace

Tensor matmul(const Tensor &a, const Tensor &b) { return matmul_t(a, b, false, false); }

/* Shape manipulation */

Tensor transpose(const Tensor &a, std::size_t axis0, std::size_t axis1) {
  require_valid(Op::kTranspose, a);
  require_axis(Op::kTranspose, a, axis0);
  require_axis(Op::kTranspose, a, axis1);
  if (axis0 > axis1)
    std::swap(axis0, axis1);

  const Shape &in = a.shape();
  Shape shape = in;
  std::swap(shape[axis0], shape[axis1]);

  // Blocks: [outer, d0, mid, d1, inner] -> [outer, d1, mid, d0, inner].
  std::size_t outer = 1, mid = 1, inner = 1;
  for (std::size_t i = 0; i < axis0; ++i)
    outer *= in[i];
  for (std::size_t i = axis0 + 1; i < axis1; ++i)
    mid *= in[i];
  for (std::size_t i = axis1 + 1; i < in.size(); ++i)
    inner *= in[i];
  const std::size_t d0 = in[axis0], d1 = in[axis1];

  const auto av = a.values();
  std::vector<Scalar> out(av.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < d0; ++i)
      for (std::size_t md = 0; md < mid; ++md)
        for (std::size_t j = 0; j < d1; ++j) {
          const std::size_t src =
              (((o * d0 + i) * mid + md) * d1 + j) * inner;
          const std::size_t dst =
              (((o * d1 + j) * mid + md) * d0 + i) * inner;
          std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(src), inner,
                      out.begin() + static_cast<std::ptrdiff_t>(dst));
        }

  return a.tape().emit(
      Op::kTranspose, { a }, std::move(shape), std::move(out),
      [axis0, axis1](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { transpose(g, axis0, axis1) };
      });
}

Tensor transpose(const Tensor &a) {
  require_valid(Op::kTranspose, a);
  if (a.rank() < 2)
    violation(Op::kTranspose, "rank < 2 for shape " + shape_str(a.shape()));
  return transpose(a, a.rank() - 2, a.rank() - 1);
}

Tensor reshape(const Tensor &a, Shape shape) {
  require_valid(Op::kReshape, a);
  if (numel(shape) != a.size())
    violation(Op::kReshape, "cannot reshape " + shape_str(a.shape()) + " to "
                                + shape_str(shape));
  const auto av = a.values();
  Shape in = a.shape();
  return a.tape().emit(
      Op::kReshape, { a }, std::move(shape),
      std::vector<Scalar>(av.begin(), av.end()),
      [in](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { reshape(g, in) };
      });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty())
    violation(Op::kConcat, "no operands");
  for (const Tensor &p: parts) {
    require_valid(Op::kConcat, p);
    require_axis(Op::kConcat, p, axis);
    if (&p.tape() != &parts[0].tape())
      violation(Op::kConcat, "operands live on different tapes");
    if (p.rank() != parts[0].rank())
      violation(Op::kConcat, "rank mismatch");
    for (std::size_t d = 0; d < p.rank(); ++d)
      if (d != axis && p.dim(d) != parts[0].dim(d))
        violation(Op::kConcat, "shape mismatch " + shape_str(p.shape())
                                   + " vs " + shape_str(parts[0].shape()));
  }

  Shape shape = parts[0].shape();
  std::vector<std::size_t> extents;
  shape[axis] = 0;
  for (const Tensor &p: parts) {
    extents.push_back(p.dim(axis));
    shape[axis] += p.dim(axis);
  }
  const AxisSplit s = split_at(shape, axis);

  std::vector<Scalar> out(numel(shape));
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::size_t offset = o * s.n * s.inner;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::size_t len = extents[p] * s.inner;
      const auto pv = parts[p].values();
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * len), len,
                  out.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += len;
    }
  }

  std::vector<Tensor> saved(parts.begin(), parts.end());
  return parts[0].tape().emit(
      Op::kConcat, parts, std::move(shape), std::move(out),
      [saved, extents,
       axis](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        std::vector<Tensor> grads(saved.size());
        std::size_t start = 0;
        for (std::size_t p = 0; p < saved.size(); ++p) {
          if (saved[p].requires_grad())
            grads[p] = slice(g, axis, start, extents[p]);
          start += extents[p];
        }
        return grads;
      });
}

Tensor concat(std::initializer_list<Tensor> parts, std::size_t axis) {
  return concat(std::span<const Tensor>(parts.begin(), parts.size()), axis);
}

Tensor slice(const Tensor &a, std::size_t axis, std::size_t start,
             std::size_t length) {
  require_valid(Op::kSlice, a);
  require_axis(Op::kSlice, a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  if (start + length > s.n)
    violation(Op::kSlice, "range [" + std::to_string(start) + ", "
                              + std::to_string(start + length)
                              + ") exceeds axis extent "
                              + std::to_string(s.n));
  Shape shape = a.shape();
  shape[axis] = length;
  const auto av = a.values();
  std::vector<Scalar> out(s.outer * length * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(av.begin()
                    + static_cast<std::ptrdiff_t>((o * s.n + start) * s.inner),
                length * s.inner,
                out.begin()
                    + static_cast<std::ptrdiff_t>(o * length * s.inner));
  const std::size_t after = s.n - start - length;
  return a.tape().emit(
      Op::kSlice, { a }, std::move(shape), std::move(out),
      [axis, start, after](const Tensor &g,
                           const Tensor &) -> std::vector<Tensor> {
        return { pad(g, axis, start, after) };
      });
}

Tensor pad(const Tensor &a, std::size_t axis, std::size_t before,
           std::size_t after) {
  require_valid(Op::kPad, a);
  require_axis(Op::kPad, a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  Shape shape = a.shape();
  shape[axis] = before + s.n + after;
  const std::size_t n_out = shape[axis];
  const auto av = a.values();
  std::vector<Scalar> out(s.outer * n_out * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(o * s.n * s.inner),
                s.n * s.inner,
                out.begin()
                    + static_cast<std::ptrdiff_t>((o * n_out + before)
                                                  * s.inner));
  const std::size_t len = s.n;
  return a.tape().emit(
      Op::kPad, { a }, std::move(shape), std::move(out),
      [axis, before, len](const Tensor &g,
                          const Tensor &) -> std::vector<Tensor> {
        return { slice(g, axis, before, len) };
      });
}

Tensor expand(const Tensor &a, std::size_t axis, std::size_t n) {
  require_valid(Op::kExpand, a);
  if (axis > a.rank())
    violation(Op::kExpand, "axis " + std::to_string(axis)
                               + " out of range for shape "
                               + shape_str(a.shape()));
  Shape shape = a.shape();
  shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
  const AxisSplit s = split_at(shape, axis);
  const auto av = a.values();
  std::vector<Scalar> out(s.outer * n * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < n; ++k)
      std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(o * s.inner),
                  s.inner,
                  out.begin()
                      + static_cast<std::ptrdiff_t>((o * n + k) * s.inner));
  return a.tape().emit(
      Op::kExpand, { a }, std::move(shape), std::move(out),
      [axis](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { sum(g, axis) };
      });
}

/* Reductions */

Tensor sum(const Tensor &a, std::size_t axis) {
  require_valid(Op::kSum, a);
  require_axis(Op::kSum, a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  const auto av = a.values();
  std::vector<Scalar> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t i = 0; i < s.inner; ++i)
        out[o * s.inner + i] += av[(o * s.n + k) * s.inner + i];
  const std::size_t n = s.n;
  return a.tape().emit(
      Op::kSum, { a }, remove_axis(a.shape(), axis), std::move(out),
      [axis, n](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { expand(g, axis, n) };
      });
}

Tensor sum(const Tensor &a) {
  require_valid(Op::kSumAll, a);
  const auto av = a.values();
  const Scalar total = std::accumulate(av.begin(), av.end(), Scalar { 0 });
  Shape in = a.shape();
  return a.tape().emit(
      Op::kSumAll, { a }, {}, { total },
      [in](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        return { mul(g.tape().ones(in), g) };
      });
}

Tensor mean(const Tensor &a, std::size_t axis) {
  require_valid(Op::kMean, a);
  require_axis(Op::kMean, a, axis);
  const std::size_t n = a.dim(axis);
  if (n == 0)
    violation(Op::kMean, "empty axis");
  return scale(sum(a, axis), 1.0 / static_cast<Scalar>(n));
}

Tensor mean(const Tensor &a) {
  require_valid(Op::kMean, a);
  if (a.size() == 0)
    violation(Op::kMean, "empty tensor");
  return scale(sum(a), 1.0 / static_cast<Scalar>(a.size()));
}

Tensor max(const Tensor &a, std::size_t axis) {
  require_valid(Op::kMax, a);
  require_axis(Op::kMax, a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  if (s.n == 0)
    violation(Op::kMax, "empty axis");
  const auto av = a.values();
  std::vector<Scalar> out(s.outer * s.inner);
  std::vector<Scalar> mask(av.size(), 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < s.n; ++k)
        if (av[(o * s.n + k) * s.inner + i] > av[(o * s.n + best) * s.inner + i])
          best = k;
      out[o * s.inner + i] = av[(o * s.n + best) * s.inner + i];
      mask[(o * s.n + best) * s.inner + i] = 1.0;
    }
  Tensor mask_t = a.tape().constant(a.shape(), std::move(mask));
  const std::size_t n = s.n;
  return a.tape().emit(
      Op::kMax, { a }, remove_axis(a.shape(), axis), std::move(out),
      [axis, n, mask_t](const Tensor &g,
                        const Tensor &) -> std::vector<Tensor> {
        return { mul(expand(g, axis, n), mask_t) };
      });
}

Tensor softmax(const Tensor &a, std::size_t axis) {
  require_valid(Op::kSoftmax, a);
  require_axis(Op::kSoftmax, a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  const auto av = a.values();
  std::vector<Scalar> out(av.size());
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t i = 0; i < s.inner; ++i) {
      auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      Scalar hi = -std::numeric_limits<Scalar>::infinity();
      for (std::size_t k = 0; k < s.n; ++k)
        hi = std::max(hi, av[at(k)]);
      Scalar total = 0;
      for (std::size_t k = 0; k < s.n; ++k) {
        out[at(k)] = std::exp(av[at(k)] - hi);
        total += out[at(k)];
      }
      for (std::size_t k = 0; k < s.n; ++k)
        out[at(k)] /= total;
    }
  const std::size_t n = s.n;
  return a.tape().emit(
      Op::kSoftmax, { a }, a.shape(), std::move(out),
      [axis, n](const Tensor &g, const Tensor &y) -> std::vector<Tensor> {
        return { mul(y, sub(g, expand(sum(mul(g, y), axis), axis, n))) };
      });
}

Tensor l2_norm(const Tensor &a, std::size_t axis) {
  require_valid(Op::kL2Norm, a);
  require_axis(Op::kL2Norm, a, axis);
  const AxisSplit s = split_at(a.shape(), axis);
  const auto av = a.values();
  std::vector<Scalar> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.n; ++k)
      for (std::size_t i = 0; i < s.inner; ++i) {
        const Scalar v = av[(o * s.n + k) * s.inner + i];
        out[o * s.inner + i] += v * v;
      }
  for (Scalar &v: out)
    v = std::sqrt(v);
  const std::size_t n = s.n;
  return a.tape().emit(
      Op::kL2Norm, { a }, remove_axis(a.shape(), axis), std::move(out),
      [a, axis, n](const Tensor &g, const Tensor &y) -> std::vector<Tensor> {
        // d|x|/dx = x/|x|, taken as 0 at the origin.
        Tensor zero = constant_like(y, [](Scalar v) { return v == 0 ? 1 : 0; });
        return { mul(a, expand(div(g, add(y, zero)), axis, n)) };
      });
}

/* Elementwise */

Tensor leaky_relu(const Tensor &a, Scalar slope) {
  return unary(
      Op::kLeakyRelu, a,
      [slope](Scalar x) { return x > 0 ? x : slope * x; },
      [a, slope](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
        Tensor d =
            constant_like(a, [slope](Scalar x) { return x > 0 ? 1.0 : slope; });
        return { mul(g, d) };
      });
}

Tensor tanh(const Tensor &a) {
  return unary(Op::kTanh, a, [](Scalar x) { return std::tanh(x); },
               [](const Tensor &g, const Tensor &y) -> std::vector<Tensor> {
                 return { mul(g, add_scalar(neg(square(y)), 1.0)) };
               });
}

Tensor sigmoid(const Tensor &a) {
  return unary(
      Op::kSigmoid, a,
      [](Scalar x) {
        if (x >= 0)
          return 1.0 / (1.0 + std::exp(-x));
        const Scalar e = std::exp(x);
        return e / (1.0 + e);
      },
      [](const Tensor &g, const Tensor &y) -> std::vector<Tensor> {
        return { mul(g, mul(y, add_scalar(neg(y), 1.0))) };
      });
}

Tensor exp(const Tensor &a) {
  return unary(Op::kExp, a, [](Scalar x) { return std::exp(x); },
               [](const Tensor &g, const Tensor &y) -> std::vector<Tensor> {
                 return { mul(g, y) };
               });
}

Tensor log(const Tensor &a) {
  return unary(Op::kLog, a, [](Scalar x) { return std::log(x); },
               [a](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
                 return { div(g, a) };
               });
}

Tensor square(const Tensor &a) {
  return unary(Op::kSquare, a, [](Scalar x) { return x * x; },
               [a](const Tensor &g, const Tensor &) -> std::vector<Tensor> {
                 return { scale(mul(g, a), 2.0) };
               });
}

Tensor sqrt(const Tensor &a) {
  return unary(
      Op::kSqrt, a, [](Scalar x) { return std::sqrt(x); },
      [](const Tensor &g, const Tensor &y) -> std::vector<Tensor> {
        // Subgradient 0 at the origin.
        Tensor zero = constant_like(y, [](Scalar v) { return v == 0 ? 1 : 0; });
        Tensor live = constant_like(y, [](Scalar v) { return v == 0 ? 0 : 1; });
        return { mul(div(g, scale(add(y, zero), 2.0)), live) };
      });
}

Tensor stop_gradient(const Tensor &a) {
  require_valid(Op::kAdd, a);
  const auto av = a.values();
  return a.tape().constant(a.shape(),
                           std::vector<Scalar>(av.begin(), av.end()));
}

Matrix to_matrix(const Tensor &a) {
  if (a.rank() != 2)
    throw ContractViolation("to_matrix: expected rank 2, got "
                            + shape_str(a.shape()));
  return ConstMap(a.values().data(), static_cast<Index>(a.dim(0)),
                  static_cast<Index>(a.dim(1)));
}

} // namespace tagmol::ad
