#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "nri/parallel.hpp"
#include "nri/tensor.hpp"

namespace nri {

// ---------------------------------------------------------------------------
// Raw matrix kernels. Each output element is produced by exactly one worker
// with a fixed-order inner loop, so results are bit-identical for any worker
// count.
// ---------------------------------------------------------------------------
namespace detail {

// C[m,n] (+)= A[m,k] * B[k,n]
template <class S>
void gemm_nn(const S* a, const S* b, S* c, std::int64_t m, std::int64_t k,
             std::int64_t n, bool accumulate) {
  parallel_for(m, [=](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      S* crow = c + i * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) crow[j] = S(0);
      }
      const S* arow = a + i * k;
      for (std::int64_t l = 0; l < k; ++l) {
        const S s = arow[l];
        const S* brow = b + l * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
      }
    }
  }, 16);
}

// C[m,n] (+)= A[m,p] * B[n,p]^T  (rows dotted with rows)
template <class S>
void gemm_nt(const S* a, const S* b, S* c, std::int64_t m, std::int64_t p,
             std::int64_t n, bool accumulate) {
  parallel_for(m, [=](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      const S* arow = a + i * p;
      S* crow = c + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        const S* brow = b + j * p;
        S acc = S(0);
        for (std::int64_t l = 0; l < p; ++l) acc += arow[l] * brow[l];
        if (accumulate) crow[j] += acc; else crow[j] = acc;
      }
    }
  }, 16);
}

// C[m,n] (+)= A[p,m]^T * B[p,n]
template <class S>
void gemm_tn(const S* a, const S* b, S* c, std::int64_t m, std::int64_t p,
             std::int64_t n, bool accumulate) {
  parallel_for(m, [=](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t i = i0; i < i1; ++i) {
      S* crow = c + i * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) crow[j] = S(0);
      }
      for (std::int64_t l = 0; l < p; ++l) {
        const S s = a[l * m + i];
        const S* brow = b + l * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += s * brow[j];
      }
    }
  }, 16);
}

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

// Splits a shape around one axis into (outer, len, inner) extents.
inline void axis_split(const Shape& s, int axis, std::int64_t& outer,
                       std::int64_t& len, std::int64_t& inner) {
  outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  len = s[static_cast<std::size_t>(axis)];
  inner = 1;
  for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) inner *= s[static_cast<std::size_t>(i)];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Reverse-mode tape. Nodes are appended during the forward pass (creation
// order is a topological order of the DAG); backward() walks them once in
// reverse and sums gradient contributions into parents. Values are immutable
// once created and a tape is confined to one thread.
// ---------------------------------------------------------------------------
template <class S>
class TapeT;

template <class S>
struct VarT {
  TapeT<S>* tape = nullptr;
  std::int32_t id = -1;

  const TensorT<S>& val() const;
  const Shape& shape() const { return val().shape; }
  std::int64_t numel() const { return val().numel(); }
};

template <class S>
class TapeT {
 public:
  // backprop(tape, self_id): reads the node's accumulated output gradient and
  // adds contributions into its parents' gradient buffers.
  using BackpropFn = std::function<void(TapeT&, std::int32_t)>;

  struct Node {
    TensorT<S> value;
    TensorT<S> grad;  // empty until backward touches it
    bool requires_grad = false;
    BackpropFn backprop;  // unset for leaves
  };

  explicit TapeT(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  bool grad_enabled() const { return grad_enabled_; }

  VarT<S> leaf(TensorT<S> v, bool requires_grad) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad && grad_enabled_;
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  VarT<S> constant(TensorT<S> v) { return leaf(std::move(v), false); }

  VarT<S> make(TensorT<S> v, bool requires_grad, BackpropFn backprop) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return {this, static_cast<std::int32_t>(nodes_.size() - 1)};
  }

  const TensorT<S>& val(VarT<S> v) const { return nodes_[static_cast<std::size_t>(v.id)].value; }
  const TensorT<S>& val(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Gradient from the last backward() pass; zeros if the node was never reached.
  const TensorT<S>& grad(VarT<S> v) { return grad_buf(v.id); }

  TensorT<S>& grad_buf(std::int32_t id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.numel() == 0) n.grad = TensorT<S>(n.value.shape);
    return n.grad;
  }

  bool has_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].grad.numel() != 0; }
  bool requires_grad(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  // Seeds d(loss)/d(loss) = 1 and accumulates gradients into every node
  // reachable from the loss. Reverse creation order visits each node once.
  void backward(VarT<S> loss) {
    if (loss.tape != this) throw ContractError("backward: var belongs to a different tape");
    const Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (ln.value.numel() != 1) {
      throw ContractError("backward: loss must be a scalar, got shape " + shape_str(ln.value.shape));
    }
    grad_buf(loss.id).data[0] += S(1);
    for (std::int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[static_cast<std::size_t>(id)];
      if (n.requires_grad && n.backprop && n.grad.numel() != 0) n.backprop(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  std::vector<Node> nodes_;
  bool grad_enabled_;
};

template <class S>
const TensorT<S>& VarT<S>::val() const {
  return tape->val(*this);
}

using Tape = TapeT<float>;
using Var = VarT<float>;

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <class S>
VarT<S> matmul(VarT<S> a, VarT<S> b) {
  TapeT<S>& t = *a.tape;
  const TensorT<S>& av = t.val(a);
  const TensorT<S>& bv = t.val(b);
  if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(av.shape) + " and " + shape_str(bv.shape));
  }
  const std::int64_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  TensorT<S> out({m, n});
  detail::gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n, false);

  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  const std::int32_t aid = a.id, bid = b.id;
  return t.make(std::move(out), rg, [aid, bid, m, k, n](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    const TensorT<S>& av2 = tp.val(aid);
    const TensorT<S>& bv2 = tp.val(bid);
    if (tp.requires_grad(aid)) {
      detail::gemm_nt(g.data.data(), bv2.data.data(), tp.grad_buf(aid).data.data(), m, n, k, true);
    }
    if (tp.requires_grad(bid)) {
      detail::gemm_tn(av2.data.data(), g.data.data(), tp.grad_buf(bid).data.data(), k, m, n, true);
    }
  });
}

// ---------------------------------------------------------------------------
// Elementwise binary ops with broadcasting over size-1 axes only. Ranks must
// match; anything else is a deliberate shape error (silent promotion hides
// message-passing bugs).
// ---------------------------------------------------------------------------
namespace detail {

inline Shape broadcast_out_shape(const Shape& a, const Shape& b) {
  if (a.size() != b.size()) {
    throw ShapeError("broadcast: rank mismatch between " + shape_str(a) + " and " + shape_str(b));
  }
  Shape out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i] || a[i] == 1 || b[i] == 1) {
      out[i] = std::max(a[i], b[i]);
    } else {
      throw ShapeError("broadcast: incompatible shapes " + shape_str(a) + " and " + shape_str(b));
    }
  }
  return out;
}

// Applies f(out_lin, a_lin, b_lin) for every element of the broadcast output.
// Hot patterns (equal shapes, [m,n] vs [m,1], [m,n] vs [1,n], scalar rhs) get
// tight loops; the generic path decomposes indices.
template <class S, class F>
void for_each_broadcast(const Shape& out, const Shape& as, const Shape& bs, F&& f) {
  const std::int64_t n = shape_numel(out);
  if (as == bs) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  if (shape_numel(bs) == 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i, i, 0);
    return;
  }
  if (shape_numel(as) == 1) {
    for (std::int64_t i = 0; i < n; ++i) f(i, 0, i);
    return;
  }
  if (out.size() == 2 && as == out && bs[0] == out[0] && bs[1] == 1) {
    const std::int64_t rows = out[0], cols = out[1];
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j) f(i * cols + j, i * cols + j, i);
    return;
  }
  if (out.size() == 2 && as == out && bs[0] == 1 && bs[1] == out[1]) {
    const std::int64_t rows = out[0], cols = out[1];
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j) f(i * cols + j, i * cols + j, j);
    return;
  }
  const auto ostr = row_major_strides(out);
  const auto astr0 = row_major_strides(as);
  const auto bstr0 = row_major_strides(bs);
  std::vector<std::int64_t> astr(ostr.size()), bstr(ostr.size());
  for (std::size_t d = 0; d < out.size(); ++d) {
    astr[d] = (as[d] == 1) ? 0 : astr0[d];
    bstr[d] = (bs[d] == 1) ? 0 : bstr0[d];
  }
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t rem = i, ia = 0, ib = 0;
    for (std::size_t d = 0; d < out.size(); ++d) {
      const std::int64_t idx = rem / ostr[d];
      rem -= idx * ostr[d];
      ia += idx * astr[d];
      ib += idx * bstr[d];
    }
    f(i, ia, ib);
  }
}

enum class BinOp { Add, Sub, Mul };

template <class S>
VarT<S> binary(VarT<S> a, VarT<S> b, BinOp op) {
  TapeT<S>& t = *a.tape;
  const TensorT<S>& av = t.val(a);
  const TensorT<S>& bv = t.val(b);
  const Shape oshape = broadcast_out_shape(av.shape, bv.shape);
  TensorT<S> out(oshape);
  const S* ap = av.data.data();
  const S* bp = bv.data.data();
  S* op_ = out.data.data();
  switch (op) {
    case BinOp::Add:
      for_each_broadcast<S>(oshape, av.shape, bv.shape,
                            [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { op_[o] = ap[ia] + bp[ib]; });
      break;
    case BinOp::Sub:
      for_each_broadcast<S>(oshape, av.shape, bv.shape,
                            [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { op_[o] = ap[ia] - bp[ib]; });
      break;
    case BinOp::Mul:
      for_each_broadcast<S>(oshape, av.shape, bv.shape,
                            [&](std::int64_t o, std::int64_t ia, std::int64_t ib) { op_[o] = ap[ia] * bp[ib]; });
      break;
  }
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  const std::int32_t aid = a.id, bid = b.id;
  const Shape ashape = av.shape, bshape = bv.shape;
  return t.make(std::move(out), rg, [aid, bid, ashape, bshape, oshape, op](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    const S* gp = g.data.data();
    const bool need_a = tp.requires_grad(aid);
    const bool need_b = tp.requires_grad(bid);
    S* da = need_a ? tp.grad_buf(aid).data.data() : nullptr;
    S* db = need_b ? tp.grad_buf(bid).data.data() : nullptr;
    const S* ap2 = tp.val(aid).data.data();
    const S* bp2 = tp.val(bid).data.data();
    switch (op) {
      case BinOp::Add:
        for_each_broadcast<S>(oshape, ashape, bshape, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
          if (da) da[ia] += gp[o];
          if (db) db[ib] += gp[o];
        });
        break;
      case BinOp::Sub:
        for_each_broadcast<S>(oshape, ashape, bshape, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
          if (da) da[ia] += gp[o];
          if (db) db[ib] -= gp[o];
        });
        break;
      case BinOp::Mul:
        for_each_broadcast<S>(oshape, ashape, bshape, [&](std::int64_t o, std::int64_t ia, std::int64_t ib) {
          if (da) da[ia] += gp[o] * bp2[ib];
          if (db) db[ib] += gp[o] * ap2[ia];
        });
        break;
    }
  });
}

}  // namespace detail

template <class S> VarT<S> add(VarT<S> a, VarT<S> b) { return detail::binary(a, b, detail::BinOp::Add); }
template <class S> VarT<S> sub(VarT<S> a, VarT<S> b) { return detail::binary(a, b, detail::BinOp::Sub); }
template <class S> VarT<S> mul(VarT<S> a, VarT<S> b) { return detail::binary(a, b, detail::BinOp::Mul); }

// ---------------------------------------------------------------------------
// Elementwise unary ops
// ---------------------------------------------------------------------------

template <class S>
VarT<S> scale(VarT<S> x, S c) {
  TapeT<S>& t = *x.tape;
  TensorT<S> out = t.val(x);
  for (S& v : out.data) v *= c;
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid, c](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t i = 0; i < g.numel(); ++i) dx.data[static_cast<std::size_t>(i)] += c * g.data[static_cast<std::size_t>(i)];
  });
}

template <class S>
VarT<S> elu(VarT<S> x) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  TensorT<S> out(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) {
    const S v = xv.data[static_cast<std::size_t>(i)];
    out.data[static_cast<std::size_t>(i)] = v > S(0) ? v : std::exp(v) - S(1);
  }
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    const TensorT<S>& y = tp.val(self);  // elu' = 1 for x>0, else elu(x)+1
    const TensorT<S>& xv2 = tp.val(xid);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      const auto u = static_cast<std::size_t>(i);
      dx.data[u] += g.data[u] * (xv2.data[u] > S(0) ? S(1) : y.data[u] + S(1));
    }
  });
}

template <class S>
VarT<S> square(VarT<S> x) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  TensorT<S> out(xv.shape);
  for (std::int64_t i = 0; i < xv.numel(); ++i) {
    const S v = xv.data[static_cast<std::size_t>(i)];
    out.data[static_cast<std::size_t>(i)] = v * v;
  }
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    const TensorT<S>& xv2 = tp.val(xid);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t i = 0; i < g.numel(); ++i) {
      const auto u = static_cast<std::size_t>(i);
      dx.data[u] += S(2) * xv2.data[u] * g.data[u];
    }
  });
}

// ---------------------------------------------------------------------------
// concat / reshape / reductions
// ---------------------------------------------------------------------------

template <class S>
VarT<S> concat(const std::vector<VarT<S>>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat: empty input list");
  TapeT<S>& t = *parts[0].tape;
  const Shape& s0 = t.val(parts[0]).shape;
  if (axis < 0 || axis >= static_cast<int>(s0.size())) {
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(s0));
  }
  Shape oshape = s0;
  std::int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& sp = t.val(p).shape;
    if (sp.size() != s0.size()) {
      throw ShapeError("concat: rank mismatch between " + shape_str(s0) + " and " + shape_str(sp));
    }
    for (std::size_t d = 0; d < s0.size(); ++d) {
      if (static_cast<int>(d) != axis && sp[d] != s0[d]) {
        throw ShapeError("concat: off-axis mismatch between " + shape_str(s0) + " and " + shape_str(sp));
      }
    }
    total += sp[static_cast<std::size_t>(axis)];
  }
  oshape[static_cast<std::size_t>(axis)] = total;

  TensorT<S> out(oshape);
  std::int64_t outer, olen, inner;
  detail::axis_split(oshape, axis, outer, olen, inner);
  std::int64_t off = 0;
  bool rg = false;
  std::vector<std::int32_t> ids;
  std::vector<std::int64_t> lens;
  for (const auto& p : parts) {
    const TensorT<S>& pv = t.val(p);
    const std::int64_t plen = pv.shape[static_cast<std::size_t>(axis)];
    for (std::int64_t o = 0; o < outer; ++o) {
      std::memcpy(out.data.data() + (o * olen + off) * inner,
                  pv.data.data() + o * plen * inner,
                  static_cast<std::size_t>(plen * inner) * sizeof(S));
    }
    off += plen;
    rg = rg || t.requires_grad(p.id);
    ids.push_back(p.id);
    lens.push_back(plen);
  }
  return t.make(std::move(out), rg, [ids, lens, outer, olen, inner](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    std::int64_t off2 = 0;
    for (std::size_t pi = 0; pi < ids.size(); ++pi) {
      const std::int64_t plen = lens[pi];
      if (tp.requires_grad(ids[pi])) {
        TensorT<S>& dp = tp.grad_buf(ids[pi]);
        for (std::int64_t o = 0; o < outer; ++o) {
          const S* src = g.data.data() + (o * olen + off2) * inner;
          S* dst = dp.data.data() + o * plen * inner;
          for (std::int64_t i = 0; i < plen * inner; ++i) dst[i] += src[i];
        }
      }
      off2 += plen;
    }
  });
}

template <class S>
VarT<S> reshape(VarT<S> x, Shape shape) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (shape_numel(shape) != xv.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(xv.shape) + " as " + shape_str(shape));
  }
  TensorT<S> out(std::move(shape), xv.data);
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t i = 0; i < g.numel(); ++i) dx.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
  });
}

// Reduces one axis away (a rank-1 input reduces to a scalar of shape [1]).
template <class S>
VarT<S> sum_along(VarT<S> x, int axis) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (axis < 0 || axis >= xv.rank()) {
    throw ShapeError("sum_along: axis " + std::to_string(axis) + " out of range for " + shape_str(xv.shape));
  }
  std::int64_t outer, len, inner;
  detail::axis_split(xv.shape, axis, outer, len, inner);
  Shape oshape;
  for (int d = 0; d < xv.rank(); ++d)
    if (d != axis) oshape.push_back(xv.shape[static_cast<std::size_t>(d)]);
  if (oshape.empty()) oshape = {1};

  TensorT<S> out(oshape);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t l = 0; l < len; ++l) {
      const S* src = xv.data.data() + (o * len + l) * inner;
      S* dst = out.data.data() + o * inner;
      for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  }
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid, outer, len, inner](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t o = 0; o < outer; ++o) {
      const S* src = g.data.data() + o * inner;
      for (std::int64_t l = 0; l < len; ++l) {
        S* dst = dx.data.data() + (o * len + l) * inner;
        for (std::int64_t i = 0; i < inner; ++i) dst[i] += src[i];
      }
    }
  });
}

template <class S>
VarT<S> sum_all(VarT<S> x) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  S acc = S(0);
  for (const S v : xv.data) acc += v;
  const std::int32_t xid = x.id;
  return t.make(TensorT<S>::scalar(acc), t.requires_grad(xid), [xid](TapeT<S>& tp, std::int32_t self) {
    const S g = tp.grad_buf(self).data[0];
    TensorT<S>& dx = tp.grad_buf(xid);
    for (S& v : dx.data) v += g;
  });
}

template <class S>
VarT<S> mean_all(VarT<S> x) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  const std::int64_t n = xv.numel();
  S acc = S(0);
  for (const S v : xv.data) acc += v;
  acc /= static_cast<S>(n);
  const std::int32_t xid = x.id;
  return t.make(TensorT<S>::scalar(acc), t.requires_grad(xid), [xid, n](TapeT<S>& tp, std::int32_t self) {
    const S g = tp.grad_buf(self).data[0] / static_cast<S>(n);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (S& v : dx.data) v += g;
  });
}

// ---------------------------------------------------------------------------
// softmax / log_softmax along an axis, stabilized by max subtraction
// ---------------------------------------------------------------------------
namespace detail {

template <class S, bool Log>
TensorT<S> softmax_forward(const TensorT<S>& x, int axis) {
  std::int64_t outer, len, inner;
  axis_split(x.shape, axis, outer, len, inner);
  TensorT<S> out(x.shape);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t in = 0; in < inner; ++in) {
      const std::int64_t base = o * len * inner + in;
      S mx = -std::numeric_limits<S>::infinity();
      for (std::int64_t l = 0; l < len; ++l) mx = std::max(mx, x.data[static_cast<std::size_t>(base + l * inner)]);
      S denom = S(0);
      for (std::int64_t l = 0; l < len; ++l) denom += std::exp(x.data[static_cast<std::size_t>(base + l * inner)] - mx);
      if constexpr (Log) {
        const S ld = std::log(denom);
        for (std::int64_t l = 0; l < len; ++l) {
          const auto u = static_cast<std::size_t>(base + l * inner);
          out.data[u] = x.data[u] - mx - ld;
        }
      } else {
        for (std::int64_t l = 0; l < len; ++l) {
          const auto u = static_cast<std::size_t>(base + l * inner);
          out.data[u] = std::exp(x.data[u] - mx) / denom;
        }
      }
    }
  }
  return out;
}

}  // namespace detail

template <class S>
VarT<S> softmax(VarT<S> x, int axis) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (axis < 0 || axis >= xv.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(xv.shape));
  }
  for (const S v : xv.data) {
    if (std::isnan(v)) throw Error("softmax: NaN in input");
  }
  TensorT<S> out = detail::softmax_forward<S, false>(xv, axis);
  std::int64_t outer, len, inner;
  detail::axis_split(xv.shape, axis, outer, len, inner);
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid, outer, len, inner](TapeT<S>& tp, std::int32_t self) {
    // dx = y * (g - sum_l(g*y)) along the axis
    const TensorT<S>& g = tp.grad_buf(self);
    const TensorT<S>& y = tp.val(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * len * inner + in;
        S dot = S(0);
        for (std::int64_t l = 0; l < len; ++l) {
          const auto u = static_cast<std::size_t>(base + l * inner);
          dot += g.data[u] * y.data[u];
        }
        for (std::int64_t l = 0; l < len; ++l) {
          const auto u = static_cast<std::size_t>(base + l * inner);
          dx.data[u] += y.data[u] * (g.data[u] - dot);
        }
      }
    }
  });
}

template <class S>
VarT<S> log_softmax(VarT<S> x, int axis) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (axis < 0 || axis >= xv.rank()) {
    throw ShapeError("log_softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(xv.shape));
  }
  for (const S v : xv.data) {
    if (std::isnan(v)) throw Error("log_softmax: NaN in input");
  }
  TensorT<S> out = detail::softmax_forward<S, true>(xv, axis);
  std::int64_t outer, len, inner;
  detail::axis_split(xv.shape, axis, outer, len, inner);
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid, outer, len, inner](TapeT<S>& tp, std::int32_t self) {
    // dx = g - exp(y) * sum_l(g) along the axis
    const TensorT<S>& g = tp.grad_buf(self);
    const TensorT<S>& y = tp.val(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t in = 0; in < inner; ++in) {
        const std::int64_t base = o * len * inner + in;
        S gsum = S(0);
        for (std::int64_t l = 0; l < len; ++l) gsum += g.data[static_cast<std::size_t>(base + l * inner)];
        for (std::int64_t l = 0; l < len; ++l) {
          const auto u = static_cast<std::size_t>(base + l * inner);
          dx.data[u] += g.data[u] - std::exp(y.data[u]) * gsum;
        }
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Row gather / scatter over 2-D tensors; the differentiable plumbing behind
// node->edge and edge->node message passing.
// ---------------------------------------------------------------------------

using IndexVec = std::shared_ptr<const std::vector<std::int64_t>>;

template <class S>
VarT<S> gather_rows(VarT<S> x, IndexVec idx) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (xv.rank() != 2) throw ShapeError("gather_rows: expected rank-2 input, got " + shape_str(xv.shape));
  const std::int64_t rows = xv.shape[0], cols = xv.shape[1];
  const std::int64_t m = static_cast<std::int64_t>(idx->size());
  TensorT<S> out({m, cols});
  for (std::int64_t r = 0; r < m; ++r) {
    const std::int64_t src = (*idx)[static_cast<std::size_t>(r)];
    if (src < 0 || src >= rows) throw ContractError("gather_rows: index " + std::to_string(src) + " out of range");
    std::memcpy(out.data.data() + r * cols, xv.data.data() + src * cols, static_cast<std::size_t>(cols) * sizeof(S));
  }
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid, idx, cols](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    const std::int64_t m2 = static_cast<std::int64_t>(idx->size());
    for (std::int64_t r = 0; r < m2; ++r) {
      const std::int64_t dst = (*idx)[static_cast<std::size_t>(r)];
      const S* src = g.data.data() + r * cols;
      S* d = dx.data.data() + dst * cols;
      for (std::int64_t j = 0; j < cols; ++j) d[j] += src[j];
    }
  });
}

template <class S>
VarT<S> scatter_sum_rows(VarT<S> x, IndexVec idx, std::int64_t out_rows) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (xv.rank() != 2) throw ShapeError("scatter_sum_rows: expected rank-2 input, got " + shape_str(xv.shape));
  if (static_cast<std::int64_t>(idx->size()) != xv.shape[0]) {
    throw ShapeError("scatter_sum_rows: index count " + std::to_string(idx->size()) +
                     " does not match rows of " + shape_str(xv.shape));
  }
  const std::int64_t cols = xv.shape[1];
  TensorT<S> out({out_rows, cols});
  for (std::int64_t r = 0; r < xv.shape[0]; ++r) {
    const std::int64_t dst = (*idx)[static_cast<std::size_t>(r)];
    if (dst < 0 || dst >= out_rows) throw ContractError("scatter_sum_rows: index " + std::to_string(dst) + " out of range");
    const S* src = xv.data.data() + r * cols;
    S* d = out.data.data() + dst * cols;
    for (std::int64_t j = 0; j < cols; ++j) d[j] += src[j];
  }
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid, idx, cols](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    const std::int64_t m2 = static_cast<std::int64_t>(idx->size());
    for (std::int64_t r = 0; r < m2; ++r) {
      const std::int64_t src = (*idx)[static_cast<std::size_t>(r)];
      const S* srow = g.data.data() + src * cols;
      S* d = dx.data.data() + r * cols;
      for (std::int64_t j = 0; j < cols; ++j) d[j] += srow[j];
    }
  });
}

// Forward emits hard one-hot rows (argmax, first index on ties); gradients
// pass through unchanged, so training sees the relaxed sample.
template <class S>
VarT<S> straight_through_onehot(VarT<S> x) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (xv.rank() != 2) throw ShapeError("straight_through_onehot: expected rank-2 input, got " + shape_str(xv.shape));
  const std::int64_t rows = xv.shape[0], cols = xv.shape[1];
  TensorT<S> out({rows, cols});
  for (std::int64_t i = 0; i < rows; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < cols; ++j) {
      if (xv.at(i, j) > xv.at(i, best)) best = j;
    }
    out.at(i, best) = S(1);
  }
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    for (std::int64_t i = 0; i < g.numel(); ++i) dx.data[static_cast<std::size_t>(i)] += g.data[static_cast<std::size_t>(i)];
  });
}

// Columns [j0, j1) of a rank-2 tensor as a new [rows, j1-j0] tensor.
template <class S>
VarT<S> slice_cols(VarT<S> x, std::int64_t j0, std::int64_t j1) {
  TapeT<S>& t = *x.tape;
  const TensorT<S>& xv = t.val(x);
  if (xv.rank() != 2) throw ShapeError("slice_cols: expected rank-2 input, got " + shape_str(xv.shape));
  const std::int64_t rows = xv.shape[0], cols = xv.shape[1];
  if (j0 < 0 || j1 > cols || j0 >= j1) {
    throw ShapeError("slice_cols: range [" + std::to_string(j0) + ", " + std::to_string(j1) +
                     ") invalid for " + shape_str(xv.shape));
  }
  const std::int64_t w = j1 - j0;
  TensorT<S> out({rows, w});
  for (std::int64_t i = 0; i < rows; ++i) {
    std::memcpy(out.data.data() + i * w, xv.data.data() + i * cols + j0,
                static_cast<std::size_t>(w) * sizeof(S));
  }
  const std::int32_t xid = x.id;
  return t.make(std::move(out), t.requires_grad(xid), [xid, j0, w, cols](TapeT<S>& tp, std::int32_t self) {
    const TensorT<S>& g = tp.grad_buf(self);
    TensorT<S>& dx = tp.grad_buf(xid);
    const std::int64_t rows2 = g.shape[0];
    for (std::int64_t i = 0; i < rows2; ++i) {
      const S* src = g.data.data() + i * w;
      S* dst = dx.data.data() + i * cols + j0;
      for (std::int64_t j = 0; j < w; ++j) dst[j] += src[j];
    }
  });
}

// Row-wise argmax of a plain tensor (first index on ties).
template <class S>
std::vector<int> argmax_rows(const TensorT<S>& x) {
  const std::int64_t rows = x.shape[0], cols = x.shape[1];
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (std::int64_t i = 0; i < rows; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < cols; ++j) {
      if (x.at(i, j) > x.at(i, best)) best = j;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

}  // namespace nri
