#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "nri/rng.hpp"
#include "nri/tape.hpp"
#include "nri/tensor.hpp"

namespace nri {

// Named parameter tensors in registration order. The order is the contract
// for optimizer state and checkpoints, so modules must register during
// construction and never after.
template <class S>
struct ParamStoreT {
  struct Entry {
    std::string name;
    TensorT<S> value;
  };
  std::vector<Entry> entries;

  std::size_t add(std::string name, TensorT<S> v) {
    for (const Entry& e : entries) {
      if (e.name == name) throw ContractError("ParamStore: duplicate parameter '" + name + "'");
    }
    entries.push_back({std::move(name), std::move(v)});
    return entries.size() - 1;
  }
  std::size_t size() const { return entries.size(); }

  template <class T>
  ParamStoreT<T> cast() const {
    ParamStoreT<T> out;
    out.entries.reserve(entries.size());
    for (const Entry& e : entries) out.entries.push_back({e.name, e.value.template cast<T>()});
    return out;
  }
};

using ParamStore = ParamStoreT<float>;

// Parameters bound to a tape as leaves, parallel to the store's order.
template <class S>
using BindingT = std::vector<VarT<S>>;

template <class S>
BindingT<S> bind_params(TapeT<S>& tape, const ParamStoreT<S>& store, bool requires_grad = true) {
  BindingT<S> vars;
  vars.reserve(store.size());
  for (const auto& e : store.entries) vars.push_back(tape.leaf(e.value, requires_grad));
  return vars;
}

// y = x W + b. Weights use Glorot-uniform initialization drawn in double so
// the float and double instantiations of the model start from the same
// numbers; biases start at zero.
template <class S>
struct LinearT {
  std::size_t w = 0, b = 0;

  LinearT() = default;
  LinearT(ParamStoreT<S>& ps, const std::string& name, std::int64_t in, std::int64_t out, Rng& rng) {
    TensorT<S> weight({in, out});
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    for (auto& v : weight.data) v = static_cast<S>(rng.uniform(-limit, limit));
    w = ps.add(name + ".w", std::move(weight));
    b = ps.add(name + ".b", TensorT<S>({1, out}));
  }

  VarT<S> operator()(const BindingT<S>& p, VarT<S> x) const { return add(matmul(x, p[w]), p[b]); }
};

// Two ELU hidden layers and a linear head, all width `hidden` except the
// output.
template <class S>
struct MlpT {
  LinearT<S> l1, l2, l3;

  MlpT() = default;
  MlpT(ParamStoreT<S>& ps, const std::string& name, std::int64_t in, std::int64_t hidden,
       std::int64_t out, Rng& rng)
      : l1(ps, name + ".l1", in, hidden, rng),
        l2(ps, name + ".l2", hidden, hidden, rng),
        l3(ps, name + ".l3", hidden, out, rng) {}

  VarT<S> operator()(const BindingT<S>& p, VarT<S> x) const {
    return l3(p, elu(l2(p, elu(l1(p, x)))));
  }
};

}  // namespace nri
