#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "nri/error.hpp"
#include "nri/rng.hpp"

namespace nri {

// Ground-truth coupling structure: symmetric typed adjacency with no
// self-loops. Type 0 conventionally means "no link"; type_values maps each
// type to its physical coupling strength (spring constant, or 0/1 for
// oscillator adjacency).
struct InteractionGraph {
  int n = 0;
  std::vector<std::uint8_t> link_type;  // n*n row-major, symmetric, zero diagonal
  std::vector<double> type_values;

  InteractionGraph() = default;
  InteractionGraph(int n_agents, std::vector<double> values)
      : n(n_agents), link_type(static_cast<std::size_t>(n_agents) * static_cast<std::size_t>(n_agents), 0),
        type_values(std::move(values)) {
    if (n < 1) throw ContractError("InteractionGraph: need at least one agent");
    if (type_values.empty()) throw ContractError("InteractionGraph: need at least one link type");
  }

  std::uint8_t type_at(int i, int j) const {
    return link_type[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
  }
  void set_pair(int i, int j, std::uint8_t t) {
    link_type[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)] = t;
    link_type[static_cast<std::size_t>(j) * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = t;
  }
  double coupling(int i, int j) const { return type_values[type_at(i, j)]; }

  bool operator==(const InteractionGraph& o) const {
    return n == o.n && link_type == o.link_type && type_values == o.type_values;
  }
};

// Every unordered pair draws its link type independently from type_probs.
inline InteractionGraph sample_er_graph(int n, const std::vector<double>& type_probs,
                                        const std::vector<double>& type_values, Rng& rng) {
  if (type_probs.size() != type_values.size()) {
    throw ContractError("sample_er_graph: type_probs and type_values sizes differ");
  }
  double total = 0;
  for (const double p : type_probs) {
    if (p < 0) throw ContractError("sample_er_graph: negative probability");
    total += p;
  }
  if (std::fabs(total - 1.0) > 1e-9) {
    throw ContractError("sample_er_graph: type_probs sum to " + std::to_string(total) + ", expected 1");
  }
  InteractionGraph g(n, type_values);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      g.set_pair(i, j, static_cast<std::uint8_t>(
                           rng.categorical(type_probs.data(), static_cast<int>(type_probs.size()))));
    }
  }
  return g;
}

}  // namespace nri
