#pragma once

#include <vector>

#include "nri/boundary.hpp"
#include "nri/graph.hpp"
#include "nri/rng.hpp"
#include "nri/tensor.hpp"

namespace nri {

// 2-D point particles, unit mass. Physics runs in double; features are
// downcast to float32 only when a dataset is assembled.
struct SpringState {
  std::vector<double> px, py, vx, vy;
  int n() const { return static_cast<int>(px.size()); }
};

// Positions drawn per-coordinate from N(0, 0.5) (rejected and redrawn until
// inside the boundary); velocity direction uniform on the circle, speed
// exactly 0.5.
SpringState init_springs(int n, Rng& rng, const Boundary& boundary = Boundary::unbounded());

// F_i = sum_j -k_ij (s_i - s_j), with k_ij the pair's coupling value.
void spring_forces(const SpringState& state, const InteractionGraph& graph,
                   std::vector<double>& fx, std::vector<double>& fy);

// Advances `steps` kick-drift-kick leapfrog steps in place, applying specular
// wall reflections after each drift. Throws ContractError if the initial
// state lies outside the boundary.
void leapfrog_steps(SpringState& state, const InteractionGraph& graph, const Boundary& boundary,
                    long steps, double dt);

// Runs raw_steps of leapfrog and keeps every `downsample`-th raw step
// (starting at step 0), returning float32 features [n, T, 4] with rows
// (x, y, vx, vy) and T = raw_steps / downsample.
Tensor simulate_springs(const InteractionGraph& graph, SpringState init, const Boundary& boundary,
                        long raw_steps, double dt = 0.001, int downsample = 100);

// Kinetic plus spring potential energy (unit mass).
double spring_energy(const SpringState& state, const InteractionGraph& graph);

// Total momentum (sum of velocities, unit mass).
void total_momentum(const SpringState& state, double& out_x, double& out_y);

}  // namespace nri
