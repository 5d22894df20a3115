#pragma once

#include <vector>

#include "nri/graph.hpp"
#include "nri/tensor.hpp"

namespace nri {

// d(phase_i)/dt = omega_i + sum_{j != i} A_ij sin(phase_i - phase_j).
// The sign inside sin follows the source dynamics definition as written
// (anti-phase locking is the stable configuration for positive coupling).
std::vector<double> kuramoto_rhs(const std::vector<double>& phase, const std::vector<double>& omega,
                                 const InteractionGraph& graph);

// Phases and phase velocities on the kept output grid; both arrays are
// [frames][n] row-major. Rates are the ODE right-hand side evaluated at the
// kept phases (exact, no finite differencing).
struct KuramotoSeries {
  int n = 0;
  long frames = 0;
  std::vector<double> phase;
  std::vector<double> rate;
};

// Adaptive Dormand-Prince 5(4) with absolute and relative tolerance 1e-8.
// The solver lands exactly on every uniform grid point (spacing grid_dt) and
// keeps every `downsample`-th one, so frame t sits at time t*downsample*grid_dt.
// Throws IntegrationError (with the time reached) on step-size underflow.
KuramotoSeries simulate_kuramoto(const InteractionGraph& graph, const std::vector<double>& phase0,
                                 const std::vector<double>& omega, long frames,
                                 double grid_dt = 0.01, int downsample = 10);

// Zero-frequency Fourier coefficient of a series, normalized by length —
// i.e. the time mean. Used to estimate an oscillator's intrinsic frequency
// from its phase-velocity series.
double estimate_omega(const double* series, long count);

}  // namespace nri
