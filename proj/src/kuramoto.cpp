#include "nri/kuramoto.hpp"

#include <algorithm>
#include <cmath>

#include "nri/error.hpp"

namespace nri {

std::vector<double> kuramoto_rhs(const std::vector<double>& phase, const std::vector<double>& omega,
                                 const InteractionGraph& graph) {
  const int n = static_cast<int>(phase.size());
  if (static_cast<int>(omega.size()) != n || graph.n != n) {
    throw ContractError("kuramoto_rhs: phase/omega/graph size mismatch");
  }
  std::vector<double> d(omega);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double a = graph.coupling(i, j);
      if (a == 0.0) continue;
      const double s = std::sin(phase[static_cast<std::size_t>(i)] - phase[static_cast<std::size_t>(j)]);
      d[static_cast<std::size_t>(i)] += a * s;
      d[static_cast<std::size_t>(j)] -= a * s;  // sin is odd
    }
  }
  return d;
}

namespace {

// Dormand-Prince 5(4) tableau (FSAL: stage 7 is reused as stage 1 of the
// next accepted step).
constexpr double A21 = 1.0 / 5;
constexpr double A31 = 3.0 / 40, A32 = 9.0 / 40;
constexpr double A41 = 44.0 / 45, A42 = -56.0 / 15, A43 = 32.0 / 9;
constexpr double A51 = 19372.0 / 6561, A52 = -25360.0 / 2187, A53 = 64448.0 / 6561, A54 = -212.0 / 729;
constexpr double A61 = 9017.0 / 3168, A62 = -355.0 / 33, A63 = 46732.0 / 5247, A64 = 49.0 / 176,
                 A65 = -5103.0 / 18656;
constexpr double B1 = 35.0 / 384, B3 = 500.0 / 1113, B4 = 125.0 / 192, B5 = -2187.0 / 6784, B6 = 11.0 / 84;
// 5th-order minus embedded 4th-order weights, for the error estimate.
constexpr double E1 = 71.0 / 57600, E3 = -71.0 / 16695, E4 = 71.0 / 1920, E5 = -17253.0 / 339200,
                 E6 = 22.0 / 525, E7 = -1.0 / 40;

constexpr double kTol = 1e-8;  // both absolute and relative

}  // namespace

KuramotoSeries simulate_kuramoto(const InteractionGraph& graph, const std::vector<double>& phase0,
                                 const std::vector<double>& omega, long frames,
                                 double grid_dt, int downsample) {
  if (frames < 1) throw ContractError("simulate_kuramoto: need at least one frame");
  if (grid_dt <= 0 || downsample < 1) throw ContractError("simulate_kuramoto: invalid grid settings");
  const int n = static_cast<int>(phase0.size());
  const std::size_t un = static_cast<std::size_t>(n);

  KuramotoSeries out;
  out.n = n;
  out.frames = frames;
  out.phase.resize(static_cast<std::size_t>(frames) * un);
  out.rate.resize(static_cast<std::size_t>(frames) * un);

  auto record = [&](long frame, const std::vector<double>& phase) {
    const std::vector<double> r = kuramoto_rhs(phase, omega, graph);
    std::copy(phase.begin(), phase.end(), out.phase.begin() + static_cast<std::size_t>(frame) * un);
    std::copy(r.begin(), r.end(), out.rate.begin() + static_cast<std::size_t>(frame) * un);
  };

  std::vector<double> y = phase0;
  record(0, y);

  const long last_grid = (frames - 1) * static_cast<long>(downsample);
  std::vector<double> k1 = kuramoto_rhs(y, omega, graph);
  std::vector<double> k2(un), k3(un), k4(un), k5(un), k6(un), k7(un), ytmp(un), y5(un);
  double t = 0.0;
  double h = grid_dt;

  for (long g = 1; g <= last_grid; ++g) {
    const double t_target = static_cast<double>(g) * grid_dt;
    while (t < t_target - 1e-13) {
      const double h_try = std::min(h, t_target - t);
      if (h_try < 1e-14 * std::max(1.0, std::fabs(t))) {
        throw IntegrationError("simulate_kuramoto: step size underflow", t);
      }
      for (std::size_t i = 0; i < un; ++i) ytmp[i] = y[i] + h_try * A21 * k1[i];
      k2 = kuramoto_rhs(ytmp, omega, graph);
      for (std::size_t i = 0; i < un; ++i) ytmp[i] = y[i] + h_try * (A31 * k1[i] + A32 * k2[i]);
      k3 = kuramoto_rhs(ytmp, omega, graph);
      for (std::size_t i = 0; i < un; ++i)
        ytmp[i] = y[i] + h_try * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
      k4 = kuramoto_rhs(ytmp, omega, graph);
      for (std::size_t i = 0; i < un; ++i)
        ytmp[i] = y[i] + h_try * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
      k5 = kuramoto_rhs(ytmp, omega, graph);
      for (std::size_t i = 0; i < un; ++i)
        ytmp[i] = y[i] + h_try * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
      k6 = kuramoto_rhs(ytmp, omega, graph);
      for (std::size_t i = 0; i < un; ++i)
        y5[i] = y[i] + h_try * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
      k7 = kuramoto_rhs(y5, omega, graph);

      double err_sq = 0.0;
      for (std::size_t i = 0; i < un; ++i) {
        const double e = h_try * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        const double sc = kTol + kTol * std::max(std::fabs(y[i]), std::fabs(y5[i]));
        err_sq += (e / sc) * (e / sc);
      }
      const double err = std::sqrt(err_sq / static_cast<double>(un));

      if (err <= 1.0) {
        t += h_try;
        y.swap(y5);
        k1.swap(k7);  // FSAL
      }
      const double factor = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
      h = h_try * std::clamp(factor, 0.2, 5.0);
    }
    t = t_target;  // absorb the 1e-13 landing slack
    if (g % downsample == 0) record(g / downsample, y);
  }
  return out;
}

double estimate_omega(const double* series, long count) {
  if (count < 1) throw ContractError("estimate_omega: empty series");
  double s = 0.0;
  for (long i = 0; i < count; ++i) s += series[i];
  return s / static_cast<double>(count);
}

}  // namespace nri
