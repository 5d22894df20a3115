#include "nri/springs.hpp"

#include <algorithm>
#include <cmath>

namespace nri {

SpringState init_springs(int n, Rng& rng, const Boundary& boundary) {
  if (n < 1) throw ContractError("init_springs: need at least one particle");
  SpringState s;
  s.px.resize(static_cast<std::size_t>(n));
  s.py.resize(static_cast<std::size_t>(n));
  s.vx.resize(static_cast<std::size_t>(n));
  s.vy.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x, y;
    do {
      x = rng.normal(0.0, 0.5);
      y = rng.normal(0.0, 0.5);
    } while (!boundary.contains(x, y));
    s.px[static_cast<std::size_t>(i)] = x;
    s.py[static_cast<std::size_t>(i)] = y;
    const double angle = rng.uniform(0.0, 2.0 * M_PI);
    s.vx[static_cast<std::size_t>(i)] = 0.5 * std::cos(angle);
    s.vy[static_cast<std::size_t>(i)] = 0.5 * std::sin(angle);
  }
  return s;
}

void spring_forces(const SpringState& state, const InteractionGraph& graph,
                   std::vector<double>& fx, std::vector<double>& fy) {
  const int n = state.n();
  if (graph.n != n) throw ContractError("spring_forces: graph/state size mismatch");
  fx.assign(static_cast<std::size_t>(n), 0.0);
  fy.assign(static_cast<std::size_t>(n), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double k = graph.coupling(i, j);
      if (k == 0.0) continue;
      const std::size_t ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      const double gx = -k * (state.px[ui] - state.px[uj]);
      const double gy = -k * (state.py[ui] - state.py[uj]);
      fx[ui] += gx;
      fy[ui] += gy;
      fx[uj] -= gx;  // action-reaction keeps momentum exact
      fy[uj] -= gy;
    }
  }
}

namespace {

// Specular reflection into the enclosure, mutating position and velocity.
// A single drift of dt=1e-3 never crosses more than once in practice, but the
// loop makes corner hits safe.
void reflect(const Boundary& b, double prev_x, double prev_y, double& x, double& y,
             double& vx, double& vy) {
  if (b.kind == Boundary::Kind::Unbounded) return;
  for (int pass = 0; pass < 16 && !b.contains(x, y); ++pass) {
    if (b.kind == Boundary::Kind::Square) {
      const double h = b.extent / 2.0;
      if (x >= h) {
        x = 2.0 * h - x;
        vx = -vx;
      } else if (x <= -h) {
        x = -2.0 * h - x;
        vx = -vx;
      }
      if (y >= h) {
        y = 2.0 * h - y;
        vy = -vy;
      } else if (y <= -h) {
        y = -2.0 * h - y;
        vy = -vy;
      }
    } else {
      // Solve |p + a*(q - p)| = r for the crossing fraction a in [0, 1],
      // reflect the velocity and the remaining displacement about the
      // surface normal at the crossing point.
      const double r = b.extent / 2.0;
      const double dx = x - prev_x, dy = y - prev_y;
      const double a2 = dx * dx + dy * dy;
      if (a2 == 0.0) {  // no displacement yet outside: clamp radially
        const double norm = std::sqrt(x * x + y * y);
        x *= r / norm * (1.0 - 1e-12);
        y *= r / norm * (1.0 - 1e-12);
        break;
      }
      const double b1 = 2.0 * (prev_x * dx + prev_y * dy);
      const double c = prev_x * prev_x + prev_y * prev_y - r * r;
      const double disc = b1 * b1 - 4.0 * a2 * c;
      const double alpha = disc > 0.0 ? (-b1 + std::sqrt(disc)) / (2.0 * a2) : 0.0;
      const double cx = prev_x + alpha * dx, cy = prev_y + alpha * dy;
      const double inv_r = 1.0 / std::sqrt(cx * cx + cy * cy);
      const double nx = cx * inv_r, ny = cy * inv_r;
      const double vdot = vx * nx + vy * ny;
      vx -= 2.0 * vdot * nx;
      vy -= 2.0 * vdot * ny;
      const double rx = x - cx, ry = y - cy;  // remaining path, mirrored
      const double rdot = rx * nx + ry * ny;
      x = cx + rx - 2.0 * rdot * nx;
      y = cy + ry - 2.0 * rdot * ny;
      prev_x = cx;
      prev_y = cy;
    }
  }
  // A particle landing exactly on the wall mirrors onto itself; nudge it
  // inside rather than letting the next step's containment check trip.
  if (!b.contains(x, y)) {
    const double shrink = 1.0 - 1e-12;
    if (b.kind == Boundary::Kind::Square) {
      const double h = b.extent / 2.0;
      x = std::clamp(x, -h * shrink, h * shrink);
      y = std::clamp(y, -h * shrink, h * shrink);
    } else {
      const double r = b.extent / 2.0;
      const double norm = std::sqrt(x * x + y * y);
      x *= r / norm * shrink;
      y *= r / norm * shrink;
    }
  }
}

}  // namespace

void leapfrog_steps(SpringState& state, const InteractionGraph& graph, const Boundary& boundary,
                    long steps, double dt) {
  const int n = state.n();
  for (int i = 0; i < n; ++i) {
    if (!boundary.contains(state.px[static_cast<std::size_t>(i)], state.py[static_cast<std::size_t>(i)])) {
      throw ContractError("leapfrog_steps: particle " + std::to_string(i) + " starts outside the boundary");
    }
  }
  std::vector<double> fx, fy;
  spring_forces(state, graph, fx, fy);
  const double half = 0.5 * dt;
  for (long s = 0; s < steps; ++s) {
    for (int i = 0; i < n; ++i) {
      const std::size_t u = static_cast<std::size_t>(i);
      state.vx[u] += half * fx[u];
      state.vy[u] += half * fy[u];
      const double prev_x = state.px[u], prev_y = state.py[u];
      state.px[u] += dt * state.vx[u];
      state.py[u] += dt * state.vy[u];
      reflect(boundary, prev_x, prev_y, state.px[u], state.py[u], state.vx[u], state.vy[u]);
    }
    spring_forces(state, graph, fx, fy);
    for (int i = 0; i < n; ++i) {
      const std::size_t u = static_cast<std::size_t>(i);
      state.vx[u] += half * fx[u];
      state.vy[u] += half * fy[u];
    }
  }
}

Tensor simulate_springs(const InteractionGraph& graph, SpringState init, const Boundary& boundary,
                        long raw_steps, double dt, int downsample) {
  if (dt <= 0) throw ContractError("simulate_springs: dt must be positive");
  if (downsample < 1) throw ContractError("simulate_springs: downsample must be at least 1");
  const int n = init.n();
  const long frames = raw_steps / downsample;
  Tensor out({n, frames, 4});
  long frame = 0;
  for (long s = 0; s < raw_steps; ++s) {
    if (s % downsample == 0) {
      for (int i = 0; i < n; ++i) {
        const std::size_t u = static_cast<std::size_t>(i);
        float* row = out.data.data() + (static_cast<long>(i) * frames + frame) * 4;
        row[0] = static_cast<float>(init.px[u]);
        row[1] = static_cast<float>(init.py[u]);
        row[2] = static_cast<float>(init.vx[u]);
        row[3] = static_cast<float>(init.vy[u]);
      }
      ++frame;
    }
    leapfrog_steps(init, graph, boundary, 1, dt);
  }
  return out;
}

double spring_energy(const SpringState& state, const InteractionGraph& graph) {
  const int n = state.n();
  double e = 0.0;
  for (int i = 0; i < n; ++i) {
    const std::size_t u = static_cast<std::size_t>(i);
    e += 0.5 * (state.vx[u] * state.vx[u] + state.vy[u] * state.vy[u]);
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double k = graph.coupling(i, j);
      if (k == 0.0) continue;
      const std::size_t ui = static_cast<std::size_t>(i), uj = static_cast<std::size_t>(j);
      const double dx = state.px[ui] - state.px[uj];
      const double dy = state.py[ui] - state.py[uj];
      e += 0.5 * k * (dx * dx + dy * dy);
    }
  }
  return e;
}

void total_momentum(const SpringState& state, double& out_x, double& out_y) {
  out_x = 0.0;
  out_y = 0.0;
  for (std::size_t i = 0; i < state.px.size(); ++i) {
    out_x += state.vx[i];
    out_y += state.vy[i];
  }
}

}  // namespace nri
