#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "nri/dataset.hpp"
#include "nri/error.hpp"
#include "nri/kuramoto.hpp"
#include "nri/rng.hpp"
#include "nri/springs.hpp"

using namespace nri;

namespace {

InteractionGraph random_springs_graph(int n, std::uint64_t seed) {
  Rng rng(seed);
  return sample_er_graph(n, {0.5, 0.5}, {0.0, 1.0}, rng);
}

// Two unit masses joined by a unit spring, released from rest: the relative
// coordinate is simple harmonic with angular frequency sqrt(2). Measured via
// linearly interpolated zero crossings of the separation.
double measure_two_body_omega(double dt, double t_end) {
  InteractionGraph g(2, {0.0, 1.0});
  g.set_pair(0, 1, 1);
  SpringState s;
  s.px = {0.5, -0.5};
  s.py = {0.0, 0.0};
  s.vx = {0.0, 0.0};
  s.vy = {0.0, 0.0};

  const long steps = static_cast<long>(t_end / dt);
  std::vector<double> crossings;
  double prev = s.px[0] - s.px[1];
  for (long k = 1; k <= steps; ++k) {
    leapfrog_steps(s, g, Boundary::unbounded(), 1, dt);
    const double cur = s.px[0] - s.px[1];
    if ((prev < 0.0) != (cur < 0.0)) {
      const double frac = prev / (prev - cur);
      crossings.push_back((static_cast<double>(k - 1) + frac) * dt);
    }
    prev = cur;
  }
  REQUIRE(crossings.size() >= 3);
  // Adjacent zero crossings of a sinusoid are half a period apart.
  const double span = crossings.back() - crossings.front();
  return M_PI * static_cast<double>(crossings.size() - 1) / span;
}

// Plain fixed-step RK4 on the oscillator network; independent of the
// adaptive integrator under test.
std::vector<double> rk4_kuramoto(const InteractionGraph& g, std::vector<double> phase,
                                 const std::vector<double>& omega, double t_end, double dt) {
  const std::size_t n = phase.size();
  const long steps = static_cast<long>(std::llround(t_end / dt));
  std::vector<double> k1, k2, k3, k4, tmp(n);
  for (long s = 0; s < steps; ++s) {
    k1 = kuramoto_rhs(phase, omega, g);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phase[i] + 0.5 * dt * k1[i];
    k2 = kuramoto_rhs(tmp, omega, g);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phase[i] + 0.5 * dt * k2[i];
    k3 = kuramoto_rhs(tmp, omega, g);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = phase[i] + dt * k3[i];
    k4 = kuramoto_rhs(tmp, omega, g);
    for (std::size_t i = 0; i < n; ++i) {
      phase[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  return phase;
}

}  // namespace

// --- springs ----------------------------------------------------------------

TEST_CASE("unbounded springs conserve energy and momentum over 1e5 steps") {
  Rng rng(41);
  const InteractionGraph g = random_springs_graph(5, 1234);
  SpringState s = init_springs(5, rng);
  // Nonzero total momentum so the conservation check is not vacuous.
  for (int i = 0; i < 5; ++i) s.vx[i] += 0.1;

  const double e0 = spring_energy(s, g);
  double px0 = 0, py0 = 0;
  total_momentum(s, px0, py0);

  leapfrog_steps(s, g, Boundary::unbounded(), 100000, 0.001);

  const double e1 = spring_energy(s, g);
  double px1 = 0, py1 = 0;
  total_momentum(s, px1, py1);

  CHECK(std::fabs(e1 - e0) / std::fabs(e0) < 1e-6);
  CHECK(std::fabs(px1 - px0) < 1e-10);
  CHECK(std::fabs(py1 - py0) < 1e-10);
}

TEST_CASE("two-body oscillation frequency matches sqrt(2)") {
  // dt=1e-6 reference: the integrator's own frequency error at this step is
  // far below the 1e-6 acceptance band.
  const double omega_ref = measure_two_body_omega(1e-6, 10.0);
  CHECK(std::fabs(omega_ref - std::sqrt(2.0)) < 1e-6);
  // The production step keeps the same frequency well inside 1e-5.
  const double omega_prod = measure_two_body_omega(1e-3, 10.0);
  CHECK(std::fabs(omega_prod - omega_ref) < 1e-5);
}

TEST_CASE("free particle in a square box: reflections preserve speed to 1e-12") {
  InteractionGraph g(1, {0.0});
  SpringState s;
  s.px = {0.3};
  s.py = {-0.2};
  s.vx = {0.5 * std::cos(0.7)};
  s.vy = {0.5 * std::sin(0.7)};
  const Boundary box = Boundary::square(2.0);
  for (int k = 0; k < 1000; ++k) {
    leapfrog_steps(s, g, box, 100, 0.001);
    const double speed = std::hypot(s.vx[0], s.vy[0]);
    CHECK(std::fabs(speed - 0.5) < 1e-12);
    CHECK(box.contains(s.px[0], s.py[0]));
  }
}

TEST_CASE("free particle in a circular box: reflections preserve speed to 1e-12") {
  InteractionGraph g(1, {0.0});
  SpringState s;
  s.px = {0.1};
  s.py = {0.4};
  s.vx = {0.5 * std::cos(-1.2)};
  s.vy = {0.5 * std::sin(-1.2)};
  const Boundary disk = Boundary::circle(2.0);
  for (int k = 0; k < 1000; ++k) {
    leapfrog_steps(s, g, disk, 100, 0.001);
    const double speed = std::hypot(s.vx[0], s.vy[0]);
    CHECK(std::fabs(speed - 0.5) < 1e-12);
    CHECK(disk.contains(s.px[0], s.py[0]));
  }
}

TEST_CASE("interacting particles in a box stay inside and keep energy bounded") {
  Rng rng(7);
  const Boundary box = Boundary::square(2.0);
  const InteractionGraph g = random_springs_graph(5, 99);
  SpringState s = init_springs(5, rng, box);
  const double e0 = spring_energy(s, g);
  for (int k = 0; k < 200; ++k) {
    leapfrog_steps(s, g, box, 500, 0.001);
    for (int i = 0; i < 5; ++i) CHECK(box.contains(s.px[i], s.py[i]));
  }
  // Walls exchange momentum but not energy (elastic), and the spring
  // potential is exact between reflections.
  CHECK(std::fabs(spring_energy(s, g) - e0) / std::fabs(e0) < 1e-3);
}

TEST_CASE("unlinked particle moves in a straight line") {
  InteractionGraph g(2, {0.0, 1.0});  // type 0 everywhere: no forces
  SpringState s;
  s.px = {0.0, 5.0};
  s.py = {0.0, 5.0};
  s.vx = {0.3, -0.1};
  s.vy = {-0.4, 0.2};
  leapfrog_steps(s, g, Boundary::unbounded(), 1000, 0.001);
  CHECK(s.px[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(s.py[0] == doctest::Approx(-0.4).epsilon(1e-12));
  CHECK(s.px[1] == doctest::Approx(5.0 - 0.1).epsilon(1e-12));
}

TEST_CASE("simulate_springs records every downsample-th step as float32") {
  Rng rng(11);
  const InteractionGraph g = random_springs_graph(3, 5);
  SpringState init = init_springs(3, rng);
  SpringState copy = init;

  const Tensor feats = simulate_springs(g, init, Boundary::unbounded(), 300, 0.001, 100);
  REQUIRE(feats.shape == Shape{3, 3, 4});

  // Frame 0 is the initial state, frame 1 the state after 100 raw steps.
  CHECK(feats.at(0, 0) == doctest::Approx(static_cast<float>(copy.px[0])));
  CHECK(feats.at(0, 3) == doctest::Approx(static_cast<float>(copy.vy[0])));
  leapfrog_steps(copy, g, Boundary::unbounded(), 100, 0.001);
  const float x01 = feats.data[0 * 3 * 4 + 1 * 4 + 0];
  CHECK(x01 == static_cast<float>(copy.px[0]));
}

TEST_CASE("initial speeds are exactly 0.5") {
  Rng rng(3);
  const SpringState s = init_springs(8, rng);
  for (int i = 0; i < 8; ++i) {
    CHECK(std::hypot(s.vx[i], s.vy[i]) == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("leapfrog rejects initial states outside the boundary") {
  InteractionGraph g(1, {0.0});
  SpringState s;
  s.px = {5.0};
  s.py = {0.0};
  s.vx = {0.0};
  s.vy = {0.0};
  CHECK_THROWS_AS(leapfrog_steps(s, g, Boundary::square(2.0), 1, 0.001), ContractError);
}

// --- oscillators --------------------------------------------------------------

TEST_CASE("adaptive integrator agrees with fixed-step RK4 to 1e-6 over t in [0,10]") {
  Rng rng(2024);
  InteractionGraph g = sample_er_graph(5, {0.5, 0.5}, {0.0, 1.0}, rng);
  std::vector<double> omega(5), phase0(5);
  for (int i = 0; i < 5; ++i) {
    omega[i] = 1.0 + 9.0 * rng.uniform();
    phase0[i] = 2.0 * M_PI * rng.uniform();
  }

  // 100 frames at spacing 0.1 cover t in (0, 10].
  const KuramotoSeries series = simulate_kuramoto(g, phase0, omega, 101, 0.01, 10);
  double max_err = 0.0;
  for (long f = 1; f < series.frames; ++f) {
    const double t = 0.1 * static_cast<double>(f);
    const std::vector<double> ref = rk4_kuramoto(g, phase0, omega, t, 1e-4);
    for (int i = 0; i < 5; ++i) {
      max_err = std::max(max_err,
                         std::fabs(series.phase[static_cast<std::size_t>(f) * 5 + i] - ref[i]));
    }
  }
  CHECK(max_err < 1e-6);
}

TEST_CASE("mean phase drifts at the mean intrinsic frequency") {
  // Coupling terms cancel pairwise in the sum of the right-hand sides, so
  // d/dt sum(theta) = sum(omega) exactly.
  Rng rng(77);
  InteractionGraph g = sample_er_graph(5, {0.5, 0.5}, {0.0, 1.0}, rng);
  std::vector<double> omega(5), phase0(5);
  for (int i = 0; i < 5; ++i) {
    omega[i] = 1.0 + 9.0 * rng.uniform();
    phase0[i] = 2.0 * M_PI * rng.uniform();
  }
  const KuramotoSeries series = simulate_kuramoto(g, phase0, omega, 101, 0.01, 10);
  const double t_end = 0.1 * static_cast<double>(series.frames - 1);
  double sum0 = 0, sum1 = 0, sum_omega = 0;
  for (int i = 0; i < 5; ++i) {
    sum0 += phase0[i];
    sum1 += series.phase[static_cast<std::size_t>(series.frames - 1) * 5 + i];
    sum_omega += omega[i];
  }
  CHECK(std::fabs((sum1 - sum0) / t_end - sum_omega) < 1e-6);
}

TEST_CASE("equal-frequency pair with positive coupling locks in anti-phase") {
  InteractionGraph g(2, {0.0, 1.0});
  g.set_pair(0, 1, 1);
  const std::vector<double> omega = {2.0, 2.0};
  const std::vector<double> phase0 = {0.3, 1.1};
  const KuramotoSeries series = simulate_kuramoto(g, phase0, omega, 501, 0.01, 10);
  const std::size_t last = static_cast<std::size_t>(series.frames - 1) * 2;
  double delta = std::fmod(series.phase[last] - series.phase[last + 1], 2.0 * M_PI);
  if (delta < 0) delta += 2.0 * M_PI;
  CHECK(std::fabs(delta - M_PI) < 1e-6);
}

TEST_CASE("rate series is the right-hand side at the kept phases") {
  Rng rng(13);
  InteractionGraph g = sample_er_graph(4, {0.5, 0.5}, {0.0, 1.0}, rng);
  std::vector<double> omega = {1.5, 2.5, 3.5, 4.5};
  std::vector<double> phase0 = {0.0, 1.0, 2.0, 3.0};
  const KuramotoSeries series = simulate_kuramoto(g, phase0, omega, 20, 0.01, 10);
  for (long f = 0; f < series.frames; ++f) {
    std::vector<double> ph(series.phase.begin() + f * 4, series.phase.begin() + (f + 1) * 4);
    const std::vector<double> rhs = kuramoto_rhs(ph, omega, g);
    for (int i = 0; i < 4; ++i) {
      CHECK(series.rate[static_cast<std::size_t>(f) * 4 + i] == doctest::Approx(rhs[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("estimate_omega recovers the frequency of an uncoupled oscillator") {
  InteractionGraph g(2, {0.0, 1.0});  // no links
  const std::vector<double> omega = {3.7, 1.2};
  const KuramotoSeries series = simulate_kuramoto(g, {0.5, 0.25}, omega, 99, 0.01, 10);
  std::vector<double> col(static_cast<std::size_t>(series.frames));
  for (long f = 0; f < series.frames; ++f) col[static_cast<std::size_t>(f)] = series.rate[static_cast<std::size_t>(f) * 2];
  CHECK(estimate_omega(col.data(), series.frames) == doctest::Approx(3.7).epsilon(1e-9));
}

TEST_CASE("estimate_omega is the plain mean of the series") {
  const std::vector<double> series = {1.0, 2.0, 4.0, 9.0};
  CHECK(estimate_omega(series.data(), 4) == doctest::Approx(4.0));
}

// --- graphs -------------------------------------------------------------------

TEST_CASE("sampled graphs are symmetric with zero diagonal and ER statistics") {
  Rng rng(555);
  long type1 = 0, pairs = 0;
  for (int trial = 0; trial < 400; ++trial) {
    const InteractionGraph g = sample_er_graph(6, {0.5, 0.5}, {0.0, 1.0}, rng);
    for (int i = 0; i < 6; ++i) {
      CHECK(g.type_at(i, i) == 0);
      for (int j = i + 1; j < 6; ++j) {
        CHECK(g.type_at(i, j) == g.type_at(j, i));
        type1 += g.type_at(i, j);
        ++pairs;
      }
    }
  }
  // Binomial(6000, 0.5): 3 sigma is about 116.
  const double sigma = std::sqrt(static_cast<double>(pairs) * 0.25);
  CHECK(std::fabs(static_cast<double>(type1) - 0.5 * static_cast<double>(pairs)) < 3.0 * sigma);
}

TEST_CASE("degenerate type probabilities give constant graphs") {
  Rng rng(66);
  const InteractionGraph none = sample_er_graph(5, {1.0, 0.0}, {0.0, 1.0}, rng);
  const InteractionGraph full = sample_er_graph(5, {0.0, 1.0}, {0.0, 1.0}, rng);
  for (int i = 0; i < 5; ++i) {
    for (int j = i + 1; j < 5; ++j) {
      CHECK(none.type_at(i, j) == 0);
      CHECK(full.type_at(i, j) == 1);
    }
  }
}

// --- datasets -------------------------------------------------------------------

TEST_CASE("generate_dataset is deterministic and seed-sensitive") {
  SystemConfig cfg;
  cfg.n_agents = 3;
  cfg.frames = 5;
  const TrajectoryDataset a = generate_dataset(cfg, 4, 42);
  const TrajectoryDataset b = generate_dataset(cfg, 4, 42);
  const TrajectoryDataset c = generate_dataset(cfg, 4, 43);
  CHECK(a.features.data == b.features.data);
  CHECK(a.graphs == b.graphs);
  CHECK(a.features.data != c.features.data);
}

TEST_CASE("dataset files round-trip and rewrite byte-identically") {
  SystemConfig cfg;
  cfg.n_agents = 3;
  cfg.frames = 5;
  cfg.kind = SystemConfig::Kind::Kuramoto;
  cfg.frequency_mode = "estimated";
  const TrajectoryDataset d = generate_dataset(cfg, 3, 9);

  const std::string p1 = (std::filesystem::temp_directory_path() / "nri_ds_a.cds").string();
  const std::string p2 = (std::filesystem::temp_directory_path() / "nri_ds_b.cds").string();
  write_dataset(d, p1);
  write_dataset(d, p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  const std::string bytes1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string bytes2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(bytes1 == bytes2);
  CHECK(bytes1.substr(0, 4) == "CDS1");

  const TrajectoryDataset r = read_dataset(p1);
  CHECK(r.meta.system == d.meta.system);
  CHECK(r.meta.sims == d.meta.sims);
  CHECK(r.meta.seed == d.meta.seed);
  CHECK(r.graphs == d.graphs);
  CHECK(r.features.shape == d.features.shape);
  CHECK(r.features.data == d.features.data);

  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("corrupt dataset files are rejected with an offset") {
  SystemConfig cfg;
  cfg.n_agents = 2;
  cfg.frames = 3;
  const TrajectoryDataset d = generate_dataset(cfg, 2, 1);
  const std::string path = (std::filesystem::temp_directory_path() / "nri_ds_bad.cds").string();
  write_dataset(d, path);

  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  in.close();

  SUBCASE("bad magic") {
    bytes[0] = 'X';
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(read_dataset(path), FormatError);
  }
  SUBCASE("truncated") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
    out.close();
    CHECK_THROWS_AS(read_dataset(path), FormatError);
  }
  SUBCASE("trailing garbage") {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out << "extra";
    out.close();
    CHECK_THROWS_AS(read_dataset(path), FormatError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("springs datasets start at speed 0.5 inside the boundary") {
  SystemConfig cfg;
  cfg.n_agents = 4;
  cfg.frames = 4;
  cfg.boundary = Boundary::square(2.0);
  const TrajectoryDataset d = generate_dataset(cfg, 6, 21);
  for (int s = 0; s < d.sims(); ++s) {
    const Tensor f = d.sim_features(s);
    for (int i = 0; i < 4; ++i) {
      for (long t = 0; t < cfg.frames; ++t) {
        const float x = f.data[static_cast<std::size_t>(i) * cfg.frames * 4 + t * 4 + 0];
        const float y = f.data[static_cast<std::size_t>(i) * cfg.frames * 4 + t * 4 + 1];
        CHECK(cfg.boundary.contains(x, y));
      }
      const float vx = f.data[static_cast<std::size_t>(i) * cfg.frames * 4 + 2];
      const float vy = f.data[static_cast<std::size_t>(i) * cfg.frames * 4 + 3];
      CHECK(std::hypot(double(vx), double(vy)) == doctest::Approx(0.5).epsilon(1e-6));
    }
  }
}

TEST_CASE("oscillator frequency channel: actual vs estimated") {
  SystemConfig cfg;
  cfg.kind = SystemConfig::Kind::Kuramoto;
  cfg.n_agents = 3;
  cfg.frames = 20;

  cfg.frequency_mode = "actual";
  const TrajectoryDataset actual = generate_dataset(cfg, 2, 5);
  cfg.frequency_mode = "estimated";
  const TrajectoryDataset estimated = generate_dataset(cfg, 2, 5);

  // Same seed, same trajectories; only the frequency channel differs.
  for (int s = 0; s < 2; ++s) {
    const Tensor fa = actual.sim_features(s);
    const Tensor fe = estimated.sim_features(s);
    for (int i = 0; i < 3; ++i) {
      const std::size_t base = static_cast<std::size_t>(i) * 20 * 3;
      // channels: 0 = phase velocity, 1 = sin(phase), 2 = frequency
      double rate_mean = 0.0;
      for (long t = 0; t < 20; ++t) {
        CHECK(fa.data[base + static_cast<std::size_t>(t) * 3 + 0] ==
              fe.data[base + static_cast<std::size_t>(t) * 3 + 0]);
        // frequency channel is constant across frames
        CHECK(fa.data[base + static_cast<std::size_t>(t) * 3 + 2] == fa.data[base + 2]);
        CHECK(fe.data[base + static_cast<std::size_t>(t) * 3 + 2] == fe.data[base + 2]);
        rate_mean += static_cast<double>(fa.data[base + static_cast<std::size_t>(t) * 3 + 0]);
      }
      rate_mean /= 20.0;
      CHECK(fe.data[base + 2] == doctest::Approx(rate_mean).epsilon(1e-5));
      // intrinsic frequencies are drawn from [1, 10)
      CHECK(fa.data[base + 2] >= 1.0f);
      CHECK(fa.data[base + 2] < 10.0f);
    }
  }
}

TEST_CASE("config validation rejects bad systems") {
  SystemConfig cfg;
  cfg.n_agents = 1;
  CHECK_THROWS_AS(cfg.validate(), ContractError);

  SystemConfig kb;
  kb.kind = SystemConfig::Kind::Kuramoto;
  kb.boundary = Boundary::square(2.0);
  CHECK_THROWS_AS(kb.validate(), ContractError);

  SystemConfig fm;
  fm.kind = SystemConfig::Kind::Kuramoto;
  fm.frequency_mode = "sideways";
  CHECK_THROWS_AS(fm.validate(), ContractError);
}

TEST_CASE("trajectory CSV export has one row per (sim, agent, frame)") {
  SystemConfig cfg;
  cfg.n_agents = 2;
  cfg.frames = 3;
  const TrajectoryDataset d = generate_dataset(cfg, 2, 77);
  const std::string path = (std::filesystem::temp_directory_path() / "nri_traj.csv").string();
  export_trajectories_csv(d, path);

  std::ifstream f(path);
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "sim,agent,frame,f0,f1,f2,f3");
  long rows = 0;
  while (std::getline(f, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 2 * 2 * 3);
  std::filesystem::remove(path);
}
