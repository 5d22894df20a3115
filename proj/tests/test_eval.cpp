#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nri/eval.hpp"

using namespace nri;
namespace fs = std::filesystem;

namespace {

// A dataset assembled by hand, bypassing the simulators.
TrajectoryDataset manual_dataset(int sims, int n, int frames, std::uint64_t seed,
                                 bool frozen = false) {
  TrajectoryDataset d;
  d.meta.system.n_agents = n;
  d.meta.system.frames = frames;
  d.meta.sims = sims;
  d.meta.seed = seed;
  Rng rng(seed);
  for (int s = 0; s < sims; ++s) {
    d.graphs.push_back(sample_er_graph(n, {0.5, 0.5}, {0.0, 1.0}, rng));
  }
  d.features = Tensor(Shape{sims, n, frames, 4});
  for (int s = 0; s < sims; ++s) {
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < 4; ++c) {
        const float base = static_cast<float>(rng.uniform(-1.0, 1.0));
        for (int t = 0; t < frames; ++t) {
          const float wiggle =
              frozen ? 0.0f : static_cast<float>(0.1 * std::sin(0.3 * t + i + c));
          d.features.data[static_cast<std::size_t>(((s * n + i) * frames + t) * 4 + c)] =
              base + wiggle;
        }
      }
    }
  }
  return d;
}

ModelConfig small_model_config(int n, int window) {
  ModelConfig mc;
  mc.n_agents = n;
  mc.feature_dim = 4;
  mc.window = window;
  mc.edge_types = 2;
  mc.hidden = 16;
  return mc;
}

std::vector<int> all_sims(const TrajectoryDataset& d) {
  std::vector<int> s(static_cast<std::size_t>(d.sims()));
  for (int i = 0; i < d.sims(); ++i) s[static_cast<std::size_t>(i)] = i;
  return s;
}

}  // namespace

// --- edge accuracy ----------------------------------------------------------------

TEST_CASE("accuracy is 100 for exact predictions and for globally flipped labels") {
  const std::vector<std::uint8_t> truth = {0, 1, 1, 0, 1, 0, 0, 1, 1, 0};
  CHECK(edge_accuracy(truth, truth, 2) == doctest::Approx(100.0));

  std::vector<std::uint8_t> flipped;
  for (const std::uint8_t t : truth) flipped.push_back(static_cast<std::uint8_t>(1 - t));
  std::vector<int> perm;
  CHECK(edge_accuracy(flipped, truth, 2, &perm) == doctest::Approx(100.0));
  CHECK(perm == std::vector<int>{1, 0});
}

TEST_CASE("one wrong pair out of ten scores 90") {
  const std::vector<std::uint8_t> truth = {0, 1, 1, 0, 1, 0, 0, 1, 1, 0};
  std::vector<std::uint8_t> pred = truth;
  pred[7] = 0;
  CHECK(edge_accuracy(pred, truth, 2) == doctest::Approx(90.0));
}

TEST_CASE("accuracy is invariant under relabeling the prediction") {
  Rng rng(4);
  std::vector<std::uint8_t> truth, pred;
  for (int i = 0; i < 200; ++i) {
    truth.push_back(static_cast<std::uint8_t>(rng.uniform() * 3));
    pred.push_back(static_cast<std::uint8_t>(rng.uniform() * 3));
  }
  const double base = edge_accuracy(pred, truth, 3);
  const int relabel[3] = {2, 0, 1};
  std::vector<std::uint8_t> shuffled;
  for (const std::uint8_t p : pred) shuffled.push_back(static_cast<std::uint8_t>(relabel[p]));
  CHECK(edge_accuracy(shuffled, truth, 3) == doctest::Approx(base));
}

TEST_CASE("accuracy rejects mismatched or out-of-range labels") {
  CHECK_THROWS_AS(edge_accuracy({0, 1}, {0}, 2), ContractError);
  CHECK_THROWS_AS(edge_accuracy({}, {}, 2), ContractError);
  CHECK_THROWS_AS(edge_accuracy({0, 2}, {0, 1}, 2), ContractError);
}

TEST_CASE("true pair labels are the upper triangle in lexicographic order") {
  TrajectoryDataset d = manual_dataset(2, 3, 5, 11);
  d.graphs[0].set_pair(0, 1, 1);
  d.graphs[0].set_pair(0, 2, 0);
  d.graphs[0].set_pair(1, 2, 1);
  const std::vector<std::uint8_t> labels = true_pair_labels(d, {0});
  CHECK(labels == std::vector<std::uint8_t>{1, 0, 1});
}

// --- forecasting ----------------------------------------------------------------

TEST_CASE("identity decoder on a frozen system forecasts perfectly") {
  const TrajectoryDataset d = manual_dataset(4, 3, 20, 7, /*frozen=*/true);
  Model model(small_model_config(3, 10), 1);
  for (auto& e : model.params.entries) {
    if (e.name.rfind("dec_", 0) == 0) {
      for (float& v : e.value.data) v = 0.0f;
    }
  }
  CHECK(forecast_mse(model, d, all_sims(d), 5) == doctest::Approx(0.0));
  CHECK(baseline_static_mse(d, all_sims(d), 10, 5) == doctest::Approx(0.0));
}

TEST_CASE("oscillator forecasts come back in feature units") {
  // The oscillator kind selects a non-identity rescale at the model boundary.
  // With a zeroed decoder the rollout is the identity in model units, so on a
  // frozen system the predictions must return to feature units: the error is
  // float rounding from the rescale round-trip, not a scale mismatch (which
  // would show up as ~O(1) MSE against the 1..10-range channels).
  TrajectoryDataset d;
  d.meta.system.kind = SystemConfig::Kind::Kuramoto;
  d.meta.system.n_agents = 3;
  d.meta.system.frames = 20;
  d.meta.sims = 2;
  d.meta.seed = 5;
  Rng rng(5);
  for (int s = 0; s < 2; ++s) {
    d.graphs.push_back(sample_er_graph(3, {0.5, 0.5}, {0.0, 1.0}, rng));
  }
  d.features = Tensor(Shape{2, 3, 20, 3});
  for (int s = 0; s < 2; ++s) {
    for (int i = 0; i < 3; ++i) {
      for (int c = 0; c < 3; ++c) {
        const float v = static_cast<float>(rng.uniform(1.0, 10.0));
        for (int t = 0; t < 20; ++t) {
          d.features.data[static_cast<std::size_t>(((s * 3 + i) * 20 + t) * 3 + c)] = v;
        }
      }
    }
  }

  ModelConfig mc = small_model_config(3, 10);
  mc.feature_dim = 3;
  Model model(mc, 1);
  for (auto& e : model.params.entries) {
    if (e.name.rfind("dec_", 0) == 0) {
      for (float& v : e.value.data) v = 0.0f;
    }
  }
  CHECK(forecast_mse(model, d, all_sims(d), 5) < 1e-10);
  CHECK(baseline_static_mse(d, all_sims(d), 10, 5) == doctest::Approx(0.0));
}

TEST_CASE("static baseline matches an independent recomputation to 1e-12") {
  const TrajectoryDataset d = manual_dataset(3, 4, 25, 13);
  const int window = 10, horizon = 6;
  const double got = baseline_static_mse(d, all_sims(d), window, horizon);

  double sq = 0.0;
  long count = 0;
  for (int s = 0; s < d.sims(); ++s) {
    for (int i = 0; i < 4; ++i) {
      for (int t = window; t < window + horizon; ++t) {
        for (int c = 0; c < 4; ++c) {
          const auto at = [&](int frame) {
            return static_cast<double>(
                d.features.data[static_cast<std::size_t>(((s * 4 + i) * 25 + frame) * 4 + c)]);
          };
          const double diff = at(window - 1) - at(t);
          sq += diff * diff;
          ++count;
        }
      }
    }
  }
  CHECK(std::fabs(got - sq / static_cast<double>(count)) < 1e-12);
}

TEST_CASE("static baseline grows with horizon for a drifting particle") {
  // Two agents moving in straight lines: the last observed frame falls
  // further behind the truth as the horizon stretches.
  TrajectoryDataset d;
  d.meta.system.n_agents = 2;
  d.meta.system.frames = 30;
  d.meta.sims = 1;
  d.meta.seed = 0;
  d.graphs.emplace_back(2, std::vector<double>{0.0, 1.0});
  d.features = Tensor(Shape{1, 2, 30, 4});
  for (int i = 0; i < 2; ++i) {
    const double vx = i == 0 ? 0.3 : -0.25, vy = i == 0 ? -0.4 : 0.1;
    for (int t = 0; t < 30; ++t) {
      const std::size_t base = static_cast<std::size_t>((i * 30 + t) * 4);
      d.features.data[base + 0] = static_cast<float>(vx * 0.1 * t);
      d.features.data[base + 1] = static_cast<float>(vy * 0.1 * t);
      d.features.data[base + 2] = static_cast<float>(vx);
      d.features.data[base + 3] = static_cast<float>(vy);
    }
  }
  const double m1 = baseline_static_mse(d, {0}, 10, 1);
  const double m5 = baseline_static_mse(d, {0}, 10, 5);
  const double m10 = baseline_static_mse(d, {0}, 10, 10);
  CHECK(m1 > 0.0);
  CHECK(m1 < m5);
  CHECK(m5 < m10);
}

TEST_CASE("forecast error does not shrink when the horizon doubles") {
  const TrajectoryDataset d = manual_dataset(6, 4, 31, 17);
  const Model model(small_model_config(4, 10), 23);  // untrained
  const double mse10 = forecast_mse(model, d, all_sims(d), 10);
  const double mse20 = forecast_mse(model, d, all_sims(d), 20);
  CHECK(mse10 > 0.0);
  CHECK(mse20 >= mse10);
}

TEST_CASE("forecast refuses horizons past the trajectory end") {
  const TrajectoryDataset d = manual_dataset(2, 3, 15, 3);
  const Model model(small_model_config(3, 10), 1);
  CHECK_THROWS_AS(forecast_mse(model, d, all_sims(d), 6), ContractError);
  CHECK_THROWS_AS(baseline_static_mse(d, all_sims(d), 10, 6), ContractError);
}

// --- reports ----------------------------------------------------------------

TEST_CASE("evaluate produces a structurally sound, reproducible report") {
  const TrajectoryDataset d = manual_dataset(150, 3, 31, 29);
  const Model model(small_model_config(3, 10), 31);

  const EvalReport r = evaluate(model, d, 42, {10, 20});
  CHECK(r.task_id == 42);
  CHECK(r.accuracy_batches.size() == 2);  // 100 + 50 sims
  CHECK(r.accuracy_mean >= 0.0);
  CHECK(r.accuracy_mean <= 100.0);
  CHECK(r.accuracy_std >= 0.0);
  REQUIRE(r.horizons == std::vector<int>{10, 20});
  CHECK(r.mse.size() == 2);
  CHECK(r.baseline_mse.size() == 2);
  CHECK(r.mse[0] >= 0.0);
  REQUIRE(r.predicted_adjacency.size() == 150u * 3u * 3u);
  for (int s = 0; s < 150; ++s) {
    const std::uint8_t* adj = r.predicted_adjacency.data() + s * 9;
    for (int i = 0; i < 3; ++i) {
      CHECK(adj[i * 3 + i] == 0);
      for (int j = 0; j < 3; ++j) CHECK(adj[i * 3 + j] == adj[j * 3 + i]);
    }
  }

  const EvalReport again = evaluate(model, d, 42, {10, 20});
  CHECK(again.accuracy_mean == r.accuracy_mean);
  CHECK(again.mse == r.mse);
  CHECK(again.fingerprint == r.fingerprint);
}

TEST_CASE("report JSON round-trips") {
  const TrajectoryDataset d = manual_dataset(20, 3, 31, 37);
  const Model model(small_model_config(3, 10), 41);
  const EvalReport r = evaluate(model, d, 7, {10});

  const std::string path = (fs::temp_directory_path() / "nri_report.json").string();
  write_report_json(r, path);
  const EvalReport back = read_report_json(path);

  CHECK(back.task_id == r.task_id);
  CHECK(back.accuracy_mean == doctest::Approx(r.accuracy_mean).epsilon(1e-12));
  CHECK(back.accuracy_std == doctest::Approx(r.accuracy_std).epsilon(1e-12));
  CHECK(back.accuracy_batches.size() == r.accuracy_batches.size());
  CHECK(back.horizons == r.horizons);
  CHECK(back.mse.size() == r.mse.size());
  CHECK(back.mse[0] == doctest::Approx(r.mse[0]).epsilon(1e-12));
  CHECK(back.fingerprint == r.fingerprint);
  CHECK(back.predicted_adjacency == r.predicted_adjacency);
  fs::remove(path);

  CHECK_THROWS_AS(read_report_json("/nonexistent/report.json"), FormatError);
}

TEST_CASE("malformed report files raise named parse errors") {
  const std::string path = (fs::temp_directory_path() / "nri_report_bad.json").string();
  std::ofstream f(path);
  f << "{\"task_id\": 1}";  // missing every other field
  f.close();
  CHECK_THROWS_AS(read_report_json(path), FormatError);

  std::ofstream g(path, std::ios::trunc);
  g << "not json at all";
  g.close();
  CHECK_THROWS_AS(read_report_json(path), FormatError);
  fs::remove(path);
}

TEST_CASE("config fingerprints are stable and configuration-sensitive") {
  const TrajectoryDataset d = manual_dataset(5, 3, 31, 43);
  const ModelConfig mc = small_model_config(3, 10);

  const std::string a = config_fingerprint(mc, d.meta);
  const std::string b = config_fingerprint(mc, d.meta);
  CHECK(a == b);
  CHECK(a.size() == 16);

  ModelConfig other = mc;
  other.hidden = 32;
  CHECK(config_fingerprint(other, d.meta) != a);

  TrajectoryDataset moved = manual_dataset(5, 3, 31, 44);
  CHECK(config_fingerprint(mc, moved.meta) != a);
}

TEST_CASE("adjacency CSV pairs predictions with ground truth") {
  const TrajectoryDataset d = manual_dataset(4, 3, 31, 47);
  const Model model(small_model_config(3, 10), 53);
  const EvalReport r = evaluate(model, d, 1, {});

  const std::string path = (fs::temp_directory_path() / "nri_adj.csv").string();
  export_adjacency_csv(r, d, path);
  std::ifstream f(path);
  std::string line;
  REQUIRE(std::getline(f, line));
  CHECK(line == "sim,i,j,predicted_type,true_type");
  long rows = 0;
  while (std::getline(f, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == 4 * 3);  // sims * pairs
  fs::remove(path);
}

TEST_CASE("prediction rejects a dataset with a different agent count") {
  const TrajectoryDataset d = manual_dataset(3, 4, 31, 59);
  const Model model(small_model_config(3, 10), 61);
  CHECK_THROWS_AS(predict_pair_labels(model, d, {0}), ContractError);
}
