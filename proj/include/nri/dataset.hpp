#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nri/boundary.hpp"
#include "nri/graph.hpp"
#include "nri/kuramoto.hpp"
#include "nri/tensor.hpp"

namespace nri {

// What to simulate. dt/downsample/feature_dim are fixed per system kind:
// springs integrate at dt=1e-3 keeping every 100th step, oscillators sit on a
// 0.01 grid keeping every 10th point — both give feature spacing 0.1.
struct SystemConfig {
  enum class Kind { Springs, Kuramoto };

  Kind kind = Kind::Springs;
  int n_agents = 5;
  std::vector<double> type_probs = {0.5, 0.5};
  std::vector<double> type_values = {0.0, 1.0};
  long frames = 99;
  Boundary boundary;
  std::string frequency_mode = "actual";  // oscillators: "actual" or "estimated"

  double dt() const { return kind == Kind::Springs ? 0.001 : 0.01; }
  int downsample() const { return kind == Kind::Springs ? 100 : 10; }
  int feature_dim() const { return kind == Kind::Springs ? 4 : 3; }
  int edge_types() const { return static_cast<int>(type_probs.size()); }
  std::string kind_str() const { return kind == Kind::Springs ? "springs" : "kuramoto"; }
  // Per-channel multipliers applied to features at the model boundary (and
  // inverted before reporting predictions). The oscillator rate and frequency
  // channels run an order of magnitude above the spring coordinates
  // (ω ∈ [1,10)); fed in raw they inflate every encoder activation until the
  // logits saturate before the decoder can tell edge types apart. A fixed
  // system-determined rescale keeps all channels O(1) with no data-dependent
  // statistics, so datasets, checkpoints, and metrics stay in natural units.
  std::vector<float> feature_scale() const {
    if (kind == Kind::Springs) return {1.0f, 1.0f, 1.0f, 1.0f};
    return {0.1f, 1.0f, 0.1f};
  }
  void validate() const;

  bool operator==(const SystemConfig&) const = default;
};

struct DatasetMeta {
  SystemConfig system;
  int sims = 0;
  std::uint64_t seed = 0;
};

struct TrajectoryDataset {
  DatasetMeta meta;
  std::vector<InteractionGraph> graphs;  // one per simulation
  Tensor features;                       // [sims, n, frames, feature_dim]

  int sims() const { return meta.sims; }
  // Copy of one simulation's features, shape [n, frames, feature_dim].
  Tensor sim_features(int sim) const;
};

// Oscillator feature rows (phase_velocity, sin phase, frequency channel);
// the frequency channel carries the true intrinsic frequency
// (frequency_mode "actual") or its estimate from the mean phase velocity
// ("estimated"), replicated across all frames.
Tensor build_features(const KuramotoSeries& raw, const std::vector<double>& omega,
                      const std::string& frequency_mode);

// Simulates `sims` independent systems. Per-simulation RNG streams are
// derived from (seed, sim index), so results are identical no matter how the
// loop is scheduled.
TrajectoryDataset generate_dataset(const SystemConfig& config, int sims, std::uint64_t seed);

// Binary dataset file: magic "CDS1", u32 version, length-prefixed JSON
// metadata, link-type matrices (u8), features (float32), little-endian.
// Round-trips bit-exactly.
void write_dataset(const TrajectoryDataset& d, const std::string& path);
TrajectoryDataset read_dataset(const std::string& path);

// One CSV per simulation: sim, agent, frame, then one column per feature.
void export_trajectories_csv(const TrajectoryDataset& d, const std::string& path);

}  // namespace nri
