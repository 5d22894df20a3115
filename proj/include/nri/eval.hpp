#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nri/dataset.hpp"
#include "nri/model.hpp"

namespace nri {

// Latent edge types carry no canonical order, so accuracy is maximized over
// global permutations of the K predicted labels. Labels are per unordered
// pair, (i < j) lexicographic within each simulation, concatenated across
// simulations.
double edge_accuracy(const std::vector<std::uint8_t>& predicted,
                     const std::vector<std::uint8_t>& truth, int edge_types,
                     std::vector<int>* matched_permutation = nullptr);

// Ground-truth unordered-pair labels for the given simulations.
std::vector<std::uint8_t> true_pair_labels(const TrajectoryDataset& data,
                                           const std::vector<int>& sims);

// Encoder predictions as unordered-pair labels: the two directed posteriors
// of a pair are summed before the argmax.
std::vector<std::uint8_t> predict_pair_labels(const Model& model, const TrajectoryDataset& data,
                                              const std::vector<int>& sims);

// Free-running forecast error: hard (most probable) edges from the encoder,
// rolled out `horizon` steps past the encoder window, mean squared feature
// error over sims x agents x steps x dims.
double forecast_mse(const Model& model, const TrajectoryDataset& data,
                    const std::vector<int>& sims, int horizon);

// Control: predict the last observed frame for every future step.
double baseline_static_mse(const TrajectoryDataset& data, const std::vector<int>& sims,
                           int window, int horizon);

struct EvalReport {
  int task_id = 0;
  double accuracy_mean = 0.0;  // percent, across batches of up to 100 sims
  double accuracy_std = 0.0;
  std::vector<double> accuracy_batches;
  std::vector<int> horizons;
  std::vector<double> mse;           // parallel to horizons
  std::vector<double> baseline_mse;  // parallel to horizons
  std::vector<std::uint8_t> predicted_adjacency;  // sims * n * n, matched labels
  std::string fingerprint;  // hash of model config + dataset metadata
};

// Full evaluation pass over the given test set.
EvalReport evaluate(const Model& model, const TrajectoryDataset& data, int task_id,
                    const std::vector<int>& horizons);

// FNV-1a hash of the model config and dataset metadata, hex-encoded; reports
// carry it so a report can be traced to exactly one configuration.
std::string config_fingerprint(const ModelConfig& model, const DatasetMeta& meta);
std::string config_fingerprint(const ModelConfig& model);

void write_report_json(const EvalReport& r, const std::string& path);
EvalReport read_report_json(const std::string& path);

// CSV with one row per (sim, i, j) pair: predicted and true link types.
void export_adjacency_csv(const EvalReport& r, const TrajectoryDataset& data,
                          const std::string& path);

}  // namespace nri
