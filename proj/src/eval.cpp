#include "nri/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "nri/error.hpp"

namespace nri {

using nlohmann::json;

namespace {

using Binding = BindingT<float>;

// Index of directed pair (i, j) within one simulation's edge list
// (lexicographic over ordered pairs, self-loops skipped).
inline int directed_index(int n, int i, int j) { return i * (n - 1) + (j < i ? j : j - 1); }

// Encoder posteriors for a chunk of simulations, rows [chunk * E, K].
Tensor chunk_posteriors(const Model& model, const TrajectoryDataset& data,
                        const std::vector<int>& chunk) {
  Tape tape(false);
  Binding p = bind_params(tape, model.params, false);
  Tensor w = extract_windows(data.features, chunk, model.cfg.window);
  apply_feature_scale(w, data.meta.system.feature_scale());
  Var windows = tape.constant(std::move(w));
  Var logits = model.encode_logits(p, windows, make_edge_index(model.cfg.n_agents, static_cast<int>(chunk.size())));
  return detail::softmax_forward<float, false>(tape.val(logits), 1);
}

template <class F>
void for_chunks(const std::vector<int>& sims, int chunk_size, F&& fn) {
  for (std::size_t at = 0; at < sims.size(); at += static_cast<std::size_t>(chunk_size)) {
    const std::size_t end = std::min(sims.size(), at + static_cast<std::size_t>(chunk_size));
    fn(std::vector<int>(sims.begin() + static_cast<std::ptrdiff_t>(at),
                        sims.begin() + static_cast<std::ptrdiff_t>(end)));
  }
}

}  // namespace

double edge_accuracy(const std::vector<std::uint8_t>& predicted,
                     const std::vector<std::uint8_t>& truth, int edge_types,
                     std::vector<int>* matched_permutation) {
  if (predicted.size() != truth.size()) {
    throw ContractError("edge_accuracy: predicted and truth label counts differ");
  }
  if (predicted.empty()) throw ContractError("edge_accuracy: no labels");
  const int k = edge_types;
  std::vector<long> confusion(static_cast<std::size_t>(k) * static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] >= k || truth[i] >= k) {
      throw ContractError("edge_accuracy: label outside [0, " + std::to_string(k) + ")");
    }
    ++confusion[static_cast<std::size_t>(predicted[i]) * static_cast<std::size_t>(k) + truth[i]];
  }
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  long best = -1;
  std::vector<int> best_perm = perm;
  do {
    long hits = 0;
    for (int p = 0; p < k; ++p) {
      hits += confusion[static_cast<std::size_t>(p) * static_cast<std::size_t>(k) +
                        static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])];
    }
    if (hits > best) {
      best = hits;
      best_perm = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (matched_permutation) *matched_permutation = best_perm;
  return 100.0 * static_cast<double>(best) / static_cast<double>(predicted.size());
}

std::vector<std::uint8_t> true_pair_labels(const TrajectoryDataset& data,
                                           const std::vector<int>& sims) {
  const int n = data.meta.system.n_agents;
  std::vector<std::uint8_t> out;
  out.reserve(sims.size() * static_cast<std::size_t>(n * (n - 1) / 2));
  for (const int s : sims) {
    const InteractionGraph& g = data.graphs[static_cast<std::size_t>(s)];
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) out.push_back(g.type_at(i, j));
    }
  }
  return out;
}

std::vector<std::uint8_t> predict_pair_labels(const Model& model, const TrajectoryDataset& data,
                                              const std::vector<int>& sims) {
  const int n = model.cfg.n_agents;
  if (n != data.meta.system.n_agents) {
    throw ContractError("predict_pair_labels: model expects " + std::to_string(n) +
                        " agents, dataset has " + std::to_string(data.meta.system.n_agents));
  }
  const int k = model.cfg.edge_types;
  const int e = model.cfg.n_edges();
  std::vector<std::uint8_t> out;
  out.reserve(sims.size() * static_cast<std::size_t>(n * (n - 1) / 2));
  for_chunks(sims, 128, [&](const std::vector<int>& chunk) {
    const Tensor probs = chunk_posteriors(model, data, chunk);
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      const float* base = probs.data.data() + b * static_cast<std::size_t>(e) * static_cast<std::size_t>(k);
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          const float* fwd = base + static_cast<std::size_t>(directed_index(n, i, j)) * k;
          const float* rev = base + static_cast<std::size_t>(directed_index(n, j, i)) * k;
          int best = 0;
          float best_p = fwd[0] + rev[0];
          for (int t = 1; t < k; ++t) {
            if (fwd[t] + rev[t] > best_p) {
              best_p = fwd[t] + rev[t];
              best = t;
            }
          }
          out.push_back(static_cast<std::uint8_t>(best));
        }
      }
    }
  });
  return out;
}

double forecast_mse(const Model& model, const TrajectoryDataset& data,
                    const std::vector<int>& sims, int horizon) {
  const int window = model.cfg.window;
  if (window + horizon > data.meta.system.frames) {
    throw ContractError("forecast_mse: need " + std::to_string(window + horizon) +
                        " frames, dataset has " + std::to_string(data.meta.system.frames));
  }
  // The rollout runs in model units; predictions are mapped back to feature
  // units before the error is taken, so the reported MSE (and the static
  // baseline it is compared against) stays in the data's natural scale.
  const std::vector<float> scale = data.meta.system.feature_scale();
  const std::vector<float> unscale = inverted_scale(scale);
  double sq_sum = 0.0;
  long count = 0;
  for_chunks(sims, 100, [&](const std::vector<int>& chunk) {
    const int batch = static_cast<int>(chunk.size());
    const Tensor probs = chunk_posteriors(model, data, chunk);
    const Tensor z = map_onehot(probs);

    Tape tape(false);
    Binding p = bind_params(tape, model.params, false);
    const EdgeIndex edges = make_edge_index(model.cfg.n_agents, batch);
    Var zc = tape.constant(z);
    Tensor anchor = extract_frames(data.features, chunk, window - 1, 1)[0];
    apply_feature_scale(anchor, scale);
    Var cur = tape.constant(std::move(anchor));
    const std::vector<Tensor> targets = extract_frames(data.features, chunk, window, horizon);
    for (int t = 0; t < horizon; ++t) {
      cur = model.decode_step(p, cur, zc, edges);
      Tensor pred = tape.val(cur);
      apply_feature_scale(pred, unscale);
      for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const double d = static_cast<double>(pred.data[i]) - static_cast<double>(targets[static_cast<std::size_t>(t)].data[i]);
        sq_sum += d * d;
      }
      count += pred.numel();
    }
  });
  return sq_sum / static_cast<double>(count);
}

double baseline_static_mse(const TrajectoryDataset& data, const std::vector<int>& sims,
                           int window, int horizon) {
  if (window + horizon > data.meta.system.frames) {
    throw ContractError("baseline_static_mse: need " + std::to_string(window + horizon) +
                        " frames, dataset has " + std::to_string(data.meta.system.frames));
  }
  const std::vector<Tensor> anchor = extract_frames(data.features, sims, window - 1, 1);
  const std::vector<Tensor> targets = extract_frames(data.features, sims, window, horizon);
  double sq_sum = 0.0;
  long count = 0;
  for (const Tensor& tgt : targets) {
    for (std::size_t i = 0; i < tgt.data.size(); ++i) {
      const double d = static_cast<double>(anchor[0].data[i]) - static_cast<double>(tgt.data[i]);
      sq_sum += d * d;
    }
    count += tgt.numel();
  }
  return sq_sum / static_cast<double>(count);
}

std::string config_fingerprint(const ModelConfig& m, const DatasetMeta& meta) {
  const SystemConfig& sc = meta.system;
  std::string s = config_fingerprint(m) + "|system=" + sc.kind_str() +
                  ";n=" + std::to_string(sc.n_agents) + ";frames=" + std::to_string(sc.frames) +
                  ";boundary=" + sc.boundary.str() + ";fmode=" + sc.frequency_mode +
                  ";sims=" + std::to_string(meta.sims) + ";seed=" + std::to_string(meta.seed);
  for (const double v : sc.type_values) s += ";tv=" + std::to_string(v);
  for (const double v : sc.type_probs) s += ";tp=" + std::to_string(v);
  std::uint64_t h = 1469598103934665603ull;
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string config_fingerprint(const ModelConfig& m) {
  std::string s = "n_agents=" + std::to_string(m.n_agents) + ";d=" + std::to_string(m.feature_dim) +
                  ";window=" + std::to_string(m.window) + ";k=" + std::to_string(m.edge_types) +
                  ";hidden=" + std::to_string(m.hidden) + ";temp=" + std::to_string(m.temperature) +
                  ";var=" + std::to_string(m.recon_variance) + ";m=" + std::to_string(m.pred_steps);
  return s;
}

EvalReport evaluate(const Model& model, const TrajectoryDataset& data, int task_id,
                    const std::vector<int>& horizons) {
  std::vector<int> sims(static_cast<std::size_t>(data.sims()));
  std::iota(sims.begin(), sims.end(), 0);

  EvalReport r;
  r.task_id = task_id;
  r.horizons = horizons;
  r.fingerprint = config_fingerprint(model.cfg, data.meta);

  const std::vector<std::uint8_t> predicted = predict_pair_labels(model, data, sims);
  const std::vector<std::uint8_t> truth = true_pair_labels(data, sims);
  std::vector<int> perm;
  edge_accuracy(predicted, truth, model.cfg.edge_types, &perm);

  // One label permutation is chosen on the full test set, then held fixed for
  // the per-batch spread and the exported adjacency.
  std::vector<std::uint8_t> matched(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    matched[i] = static_cast<std::uint8_t>(perm[predicted[i]]);
  }
  const int n = model.cfg.n_agents;
  const std::size_t pairs_per_sim = static_cast<std::size_t>(n * (n - 1) / 2);
  const int batch_size = 100;
  for (int b0 = 0; b0 < data.sims(); b0 += batch_size) {
    const int b1 = std::min(data.sims(), b0 + batch_size);
    long hits = 0;
    const std::size_t lo = static_cast<std::size_t>(b0) * pairs_per_sim;
    const std::size_t hi = static_cast<std::size_t>(b1) * pairs_per_sim;
    for (std::size_t i = lo; i < hi; ++i) hits += matched[i] == truth[i];
    r.accuracy_batches.push_back(100.0 * static_cast<double>(hits) / static_cast<double>(hi - lo));
  }
  double mean = 0.0;
  for (const double a : r.accuracy_batches) mean += a;
  mean /= static_cast<double>(r.accuracy_batches.size());
  double var = 0.0;
  for (const double a : r.accuracy_batches) var += (a - mean) * (a - mean);
  r.accuracy_mean = mean;
  r.accuracy_std = std::sqrt(var / static_cast<double>(r.accuracy_batches.size()));

  // Matched labels as symmetric adjacency matrices for export.
  r.predicted_adjacency.assign(static_cast<std::size_t>(data.sims()) * static_cast<std::size_t>(n) *
                                   static_cast<std::size_t>(n),
                               0);
  std::size_t at = 0;
  for (int s = 0; s < data.sims(); ++s) {
    std::uint8_t* adj = r.predicted_adjacency.data() +
                        static_cast<std::size_t>(s) * static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        adj[i * n + j] = matched[at];
        adj[j * n + i] = matched[at];
        ++at;
      }
    }
  }

  for (const int h : horizons) {
    r.mse.push_back(forecast_mse(model, data, sims, h));
    r.baseline_mse.push_back(baseline_static_mse(data, sims, model.cfg.window, h));
  }
  return r;
}

void write_report_json(const EvalReport& r, const std::string& path) {
  json j = {
      {"task_id", r.task_id},
      {"accuracy_mean", r.accuracy_mean},
      {"accuracy_std", r.accuracy_std},
      {"accuracy_batches", r.accuracy_batches},
      {"horizons", r.horizons},
      {"mse", r.mse},
      {"baseline_mse", r.baseline_mse},
      {"fingerprint", r.fingerprint},
      {"predicted_adjacency", r.predicted_adjacency},
  };
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("write_report_json: cannot open '" + path + "'");
  f << j.dump(2) << "\n";
}

EvalReport read_report_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open report '" + path + "'", 0);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw FormatError("report '" + path + "' is not valid JSON: " + e.what(), 0);
  }
  EvalReport r;
  try {
    r.task_id = j.at("task_id").get<int>();
    r.accuracy_mean = j.at("accuracy_mean").get<double>();
    r.accuracy_std = j.at("accuracy_std").get<double>();
    r.accuracy_batches = j.at("accuracy_batches").get<std::vector<double>>();
    r.horizons = j.at("horizons").get<std::vector<int>>();
    r.mse = j.at("mse").get<std::vector<double>>();
    r.baseline_mse = j.at("baseline_mse").get<std::vector<double>>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    r.predicted_adjacency = j.at("predicted_adjacency").get<std::vector<std::uint8_t>>();
  } catch (const json::exception& e) {
    throw FormatError("report '" + path + "' missing field: " + e.what(), 0);
  }
  return r;
}

void export_adjacency_csv(const EvalReport& r, const TrajectoryDataset& data,
                          const std::string& path) {
  const int n = data.meta.system.n_agents;
  if (r.predicted_adjacency.size() !=
      static_cast<std::size_t>(data.sims()) * static_cast<std::size_t>(n) * static_cast<std::size_t>(n)) {
    throw ContractError("export_adjacency_csv: report does not match dataset");
  }
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("export_adjacency_csv: cannot open '" + path + "'");
  f << "sim,i,j,predicted_type,true_type\n";
  for (int s = 0; s < data.sims(); ++s) {
    const std::uint8_t* adj = r.predicted_adjacency.data() +
                              static_cast<std::size_t>(s) * static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        f << s << ',' << i << ',' << j << ',' << int(adj[i * n + j]) << ','
          << int(data.graphs[static_cast<std::size_t>(s)].type_at(i, j)) << "\n";
      }
    }
  }
}

}  // namespace nri
