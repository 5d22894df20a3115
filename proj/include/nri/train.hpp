#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "nri/checkpoint.hpp"
#include "nri/dataset.hpp"
#include "nri/model.hpp"

namespace nri {

// Desk-scale defaults; the reference protocol is scaled down to a laptop
// budget (1,000 training simulations, 100 epochs).
struct TrainConfig {
  int epochs = 100;
  int batch_size = 32;
  double learning_rate = 5e-4;
  double lr_decay = 0.5;  // learning rate multiplier applied every interval
  int lr_decay_every = 50;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;  // epochs between last.ckpt refreshes
  double grad_clip = 5.0;     // global L2 gradient norm ceiling
  double val_fraction = 0.1;  // trailing sims held out for validation

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;     // 1-based; continues across resumed runs
  double loss = 0.0;  // mean per-simulation negated ELBO
  double recon = 0.0;
  double kl = 0.0;
  double val_acc = 0.0;  // permutation-matched edge accuracy, percent
  double seconds = 0.0;
};

struct TrainResult {
  Checkpoint best;  // weights from the best-validation epoch
  Checkpoint last;  // weights after the final epoch
  std::vector<EpochRecord> history;  // epochs run by this invocation
};

// Deterministic 90/10 split by simulation index: the leading block trains,
// the trailing block validates.
std::vector<int> train_split(int sims, double val_fraction);
std::vector<int> val_split(int sims, double val_fraction);

// Optimizes -ELBO. Batch shuffling and Gumbel noise draw from seeds derived
// from (seed, epoch, batch), so a resumed run replays exactly the epochs an
// uninterrupted run would have produced.
//
// When out_dir is nonempty, writes model.ckpt (best validation), last.ckpt
// (every checkpoint_every epochs and at the end), and history.csv. Pass the
// checkpoint to resume from, or nullptr to start fresh.
TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& cfg,
                        const TrajectoryDataset& data, const std::string& out_dir = "",
                        const Checkpoint* resume = nullptr, std::ostream* log = nullptr);

// History CSV: header epoch,loss,recon,kl,val_acc,seconds.
void append_history_csv(const std::string& path, const std::vector<EpochRecord>& records,
                        bool fresh_file);
std::vector<EpochRecord> read_history_csv(const std::string& path);

}  // namespace nri
