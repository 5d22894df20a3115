#include "nri/train.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "nri/adam.hpp"
#include "nri/error.hpp"
#include "nri/eval.hpp"

namespace nri {

namespace {

// Substream tags so shuffling and Gumbel noise never share a stream.
constexpr std::uint64_t kShuffleTag = 0x7368666cull;  // "shfl"
constexpr std::uint64_t kGumbelTag = 0x676d626cull;   // "gmbl"

int val_count(int sims, double val_fraction) {
  const int n_val = std::max(1, static_cast<int>(static_cast<double>(sims) * val_fraction));
  if (n_val >= sims) {
    throw ContractError("dataset of " + std::to_string(sims) +
                        " sims leaves no training split at val_fraction " +
                        std::to_string(val_fraction));
  }
  return n_val;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw ContractError("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ContractError("TrainConfig: learning_rate must be > 0");
  if (!(lr_decay > 0.0) || lr_decay > 1.0) {
    throw ContractError("TrainConfig: lr_decay must be in (0, 1]");
  }
  if (lr_decay_every < 1) throw ContractError("TrainConfig: lr_decay_every must be >= 1");
  if (checkpoint_every < 1) throw ContractError("TrainConfig: checkpoint_every must be >= 1");
  if (!(grad_clip > 0.0)) throw ContractError("TrainConfig: grad_clip must be > 0");
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0)) {
    throw ContractError("TrainConfig: val_fraction must be in (0, 1)");
  }
}

std::vector<int> train_split(int sims, double val_fraction) {
  std::vector<int> out(static_cast<std::size_t>(sims - val_count(sims, val_fraction)));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::vector<int> val_split(int sims, double val_fraction) {
  const int n_val = val_count(sims, val_fraction);
  std::vector<int> out(static_cast<std::size_t>(n_val));
  std::iota(out.begin(), out.end(), sims - n_val);
  return out;
}

TrainResult train_model(const ModelConfig& model_cfg, const TrainConfig& cfg,
                        const TrajectoryDataset& data, const std::string& out_dir,
                        const Checkpoint* resume, std::ostream* log) {
  cfg.validate();
  model_cfg.validate();
  const SystemConfig& sys = data.meta.system;
  if (sys.n_agents != model_cfg.n_agents || sys.feature_dim() != model_cfg.feature_dim) {
    throw ContractError("train: dataset is [n=" + std::to_string(sys.n_agents) + ", D=" +
                        std::to_string(sys.feature_dim()) + "] but model expects [n=" +
                        std::to_string(model_cfg.n_agents) + ", D=" +
                        std::to_string(model_cfg.feature_dim) + "]");
  }
  if (sys.frames < model_cfg.window) {
    throw ContractError("train: dataset frames " + std::to_string(sys.frames) +
                        " shorter than encoder window " + std::to_string(model_cfg.window));
  }

  Model model(model_cfg, cfg.seed);
  AdamState opt(model.params);
  int start_epoch = 0;
  double best_val = -1.0;

  TrainResult result;
  if (resume) {
    if (!(resume->model == model_cfg)) {
      throw ContractError("train: checkpoint was trained with a different model config");
    }
    model.params = resume->params;
    opt.m = resume->opt_m;
    opt.v = resume->opt_v;
    opt.step = resume->opt_step;
    start_epoch = resume->epoch;
    best_val = resume->val_accuracy;
    result.best = *resume;
    result.last = *resume;
  }
  if (start_epoch >= cfg.epochs) {
    throw ContractError("train: nothing to do, checkpoint already has " +
                        std::to_string(start_epoch) + " of " + std::to_string(cfg.epochs) +
                        " epochs");
  }

  const std::vector<int> train_sims = train_split(data.sims(), cfg.val_fraction);
  const std::vector<int> valid_sims = val_split(data.sims(), cfg.val_fraction);
  const std::vector<std::uint8_t> valid_truth = true_pair_labels(data, valid_sims);
  // Features cross into model units here; the validation pass applies the
  // same rescale inside predict_pair_labels.
  const std::vector<float> feature_scale = sys.feature_scale();

  const bool writing = !out_dir.empty();
  std::string hist_path;
  if (writing) {
    std::filesystem::create_directories(out_dir);
    hist_path = out_dir + "/history.csv";
    if (!(resume && std::filesystem::exists(hist_path))) {
      append_history_csv(hist_path, {}, true);
    }
  }

  for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr =
        cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.lr_decay_every));

    std::vector<int> order = train_sims;
    Rng shuffle_rng(derive_seed(cfg.seed, kShuffleTag, static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order.begin(), order.end());

    double loss_sum = 0.0, recon_sum = 0.0, kl_sum = 0.0;
    int batch_index = 0;
    for (std::size_t at = 0; at < order.size(); at += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), at + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<int> chunk(order.begin() + static_cast<std::ptrdiff_t>(at),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      const int batch = static_cast<int>(chunk.size());

      Rng gumbel_rng(derive_seed(cfg.seed, kGumbelTag, static_cast<std::uint64_t>(epoch),
                                 static_cast<std::uint64_t>(batch_index)));
      // A diverged run can surface either as a non-finite loss value or as a
      // NaN rejection deeper in the forward pass; both get coordinates.
      try {
        Tape tape;
        BindingT<float> p = bind_params(tape, model.params, true);
        Tensor windows = extract_windows(data.features, chunk, model_cfg.window);
        std::vector<Tensor> frames = extract_frames(data.features, chunk, 0, model_cfg.window);
        apply_feature_scale(windows, feature_scale);
        for (Tensor& f : frames) apply_feature_scale(f, feature_scale);
        ElboTerms<float> terms = elbo_loss_batch(model, tape, p, windows, frames, batch, gumbel_rng);

        const double loss = static_cast<double>(tape.val(terms.loss).data[0]);
        if (!std::isfinite(loss)) throw Error("non-finite loss");
        tape.backward(terms.loss);
        std::vector<Tensor> grads;
        grads.reserve(p.size());
        for (const Var v : p) grads.push_back(tape.grad(v));
        clip_grad_norm(grads, cfg.grad_clip);
        adam_step(model.params, grads, opt, lr);

        loss_sum += loss * batch;
        recon_sum += terms.recon;
        kl_sum += terms.kl;
      } catch (const Error& e) {
        throw Error("training aborted at epoch " + std::to_string(epoch + 1) + ", batch " +
                    std::to_string(batch_index) + ": " + e.what());
      }
      ++batch_index;
    }

    const std::vector<std::uint8_t> valid_pred = predict_pair_labels(model, data, valid_sims);
    const double val_acc = edge_accuracy(valid_pred, valid_truth, model_cfg.edge_types);
    const double n_train = static_cast<double>(train_sims.size());
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EpochRecord rec{epoch + 1, loss_sum / n_train, recon_sum / n_train, kl_sum / n_train,
                    val_acc,   seconds};
    result.history.push_back(rec);
    if (log) {
      *log << "epoch " << rec.epoch << "/" << cfg.epochs << "  loss " << rec.loss << "  recon "
           << rec.recon << "  kl " << rec.kl << "  val_acc " << rec.val_acc << "%  lr " << lr
           << "  " << rec.seconds << "s\n";
    }

    Checkpoint cur{model_cfg, cfg.seed,    epoch + 1, opt.step,
                   val_acc,   model.params, opt.m,     opt.v};
    result.last = cur;
    if (val_acc > best_val) {
      best_val = val_acc;
      result.best = cur;
      if (writing) write_checkpoint(cur, out_dir + "/model.ckpt");
    }
    if (writing) {
      if ((epoch + 1) % cfg.checkpoint_every == 0 || epoch + 1 == cfg.epochs) {
        write_checkpoint(cur, out_dir + "/last.ckpt");
      }
      append_history_csv(hist_path, {rec}, false);
    }
  }

  return result;
}

void append_history_csv(const std::string& path, const std::vector<EpochRecord>& records,
                        bool fresh_file) {
  std::ofstream f(path, fresh_file ? std::ios::trunc : std::ios::app);
  if (!f) throw Error("append_history_csv: cannot open '" + path + "'");
  if (fresh_file) f << "epoch,loss,recon,kl,val_acc,seconds\n";
  f.precision(10);
  for (const EpochRecord& r : records) {
    f << r.epoch << ',' << r.loss << ',' << r.recon << ',' << r.kl << ',' << r.val_acc << ','
      << r.seconds << "\n";
  }
}

std::vector<EpochRecord> read_history_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open history '" + path + "'", 0);
  std::string line;
  if (!std::getline(f, line) || line != "epoch,loss,recon,kl,val_acc,seconds") {
    throw FormatError("history '" + path + "' has an unexpected header", 0);
  }
  std::vector<EpochRecord> out;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    EpochRecord r;
    char c = 0;
    if (!(ls >> r.epoch >> c >> r.loss >> c >> r.recon >> c >> r.kl >> c >> r.val_acc >> c >>
          r.seconds)) {
      throw FormatError("history '" + path + "' has a malformed row: " + line, 0);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace nri
