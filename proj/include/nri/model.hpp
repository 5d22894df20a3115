#pragma once

#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "nri/mlp.hpp"
#include "nri/rng.hpp"
#include "nri/tape.hpp"
#include "nri/tensor.hpp"

namespace nri {

struct ModelConfig {
  int n_agents = 5;
  int feature_dim = 4;
  int window = 49;    // frames the encoder sees
  int edge_types = 2;
  int hidden = 64;
  double temperature = 0.5;      // Gumbel-softmax relaxation temperature
  double recon_variance = 5e-5;  // decoder output variance in the likelihood
  int pred_steps = 10;           // free-run segment length between re-anchors

  int n_edges() const { return n_agents * (n_agents - 1); }

  void validate() const {
    if (n_agents < 2) throw ContractError("ModelConfig: need at least two agents");
    if (feature_dim < 1) throw ContractError("ModelConfig: feature_dim must be positive");
    if (window < 2) throw ContractError("ModelConfig: window must be at least 2");
    if (edge_types < 2) throw ContractError("ModelConfig: need at least two edge types");
    if (hidden < 1) throw ContractError("ModelConfig: hidden width must be positive");
    if (temperature <= 0) throw ContractError("ModelConfig: temperature must be positive");
    if (recon_variance <= 0) throw ContractError("ModelConfig: recon_variance must be positive");
    if (pred_steps < 1) throw ContractError("ModelConfig: pred_steps must be at least 1");
  }

  bool operator==(const ModelConfig&) const = default;
};

// Directed pairs (i, j), i != j, in lexicographic order, replicated per
// simulation in a batch with node rows offset by sim * n.
struct EdgeIndex {
  IndexVec senders;
  IndexVec receivers;
};

inline EdgeIndex make_edge_index(int n, int batch) {
  auto s = std::make_shared<std::vector<std::int64_t>>();
  auto r = std::make_shared<std::vector<std::int64_t>>();
  s->reserve(static_cast<std::size_t>(batch) * static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1));
  r->reserve(s->capacity());
  for (int b = 0; b < batch; ++b) {
    const std::int64_t base = static_cast<std::int64_t>(b) * n;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        if (i == j) continue;
        s->push_back(base + i);
        r->push_back(base + j);
      }
    }
  }
  return {std::move(s), std::move(r)};
}

template <class S>
struct EdgePosteriorT {
  TensorT<S> logits;  // [E, K]
  TensorT<S> probs;   // softmax of logits per row
};

using EdgePosterior = EdgePosteriorT<float>;

// Relaxed categorical sample per row: softmax((logits + gumbel)/temperature).
// With hard=true the returned rows are exact one-hots (argmax of the relaxed
// sample); use the taped path during training for straight-through gradients.
template <class S>
TensorT<S> gumbel_softmax_sample(const TensorT<S>& logits, double temperature, Rng& rng, bool hard) {
  if (temperature <= 0) throw ContractError("gumbel_softmax_sample: temperature must be positive");
  TensorT<S> shifted(logits.shape);
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    shifted.data[static_cast<std::size_t>(i)] = static_cast<S>(
        (static_cast<double>(logits.data[static_cast<std::size_t>(i)]) + rng.gumbel()) / temperature);
  }
  TensorT<S> z = detail::softmax_forward<S, false>(shifted, 1);
  if (!hard) return z;
  TensorT<S> out(z.shape);
  const std::vector<int> best = argmax_rows(z);
  for (std::int64_t i = 0; i < z.shape[0]; ++i) out.at(i, best[static_cast<std::size_t>(i)]) = S(1);
  return out;
}

// One-hot rows at the most probable type per row (deterministic; used when
// evaluation needs discrete edges).
template <class S>
TensorT<S> map_onehot(const TensorT<S>& probs) {
  TensorT<S> out(probs.shape);
  const std::vector<int> best = argmax_rows(probs);
  for (std::int64_t i = 0; i < probs.shape[0]; ++i) out.at(i, best[static_cast<std::size_t>(i)]) = S(1);
  return out;
}

// Sum of squared errors over 2 * variance, constants dropped.
template <class S>
double nll_gaussian(const TensorT<S>& pred, const TensorT<S>& target, double variance) {
  if (!pred.same_shape(target)) {
    throw ContractError("nll_gaussian: shape mismatch " + shape_str(pred.shape) + " vs " +
                        shape_str(target.shape));
  }
  double sse = 0.0;
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const double d = static_cast<double>(pred.data[static_cast<std::size_t>(i)]) -
                     static_cast<double>(target.data[static_cast<std::size_t>(i)]);
    sse += d * d;
  }
  return sse / (2.0 * variance);
}

// KL from a per-row categorical to the uniform distribution over K types:
// sum of q (log q + log K), with the 0 log 0 limit handled.
template <class S>
double kl_categorical_uniform(const TensorT<S>& probs) {
  const double log_k = std::log(static_cast<double>(probs.shape[probs.rank() - 1]));
  double kl = 0.0;
  for (std::int64_t i = 0; i < probs.numel(); ++i) {
    const double q = static_cast<double>(probs.data[static_cast<std::size_t>(i)]);
    if (q > 0.0) kl += q * (std::log(q) + log_k);
  }
  return kl;
}

// ---------------------------------------------------------------------------
// Batch extraction helpers. Dataset features are [sims, n, T, D]; the model
// works on stacked node rows [B*n, ...] so every layer runs as one GEMM.
// ---------------------------------------------------------------------------

// Encoder input: each node's first `window` frames flattened to one row.
template <class S>
TensorT<S> extract_windows(const TensorT<S>& features, const std::vector<int>& sims, int window) {
  const std::int64_t n = features.shape[1], t = features.shape[2], d = features.shape[3];
  if (window > t) {
    throw ContractError("extract_windows: window " + std::to_string(window) + " exceeds " +
                        std::to_string(t) + " frames");
  }
  const std::int64_t batch = static_cast<std::int64_t>(sims.size());
  TensorT<S> out({batch * n, static_cast<std::int64_t>(window) * d});
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t i = 0; i < n; ++i) {
      const S* src = features.data.data() +
                     ((static_cast<std::int64_t>(sims[static_cast<std::size_t>(b)]) * n + i) * t) * d;
      std::memcpy(out.data.data() + (b * n + i) * window * d, src,
                  static_cast<std::size_t>(window * d) * sizeof(S));
    }
  }
  return out;
}

// Frames `from .. from+count-1` as `count` tensors of stacked node rows [B*n, D].
template <class S>
std::vector<TensorT<S>> extract_frames(const TensorT<S>& features, const std::vector<int>& sims,
                                       int from, int count) {
  const std::int64_t n = features.shape[1], t = features.shape[2], d = features.shape[3];
  if (from < 0 || from + count > t) {
    throw ContractError("extract_frames: range [" + std::to_string(from) + ", " +
                        std::to_string(from + count) + ") exceeds " + std::to_string(t) + " frames");
  }
  const std::int64_t batch = static_cast<std::int64_t>(sims.size());
  std::vector<TensorT<S>> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int f = 0; f < count; ++f) {
    TensorT<S> frame({batch * n, d});
    for (std::int64_t b = 0; b < batch; ++b) {
      for (std::int64_t i = 0; i < n; ++i) {
        const S* src =
            features.data.data() +
            ((static_cast<std::int64_t>(sims[static_cast<std::size_t>(b)]) * n + i) * t + from + f) * d;
        std::memcpy(frame.data.data() + (b * n + i) * d, src, static_cast<std::size_t>(d) * sizeof(S));
      }
    }
    out.push_back(std::move(frame));
  }
  return out;
}

// Multiply feature channels in place. Columns cycle through the channels, so
// one helper covers flattened windows [R, window*D], frames [R, D], and whole
// feature arrays [sims, n, T, D] alike. Used to move dataset features into
// model units (and, inverted, model predictions back out).
template <class S>
void apply_feature_scale(TensorT<S>& t, const std::vector<float>& scale) {
  const std::int64_t d = static_cast<std::int64_t>(scale.size());
  const std::int64_t cols = t.shape[t.rank() - 1];
  if (cols % d != 0) {
    throw ContractError("apply_feature_scale: " + std::to_string(cols) +
                        " columns not a multiple of " + std::to_string(d) + " channels");
  }
  bool identity = true;
  for (const float s : scale) identity = identity && s == 1.0f;
  if (identity) return;
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    t.data[static_cast<std::size_t>(i)] *= static_cast<S>(scale[static_cast<std::size_t>((i % cols) % d)]);
  }
}

inline std::vector<float> inverted_scale(const std::vector<float>& scale) {
  std::vector<float> inv(scale.size());
  for (std::size_t i = 0; i < scale.size(); ++i) inv[i] = 1.0f / scale[i];
  return inv;
}

// ---------------------------------------------------------------------------
// The relational inference model. A message-passing encoder produces a
// categorical posterior over K latent types for every directed pair; a
// relaxed sample of it gates K per-type edge networks inside a
// message-passing decoder that predicts per-step state increments.
// ---------------------------------------------------------------------------
template <class S>
struct ModelT {
  ModelConfig cfg;
  ParamStoreT<S> params;

  MlpT<S> embed;        // flattened window -> node embedding
  MlpT<S> enc_edge1;    // round 1 node -> edge
  MlpT<S> enc_node1;    // round 1 edge -> node, with a raw-window skip input
  MlpT<S> enc_edge2;    // round 2 node -> edge
  LinearT<S> enc_head;  // edge embedding -> K logits
  std::vector<MlpT<S>> dec_edge;  // per-type pair message networks
  MlpT<S> dec_node;     // aggregated messages -> state increment

  ModelT() = default;

  ModelT(const ModelConfig& config, std::uint64_t seed) : cfg(config) {
    cfg.validate();
    Rng rng(derive_seed(seed, 0x6d6f64656cull));  // independent init stream
    const std::int64_t h = cfg.hidden;
    const std::int64_t in = static_cast<std::int64_t>(cfg.window) * cfg.feature_dim;
    const std::int64_t d = cfg.feature_dim;
    embed = MlpT<S>(params, "embed", in, h, h, rng);
    enc_edge1 = MlpT<S>(params, "enc_edge1", 2 * h, h, h, rng);
    enc_node1 = MlpT<S>(params, "enc_node1", h + in, h, h, rng);
    enc_edge2 = MlpT<S>(params, "enc_edge2", 2 * h, h, h, rng);
    enc_head = LinearT<S>(params, "enc_head", h, cfg.edge_types, rng);
    dec_edge.reserve(static_cast<std::size_t>(cfg.edge_types));
    for (int k = 0; k < cfg.edge_types; ++k) {
      dec_edge.emplace_back(params, "dec_edge" + std::to_string(k), 2 * d, h, h, rng);
    }
    dec_node = MlpT<S>(params, "dec_node", h + d, h, d, rng);

    // Damp the two output layers so training starts near the uniform
    // posterior and the identity decoder. At full Glorot scale the
    // reconstruction term rewards confident (low-noise) edge samples before
    // the decoder can tell the types apart; the posterior saturates on an
    // arbitrary labeling, the concrete-relaxation gradient vanishes, and
    // accuracy never leaves chance. There is no normalization layer to bound
    // the logits, so the initialization has to keep the race winnable.
    for (auto& v : params.entries[enc_head.w].value.data) v *= S(0.1);
    for (auto& v : params.entries[dec_node.l3.w].value.data) v *= S(0.1);
  }

  // --- taped cores (shared by training and inference wrappers) -------------

  // windows: [B*n, window*D] -> logits [B*E, K]
  VarT<S> encode_logits(const BindingT<S>& p, VarT<S> windows, const EdgeIndex& edges) const {
    const std::int64_t rows = windows.shape()[0];
    VarT<S> h = embed(p, windows);
    VarT<S> e1 = enc_edge1(p, concat<S>({gather_rows(h, edges.senders), gather_rows(h, edges.receivers)}, 1));
    VarT<S> agg = scatter_sum_rows(e1, edges.receivers, rows);
    VarT<S> h2 = enc_node1(p, concat<S>({agg, windows}, 1));
    VarT<S> e2 = enc_edge2(p, concat<S>({gather_rows(h2, edges.senders), gather_rows(h2, edges.receivers)}, 1));
    return enc_head(p, e2);
  }

  // x: [B*n, D], z: [B*E, K] -> next state [B*n, D] (residual update)
  VarT<S> decode_step(const BindingT<S>& p, VarT<S> x, VarT<S> z, const EdgeIndex& edges) const {
    const std::int64_t rows = x.shape()[0];
    if (z.shape()[1] != cfg.edge_types) {
      throw ContractError("decode_step: edge sample has " + std::to_string(z.shape()[1]) +
                          " types, model expects " + std::to_string(cfg.edge_types));
    }
    VarT<S> pair = concat<S>({gather_rows(x, edges.senders), gather_rows(x, edges.receivers)}, 1);
    VarT<S> msg;
    for (int k = 0; k < cfg.edge_types; ++k) {
      VarT<S> m = mul(dec_edge[static_cast<std::size_t>(k)](p, pair), slice_cols(z, k, k + 1));
      msg = (k == 0) ? m : add(msg, m);
    }
    VarT<S> agg = scatter_sum_rows(msg, edges.receivers, rows);
    VarT<S> delta = dec_node(p, concat<S>({agg, x}, 1));
    return add(x, delta);
  }

  // Taped Gumbel-softmax sample of the posterior (soft, or hard with
  // straight-through gradients).
  VarT<S> sample_edges_taped(VarT<S> logits, Rng& rng, bool hard) const {
    TapeT<S>& t = *logits.tape;
    TensorT<S> noise(logits.shape());
    for (auto& v : noise.data) v = static_cast<S>(rng.gumbel());
    VarT<S> z = softmax(scale(add(logits, t.constant(std::move(noise))), static_cast<S>(1.0 / cfg.temperature)), 1);
    return hard ? straight_through_onehot(z) : z;
  }

  // Teacher-forced reconstruction of frames[1..]: the prediction re-anchors
  // on ground truth every pred_steps steps and free-runs in between.
  // frames.size() >= 2; returns predictions for frames 1..F-1.
  std::vector<VarT<S>> rollout_teacher(const BindingT<S>& p, TapeT<S>& t,
                                       const std::vector<TensorT<S>>& frames, VarT<S> z,
                                       const EdgeIndex& edges) const {
    if (frames.size() < 2) throw ContractError("rollout_teacher: need at least two frames");
    std::vector<VarT<S>> preds;
    preds.reserve(frames.size() - 1);
    VarT<S> cur = t.constant(frames[0]);
    for (std::size_t f = 0; f + 1 < frames.size(); ++f) {
      if (f > 0 && f % static_cast<std::size_t>(cfg.pred_steps) == 0) {
        cur = t.constant(frames[f]);  // re-anchor on ground truth
      }
      cur = decode_step(p, cur, z, edges);
      preds.push_back(cur);
    }
    return preds;
  }

  // --- plain inference wrappers ---------------------------------------------

  // x: one simulation's features [n, T, D] with T >= window.
  EdgePosteriorT<S> encode(const TensorT<S>& x) const {
    if (x.rank() != 3 || x.shape[0] != cfg.n_agents || x.shape[2] != cfg.feature_dim) {
      throw ContractError("encode: features " + shape_str(x.shape) + " do not match config [" +
                          std::to_string(cfg.n_agents) + " x T x " + std::to_string(cfg.feature_dim) + "]");
    }
    TensorT<S> batched(Shape{1, x.shape[0], x.shape[1], x.shape[2]}, x.data);
    TapeT<S> tape(false);
    BindingT<S> p = bind_params(tape, params, false);
    VarT<S> windows = tape.constant(extract_windows(batched, {0}, cfg.window));
    VarT<S> logits = encode_logits(p, windows, make_edge_index(cfg.n_agents, 1));
    EdgePosteriorT<S> out;
    out.logits = tape.val(logits);
    out.probs = detail::softmax_forward<S, false>(out.logits, 1);
    return out;
  }

  TensorT<S> sample_edges(const EdgePosteriorT<S>& posterior, Rng& rng, bool hard) const {
    return gumbel_softmax_sample(posterior.logits, cfg.temperature, rng, hard);
  }

  // Single-step prediction for one simulation: x_t [n, D], z [E, K].
  TensorT<S> decode_one(const TensorT<S>& x_t, const TensorT<S>& z) const {
    TapeT<S> tape(false);
    BindingT<S> p = bind_params(tape, params, false);
    VarT<S> next = decode_step(p, tape.constant(x_t), tape.constant(z), make_edge_index(cfg.n_agents, 1));
    return tape.val(next);
  }

  // Free-running rollout from a start frame; returns `steps` predictions.
  std::vector<TensorT<S>> rollout_free(const TensorT<S>& x_start, const TensorT<S>& z, int steps) const {
    TapeT<S> tape(false);
    BindingT<S> p = bind_params(tape, params, false);
    const EdgeIndex edges = make_edge_index(cfg.n_agents, 1);
    VarT<S> zc = tape.constant(z);
    VarT<S> cur = tape.constant(x_start);
    std::vector<TensorT<S>> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) {
      cur = decode_step(p, cur, zc, edges);
      out.push_back(tape.val(cur));
    }
    return out;
  }
};

using Model = ModelT<float>;

// ---------------------------------------------------------------------------
// Training objective: single-sample negated ELBO over a batch of windows,
// averaged per simulation. Reconstruction covers the encoder window's
// transitions with teacher forcing every pred_steps.
// ---------------------------------------------------------------------------
template <class S>
struct ElboTerms {
  VarT<S> loss;   // (recon + kl) / batch, on the tape
  double recon;   // summed reconstruction term, plain value
  double kl;      // summed KL term, plain value
};

template <class S>
ElboTerms<S> elbo_loss_batch(const ModelT<S>& model, TapeT<S>& tape, const BindingT<S>& p,
                             const TensorT<S>& windows, const std::vector<TensorT<S>>& frames,
                             int batch, Rng& rng) {
  const ModelConfig& cfg = model.cfg;
  const EdgeIndex edges = make_edge_index(cfg.n_agents, batch);
  VarT<S> logits = model.encode_logits(p, tape.leaf(windows, false), edges);
  VarT<S> z = model.sample_edges_taped(logits, rng, false);

  const std::vector<VarT<S>> preds = model.rollout_teacher(p, tape, frames, z, edges);
  VarT<S> sse;
  for (std::size_t f = 0; f < preds.size(); ++f) {
    VarT<S> e = sum_all(square(sub(preds[f], tape.constant(frames[f + 1]))));
    sse = (f == 0) ? e : add(sse, e);
  }
  VarT<S> recon = scale(sse, static_cast<S>(1.0 / (2.0 * cfg.recon_variance)));

  VarT<S> q = softmax(logits, 1);
  VarT<S> log_q = log_softmax(logits, 1);
  VarT<S> log_k = tape.constant(TensorT<S>::full({1, 1}, static_cast<S>(std::log(double(cfg.edge_types)))));
  VarT<S> kl = sum_all(mul(q, add(log_q, log_k)));

  ElboTerms<S> out{scale(add(recon, kl), static_cast<S>(1.0 / batch)),
                   static_cast<double>(tape.val(recon).data[0]),
                   static_cast<double>(tape.val(kl).data[0])};
  return out;
}

// Spec'd single-simulation objective: features [n, T, D] with T >= window.
template <class S>
double elbo_loss(const ModelT<S>& model, const TensorT<S>& x, Rng& rng) {
  TapeT<S> tape(false);
  BindingT<S> p = bind_params(tape, model.params, false);
  TensorT<S> batched(Shape{1, x.shape[0], x.shape[1], x.shape[2]}, x.data);
  TensorT<S> windows = extract_windows(batched, {0}, model.cfg.window);
  std::vector<TensorT<S>> frames = extract_frames(batched, {0}, 0, model.cfg.window);
  ElboTerms<S> terms = elbo_loss_batch(model, tape, p, windows, frames, 1, rng);
  return static_cast<double>(tape.val(terms.loss).data[0]);
}

}  // namespace nri
