#pragma once

// Context inference machinery: the transition-window encoder, the one-step
// dynamics predictor used to pretrain it, and the four observation
// conditioning strategies.

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "jcpl/mlp.hpp"
#include "jcpl/rng.hpp"

namespace jcpl {

enum class ConditioningMode { hidden, explicit_context, predictive_id, jcpl };

inline const char* mode_name(ConditioningMode m) {
  switch (m) {
    case ConditioningMode::hidden: return "hidden";
    case ConditioningMode::explicit_context: return "explicit";
    case ConditioningMode::predictive_id: return "predictive_id";
    case ConditioningMode::jcpl: return "jcpl";
  }
  return "?";
}

inline ConditioningMode parse_mode(const std::string& name) {
  if (name == "hidden") return ConditioningMode::hidden;
  if (name == "explicit") return ConditioningMode::explicit_context;
  if (name == "predictive_id") return ConditioningMode::predictive_id;
  if (name == "jcpl") return ConditioningMode::jcpl;
  throw std::invalid_argument("unknown method: " + name);
}

inline bool mode_uses_encoder(ConditioningMode m) {
  return m == ConditioningMode::predictive_id || m == ConditioningMode::jcpl;
}

struct EncoderHyper {
  int window = 20;                       // transition-list size h
  int latent_dim = 2;
  std::vector<int> hidden = {8, 4};      // encoder and predictor hidden dims
  double lr = 1e-3;
  int pretrain_steps_per_context = 10000;
  int pretrain_epochs = 200;
  int pretrain_batch = 256;
  // gradient routing (jcpl): the encoder is trained through the actor loss;
  // critic-loss gradients are stopped unless explicitly enabled for ablation.
  bool actor_grads_to_encoder = true;
  bool critic_grads_to_encoder = false;
};

// triple layout: column = [s; a; s']
inline int triple_dim(int obs_dim, int act_dim) { return 2 * obs_dim + act_dim; }

inline Mlp make_encoder(int obs_dim, int act_dim, const EncoderHyper& hp,
                        std::mt19937_64& rng) {
  std::vector<int> dims = {triple_dim(obs_dim, act_dim)};
  dims.insert(dims.end(), hp.hidden.begin(), hp.hidden.end());
  dims.push_back(hp.latent_dim);
  return make_mlp(dims, rng);
}

inline Mlp make_predictor(int obs_dim, int act_dim, const EncoderHyper& hp,
                          std::mt19937_64& rng) {
  std::vector<int> dims = {obs_dim + act_dim + hp.latent_dim};
  dims.insert(dims.end(), hp.hidden.begin(), hp.hidden.end());
  dims.push_back(obs_dim);
  return make_mlp(dims, rng);
}

// Latent for one transition window: per-triple embedding, arithmetic mean
// over the triples. An empty window maps to the zero latent.
inline Vector encode(const Mlp& psi, const Matrix& window_triples) {
  if (window_triples.cols() == 0) return Vector::Zero(psi.output_dim());
  if (window_triples.rows() != psi.input_dim())
    throw std::invalid_argument("encode: window triple dimension mismatch");
  return forward(psi, window_triples).rowwise().mean();
}

inline Vector predict_next_state(const Mlp& dyn, const Vector& s, const Vector& a,
                                 const Vector& latent) {
  Vector in(s.size() + a.size() + latent.size());
  in << s, a, latent;
  return forward(dyn, in);
}

// All windows of a minibatch concatenated so the encoder runs as one matrix
// pass. offsets has size B+1; window i occupies columns [offsets[i], offsets[i+1]).
struct WindowBatch {
  Matrix triples;
  std::vector<int> offsets;

  int windows() const { return static_cast<int>(offsets.size()) - 1; }
  int count(int i) const { return offsets[i + 1] - offsets[i]; }
};

inline Matrix encode_batch(const Mlp& psi, const WindowBatch& wb, Tape* tape) {
  const int b = wb.windows();
  Matrix latents = Matrix::Zero(psi.output_dim(), b);
  if (wb.triples.cols() == 0) return latents;
  Tape local;
  const Matrix& z = forward(psi, wb.triples, tape ? *tape : local);
  for (int i = 0; i < b; ++i) {
    const int n = wb.count(i);
    if (n > 0) latents.col(i) = z.middleCols(wb.offsets[i], n).rowwise().mean();
  }
  return latents;
}

// Chains latent gradients back through the per-window mean into the encoder.
inline void encode_batch_backward(const Mlp& psi, const Tape& tape,
                                  const WindowBatch& wb, const Matrix& d_latents,
                                  MlpGrads& grads) {
  if (wb.triples.cols() == 0) return;
  Matrix dz(psi.output_dim(), wb.triples.cols());
  for (int i = 0; i < wb.windows(); ++i) {
    const int n = wb.count(i);
    for (int j = 0; j < n; ++j)
      dz.col(wb.offsets[i] + j) = d_latents.col(i) / static_cast<double>(n);
  }
  backward(psi, tape, dz, &grads, false);
}

inline Vector augment_observation(ConditioningMode mode, const Vector& s,
                                  double context_value, const Vector& latent) {
  switch (mode) {
    case ConditioningMode::hidden:
      return s;
    case ConditioningMode::explicit_context: {
      Vector out(s.size() + 1);
      out << s, context_value;
      return out;
    }
    case ConditioningMode::predictive_id:
    case ConditioningMode::jcpl: {
      if (latent.size() == 0)
        throw std::invalid_argument("augment_observation: latent required for this mode");
      Vector out(s.size() + latent.size());
      out << s, latent;
      return out;
    }
  }
  throw std::invalid_argument("unknown conditioning mode");
}

inline int augmented_dim(ConditioningMode mode, int obs_dim, int latent_dim) {
  switch (mode) {
    case ConditioningMode::hidden: return obs_dim;
    case ConditioningMode::explicit_context: return obs_dim + 1;
    case ConditioningMode::predictive_id:
    case ConditioningMode::jcpl: return obs_dim + latent_dim;
  }
  throw std::invalid_argument("unknown conditioning mode");
}

// --- two-phase pretraining of the encoder on next-state prediction ---

// Random-policy transitions collected in one context.
struct ContextPool {
  double context = 0.0;
  Matrix s, a, sp;  // columns = transitions
  int count = 0;
};

struct PredictiveTrainResult {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> update_losses;  // batch MSE per update
};

// Minimizes next-state MSE jointly over encoder and predictor. Each minibatch
// element draws a context, a window of triples from that context's pool, and
// an independent target transition from the same pool.
inline PredictiveTrainResult train_predictive_encoder(
    Mlp& psi, Mlp& dyn, const std::vector<ContextPool>& pools,
    const EncoderHyper& hp, std::mt19937_64& rng) {
  if (pools.empty()) throw std::invalid_argument("predictive pretraining: empty dataset");
  long total = 0;
  for (const auto& p : pools) {
    if (p.count <= 0) throw std::invalid_argument("predictive pretraining: empty context pool");
    total += p.count;
  }
  const int obs_dim = static_cast<int>(pools.front().s.rows());
  const int act_dim = static_cast<int>(pools.front().a.rows());
  const int tdim = triple_dim(obs_dim, act_dim);
  const int b = hp.pretrain_batch;
  const long updates_per_epoch = std::max<long>(1, (total + b - 1) / b);

  AdamState psi_opt = make_adam(psi, hp.lr);
  AdamState dyn_opt = make_adam(dyn, hp.lr);
  MlpGrads psi_grads = zeros_like(psi);
  MlpGrads dyn_grads = zeros_like(dyn);

  WindowBatch wb;
  wb.triples.resize(tdim, static_cast<long>(b) * hp.window);
  Matrix dyn_in(dyn.input_dim(), b), target(obs_dim, b);
  Tape psi_tape, dyn_tape;

  PredictiveTrainResult result;
  for (int epoch = 0; epoch < hp.pretrain_epochs; ++epoch) {
    for (long u = 0; u < updates_per_epoch; ++u) {
      wb.offsets.assign(1, 0);
      for (int k = 0; k < b; ++k) {
        const auto& pool = pools[uniform_index(rng, 0, static_cast<long>(pools.size()) - 1)];
        const int n = std::min(hp.window, pool.count);
        const int at = wb.offsets.back();
        for (int j = 0; j < n; ++j) {
          const long idx = uniform_index(rng, 0, pool.count - 1);
          wb.triples.col(at + j).segment(0, obs_dim) = pool.s.col(idx);
          wb.triples.col(at + j).segment(obs_dim, act_dim) = pool.a.col(idx);
          wb.triples.col(at + j).segment(obs_dim + act_dim, obs_dim) = pool.sp.col(idx);
        }
        wb.offsets.push_back(at + n);
        const long t = uniform_index(rng, 0, pool.count - 1);
        dyn_in.col(k).segment(0, obs_dim) = pool.s.col(t);
        dyn_in.col(k).segment(obs_dim, act_dim) = pool.a.col(t);
        target.col(k) = pool.sp.col(t);
      }
      WindowBatch view;
      view.triples = wb.triples.leftCols(wb.offsets.back());
      view.offsets = wb.offsets;
      const Matrix latents = encode_batch(psi, view, &psi_tape);
      dyn_in.bottomRows(hp.latent_dim) = latents;
      const Matrix& pred = forward(dyn, dyn_in, dyn_tape);
      const Matrix err = pred - target;
      const double loss = err.squaredNorm() / static_cast<double>(err.size());
      if (result.update_losses.empty()) result.initial_loss = loss;
      result.update_losses.push_back(loss);

      const Matrix d_pred = 2.0 * err / static_cast<double>(err.size());
      psi_grads.set_zero();
      dyn_grads.set_zero();
      const Matrix d_in = backward(dyn, dyn_tape, d_pred, &dyn_grads, true);
      encode_batch_backward(psi, psi_tape, view, d_in.bottomRows(hp.latent_dim), psi_grads);
      if (!adam_step(dyn, dyn_grads, dyn_opt) || !adam_step(psi, psi_grads, psi_opt))
        throw std::runtime_error("predictive pretraining: non-finite gradients");
    }
  }
  result.final_loss = result.update_losses.empty() ? 0.0 : result.update_losses.back();
  return result;
}

}  // namespace jcpl
