#pragma once

// Soft actor-critic over (possibly augmented) observations: tanh-squashed
// Gaussian actor, twin critics with Polyak-averaged targets, automatic
// entropy temperature. The update exposes input gradients so a caller can
// route the actor loss into an upstream encoder.

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "jcpl/mlp.hpp"
#include "jcpl/rng.hpp"

namespace jcpl {

struct SacHyper {
  double discount = 0.99;
  double polyak = 0.005;
  int batch_size = 256;
  long learning_starts = 5000;
  long total_steps = 30000;
  double actor_lr = 3e-4;
  double critic_lr = 1e-3;
  double temperature_lr = 1e-3;
  int policy_interval = 2;
  int target_interval = 1;
  double target_entropy = -1.0;
  std::vector<int> hidden = {256, 256};
  double log_std_min = -20.0;
  double log_std_max = 2.0;
};

struct SacAgent {
  int obs_dim = 0;
  int act_dim = 0;
  double action_limit = 1.0;
  SacHyper hp;
  Mlp actor;  // outputs [mean; log_std]
  Mlp q1, q2, q1_target, q2_target;
  AdamState actor_opt, q1_opt, q2_opt;
  double log_alpha = 0.0;
  ScalarAdam alpha_opt;
  long update_count = 0;

  double alpha() const { return std::exp(log_alpha); }
};

inline SacAgent make_sac(int obs_dim, int act_dim, double action_limit,
                         const SacHyper& hp, std::mt19937_64& rng) {
  SacAgent ag;
  ag.obs_dim = obs_dim;
  ag.act_dim = act_dim;
  ag.action_limit = action_limit;
  ag.hp = hp;
  std::vector<int> actor_dims = {obs_dim};
  actor_dims.insert(actor_dims.end(), hp.hidden.begin(), hp.hidden.end());
  actor_dims.push_back(2 * act_dim);
  std::vector<int> critic_dims = {obs_dim + act_dim};
  critic_dims.insert(critic_dims.end(), hp.hidden.begin(), hp.hidden.end());
  critic_dims.push_back(1);
  ag.actor = make_mlp(actor_dims, rng);
  ag.q1 = make_mlp(critic_dims, rng);
  ag.q2 = make_mlp(critic_dims, rng);
  ag.q1_target = ag.q1;
  ag.q2_target = ag.q2;
  ag.actor_opt = make_adam(ag.actor, hp.actor_lr);
  ag.q1_opt = make_adam(ag.q1, hp.critic_lr);
  ag.q2_opt = make_adam(ag.q2, hp.critic_lr);
  ag.alpha_opt.lr = hp.temperature_lr;
  return ag;
}

namespace sacdetail {

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log(1 - tanh(u)^2), stable for large |u|
inline double log_one_minus_tanh_sq(double u) {
  return 2.0 * (std::log(2.0) - u - softplus(-2.0 * u));
}

}  // namespace sacdetail

// One batched draw from the squashed-Gaussian policy.
struct ActorBatchSample {
  Matrix mean, log_std_raw, log_std, sigma, eps, u, tanh_u, action;
  Vector log_prob;
  Tape tape;
};

// Deterministic given the noise matrix `eps` (reparameterization).
inline void actor_sample_with_noise(const SacAgent& ag, const Matrix& obs,
                                    const Matrix& eps, bool want_tape,
                                    ActorBatchSample& out) {
  const int b = static_cast<int>(obs.cols());
  const int ad = ag.act_dim;
  Tape scratch;
  const Matrix& head = forward(ag.actor, obs, want_tape ? out.tape : scratch);
  if (!head.allFinite()) throw std::runtime_error("sac actor produced non-finite output");
  out.mean = head.topRows(ad);
  out.log_std_raw = head.bottomRows(ad);
  out.log_std = out.log_std_raw.cwiseMax(ag.hp.log_std_min).cwiseMin(ag.hp.log_std_max);
  out.sigma = out.log_std.array().exp().matrix();
  out.eps = eps;
  out.u = out.mean + out.sigma.cwiseProduct(out.eps);
  out.tanh_u = out.u.array().tanh().matrix();
  out.action = ag.action_limit * out.tanh_u;
  out.log_prob = Vector(b);
  const double per_dim_const =
      -0.5 * std::log(2.0 * M_PI) - std::log(ag.action_limit);
  for (int j = 0; j < b; ++j) {
    double lp = 0.0;
    for (int i = 0; i < ad; ++i) {
      lp += -0.5 * out.eps(i, j) * out.eps(i, j) - out.log_std(i, j) + per_dim_const;
      lp -= sacdetail::log_one_minus_tanh_sq(out.u(i, j));
    }
    out.log_prob(j) = lp;
  }
}

// With rng == nullptr the draw is deterministic: action = tanh(mean) * limit.
inline void actor_sample_batch(const SacAgent& ag, const Matrix& obs,
                               std::mt19937_64* rng, bool want_tape,
                               ActorBatchSample& out) {
  Matrix eps = Matrix::Zero(ag.act_dim, obs.cols());
  if (rng) {
    for (int j = 0; j < eps.cols(); ++j)
      for (int i = 0; i < eps.rows(); ++i) eps(i, j) = standard_normal(*rng);
  }
  actor_sample_with_noise(ag, obs, eps, want_tape, out);
}

struct ActionSample {
  Vector action;
  double log_prob = 0.0;
};

inline ActionSample sample_action(const SacAgent& ag, const Vector& obs,
                                  bool deterministic, std::mt19937_64& rng) {
  if (obs.size() != ag.obs_dim)
    throw std::invalid_argument("sample_action: observation dimension mismatch");
  ActorBatchSample s;
  actor_sample_batch(ag, Matrix(obs), deterministic ? nullptr : &rng, false, s);
  return {s.action.col(0), s.log_prob(0)};
}

// y_i = r_i + discount * (1 - done_i) * (min(Q1', Q2')(s'_i, a'_i) - alpha * log pi(a'_i))
inline Vector critic_targets(const SacAgent& ag, const Vector& rew,
                             const Matrix& next_obs, const Vector& done,
                             std::mt19937_64& rng) {
  const int b = static_cast<int>(next_obs.cols());
  ActorBatchSample ns;
  actor_sample_batch(ag, next_obs, &rng, false, ns);
  Matrix xq(ag.obs_dim + ag.act_dim, b);
  xq << next_obs, ns.action;
  const Vector q1 = forward(ag.q1_target, xq).row(0).transpose();
  const Vector q2 = forward(ag.q2_target, xq).row(0).transpose();
  const double alpha = ag.alpha();
  Vector y(b);
  for (int j = 0; j < b; ++j) {
    const double soft_q = std::min(q1(j), q2(j)) - alpha * ns.log_prob(j);
    y(j) = rew(j) + ag.hp.discount * (1.0 - done(j)) * soft_q;
  }
  return y;
}

inline double critic_target(const SacAgent& ag, double reward, const Vector& next_obs,
                            double done, std::mt19937_64& rng) {
  Vector r(1), d(1);
  r << reward;
  d << done;
  return critic_targets(ag, r, Matrix(next_obs), d, rng)(0);
}

inline void polyak_update(const Mlp& src, Mlp& dst, double tau) {
  for (int l = 0; l < src.layers(); ++l) {
    dst.weights[l] = tau * src.weights[l] + (1.0 - tau) * dst.weights[l];
    dst.biases[l] = tau * src.biases[l] + (1.0 - tau) * dst.biases[l];
  }
}

struct SacBatch {
  Matrix obs, act, next_obs;  // columns = samples
  Vector rew, done;
};

// Actor objective mean(alpha * log pi - min(Q1, Q2)) at fixed noise, with its
// gradients. Split out from the update so the reparameterized gradient chain
// can be checked against finite differences of the loss value.
struct ActorLoss {
  double loss = 0.0;
  Vector log_prob;
  MlpGrads actor_grads;
  Matrix d_obs;  // filled when want_obs_grad
};

inline ActorLoss actor_loss(const SacAgent& ag, const Matrix& obs, const Matrix& eps,
                            bool want_grads, bool want_obs_grad) {
  const int b = static_cast<int>(obs.cols());
  const double alpha = ag.alpha();
  ActorLoss out;
  ActorBatchSample cs;
  actor_sample_with_noise(ag, obs, eps, want_grads, cs);
  Matrix xq_pi(ag.obs_dim + ag.act_dim, b);
  xq_pi << obs, cs.action;
  Tape tq1, tq2;
  const Vector p1 = forward(ag.q1, xq_pi, tq1).row(0).transpose();
  const Vector p2 = forward(ag.q2, xq_pi, tq2).row(0).transpose();
  const Vector qmin = p1.cwiseMin(p2);
  out.loss = (alpha * cs.log_prob - qmin).mean();
  out.log_prob = cs.log_prob;
  if (!want_grads) return out;

  // route -dQmin/B into whichever critic attains the min, inputs only
  Matrix dq1(1, b), dq2(1, b);
  for (int j = 0; j < b; ++j) {
    const bool first = p1(j) <= p2(j);
    dq1(0, j) = first ? -1.0 / b : 0.0;
    dq2(0, j) = first ? 0.0 : -1.0 / b;
  }
  const Matrix din =
      backward(ag.q1, tq1, dq1, nullptr, true) + backward(ag.q2, tq2, dq2, nullptr, true);
  const Matrix d_action = din.bottomRows(ag.act_dim);
  const Matrix dobs_q = din.topRows(ag.obs_dim);

  // chain through action = limit * tanh(mean + sigma * eps) and through the
  // log-prob terms; under reparameterization the Gaussian density term is
  // constant in (mean, sigma), so only -log_std and the squash correction
  // contribute there.
  const Eigen::ArrayXXd one_minus_t2 = 1.0 - cs.tanh_u.array() * cs.tanh_u.array();
  const Eigen::ArrayXXd du_q = d_action.array() * ag.action_limit * one_minus_t2;
  const Eigen::ArrayXXd sig_eps = cs.sigma.array() * cs.eps.array();
  const double aob = alpha / b;
  Matrix d_head(2 * ag.act_dim, b);
  d_head.topRows(ag.act_dim) = (du_q + aob * 2.0 * cs.tanh_u.array()).matrix();
  Eigen::ArrayXXd d_rho =
      du_q * sig_eps + aob * (-1.0 + 2.0 * cs.tanh_u.array() * sig_eps);
  // clamp on log_std: zero gradient outside the active range
  d_rho *= ((cs.log_std_raw.array() > ag.hp.log_std_min) &&
            (cs.log_std_raw.array() < ag.hp.log_std_max))
               .cast<double>();
  d_head.bottomRows(ag.act_dim) = d_rho.matrix();

  out.actor_grads = zeros_like(ag.actor);
  const Matrix dobs_pi = backward(ag.actor, cs.tape, d_head, &out.actor_grads,
                                  want_obs_grad);
  if (want_obs_grad) out.d_obs = dobs_pi + dobs_q;
  return out;
}

struct SacUpdate {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double temperature_loss = 0.0;
  double alpha = 0.0;
  bool actor_updated = false;
  Matrix actor_obs_grad;   // dActorLoss/dObs, filled when requested and actor stepped
  Matrix critic_obs_grad;  // dCriticLoss/dObs, filled when requested
};

inline SacUpdate sac_update(SacAgent& ag, const SacBatch& batch, std::mt19937_64& rng,
                            bool want_actor_obs_grad = false,
                            bool want_critic_obs_grad = false) {
  const int b = static_cast<int>(batch.obs.cols());
  if (b == 0) throw std::invalid_argument("sac_update: empty batch");
  SacUpdate out;
  const double alpha = ag.alpha();
  out.alpha = alpha;

  const Vector y = critic_targets(ag, batch.rew, batch.next_obs, batch.done, rng);

  Matrix xq(ag.obs_dim + ag.act_dim, b);
  xq << batch.obs, batch.act;
  Tape t1, t2;
  const Vector v1 = forward(ag.q1, xq, t1).row(0).transpose();
  const Vector v2 = forward(ag.q2, xq, t2).row(0).transpose();
  const Vector e1 = v1 - y, e2 = v2 - y;
  out.critic_loss = (e1.squaredNorm() + e2.squaredNorm()) / static_cast<double>(b);
  if (!std::isfinite(out.critic_loss))
    throw std::runtime_error("sac_update: non-finite critic loss");

  MlpGrads g1 = zeros_like(ag.q1), g2 = zeros_like(ag.q2);
  const Matrix d1 = (2.0 / b) * e1.transpose();
  const Matrix d2 = (2.0 / b) * e2.transpose();
  const Matrix in1 = backward(ag.q1, t1, d1, &g1, want_critic_obs_grad);
  const Matrix in2 = backward(ag.q2, t2, d2, &g2, want_critic_obs_grad);
  if (want_critic_obs_grad)
    out.critic_obs_grad = in1.topRows(ag.obs_dim) + in2.topRows(ag.obs_dim);
  if (!adam_step(ag.q1, g1, ag.q1_opt) || !adam_step(ag.q2, g2, ag.q2_opt))
    throw std::runtime_error("sac_update: non-finite critic gradients");

  out.actor_updated = (ag.update_count % ag.hp.policy_interval == 0);
  if (out.actor_updated) {
    Matrix eps(ag.act_dim, b);
    for (int j = 0; j < b; ++j)
      for (int i = 0; i < ag.act_dim; ++i) eps(i, j) = standard_normal(rng);
    const ActorLoss al = actor_loss(ag, batch.obs, eps, true, want_actor_obs_grad);
    out.actor_loss = al.loss;
    if (!std::isfinite(out.actor_loss))
      throw std::runtime_error("sac_update: non-finite actor loss");
    if (!adam_step(ag.actor, al.actor_grads, ag.actor_opt))
      throw std::runtime_error("sac_update: non-finite actor gradients");
    if (want_actor_obs_grad) out.actor_obs_grad = al.d_obs;

    // temperature step on log_alpha (log_prob treated as constant)
    const double mean_lp = al.log_prob.mean();
    const double d_log_alpha = -alpha * (mean_lp + ag.hp.target_entropy);
    out.temperature_loss = d_log_alpha;
    scalar_adam_step(ag.log_alpha, d_log_alpha, ag.alpha_opt);
  }

  if (ag.update_count % ag.hp.target_interval == 0) {
    polyak_update(ag.q1, ag.q1_target, ag.hp.polyak);
    polyak_update(ag.q2, ag.q2_target, ag.hp.polyak);
  }
  ag.update_count += 1;
  return out;
}

}  // namespace jcpl
