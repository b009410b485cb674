#pragma once

// Training loop (per-step window sampling, latent-augmented SAC updates),
// episode-local evaluation loop, the context-keyed replay buffer, and the
// random/default reference agents used for score normalization.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "jcpl/alloc.hpp"
#include "jcpl/context.hpp"
#include "jcpl/envs.hpp"
#include "jcpl/mlp.hpp"
#include "jcpl/rng.hpp"
#include "jcpl/sac.hpp"

namespace jcpl {

struct ReplayHyper {
  long capacity = 1000000;
};

// Ring buffer of transitions with per-context slot indices so windows can be
// drawn from one context in O(h).
class ReplayBuffer {
 public:
  ReplayBuffer(int obs_dim, int act_dim, long capacity)
      : obs_dim_(obs_dim), act_dim_(act_dim), capacity_(capacity) {
    if (capacity <= 0) throw std::invalid_argument("replay capacity must be positive");
  }

  void add(const Vector& s, const Vector& a, double r, const Vector& sp,
           double bootstrap_done, double context) {
    grow_to(std::min(capacity_, std::max<long>(size_ + 1, 1024)));
    const long slot = next_;
    if (size_ == capacity_) unindex(slot);
    s_.col(slot) = s;
    a_.col(slot) = a;
    sp_.col(slot) = sp;
    rew_(slot) = r;
    done_(slot) = bootstrap_done;
    ctx_(slot) = context;
    by_context_[key(context)].push_back(slot);
    next_ = (next_ + 1) % capacity_;
    size_ = std::min(size_ + 1, capacity_);
  }

  long size() const { return size_; }

  double context_at(long slot) const { return ctx_(slot); }
  auto s(long slot) const { return s_.col(slot); }
  auto a(long slot) const { return a_.col(slot); }
  auto sp(long slot) const { return sp_.col(slot); }
  double reward(long slot) const { return rew_(slot); }
  double done(long slot) const { return done_(slot); }

  const std::vector<long>& context_slots(double context) const {
    static const std::vector<long> empty;
    auto it = by_context_.find(key(context));
    return it == by_context_.end() ? empty : it->second;
  }

  // Uniform sample without replacement of min(h, available) transitions from
  // one context, written as [s; a; s'] columns into `out` (resized). Returns
  // the number of triples; 0 leaves `out` empty.
  int sample_window(double context, int h, std::mt19937_64& rng, Matrix& out) const {
    const auto& slots = context_slots(context);
    const int n = static_cast<int>(slots.size());
    const int take = std::min(h, n);
    out.resize(2 * obs_dim_ + act_dim_, take);
    if (take == 0) return 0;
    pick_distinct(n, take, rng, picks_);
    for (int j = 0; j < take; ++j) {
      const long slot = slots[picks_[j]];
      out.col(j).segment(0, obs_dim_) = s_.col(slot);
      out.col(j).segment(obs_dim_, act_dim_) = a_.col(slot);
      out.col(j).segment(obs_dim_ + act_dim_, obs_dim_) = sp_.col(slot);
    }
    return take;
  }

  // Floyd's algorithm: `take` distinct indices in [0, n).
  static void pick_distinct(int n, int take, std::mt19937_64& rng,
                            std::vector<int>& out) {
    out.clear();
    if (take >= n) {
      for (int i = 0; i < n; ++i) out.push_back(i);
      return;
    }
    for (int j = n - take; j < n; ++j) {
      const int t = static_cast<int>(uniform_index(rng, 0, j));
      bool seen = false;
      for (int v : out) {
        if (v == t) {
          seen = true;
          break;
        }
      }
      out.push_back(seen ? j : t);
    }
  }

 private:
  static std::uint64_t key(double context) {
    std::uint64_t k;
    std::memcpy(&k, &context, sizeof(k));
    return k;
  }

  void grow_to(long cols) {
    if (s_.cols() >= cols) return;
    long target = std::max<long>(1024, s_.cols() * 2);
    target = std::min(std::max(target, cols), capacity_);
    auto grow = [&](Matrix& m, int rows) {
      Matrix bigger(rows, target);
      if (m.cols() > 0) bigger.leftCols(m.cols()) = m;
      m.swap(bigger);
    };
    grow(s_, obs_dim_);
    grow(a_, act_dim_);
    grow(sp_, obs_dim_);
    rew_.conservativeResize(target);
    done_.conservativeResize(target);
    ctx_.conservativeResize(target);
  }

  void unindex(long slot) {
    auto& slots = by_context_[key(ctx_(slot))];
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (slots[i] == slot) {
        slots.erase(slots.begin() + static_cast<long>(i));
        return;
      }
    }
  }

  int obs_dim_, act_dim_;
  long capacity_;
  long size_ = 0, next_ = 0;
  Matrix s_, a_, sp_;
  Vector rew_, done_, ctx_;
  std::unordered_map<std::uint64_t, std::vector<long>> by_context_;
  mutable std::vector<int> picks_;
};

struct LossRow {
  long update = 0;
  std::string name;
  double value = 0.0;
};

struct RunRecord {
  std::vector<std::pair<long, double>> episode_returns;  // (cumulative step, return)
  std::vector<LossRow> losses;
  double wall_seconds = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
  long encoder_invocations = 0;
  long distinct_train_contexts = 0;
};

struct RunPlan {
  EnvId env = EnvId::pendulum;
  ConditioningMode mode = ConditioningMode::hidden;
  std::uint64_t seed = 0;
  SacHyper sac;
  EncoderHyper enc;
  ReplayHyper replay;
  std::vector<Context> train_contexts;  // empty -> the environment's train set
  std::string config_hash;
  bool record_pretrain_losses = true;
};

struct Checkpoint {
  EnvId env = EnvId::pendulum;
  ConditioningMode mode = ConditioningMode::hidden;
  std::uint64_t seed = 0;
  long step = 0;
  SacAgent agent;
  std::optional<Mlp> encoder;
  std::optional<AdamState> encoder_opt;
  EncoderHyper enc;
};

struct TrainOutput {
  RunRecord record;
  Checkpoint ckpt;
};

namespace trainerdetail {

inline Vector uniform_box_action(int act_dim, double limit, std::mt19937_64& rng) {
  Vector a(act_dim);
  for (int i = 0; i < act_dim; ++i) a(i) = uniform_real(rng, -limit, limit);
  return a;
}

// Collect uniform-random transitions per train context for encoder pretraining.
inline std::vector<ContextPool> collect_pretrain_pools(EnvId env,
                                                       const std::vector<Context>& contexts,
                                                       int steps_per_context,
                                                       std::mt19937_64& rng) {
  const EnvSpec spec = env_spec(env);
  std::vector<ContextPool> pools;
  pools.reserve(contexts.size());
  for (const Context& c : contexts) {
    ContextPool pool;
    pool.context = c.value;
    pool.s.resize(spec.obs_dim, steps_per_context);
    pool.a.resize(spec.act_dim, steps_per_context);
    pool.sp.resize(spec.obs_dim, steps_per_context);
    EnvState st = reset(env, c, rng());
    for (int t = 0; t < steps_per_context; ++t) {
      const Vector act = uniform_box_action(spec.act_dim, spec.action_limit, rng);
      const StepResult sr = step(env, c, st, act);
      pool.s.col(t) = st.observation;
      pool.a.col(t) = act;
      pool.sp.col(t) = sr.next_observation;
      st = sr.done ? reset(env, c, rng()) : advance(env, st, sr);
    }
    pool.count = steps_per_context;
    pools.push_back(std::move(pool));
  }
  return pools;
}

}  // namespace trainerdetail

inline void record_losses(RunRecord& rec, long update, const SacUpdate& up) {
  rec.losses.push_back({update, "critic", up.critic_loss});
  if (up.actor_updated) {
    rec.losses.push_back({update, "actor", up.actor_loss});
    rec.losses.push_back({update, "temperature", up.temperature_loss});
  }
}

// Full training run for one (env, mode, seed). Per step: sample a window of
// same-context transitions, infer the latent, act on the augmented state,
// store the transition, then update SAC on a freshly latent-augmented
// minibatch. In jcpl mode the actor loss also steps the encoder.
inline TrainOutput train_run(const RunPlan& plan) {
  tune_allocator_for_training();
  const auto t_start = std::chrono::steady_clock::now();
  const EnvSpec spec = env_spec(plan.env);
  const std::vector<Context> train_contexts =
      plan.train_contexts.empty() ? context_sets(plan.env).train : plan.train_contexts;
  if (train_contexts.empty()) throw std::invalid_argument("train_run: no train contexts");

  auto rng_init = make_rng(derive_seed(plan.seed, 1));
  auto rng_env = make_rng(derive_seed(plan.seed, 2));
  auto rng_agent = make_rng(derive_seed(plan.seed, 3));
  auto rng_pretrain = make_rng(derive_seed(plan.seed, 4));

  TrainOutput out;
  RunRecord& rec = out.record;
  rec.seed = plan.seed;
  rec.config_hash = plan.config_hash;

  const bool uses_encoder = mode_uses_encoder(plan.mode);
  const int latent_dim = plan.enc.latent_dim;
  const int aug_dim = augmented_dim(plan.mode, spec.obs_dim, latent_dim);

  Checkpoint& ckpt = out.ckpt;
  ckpt.env = plan.env;
  ckpt.mode = plan.mode;
  ckpt.seed = plan.seed;
  ckpt.enc = plan.enc;

  if (uses_encoder) {
    ckpt.encoder = make_encoder(spec.obs_dim, spec.act_dim, plan.enc, rng_init);
    ckpt.encoder_opt = make_adam(*ckpt.encoder, plan.enc.lr);
  }
  if (plan.mode == ConditioningMode::predictive_id) {
    // two-phase pipeline: pretrain the encoder on next-state prediction with
    // random-policy data, then keep it frozen for the whole policy phase
    Mlp dyn = make_predictor(spec.obs_dim, spec.act_dim, plan.enc, rng_init);
    const auto pools = trainerdetail::collect_pretrain_pools(
        plan.env, train_contexts, plan.enc.pretrain_steps_per_context, rng_pretrain);
    const auto pre = train_predictive_encoder(*ckpt.encoder, dyn, pools, plan.enc,
                                              rng_pretrain);
    if (plan.record_pretrain_losses) {
      for (std::size_t i = 0; i < pre.update_losses.size(); ++i)
        rec.losses.push_back({static_cast<long>(i), "dynamics_pretrain",
                              pre.update_losses[i]});
    }
  }

  SacAgent& agent =
      (ckpt.agent = make_sac(aug_dim, spec.act_dim, spec.action_limit, plan.sac, rng_init));
  ReplayBuffer buffer(spec.obs_dim, spec.act_dim, plan.replay.capacity);

  const int b = plan.sac.batch_size;
  SacBatch batch;
  batch.obs.resize(aug_dim, b);
  batch.act.resize(spec.act_dim, b);
  batch.next_obs.resize(aug_dim, b);
  batch.rew.resize(b);
  batch.done.resize(b);
  WindowBatch wb;
  if (uses_encoder) wb.triples.resize(triple_dim(spec.obs_dim, spec.act_dim),
                                      static_cast<long>(b) * plan.enc.window);
  Matrix window;
  Tape enc_tape;
  MlpGrads enc_grads;
  std::vector<int> window_picks;
  if (uses_encoder) enc_grads = zeros_like(*ckpt.encoder);

  EnvState st;
  Context cur{train_contexts.front().value};
  double ep_return = 0.0;
  bool need_reset = true;
  std::set<double> contexts_seen;

  auto infer_latent = [&](double context_value) -> Vector {
    const int got = buffer.sample_window(context_value, plan.enc.window, rng_agent, window);
    rec.encoder_invocations += 1;
    if (got == 0) return Vector::Zero(latent_dim);
    return encode(*ckpt.encoder, window);
  };

  for (long t = 0; t < plan.sac.total_steps; ++t) {
    if (need_reset) {
      cur = train_contexts[uniform_index(rng_env, 0,
                                         static_cast<long>(train_contexts.size()) - 1)];
      contexts_seen.insert(cur.value);
      st = reset(plan.env, cur, rng_env());
      ep_return = 0.0;
      need_reset = false;
    }

    Vector latent;
    if (uses_encoder) latent = infer_latent(cur.value);
    const Vector aug = augment_observation(plan.mode, st.observation, cur.value, latent);
    const Vector act =
        t < plan.sac.learning_starts
            ? trainerdetail::uniform_box_action(spec.act_dim, spec.action_limit, rng_agent)
            : sample_action(agent, aug, false, rng_agent).action;
    const StepResult sr = step(plan.env, cur, st, act);
    const double bootstrap_done =
        terminal_observation(plan.env, sr.next_observation) ? 1.0 : 0.0;
    buffer.add(st.observation, act, sr.reward, sr.next_observation, bootstrap_done,
               cur.value);
    ep_return += sr.reward;
    if (sr.done) {
      rec.episode_returns.emplace_back(t + 1, ep_return);
      need_reset = true;
    } else {
      st = advance(plan.env, st, sr);
    }

    if (t < plan.sac.learning_starts) continue;

    // assemble a latent-augmented minibatch; each element resamples a window
    // for its own stored context
    wb.offsets.assign(1, 0);
    for (int k = 0; k < b; ++k) {
      const long idx = uniform_index(rng_agent, 0, buffer.size() - 1);
      batch.obs.col(k).head(spec.obs_dim) = buffer.s(idx);
      batch.next_obs.col(k).head(spec.obs_dim) = buffer.sp(idx);
      batch.act.col(k) = buffer.a(idx);
      batch.rew(k) = buffer.reward(idx);
      batch.done(k) = buffer.done(idx);
      const double c = buffer.context_at(idx);
      if (plan.mode == ConditioningMode::explicit_context) {
        batch.obs(spec.obs_dim, k) = c;
        batch.next_obs(spec.obs_dim, k) = c;
      } else if (uses_encoder) {
        const int at = wb.offsets.back();
        const auto& slots = buffer.context_slots(c);
        const int take = std::min<int>(plan.enc.window, static_cast<int>(slots.size()));
        ReplayBuffer::pick_distinct(static_cast<int>(slots.size()), take, rng_agent,
                                    window_picks);
        for (int j = 0; j < take; ++j) {
          const long slot = slots[window_picks[j]];
          wb.triples.col(at + j).segment(0, spec.obs_dim) = buffer.s(slot);
          wb.triples.col(at + j).segment(spec.obs_dim, spec.act_dim) = buffer.a(slot);
          wb.triples.col(at + j).segment(spec.obs_dim + spec.act_dim, spec.obs_dim) =
              buffer.sp(slot);
        }
        wb.offsets.push_back(at + take);
        rec.encoder_invocations += 1;
      }
    }

    const bool jcpl_mode = plan.mode == ConditioningMode::jcpl;
    if (uses_encoder) {
      WindowBatch view;
      view.triples = wb.triples.leftCols(wb.offsets.back());
      view.offsets = wb.offsets;
      const Matrix latents = encode_batch(*ckpt.encoder, view, jcpl_mode ? &enc_tape : nullptr);
      batch.obs.bottomRows(latent_dim) = latents;
      batch.next_obs.bottomRows(latent_dim) = latents;

      const SacUpdate up =
          sac_update(agent, batch, rng_agent,
                     /*want_actor_obs_grad=*/jcpl_mode && plan.enc.actor_grads_to_encoder,
                     /*want_critic_obs_grad=*/jcpl_mode && plan.enc.critic_grads_to_encoder);
      if (jcpl_mode) {
        bool have_grads = false;
        enc_grads.set_zero();
        if (plan.enc.actor_grads_to_encoder && up.actor_updated) {
          encode_batch_backward(*ckpt.encoder, enc_tape, view,
                                up.actor_obs_grad.bottomRows(latent_dim), enc_grads);
          have_grads = true;
        }
        if (plan.enc.critic_grads_to_encoder) {
          encode_batch_backward(*ckpt.encoder, enc_tape, view,
                                up.critic_obs_grad.bottomRows(latent_dim), enc_grads);
          have_grads = true;
        }
        if (have_grads && !adam_step(*ckpt.encoder, enc_grads, *ckpt.encoder_opt))
          throw std::runtime_error("train_run: non-finite encoder gradients");
      }
      record_losses(rec, agent.update_count - 1, up);
    } else {
      const SacUpdate up = sac_update(agent, batch, rng_agent);
      record_losses(rec, agent.update_count - 1, up);
    }
  }

  rec.distinct_train_contexts = static_cast<long>(contexts_seen.size());
  ckpt.step = plan.sac.total_steps;
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return out;
}

// --- evaluation (episode-local context inference) ---

struct ScoreRow {
  double context = 0.0;
  std::uint64_t seed = 0;
  int episode = 0;
  double score = 0.0;
};

struct EpisodeResult {
  double score = 0.0;
  int steps = 0;
  Matrix transitions;  // [s; a; s'] columns observed during the episode
};

// One evaluation episode. The transition list starts empty, the latent starts
// at zero, and both are rebuilt purely from this episode's own transitions.
inline EpisodeResult run_eval_episode(const Checkpoint& ckpt, Context context,
                                      std::uint64_t episode_seed, bool deterministic,
                                      bool keep_transitions = false) {
  const EnvSpec spec = env_spec(ckpt.env);
  auto rng = make_rng(episode_seed);
  EnvState st = reset(ckpt.env, context, rng());
  const bool uses_encoder = mode_uses_encoder(ckpt.mode);
  const int latent_dim = ckpt.enc.latent_dim;
  Matrix history(triple_dim(spec.obs_dim, spec.act_dim), spec.horizon);
  int n_hist = 0;
  Vector latent = Vector::Zero(latent_dim);
  EpisodeResult out;
  while (!st.done) {
    if (uses_encoder && n_hist > 0)
      latent = encode(*ckpt.encoder, history.leftCols(n_hist));
    const Vector aug =
        augment_observation(ckpt.mode, st.observation, context.value, latent);
    const Vector act = sample_action(ckpt.agent, aug, deterministic, rng).action;
    const StepResult sr = step(ckpt.env, context, st, act);
    history.col(n_hist).segment(0, spec.obs_dim) = st.observation;
    history.col(n_hist).segment(spec.obs_dim, spec.act_dim) = act;
    history.col(n_hist).segment(spec.obs_dim + spec.act_dim, spec.obs_dim) =
        sr.next_observation;
    n_hist += 1;
    out.score += sr.reward;
    st = advance(ckpt.env, st, sr);
  }
  out.steps = n_hist;
  if (keep_transitions) out.transitions = history.leftCols(n_hist);
  return out;
}

inline std::vector<ScoreRow> evaluate_run(const Checkpoint& ckpt,
                                          const std::vector<Context>& eval_contexts,
                                          int episodes_per_context, bool deterministic,
                                          std::uint64_t eval_seed_base = 0x9e3779b9ULL) {
  const std::vector<Context> declared = context_sets(ckpt.env).eval;
  std::vector<ScoreRow> rows;
  rows.reserve(eval_contexts.size() * episodes_per_context);
  for (std::size_t ci = 0; ci < eval_contexts.size(); ++ci) {
    const bool known =
        std::any_of(declared.begin(), declared.end(),
                    [&](const Context& c) { return c.value == eval_contexts[ci].value; });
    if (!known)
      std::cerr << "warning: context " << eval_contexts[ci].value
                << " is outside the declared eval set for " << env_name(ckpt.env)
                << "; evaluating anyway\n";
    for (int e = 0; e < episodes_per_context; ++e) {
      const std::uint64_t ep_seed =
          derive_seed(derive_seed(eval_seed_base ^ ckpt.seed, 1000 + ci), e);
      const auto ep = run_eval_episode(ckpt, eval_contexts[ci], ep_seed, deterministic);
      rows.push_back({eval_contexts[ci].value, ckpt.seed, e, ep.score});
    }
  }
  return rows;
}

// --- reference scores for normalization ---

struct ReferenceHyper {
  int random_episodes = 100;
  int default_seeds = 10;
};

inline double random_policy_return(EnvId env, Context context, std::uint64_t seed) {
  const EnvSpec spec = env_spec(env);
  auto rng = make_rng(seed);
  EnvState st = reset(env, context, rng());
  double ret = 0.0;
  while (!st.done) {
    const Vector act =
        trainerdetail::uniform_box_action(spec.act_dim, spec.action_limit, rng);
    const StepResult sr = step(env, context, st, act);
    ret += sr.reward;
    st = advance(env, st, sr);
  }
  return ret;
}

inline std::vector<double> random_reference(EnvId env,
                                            const std::vector<Context>& contexts,
                                            int episodes, std::uint64_t seed_base) {
  std::vector<double> means;
  means.reserve(contexts.size());
  for (std::size_t ci = 0; ci < contexts.size(); ++ci) {
    double sum = 0.0;
    for (int e = 0; e < episodes; ++e)
      sum += random_policy_return(env, contexts[ci],
                                  derive_seed(derive_seed(seed_base, 500 + ci), e));
    means.push_back(sum / episodes);
  }
  return means;
}

}  // namespace jcpl
