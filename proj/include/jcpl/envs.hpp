#pragma once

// Contextual classic-control environments. Each environment is a pure
// function of (context, state, action); all randomness enters through
// explicit seeds, so identical inputs give bit-identical trajectories.
//
// Context semantics:
//   cartpole     - integration timestep tau (seconds)
//   pendulum     - pole length (meters)
//   mountaincar  - motor power multiplier (signed; negative inverts actions)

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "jcpl/mlp.hpp"
#include "jcpl/rng.hpp"

namespace jcpl {

enum class EnvId { cartpole, pendulum, mountaincar };

inline const char* env_name(EnvId id) {
  switch (id) {
    case EnvId::cartpole: return "cartpole";
    case EnvId::pendulum: return "pendulum";
    case EnvId::mountaincar: return "mountaincar";
  }
  return "?";
}

inline EnvId parse_env(const std::string& name) {
  if (name == "cartpole") return EnvId::cartpole;
  if (name == "pendulum") return EnvId::pendulum;
  if (name == "mountaincar") return EnvId::mountaincar;
  throw std::invalid_argument("unknown environment id: " + name);
}

struct Context {
  double value = 0.0;
};

struct ContextSet {
  std::vector<Context> train;
  std::vector<Context> eval;
  Context default_context;
};

struct EnvSpec {
  int obs_dim = 0;
  int act_dim = 1;
  double action_limit = 1.0;  // action box is [-limit, limit]
  int horizon = 0;
};

inline EnvSpec env_spec(EnvId id) {
  switch (id) {
    case EnvId::cartpole: return {4, 1, 1.0, 200};
    case EnvId::pendulum: return {3, 1, 2.0, 200};
    case EnvId::mountaincar: return {2, 1, 1.0, 999};
  }
  throw std::invalid_argument("unknown environment id");
}

struct EnvState {
  Vector observation;
  int step_index = 0;
  bool done = false;
};

struct StepResult {
  Vector next_observation;
  double reward = 0.0;
  bool done = false;
};

namespace envdetail {

// cartpole constants (standard pole-on-cart model)
constexpr double kGravity = 9.8;
constexpr double kCartMass = 1.0;
constexpr double kPoleMass = 0.1;
constexpr double kTotalMass = kCartMass + kPoleMass;
constexpr double kPoleHalfLength = 0.5;
constexpr double kPoleMassLength = kPoleMass * kPoleHalfLength;
constexpr double kForceScale = 10.0;
constexpr double kPositionLimit = 2.4;
constexpr double kAngleLimit = 0.2095;  // rad, ~12 degrees

// pendulum constants
constexpr double kPendulumDt = 0.05;
constexpr double kPendulumGravity = 10.0;
constexpr double kPendulumMass = 1.0;
constexpr double kMaxAngularVel = 8.0;

// mountaincar constants
constexpr double kMcGravityTerm = 0.0025;
constexpr double kMcMaxSpeed = 0.07;
constexpr double kMcMinPos = -1.2;
constexpr double kMcMaxPos = 0.6;
constexpr double kMcGoalPos = 0.45;

inline std::atomic<long>& clamp_counter() {
  static std::atomic<long> n{0};
  return n;
}

inline double clamp_action(EnvId id, double a, double limit) {
  if (a >= -limit && a <= limit) return a;
  const long seen = clamp_counter().fetch_add(1) + 1;
  if (seen == 1)
    std::cerr << "warning: action outside [-" << limit << ", " << limit << "] for "
              << env_name(id) << ", clamping (reported once)\n";
  return std::clamp(a, -limit, limit);
}

inline void validate_context(EnvId id, Context c) {
  if (!std::isfinite(c.value)) throw std::invalid_argument("non-finite context value");
  if (id == EnvId::cartpole && c.value <= 0.0)
    throw std::invalid_argument("cartpole timestep context must be > 0");
  if (id == EnvId::pendulum && c.value <= 0.0)
    throw std::invalid_argument("pendulum length context must be > 0");
}

}  // namespace envdetail

inline long action_clamp_warnings() { return envdetail::clamp_counter().load(); }

inline EnvState reset(EnvId id, Context context, std::uint64_t rng_seed) {
  envdetail::validate_context(id, context);
  auto rng = make_rng(rng_seed);
  EnvState st;
  st.step_index = 0;
  st.done = false;
  switch (id) {
    case EnvId::cartpole: {
      st.observation = Vector(4);
      for (int i = 0; i < 4; ++i) st.observation(i) = uniform_real(rng, -0.05, 0.05);
      break;
    }
    case EnvId::pendulum: {
      const double theta = uniform_real(rng, -M_PI, M_PI);
      const double theta_dot = uniform_real(rng, -1.0, 1.0);
      st.observation = Vector(3);
      st.observation << std::cos(theta), std::sin(theta), theta_dot;
      break;
    }
    case EnvId::mountaincar: {
      st.observation = Vector(2);
      st.observation << uniform_real(rng, -0.6, -0.4), 0.0;
      break;
    }
  }
  return st;
}

// True terminal condition of the underlying task; horizon truncation excluded.
// Used by the trainer to decide whether to bootstrap past an episode end.
inline bool terminal_observation(EnvId id, const Vector& obs) {
  using namespace envdetail;
  switch (id) {
    case EnvId::cartpole:
      return std::abs(obs(0)) > kPositionLimit || std::abs(obs(2)) > kAngleLimit;
    case EnvId::pendulum:
      return false;
    case EnvId::mountaincar:
      return obs(0) >= kMcGoalPos;
  }
  return false;
}

inline StepResult step(EnvId id, Context context, const EnvState& state,
                       const Vector& action) {
  using namespace envdetail;
  validate_context(id, context);
  if (state.done) throw std::logic_error("step called on a finished episode");
  const EnvSpec spec = env_spec(id);
  if (action.size() != spec.act_dim)
    throw std::invalid_argument("action dimension mismatch");
  const double a = clamp_action(id, action(0), spec.action_limit);

  StepResult out;
  switch (id) {
    case EnvId::cartpole: {
      const double tau = context.value;
      const double x = state.observation(0), x_dot = state.observation(1);
      const double theta = state.observation(2), theta_dot = state.observation(3);
      const double force = kForceScale * a;
      const double cos_t = std::cos(theta), sin_t = std::sin(theta);
      const double temp =
          (force + kPoleMassLength * theta_dot * theta_dot * sin_t) / kTotalMass;
      const double theta_acc =
          (kGravity * sin_t - cos_t * temp) /
          (kPoleHalfLength * (4.0 / 3.0 - kPoleMass * cos_t * cos_t / kTotalMass));
      const double x_acc = temp - kPoleMassLength * theta_acc * cos_t / kTotalMass;
      // plain (explicit) Euler: positions advance with the old velocities
      out.next_observation = Vector(4);
      out.next_observation << x + tau * x_dot, x_dot + tau * x_acc,
          theta + tau * theta_dot, theta_dot + tau * theta_acc;
      out.reward = 1.0;
      out.done = terminal_observation(id, out.next_observation) ||
                 state.step_index + 1 >= spec.horizon;
      break;
    }
    case EnvId::pendulum: {
      const double length = context.value;
      const double theta = std::atan2(state.observation(1), state.observation(0));
      const double theta_dot = state.observation(2);
      const double torque = a;
      out.reward = -(theta * theta + 0.1 * theta_dot * theta_dot +
                     0.001 * torque * torque);
      const double accel =
          3.0 * kPendulumGravity / (2.0 * length) * std::sin(theta) +
          3.0 / (kPendulumMass * length * length) * torque;
      double new_theta_dot = theta_dot + accel * kPendulumDt;
      new_theta_dot = std::clamp(new_theta_dot, -kMaxAngularVel, kMaxAngularVel);
      const double new_theta = theta + new_theta_dot * kPendulumDt;
      out.next_observation = Vector(3);
      out.next_observation << std::cos(new_theta), std::sin(new_theta), new_theta_dot;
      out.done = state.step_index + 1 >= spec.horizon;
      break;
    }
    case EnvId::mountaincar: {
      const double power = context.value;
      const double pos = state.observation(0);
      double vel = state.observation(1);
      vel += a * power - kMcGravityTerm * std::cos(3.0 * pos);
      vel = std::clamp(vel, -kMcMaxSpeed, kMcMaxSpeed);
      double new_pos = pos + vel;
      if (new_pos < kMcMinPos) {
        new_pos = kMcMinPos;
        vel = 0.0;
      }
      new_pos = std::min(new_pos, kMcMaxPos);
      out.next_observation = Vector(2);
      out.next_observation << new_pos, vel;
      const bool goal = new_pos >= kMcGoalPos;
      out.reward = -0.1 * a * a + (goal ? 100.0 : 0.0);
      out.done = goal || state.step_index + 1 >= spec.horizon;
      break;
    }
  }
  return out;
}

inline EnvState advance(EnvId id, const EnvState& state, const StepResult& sr) {
  EnvState next;
  next.observation = sr.next_observation;
  next.step_index = state.step_index + 1;
  next.done = sr.done;
  return next;
}

inline ContextSet context_sets(EnvId id) {
  auto wrap = [](std::vector<double> vals) {
    std::vector<Context> out;
    out.reserve(vals.size());
    for (double v : vals) out.push_back({v});
    return out;
  };
  ContextSet cs;
  switch (id) {
    case EnvId::cartpole:
      cs.train = wrap({0.007, 0.012, 0.021, 0.034, 0.057});
      cs.eval = wrap({0.002, 0.003, 0.006, 0.009, 0.015, 0.026, 0.043, 0.072, 0.120, 0.200});
      cs.default_context = {0.02};
      break;
    case EnvId::pendulum:
      cs.train = wrap({0.07, 0.16, 0.34, 0.73, 1.58});
      cs.eval = wrap({0.01, 0.02, 0.05, 0.1, 0.22, 0.46, 1.0, 2.15, 4.64, 10.00});
      cs.default_context = {1.0};
      break;
    case EnvId::mountaincar:
      cs.train = wrap({-5, -3, -1, 1, 3, 5});
      cs.eval = wrap({-10, -8, -6, -4, -2, 0, 2, 4, 6, 8, 10});
      cs.default_context = {1.0};
      break;
  }
  return cs;
}

// Eval contexts inside the closed hull of the train values are interpolation,
// the rest extrapolation. Together they partition the eval set.
inline std::pair<std::vector<Context>, std::vector<Context>> split_eval(
    const ContextSet& set) {
  if (set.train.empty()) throw std::invalid_argument("split_eval: empty train set");
  double lo = set.train.front().value, hi = set.train.front().value;
  for (const Context& c : set.train) {
    lo = std::min(lo, c.value);
    hi = std::max(hi, c.value);
  }
  std::vector<Context> inter, extra;
  for (const Context& c : set.eval) {
    if (c.value >= lo && c.value <= hi)
      inter.push_back(c);
    else
      extra.push_back(c);
  }
  return {inter, extra};
}

}  // namespace jcpl
