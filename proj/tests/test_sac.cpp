#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "jcpl/context.hpp"
#include "jcpl/sac.hpp"

using namespace jcpl;

namespace {

SacHyper small_hyper() {
  SacHyper hp;
  hp.hidden = {16, 16};
  return hp;
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = scale * uniform_real(rng, -1.0, 1.0);
  return m;
}

// log pi(a) computed directly from the squashed-Gaussian density, as a
// function of the final action (independent route from the sampler).
double log_density_of_action(double a, double mean, double log_std, double limit) {
  const double u = std::atanh(a / limit);
  const double sigma = std::exp(log_std);
  const double z = (u - mean) / sigma;
  const double log_gauss = -0.5 * z * z - log_std - 0.5 * std::log(2.0 * M_PI);
  const double log_jacobian = std::log(1.0 - std::tanh(u) * std::tanh(u)) + std::log(limit);
  return log_gauss - log_jacobian;
}

}  // namespace

TEST_CASE("zero-mean actor gives the zero action deterministically", "[sac]") {
  auto rng = make_rng(1);
  SacAgent ag = make_sac(3, 1, 2.0, small_hyper(), rng);
  for (auto& w : ag.actor.weights) w.setZero();
  for (auto& b : ag.actor.biases) b.setZero();
  Vector obs = Vector::Ones(3);
  const ActionSample s = sample_action(ag, obs, true, rng);
  REQUIRE(s.action(0) == 0.0);
  const ActionSample s2 = sample_action(ag, obs, true, rng);
  REQUIRE(s.action == s2.action);
}

TEST_CASE("squashed density integrates to one and matches sampler log-probs", "[sac]") {
  auto rng = make_rng(2);
  SacAgent ag = make_sac(4, 1, 2.0, small_hyper(), rng);
  Vector obs = random_matrix(4, 1, rng).col(0);

  ActorBatchSample head;
  actor_sample_batch(ag, Matrix(obs), nullptr, false, head);
  const double mean = head.mean(0, 0), log_std = head.log_std(0, 0);

  // Simpson quadrature of exp(log pi(a)) over the open action box
  const int n = 4000;
  const double lim = ag.action_limit * (1.0 - 1e-9);
  const double dx = 2.0 * lim / n;
  double integral = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double a = -lim + i * dx;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    integral += w * std::exp(log_density_of_action(a, mean, log_std, ag.action_limit));
  }
  integral *= dx / 3.0;
  REQUIRE(std::abs(integral - 1.0) < 1e-3);

  // sampled log-prob agrees with the density evaluated at the sampled action
  for (int k = 0; k < 10; ++k) {
    const ActionSample s = sample_action(ag, obs, false, rng);
    const double direct =
        log_density_of_action(s.action(0), mean, log_std, ag.action_limit);
    REQUIRE(std::abs(direct - s.log_prob) < 1e-6);
  }
}

TEST_CASE("critic target handles terminal and undiscounted cases", "[sac]") {
  auto rng = make_rng(3);
  SacAgent ag = make_sac(3, 1, 1.0, small_hyper(), rng);
  Vector next = random_matrix(3, 1, rng).col(0);

  REQUIRE(critic_target(ag, 2.5, next, 1.0, rng) == 2.5);

  SacHyper hp0 = small_hyper();
  hp0.discount = 0.0;
  SacAgent ag0 = make_sac(3, 1, 1.0, hp0, rng);
  REQUIRE(critic_target(ag0, -1.25, next, 0.0, rng) == -1.25);
}

TEST_CASE("critic target matches a straight-line oracle", "[sac]") {
  auto rng = make_rng(4);
  SacAgent ag = make_sac(3, 1, 2.0, small_hyper(), rng);
  ag.log_alpha = std::log(0.17);
  Vector next(3);
  next << 0.3, -0.8, 1.1;
  const double r = 1.0, done = 0.0;

  auto rng_a = make_rng(777);
  const double got = critic_target(ag, r, next, done, rng_a);

  // oracle: replay the same noise draw, then evaluate every piece by hand
  auto rng_b = make_rng(777);
  const double eps = standard_normal(rng_b);
  auto manual_forward = [](const Mlp& net, Vector x) {
    for (int l = 0; l < net.layers(); ++l) {
      Vector z = net.weights[l] * x + net.biases[l];
      if (l + 1 < net.layers())
        for (int i = 0; i < z.size(); ++i) z(i) = std::max(0.0, z(i));
      x = z;
    }
    return x;
  };
  const Vector headv = manual_forward(ag.actor, next);
  const double mean = headv(0);
  const double log_std = std::clamp(headv(1), -20.0, 2.0);
  const double u = mean + std::exp(log_std) * eps;
  const double action = 2.0 * std::tanh(u);
  const double log_prob = -0.5 * eps * eps - log_std - 0.5 * std::log(2.0 * M_PI) -
                          std::log(2.0) -
                          std::log(1.0 - std::tanh(u) * std::tanh(u));
  Vector xq(4);
  xq << next, action;
  const double q1 = manual_forward(ag.q1_target, xq)(0);
  const double q2 = manual_forward(ag.q2_target, xq)(0);
  const double expected =
      r + 0.99 * (1.0 - done) * (std::min(q1, q2) - 0.17 * log_prob);
  REQUIRE(std::abs(got - expected) < 1e-9);
}

TEST_CASE("polyak update follows tau * src + (1 - tau) * dst per parameter", "[sac]") {
  auto rng = make_rng(5);
  Mlp src = make_mlp({2, 3, 1}, rng);
  Mlp dst = make_mlp({2, 3, 1}, rng);
  const Mlp dst_before = dst;
  polyak_update(src, dst, 0.005);
  for (int l = 0; l < src.layers(); ++l) {
    const Matrix expect = 0.005 * src.weights[l] + 0.995 * dst_before.weights[l];
    REQUIRE((dst.weights[l] - expect).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("targets equal critics at initialization", "[sac]") {
  auto rng = make_rng(6);
  const SacAgent ag = make_sac(5, 1, 1.0, small_hyper(), rng);
  REQUIRE(param_hash(ag.q1) == param_hash(ag.q1_target));
  REQUIRE(param_hash(ag.q2) == param_hash(ag.q2_target));
}

TEST_CASE("targets stay on the polyak trace under monotone critic drift", "[sac]") {
  auto rng = make_rng(7);
  Mlp critic = make_mlp({2, 4, 1}, rng);
  Mlp target = critic;
  const Mlp initial = target;
  for (int k = 0; k < 50; ++k) {
    for (auto& w : critic.weights) w.array() += 0.01;  // monotone drift
    polyak_update(critic, target, 0.005);
    for (int l = 0; l < critic.layers(); ++l) {
      for (int i = 0; i < critic.weights[l].size(); ++i) {
        const double lo = initial.weights[l](i);
        const double hi = critic.weights[l](i);
        REQUIRE(target.weights[l](i) >= lo - 1e-12);
        REQUIRE(target.weights[l](i) <= hi + 1e-12);
      }
    }
  }
}

TEST_CASE("update with zero learning rates leaves all parameters unchanged", "[sac]") {
  auto rng = make_rng(8);
  SacHyper hp = small_hyper();
  hp.actor_lr = 0.0;
  hp.critic_lr = 0.0;
  hp.temperature_lr = 0.0;
  hp.polyak = 0.0;  // keep targets put as well
  SacAgent ag = make_sac(3, 1, 1.0, hp, rng);
  const auto h_actor = param_hash(ag.actor);
  const auto h_q1 = param_hash(ag.q1);
  const auto h_q2 = param_hash(ag.q2);
  const auto h_t1 = param_hash(ag.q1_target);
  const double alpha_before = ag.log_alpha;

  SacBatch batch;
  const int b = 16;
  batch.obs = random_matrix(3, b, rng);
  batch.act = random_matrix(1, b, rng);
  batch.next_obs = random_matrix(3, b, rng);
  batch.rew = random_matrix(1, b, rng).row(0).transpose();
  batch.done = Vector::Zero(b);
  sac_update(ag, batch, rng);
  sac_update(ag, batch, rng);

  REQUIRE(param_hash(ag.actor) == h_actor);
  REQUIRE(param_hash(ag.q1) == h_q1);
  REQUIRE(param_hash(ag.q2) == h_q2);
  REQUIRE(param_hash(ag.q1_target) == h_t1);
  REQUIRE(ag.log_alpha == alpha_before);
}

TEST_CASE("temperature rises while log-probs exceed the entropy target", "[sac]") {
  auto rng = make_rng(9);
  SacHyper hp = small_hyper();
  hp.actor_lr = 0.0;
  hp.critic_lr = 0.0;
  hp.temperature_lr = 1e-2;
  hp.policy_interval = 1;
  SacAgent ag = make_sac(3, 1, 1.0, hp, rng);
  // pin the policy near-deterministic: high density at the sample
  ag.actor.biases.back()(1) = -5.0;
  const double alpha_before = ag.alpha();

  SacBatch batch;
  const int b = 32;
  batch.obs = random_matrix(3, b, rng, 0.1);
  batch.act = random_matrix(1, b, rng, 0.5);
  batch.next_obs = random_matrix(3, b, rng, 0.1);
  batch.rew = Vector::Zero(b);
  batch.done = Vector::Zero(b);
  double last_temp_loss = 0.0;
  for (int k = 0; k < 20; ++k) last_temp_loss = sac_update(ag, batch, rng).temperature_loss;
  REQUIRE(ag.alpha() > alpha_before);
  REQUIRE(last_temp_loss < 0.0);  // gradient pushes log_alpha up
}

TEST_CASE("actor loss gradients match finite differences", "[sac]") {
  auto rng = make_rng(10);
  SacHyper hp = small_hyper();
  SacAgent ag = make_sac(4, 1, 2.0, hp, rng);
  ag.log_alpha = std::log(0.3);
  const int b = 6;
  const Matrix obs = random_matrix(4, b, rng);
  Matrix eps = random_matrix(1, b, rng);

  const ActorLoss al = actor_loss(ag, obs, eps, true, true);

  const double h = 1e-6;
  // parameter gradients, a few indices in every layer
  for (int l = 0; l < ag.actor.layers(); ++l) {
    for (int idx : {0, 1}) {
      double& p = ag.actor.weights[l](idx, 0);
      const double saved = p;
      p = saved + h;
      const double up = actor_loss(ag, obs, eps, false, false).loss;
      p = saved - h;
      const double down = actor_loss(ag, obs, eps, false, false).loss;
      p = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = al.actor_grads.weights[l](idx, 0);
      REQUIRE(std::abs(fd - an) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
  // observation gradients (the path an upstream encoder would consume)
  Matrix obs_pert = obs;
  for (int j = 0; j < b; ++j) {
    for (int i = 0; i < 4; ++i) {
      const double saved = obs_pert(i, j);
      obs_pert(i, j) = saved + h;
      const double up = actor_loss(ag, obs_pert, eps, false, false).loss;
      obs_pert(i, j) = saved - h;
      const double down = actor_loss(ag, obs_pert, eps, false, false).loss;
      obs_pert(i, j) = saved;
      const double fd = (up - down) / (2.0 * h);
      REQUIRE(std::abs(fd - al.d_obs(i, j)) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("actor loss gradients reach an upstream encoder correctly", "[sac]") {
  auto rng = make_rng(11);
  SacHyper hp = small_hyper();
  const int obs_dim = 3, latent_dim = 2;
  SacAgent ag = make_sac(obs_dim + latent_dim, 1, 1.0, hp, rng);
  EncoderHyper ehp;
  Mlp psi = make_encoder(obs_dim, 1, ehp, rng);

  const int b = 4;
  WindowBatch wb;
  wb.triples = random_matrix(psi.input_dim(), 3 * b, rng);
  wb.offsets = {0, 3, 6, 9, 12};
  const Matrix base_obs = random_matrix(obs_dim, b, rng);
  const Matrix eps = random_matrix(1, b, rng);

  auto compose_loss = [&](const Mlp& enc) {
    const Matrix latents = encode_batch(enc, wb, nullptr);
    Matrix aug(obs_dim + latent_dim, b);
    aug << base_obs, latents;
    return actor_loss(ag, aug, eps, false, false).loss;
  };

  Tape tape;
  const Matrix latents = encode_batch(psi, wb, &tape);
  Matrix aug(obs_dim + latent_dim, b);
  aug << base_obs, latents;
  const ActorLoss al = actor_loss(ag, aug, eps, true, true);
  MlpGrads psi_grads = zeros_like(psi);
  encode_batch_backward(psi, tape, wb, al.d_obs.bottomRows(latent_dim), psi_grads);

  const double h = 1e-6;
  for (int l = 0; l < psi.layers(); ++l) {
    for (int idx : {0, 1}) {
      double& p = psi.weights[l](idx % psi.weights[l].rows(), 0);
      const double saved = p;
      p = saved + h;
      const double up = compose_loss(psi);
      p = saved - h;
      const double down = compose_loss(psi);
      p = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an =
          psi_grads.weights[l](idx % psi_grads.weights[l].rows(), 0);
      REQUIRE(std::abs(fd - an) < 1e-5 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("table defaults are wired into the agent", "[sac]") {
  const SacHyper hp;
  REQUIRE(hp.discount == 0.99);
  REQUIRE(hp.polyak == 0.005);
  REQUIRE(hp.batch_size == 256);
  REQUIRE(hp.learning_starts == 5000);
  REQUIRE(hp.total_steps == 30000);
  REQUIRE(hp.actor_lr == 3e-4);
  REQUIRE(hp.critic_lr == 1e-3);
  REQUIRE(hp.policy_interval == 2);
  REQUIRE(hp.target_interval == 1);
  REQUIRE(hp.target_entropy == -1.0);
  REQUIRE(hp.hidden == std::vector<int>{256, 256});
}
