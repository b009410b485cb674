#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "jcpl/context.hpp"
#include "jcpl/trainer.hpp"

using namespace jcpl;

namespace {

Matrix random_window(int rows, int cols, std::mt19937_64& rng) {
  Matrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = uniform_real(rng, -1.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("empty window encodes to the zero latent", "[context]") {
  auto rng = make_rng(1);
  const EncoderHyper hp;
  const Mlp psi = make_encoder(3, 1, hp, rng);
  const Vector l = encode(psi, Matrix(psi.input_dim(), 0));
  REQUIRE(l.size() == 2);
  REQUIRE(l(0) == 0.0);
  REQUIRE(l(1) == 0.0);
}

TEST_CASE("latent dimension comes from the encoder config", "[context]") {
  auto rng = make_rng(2);
  const EncoderHyper hp;
  REQUIRE(hp.latent_dim == 2);
  REQUIRE(hp.window == 20);
  REQUIRE(hp.hidden == std::vector<int>{8, 4});
  const Mlp psi = make_encoder(4, 1, hp, rng);
  REQUIRE(psi.input_dim() == 9);
  REQUIRE(psi.output_dim() == 2);
}

TEST_CASE("a repeated triple encodes like the single triple", "[context]") {
  auto rng = make_rng(3);
  const EncoderHyper hp;
  const Mlp psi = make_encoder(3, 1, hp, rng);
  const Matrix one = random_window(psi.input_dim(), 1, rng);
  Matrix rep(psi.input_dim(), 7);
  for (int j = 0; j < 7; ++j) rep.col(j) = one.col(0);
  const Vector la = encode(psi, one);
  const Vector lb = encode(psi, rep);
  REQUIRE((la - lb).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("encoding is permutation invariant", "[context]") {
  auto rng = make_rng(4);
  const EncoderHyper hp;
  const Mlp psi = make_encoder(4, 1, hp, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix w = random_window(psi.input_dim(), 20, rng);
    std::vector<int> perm(20);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(psi.input_dim(), 20);
    for (int j = 0; j < 20; ++j) shuffled.col(j) = w.col(perm[j]);
    REQUIRE((encode(psi, w) - encode(psi, shuffled)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("batched encoding matches per-window encoding", "[context]") {
  auto rng = make_rng(5);
  const EncoderHyper hp;
  const Mlp psi = make_encoder(3, 1, hp, rng);
  WindowBatch wb;
  const std::vector<int> sizes = {5, 0, 20, 1, 13};
  int total = 0;
  for (int n : sizes) total += n;
  wb.triples = random_window(psi.input_dim(), total, rng);
  wb.offsets = {0};
  for (int n : sizes) wb.offsets.push_back(wb.offsets.back() + n);

  const Matrix latents = encode_batch(psi, wb, nullptr);
  REQUIRE(latents.cols() == static_cast<int>(sizes.size()));
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const Vector single = encode(psi, wb.triples.middleCols(wb.offsets[i], sizes[i]));
    REQUIRE((latents.col(i) - single).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("window gradients flow through the mean aggregation", "[context]") {
  auto rng = make_rng(6);
  const EncoderHyper hp;
  Mlp psi = make_encoder(3, 1, hp, rng);
  WindowBatch wb;
  wb.triples = random_window(psi.input_dim(), 9, rng);
  wb.offsets = {0, 4, 9};
  Matrix d_lat = random_window(2, 2, rng);

  Tape tape;
  encode_batch(psi, wb, &tape);
  MlpGrads grads = zeros_like(psi);
  encode_batch_backward(psi, tape, wb, d_lat, grads);

  auto loss = [&](const Mlp& net) {
    const Matrix lat = encode_batch(net, wb, nullptr);
    return lat.cwiseProduct(d_lat).sum();
  };
  const double h = 1e-6;
  for (int l = 0; l < psi.layers(); ++l) {
    double& p = psi.weights[l](0, 0);
    const double saved = p;
    p = saved + h;
    const double up = loss(psi);
    p = saved - h;
    const double down = loss(psi);
    p = saved;
    const double fd = (up - down) / (2.0 * h);
    REQUIRE(std::abs(fd - grads.weights[l](0, 0)) < 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("zero-weight predictor outputs its bias", "[context]") {
  auto rng = make_rng(7);
  const EncoderHyper hp;
  Mlp dyn = make_predictor(3, 1, hp, rng);
  for (auto& w : dyn.weights) w.setZero();
  for (auto& b : dyn.biases) b.setZero();
  dyn.biases.back()(1) = 0.5;
  Vector s(3), a(1), l(2);
  s << 1.0, -1.0, 0.2;
  a << 0.3;
  l << 0.1, 0.1;
  const Vector pred = predict_next_state(dyn, s, a, l);
  REQUIRE(pred(0) == 0.0);
  REQUIRE(pred(1) == 0.5);
  REQUIRE(pred(2) == 0.0);
}

TEST_CASE("prediction is deterministic", "[context]") {
  auto rng = make_rng(8);
  const EncoderHyper hp;
  const Mlp dyn = make_predictor(4, 1, hp, rng);
  Vector s(4), a(1), l(2);
  s << 0.1, 0.2, 0.3, 0.4;
  a << -0.5;
  l << 1.0, -1.0;
  REQUIRE(predict_next_state(dyn, s, a, l) == predict_next_state(dyn, s, a, l));
}

TEST_CASE("augmentation dimensions follow the conditioning mode", "[context]") {
  Vector s4 = Vector::Zero(4), s3 = Vector::Zero(3);
  Vector latent(2);
  latent << 0.5, -0.5;

  const Vector hidden = augment_observation(ConditioningMode::hidden, s4, 0.02, latent);
  REQUIRE(hidden.size() == 4);
  REQUIRE(hidden == s4);

  const Vector expl =
      augment_observation(ConditioningMode::explicit_context, s4, 0.02, latent);
  REQUIRE(expl.size() == 5);
  REQUIRE(expl(4) == 0.02);

  const Vector joint = augment_observation(ConditioningMode::jcpl, s3, 1.0, latent);
  REQUIRE(joint.size() == 5);
  REQUIRE(joint(3) == 0.5);
  REQUIRE(joint(4) == -0.5);

  const Vector pred =
      augment_observation(ConditioningMode::predictive_id, s3, 1.0, latent);
  REQUIRE(pred.size() == 5);

  REQUIRE(augmented_dim(ConditioningMode::hidden, 4, 2) == 4);
  REQUIRE(augmented_dim(ConditioningMode::explicit_context, 4, 2) == 5);
  REQUIRE(augmented_dim(ConditioningMode::jcpl, 3, 2) == 5);
  REQUIRE_THROWS_AS(augment_observation(ConditioningMode::jcpl, s3, 1.0, Vector()),
                    std::invalid_argument);
}

TEST_CASE("mode names parse and print consistently", "[context]") {
  for (const char* name : {"hidden", "explicit", "predictive_id", "jcpl"})
    REQUIRE(mode_name(parse_mode(name)) == std::string(name));
  REQUIRE_THROWS_AS(parse_mode("implicit"), std::invalid_argument);
  REQUIRE(mode_uses_encoder(ConditioningMode::jcpl));
  REQUIRE(mode_uses_encoder(ConditioningMode::predictive_id));
  REQUIRE_FALSE(mode_uses_encoder(ConditioningMode::hidden));
  REQUIRE_FALSE(mode_uses_encoder(ConditioningMode::explicit_context));
}

TEST_CASE("predictive pretraining reduces the prediction loss", "[context]") {
  auto rng = make_rng(9);
  EncoderHyper hp;
  hp.pretrain_steps_per_context = 1500;
  hp.pretrain_epochs = 25;
  hp.pretrain_batch = 128;
  const std::vector<Context> contexts = {{0.34}, {1.0}, {1.58}};
  const auto pools = trainerdetail::collect_pretrain_pools(
      EnvId::pendulum, contexts, hp.pretrain_steps_per_context, rng);
  Mlp psi = make_encoder(3, 1, hp, rng);
  Mlp dyn = make_predictor(3, 1, hp, rng);
  const auto result = train_predictive_encoder(psi, dyn, pools, hp, rng);
  REQUIRE(result.final_loss < result.initial_loss);
  REQUIRE(std::isfinite(result.final_loss));
}

TEST_CASE("trained predictor beats the identity predictor", "[context]") {
  auto rng = make_rng(10);
  EncoderHyper hp;
  hp.pretrain_steps_per_context = 3000;
  hp.pretrain_epochs = 60;
  hp.pretrain_batch = 128;
  const std::vector<Context> contexts = {{1.0}};
  auto pools = trainerdetail::collect_pretrain_pools(EnvId::pendulum, contexts,
                                                     hp.pretrain_steps_per_context, rng);
  Mlp psi = make_encoder(3, 1, hp, rng);
  Mlp dyn = make_predictor(3, 1, hp, rng);
  train_predictive_encoder(psi, dyn, pools, hp, rng);

  // window from the training pool, targets from held-out transitions
  Matrix triples(psi.input_dim(), 20);
  for (int j = 0; j < 20; ++j) {
    triples.col(j).segment(0, 3) = pools.front().s.col(j);
    triples.col(j).segment(3, 1) = pools.front().a.col(j);
    triples.col(j).segment(4, 3) = pools.front().sp.col(j);
  }
  const Vector latent = encode(psi, triples);

  const auto held =
      trainerdetail::collect_pretrain_pools(EnvId::pendulum, contexts, 500, rng);
  const ContextPool& pool = held.front();
  double model_err = 0.0, identity_err = 0.0;
  for (int i = 0; i < pool.count; ++i) {
    const Vector pred = predict_next_state(dyn, pool.s.col(i), pool.a.col(i), latent);
    model_err += (pred - pool.sp.col(i)).squaredNorm();
    identity_err += (pool.s.col(i) - pool.sp.col(i)).squaredNorm();
  }
  REQUIRE(model_err < identity_err);
}

TEST_CASE("pretraining rejects an empty dataset", "[context]") {
  auto rng = make_rng(11);
  EncoderHyper hp;
  Mlp psi = make_encoder(3, 1, hp, rng);
  Mlp dyn = make_predictor(3, 1, hp, rng);
  REQUIRE_THROWS_AS(train_predictive_encoder(psi, dyn, {}, hp, rng),
                    std::invalid_argument);
}
