#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "ordlab/model.hpp"

using namespace ordlab;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.p = 7;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.d_ff = 16;
  cfg.n_layers = 1;
  cfg.dropout_rate = 0.1;
  cfg.precision = Precision::kF64;
  return cfg;
}

std::vector<ExamplePair> tiny_batch(std::uint32_t p) {
  std::vector<ExamplePair> batch;
  for (std::uint32_t a = 0; a < p; ++a) {
    std::uint32_t b = (3 * a + 1) % p;
    batch.push_back({a, b, (a + b) % p});
  }
  return batch;
}

// max relative error of the analytic gradient against central differences
double fd_check(const Model& model, const ParameterVector& theta,
                std::span<const ExamplePair> batch, const ForwardMode& mode) {
  auto [loss, grad] = model.loss_and_grad(theta, batch, mode);
  CHECK(std::isfinite(loss));
  const double eps = 1e-5;
  double worst = 0.0;
  ParameterVector probe = theta;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    probe.flat()[i] = theta.flat()[i] + eps;
    double up = model.loss(probe, batch, mode);
    probe.flat()[i] = theta.flat()[i] - eps;
    double down = model.loss(probe, batch, mode);
    probe.flat()[i] = theta.flat()[i];
    double fd = (up - down) / (2 * eps);
    double denom = std::max({std::abs(fd), std::abs(grad.flat()[i]), 1e-4});
    worst = std::max(worst, std::abs(fd - grad.flat()[i]) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("registry layout and parameter count") {
  ModelConfig cfg = tiny_config();
  cfg.n_layers = 2;
  auto reg = make_registry(cfg);
  // embeddings + decoder
  std::size_t expect = 7 * 8 + 2 * 8 + 7 * 8 + 7;
  // per layer: 2 LN pairs + attention + FFN
  expect += 2 * (4 * 8 + (3 * 8) * 8 + 3 * 8 + 8 * 8 + 8 + 16 * 8 + 16 + 8 * 16 + 8);
  CHECK(reg->total_size() == expect);
  CHECK(reg->at("layers.1.attn.in_proj_weight").rows == 24);
  CHECK(reg->at("layers.0.linear1.weight").rows == 16);
  CHECK(reg->at("decoder.weight").cols == 8);
  CHECK(reg->segments().front().name == "token_embedding");
  CHECK(reg->segments().back().name == "decoder.bias");
}

TEST_CASE("init is deterministic, bounded, with unit layer norms") {
  Model model(tiny_config());
  auto a = model.init_params(123);
  auto b = model.init_params(123);
  CHECK(a == b);
  auto c = model.init_params(124);
  CHECK_FALSE(a == c);

  const double bound = 1.0 / std::sqrt(8.0);
  for (double v : a.segment("token_embedding")) {
    CHECK(v >= -bound);
    CHECK(v <= bound);
  }
  for (double v : a.segment("layers.0.norm1.weight")) CHECK(v == 1.0);
  for (double v : a.segment("layers.0.norm2.bias")) CHECK(v == 0.0);
}

TEST_CASE("analytic gradient matches finite differences (eval mode)") {
  Model model(tiny_config());
  auto theta = model.init_params(7);
  auto batch = tiny_batch(7);
  CHECK(fd_check(model, theta, batch, ForwardMode::eval()) < 1e-6);
}

TEST_CASE("analytic gradient matches finite differences (train mode, dropout on)") {
  Model model(tiny_config());
  auto theta = model.init_params(11);
  auto batch = tiny_batch(7);
  // masks are a pure function of (seed, epoch, step), so the dropped loss is
  // still deterministic and differentiable almost everywhere
  CHECK(fd_check(model, theta, batch, ForwardMode::train_at(99, 3, 17)) < 1e-6);
}

TEST_CASE("gradient check on a 2-layer model") {
  ModelConfig cfg = tiny_config();
  cfg.n_layers = 2;
  Model model(cfg);
  auto theta = model.init_params(5);
  auto batch = tiny_batch(7);
  CHECK(fd_check(model, theta, batch, ForwardMode::eval()) < 1e-6);
}

TEST_CASE("eval path is dropout-free and step-invariant") {
  Model model(tiny_config());
  auto theta = model.init_params(3);
  auto batch = tiny_batch(7);
  double l1 = model.loss(theta, batch, ForwardMode::eval());
  ForwardMode other = ForwardMode::eval();
  other.epoch = 55;
  other.step = 4;
  CHECK(model.loss(theta, batch, other) == l1);
  // train mode at a different step gives a different sampled loss
  double lt = model.loss(theta, batch, ForwardMode::train_at(1, 0, 0));
  CHECK(model.loss(theta, batch, ForwardMode::train_at(1, 0, 1)) != lt);
  // same step replays the same masks
  CHECK(model.loss(theta, batch, ForwardMode::train_at(1, 0, 0)) == lt);
}

TEST_CASE("fresh init predicts near log(p) loss and chance accuracy") {
  ModelConfig cfg = tiny_config();
  cfg.p = 97;
  Model model(cfg);
  auto theta = model.init_params(1);
  TaskSpec spec{97, 500, 100, 2};
  Dataset ds = generate_dataset(spec);
  double l = model.loss(theta, ds.train, ForwardMode::eval());
  CHECK(l == doctest::Approx(std::log(97.0)).epsilon(0.05));
  double acc = model.accuracy(theta, ds.test);
  CHECK(acc < 0.15);
}

TEST_CASE("f32 path tracks the f64 path") {
  ModelConfig cfg = tiny_config();
  Model m64(cfg);
  cfg.precision = Precision::kF32;
  Model m32(cfg);
  auto theta = m64.init_params(9);
  auto batch = tiny_batch(7);

  double l64 = m64.loss(theta, batch, ForwardMode::eval());
  double l32 = m32.loss(theta, batch, ForwardMode::eval());
  CHECK(l32 == doctest::Approx(l64).epsilon(1e-4));

  auto [lg64, g64] = m64.loss_and_grad(theta, batch, ForwardMode::eval());
  auto [lg32, g32] = m32.loss_and_grad(theta, batch, ForwardMode::eval());
  CHECK(cosine(g64, g32) > 1.0 - 1e-6);
  CHECK(g32.norm() == doctest::Approx(g64.norm()).epsilon(1e-3));
}

TEST_CASE("accuracy tie-break picks the lowest class index") {
  ModelConfig cfg = tiny_config();
  Model model(cfg);
  ParameterVector theta(model.registry());  // all zeros: every logit ties at 0
  std::vector<ExamplePair> ex{{2, 5, 0}, {1, 1, 2}};
  CHECK(model.accuracy(theta, ex) == doctest::Approx(0.5));
}

TEST_CASE("non-finite activations raise NumericError naming the layer") {
  Model model(tiny_config());
  auto theta = model.init_params(2);
  theta.segment("layers.0.linear2.weight")[0] = std::numeric_limits<double>::infinity();
  auto batch = tiny_batch(7);
  CHECK_THROWS_AS(model.loss(theta, batch, ForwardMode::eval()), NumericError);
  try {
    model.loss(theta, batch, ForwardMode::eval());
  } catch (const NumericError& e) {
    CHECK(e.layer == "layers.0");
  }
}

TEST_CASE("config validation") {
  ModelConfig cfg = tiny_config();
  cfg.n_heads = 3;  // 8 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = tiny_config();
  cfg.dropout_rate = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  CHECK(precision_from_string("f32") == Precision::kF32);
  CHECK(to_string(Precision::kF64) == "f64");
  CHECK_THROWS_AS(precision_from_string("bf16"), std::invalid_argument);
}
