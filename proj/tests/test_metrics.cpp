#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <memory>

#include "ordlab/metrics.hpp"

using namespace ordlab;

namespace {

RegistryPtr two_layer_registry() {
  auto reg = std::make_shared<SegmentRegistry>();
  reg->add("w", 2, 2);
  reg->add("b", 1, 2);
  return reg;
}

RegistryPtr flat_registry(std::size_t n) {
  auto reg = std::make_shared<SegmentRegistry>();
  reg->add("x", 1, n);
  return reg;
}

}  // namespace

TEST_CASE("grad norms: per-layer norms recombine to the total") {
  auto reg = two_layer_registry();
  ParameterVector g(reg);
  double vals[] = {1.0, -2.0, 3.0, -4.0, 5.0, -6.0};
  for (std::size_t i = 0; i < g.size(); ++i) g.flat()[i] = vals[i];
  auto nm = grad_norm_metrics(g);
  double sq = 0.0;
  for (const auto& [name, n] : nm.per_layer) sq += n * n;
  CHECK(std::sqrt(sq) == doctest::Approx(nm.total_norm).epsilon(1e-14));
  CHECK(nm.max_component == 6.0);
  CHECK(nm.mean_component == doctest::Approx(21.0 / 6.0));
  CHECK(nm.per_layer.at("b") == doctest::Approx(std::sqrt(25.0 + 36.0)));
}

TEST_CASE("consecutive cossim: parallel, orthogonal, zero") {
  auto reg = flat_registry(2);
  ParameterVector a(reg), b(reg), z(reg);
  a.flat()[0] = 2.0;
  b.flat()[0] = 1.0;
  auto parallel = consecutive_cossim(a, b);
  REQUIRE(parallel.has_value());
  CHECK(parallel->cos_sim == doctest::Approx(1.0));
  CHECK(parallel->angle_degrees == doctest::Approx(0.0));
  b.flat()[0] = 0.0;
  b.flat()[1] = 3.0;
  auto ortho = consecutive_cossim(a, b);
  REQUIRE(ortho.has_value());
  CHECK(ortho->cos_sim == doctest::Approx(0.0));
  CHECK(ortho->angle_degrees == doctest::Approx(90.0));
  CHECK(!consecutive_cossim(a, z).has_value());
}

TEST_CASE("singular values of a diagonal matrix") {
  MatrixRM m = MatrixRM::Zero(3, 2);
  m(0, 0) = 3.0;
  m(1, 1) = 4.0;
  auto sv = singular_values(m);
  REQUIRE(sv.size() == 2);
  CHECK(sv[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(sv[1] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("effective rank of an identity-like spectrum") {
  auto reg = two_layer_registry();
  ParameterVector theta(reg), grad(reg);
  // w = I: both singular values 1, effective rank (1+1)^2/(1+1) = 2
  theta.matrix("w").setIdentity();
  auto wt = weight_tracking(theta, grad);
  CHECK(wt.layers.at("w").effective_rank.value() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(wt.layers.at("w").top_sv.value() == doctest::Approx(1.0));
  CHECK(!wt.layers.at("w").grad_weight_align.has_value());  // zero grad
  CHECK(wt.layers.at("b").weight_norm == 0.0);
  CHECK(wt.total_weight_norm == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("parameter delta") {
  auto reg = flat_registry(2);
  ParameterVector now(reg), before(reg);
  before.flat()[0] = 3.0;
  before.flat()[1] = 4.0;
  now.flat()[0] = 3.0;
  now.flat()[1] = 6.0;
  auto pd = parameter_delta(now, before);
  CHECK(pd.absolute_delta == doctest::Approx(2.0));
  CHECK(pd.relative_delta.value() == doctest::Approx(2.0 / 5.0));
  CHECK(pd.param_norm == doctest::Approx(std::sqrt(45.0)));
  ParameterVector zero(reg);
  CHECK(!parameter_delta(now, zero).relative_delta.has_value());
}

TEST_CASE("path tracker: straight line is fully efficient, backtracking is not") {
  auto reg = flat_registry(1);
  ParameterVector x(reg);
  PathTracker t;
  t.reset(x);
  x.flat()[0] = 1.0;
  auto m1 = t.update(x);
  CHECK(m1.path_efficiency == doctest::Approx(1.0));
  x.flat()[0] = 2.0;
  auto m2 = t.update(x);
  CHECK(m2.path_length == doctest::Approx(2.0));
  CHECK(m2.path_efficiency == doctest::Approx(1.0));
  x.flat()[0] = 0.0;  // walk all the way back
  auto m3 = t.update(x);
  CHECK(m3.path_length == doctest::Approx(4.0));
  CHECK(m3.net_displacement == doctest::Approx(0.0));
  CHECK(m3.path_efficiency == doctest::Approx(0.0));
}

TEST_CASE("path tracker restore continues the accumulation") {
  auto reg = flat_registry(1);
  ParameterVector x(reg);
  PathTracker t;
  t.reset(x);
  x.flat()[0] = 1.0;
  t.update(x);
  PathTracker u;
  u.restore(t.origin(), t.previous(), t.accumulated_length());
  x.flat()[0] = 3.0;
  auto m = u.update(x);
  CHECK(m.path_length == doctest::Approx(3.0));
  CHECK(m.net_displacement == doctest::Approx(3.0));
}

TEST_CASE("gradient window evicts beyond capacity") {
  auto reg = flat_registry(3);
  GradientWindow w(4);
  ParameterVector g(reg);
  for (int i = 0; i < 6; ++i) {
    g.flat()[0] = static_cast<double>(i);
    w.push(g, static_cast<std::uint64_t>(i));
  }
  CHECK(w.size() == 4);
  CHECK(w.entries().front().step == 2);
  CHECK(w.entries().back().step == 5);
}

TEST_CASE("batch dynamics: orthonormal gradients give efficiency 1/sqrt(w)") {
  auto reg = flat_registry(8);
  GradientWindow w(8);
  for (std::size_t i = 0; i < 8; ++i) {
    ParameterVector g(reg);
    g.flat()[i] = 1.0;
    w.push(g, i);
  }
  auto bd = batch_dynamics(w);
  CHECK(bd.lag.at(1) == doctest::Approx(0.0).epsilon(1e-7));
  CHECK(bd.efficiency.at(2) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-7));
  CHECK(bd.efficiency.at(5) == doctest::Approx(1.0 / std::sqrt(5.0)).epsilon(1e-7));
  CHECK(bd.lag.count(10) == 0);  // not computable with 8 entries
  CHECK(bd.efficiency.count(10) == 0);
  // 8 equal eigenvalues: SV-entropy effective rank is exactly 8
  CHECK(bd.effective_rank.value() == doctest::Approx(8.0).epsilon(1e-6));
  CHECK(bd.top1_variance.value() == doctest::Approx(1.0 / 8.0).epsilon(1e-6));
}

TEST_CASE("batch dynamics: identical gradients are perfectly aligned") {
  auto reg = flat_registry(4);
  GradientWindow w(6);
  ParameterVector g(reg);
  g.flat()[0] = 1.0;
  g.flat()[2] = -2.0;
  for (int i = 0; i < 6; ++i) w.push(g, static_cast<std::uint64_t>(i));
  auto bd = batch_dynamics(w);
  CHECK(bd.lag.at(1) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(bd.lag.at(5) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(bd.efficiency.at(5) == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(bd.effective_rank.value() == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("solution projection flips raw gradients only") {
  auto reg = flat_registry(2);
  ParameterVector theta(reg), ref(reg), g(reg);
  ref.flat()[0] = 1.0;  // target direction (1, 0) from theta = 0
  g.flat()[0] = -2.0;   // descending on g moves toward +x
  auto down = projection_to_solution(g, theta, ref, /*descent=*/true);
  CHECK(down.overall.value() == doctest::Approx(1.0));
  auto raw = projection_to_solution(g, theta, ref, /*descent=*/false);
  CHECK(raw.overall.value() == doctest::Approx(-1.0));
  CHECK(down.distance_to_reference == doctest::Approx(1.0));
  CHECK(down.per_layer.at("x") == doctest::Approx(1.0));
}

TEST_CASE("adam update vector matches a fresh optimizer's first step") {
  auto reg = flat_registry(3);
  AdamWConfig cfg;
  cfg.weight_decay = 0.3;  // must not appear in the update vector
  AdamW opt(reg, cfg);
  ParameterVector g(reg);
  g.flat()[0] = 0.5;
  g.flat()[1] = -0.1;
  const double lr = 1e-2;
  ParameterVector u = adam_update_vector(opt, g, lr);
  // t=1 bias correction makes the step lr * g / (|g| + eps) componentwise
  for (std::size_t i = 0; i < 3; ++i) {
    const double gi = g.flat()[i];
    const double expect = gi == 0.0 ? 0.0 : lr * gi / (std::abs(gi) + cfg.eps);
    CHECK(u.flat()[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(opt.t() == 0);  // introspection must not advance the optimizer
}

TEST_CASE("adam introspection basics and solution tier") {
  auto reg = flat_registry(2);
  AdamW opt(reg, AdamWConfig{});
  ParameterVector theta(reg), ref(reg), g(reg);
  ref.flat()[0] = 1.0;
  g.flat()[0] = -1.0;
  const double lr = 1e-3;
  ParameterVector u = adam_update_vector(opt, g, lr);
  auto ai = adam_introspect(opt, g, u, lr, theta, &ref);
  CHECK(!ai.momentum_grad_cossim.has_value());  // m is still zero
  CHECK(ai.amplification_ratio.value() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(ai.update_deflection.value() == doctest::Approx(0.0).epsilon(1e-9));
  // raw gradient points away from the reference; the update follows it
  CHECK(ai.grad_solution_cossim.value() == doctest::Approx(-1.0));
  CHECK(ai.update_solution_cossim.value() == doctest::Approx(-1.0));
  CHECK(ai.optimizer_solution_amplification.value() == doctest::Approx(0.0).epsilon(1e-9));
}
