#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "heparl/mlp.hpp"

using namespace heparl;

namespace {

Batch random_batch(std::mt19937_64& rng, int n, int in, int out) {
  Batch b;
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < in; ++i) b.states.push_back(rand_uniform(rng, 0.0, 4.0));
    b.actions.push_back(static_cast<int>(rng() % static_cast<unsigned>(out)));
    b.targets.push_back(rand_uniform(rng, -15.0, 5.0));
  }
  return b;
}

// 1-wide network where every layer is scalar; positive inputs keep both relus
// in their linear region.
MlpParams scalar_net(double w1, double b1, double w2, double b2, double w3, double b3) {
  MlpParams p;
  p.in = p.hidden = p.out = 1;
  p.theta = {w1, b1, w2, b2, w3, b3};
  return p;
}

}  // namespace

TEST_CASE("forward basics") {
  SECTION("all-zero weights return the output bias") {
    MlpParams p = init_mlp(6, 8, 5, 3);
    std::fill(p.theta.begin(), p.theta.end(), 0.0);
    p.theta[static_cast<size_t>(p.off_b3()) + 2] = 7.5;
    const auto y = forward(p, {1, 2, 3, 4, 5, 6, /* second row: */ 0, 0, 1, 1, 2, 2});
    REQUIRE(y.size() == 10);
    CHECK(y[0] == 0.0);
    CHECK(y[2] == 7.5);
    CHECK(y[7] == 7.5);
  }
  SECTION("degenerate scalar network reproduces a linear map on positive inputs") {
    const MlpParams p = scalar_net(1.0, 0.0, 1.0, 0.0, 2.5, -1.0);
    for (double x : {0.1, 1.0, 3.7}) {
      CHECK_THAT(forward(p, {x})[0], Catch::Matchers::WithinAbs(2.5 * x - 1.0, 1e-15));
    }
    CHECK(forward(p, {0.0})[0] == -1.0);  // relu clamps at zero
  }
  SECTION("fixed seed and state give the frozen golden outputs") {
    const MlpParams p = init_mlp(6, 8, 5, 42);
    const auto y = forward(p, {0.5, 1.5, 2.5, 3.5, 1.0, 2.0});
    REQUIRE(y.size() == 5);
    CHECK_THAT(y[0], Catch::Matchers::WithinAbs(2.5801910379620763, 1e-15));
    CHECK_THAT(y[1], Catch::Matchers::WithinAbs(-3.1208187607889832, 1e-15));
    CHECK_THAT(y[2], Catch::Matchers::WithinAbs(1.8983075297663397, 1e-15));
    CHECK_THAT(y[3], Catch::Matchers::WithinAbs(1.9590397181275074, 1e-15));
    CHECK_THAT(y[4], Catch::Matchers::WithinAbs(1.4083649310078077, 1e-15));
  }
  SECTION("determinism: same seed, same parameters") {
    CHECK(init_mlp(6, 16, 5, 9) == init_mlp(6, 16, 5, 9));
    CHECK_FALSE(init_mlp(6, 16, 5, 9) == init_mlp(6, 16, 5, 10));
  }
  SECTION("shape errors") {
    const MlpParams p = init_mlp(6, 8, 5, 1);
    CHECK_THROWS_AS(forward(p, {1.0, 2.0}), ValidationError);
    CHECK_THROWS_AS(forward(p, {}), ValidationError);
    MlpParams bad = p;
    bad.theta.pop_back();
    CHECK_THROWS_AS(validate(bad), ValidationError);
  }
}

TEST_CASE("analytic gradients") {
  SECTION("targets equal to predictions give zero gradient") {
    const MlpParams p = init_mlp(6, 8, 5, 4);
    Batch b;
    b.states = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    b.actions = {3};
    b.targets = {forward(p, b.states)[3]};
    for (double g : grad(p, b)) CHECK(g == 0.0);
  }
  SECTION("scalar network matches the hand-computed closed form") {
    const double w1 = 0.8, b1 = 0.2, w2 = 1.1, b2 = -0.1, w3 = 0.9, b3 = 0.3;
    const MlpParams p = scalar_net(w1, b1, w2, b2, w3, b3);
    const double x = 1.7, y_target = 2.0;
    Batch b;
    b.states = {x};
    b.actions = {0};
    b.targets = {y_target};

    const double h1 = w1 * x + b1;
    const double h2 = w2 * h1 + b2;
    const double q = w3 * h2 + b3;
    const double d = 2.0 * (q - y_target);
    const auto g = grad(p, b);
    REQUIRE(g.size() == 6);
    CHECK_THAT(g[0], Catch::Matchers::WithinAbs(d * w3 * w2 * x, 1e-12));   // w1
    CHECK_THAT(g[1], Catch::Matchers::WithinAbs(d * w3 * w2, 1e-12));       // b1
    CHECK_THAT(g[2], Catch::Matchers::WithinAbs(d * w3 * h1, 1e-12));       // w2
    CHECK_THAT(g[3], Catch::Matchers::WithinAbs(d * w3, 1e-12));            // b2
    CHECK_THAT(g[4], Catch::Matchers::WithinAbs(d * h2, 1e-12));            // w3
    CHECK_THAT(g[5], Catch::Matchers::WithinAbs(d, 1e-12));                 // b3
  }
  SECTION("gradient matches central differences over 20 seeds") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      std::mt19937_64 rng(seed);
      const MlpParams p = init_mlp(6, 16, 5, seed);
      const Batch b = random_batch(rng, 8, 6, 5);
      CHECK(grad_check(p, b) < 1e-4);
    }
  }
  SECTION("corrupted bias gradient is detected") {
    std::mt19937_64 rng(77);
    const MlpParams p = init_mlp(6, 16, 5, 77);
    const Batch b = random_batch(rng, 8, 6, 5);
    auto g = grad(p, b);
    g[static_cast<size_t>(p.off_b3())] += 0.5;
    CHECK(grad_check_against(p, b, g) > 1e-2);
  }
  SECTION("zero-gradient case reports zero error") {
    const MlpParams p = init_mlp(6, 8, 5, 4);
    Batch b;
    b.states = {0.5, 1.0, 1.5, 2.0, 2.5, 3.0};
    b.actions = {1};
    b.targets = {forward(p, b.states)[1]};
    CHECK(grad_check(p, b) == 0.0);
  }
  SECTION("batch shape errors") {
    const MlpParams p = init_mlp(6, 8, 5, 4);
    Batch b;
    b.states = {1, 2, 3, 4, 5, 6};
    b.actions = {1, 2};
    b.targets = {0.0};
    CHECK_THROWS_AS(grad(p, b), ValidationError);
    b.actions = {9};
    b.targets = {0.0};
    CHECK_THROWS_AS(grad(p, b), ValidationError);
  }
}

TEST_CASE("optimizer updates") {
  SECTION("zero gradient leaves parameters unchanged") {
    MlpParams p = init_mlp(6, 8, 5, 2);
    const MlpParams before = p;
    OptimizerState opt = make_optimizer(p, 1e-3);
    step(p, std::vector<double>(p.theta.size(), 0.0), opt);
    CHECK(p == before);
    CHECK(opt.steps == 1);
  }
  SECTION("constant gradient follows the closed-form schedule") {
    // With constant gradient g the bias-corrected moments are exactly g and
    // g^2, so each step moves by lr*g/(|g|+eps).
    MlpParams p = scalar_net(0, 0, 0, 0, 0, 0);
    OptimizerState opt = make_optimizer(p, 1e-3);
    std::vector<double> g(p.theta.size(), 0.0);
    g[2] = 0.37;
    for (int k = 0; k < 10; ++k) step(p, g, opt);
    CHECK_THAT(p.theta[2], Catch::Matchers::WithinAbs(-0.0099999997297297236, 1e-15));
    CHECK(p.theta[0] == 0.0);
    CHECK(opt.steps == 10);
  }
  SECTION("non-finite gradient halts training") {
    MlpParams p = init_mlp(6, 8, 5, 2);
    OptimizerState opt = make_optimizer(p, 1e-3);
    std::vector<double> g(p.theta.size(), 0.0);
    g[7] = std::nan("");
    CHECK_THROWS_AS(step(p, g, opt), InternalError);
    g[7] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(step(p, g, opt), InternalError);
  }
  SECTION("shapes are conserved") {
    MlpParams p = init_mlp(6, 8, 5, 2);
    OptimizerState opt = make_optimizer(p, 1e-3);
    std::vector<double> g(p.theta.size(), 0.01);
    const auto n = p.theta.size();
    for (int k = 0; k < 5; ++k) step(p, g, opt);
    CHECK(p.theta.size() == n);
    CHECK_NOTHROW(validate(p));
    CHECK_THROWS_AS(step(p, std::vector<double>(3, 0.0), opt), ValidationError);
  }
}
