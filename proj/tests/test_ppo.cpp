#include <doctest.h>

#include <cmath>
#include <vector>

#include "e2cfd/ppo.hpp"

using namespace e2cfd;
using namespace e2cfd::ppo;

namespace {

// A_t = sum_l (gamma lambda)^l delta_{t+l} within one segment.
std::vector<double> brute_gae(const std::vector<double>& r, const std::vector<double>& v,
                              double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double coeff = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      a[t] += coeff * (r[k] + gamma * v[k + 1] - v[k]);
      coeff *= gamma * lambda;
    }
  }
  return a;
}

PpoConfig tiny() {
  PpoConfig c;
  c.epochs = 2;
  c.steps_per_epoch = 600;
  c.max_episode_steps = 150;
  c.minibatch_size = 200;
  c.update_iters = 3;
  c.hidden = {16, 16};
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("gae single step") {
  const std::vector<double> r = {1.0}, v = {0.0, 0.0};
  const std::vector<std::size_t> ends = {1};
  const auto g = gae(r, v, ends, 1.0, 1.0);
  CHECK(g.advantages[0] == 1.0);
  CHECK(g.returns[0] == 1.0);
}

TEST_CASE("gae with lambda 0 is the TD error") {
  const std::vector<double> r = {1.0, -0.5, 2.0}, v = {0.3, 0.1, -0.2, 0.7};
  const std::vector<std::size_t> ends = {3};
  const auto g = gae(r, v, ends, 0.9, 0.0);
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(g.advantages[t] == doctest::Approx(r[t] + 0.9 * v[t + 1] - v[t]));
  }
}

TEST_CASE("gae three-step hand example") {
  const std::vector<double> r = {1, 2, 3}, v = {0.5, 1.0, 1.5, 2.0};
  const std::vector<std::size_t> ends = {3};
  const auto g = gae(r, v, ends, 0.9, 0.8);
  // Frozen from the telescoped sum.
  CHECK(g.advantages[0] == doctest::Approx(4.80272).epsilon(1e-14));
  CHECK(g.advantages[1] == doctest::Approx(4.726).epsilon(1e-14));
  CHECK(g.advantages[2] == doctest::Approx(3.3).epsilon(1e-14));
  CHECK(g.returns[0] == doctest::Approx(5.30272).epsilon(1e-14));
  const auto brute = brute_gae(r, v, 0.9, 0.8);
  for (std::size_t t = 0; t < 3; ++t) CHECK(g.advantages[t] == doctest::Approx(brute[t]));
}

TEST_CASE("gae keeps segments independent") {
  const std::vector<double> r1 = {1, 0, 2}, v1 = {0.1, 0.2, 0.3, 0.0};
  const std::vector<double> r2 = {-1, 4}, v2 = {0.5, -0.5, 1.5};
  std::vector<double> r = r1, v = v1;
  r.insert(r.end(), r2.begin(), r2.end());
  v.insert(v.end(), v2.begin(), v2.end());
  const std::vector<std::size_t> ends = {3, 5};
  const auto g = gae(r, v, ends, 0.99, 0.95);
  const auto b1 = brute_gae(r1, v1, 0.99, 0.95);
  const auto b2 = brute_gae(r2, v2, 0.99, 0.95);
  for (std::size_t t = 0; t < 3; ++t) CHECK(g.advantages[t] == doctest::Approx(b1[t]));
  for (std::size_t t = 0; t < 2; ++t) CHECK(g.advantages[3 + t] == doctest::Approx(b2[t]));
  const std::vector<double> short_v = {0.0};
  CHECK_THROWS_AS(gae(r, short_v, ends, 0.99, 0.95), std::invalid_argument);
}

TEST_CASE("shaped_reward") {
  const auto c = dsl::parse_or_throw("-0.5");
  CHECK(shaped_reward(1.0, &c, {}, 1.0) == 0.5);
  CHECK(shaped_reward(0.7, nullptr, {}, 3.0) == 0.7);
  const auto h = dsl::parse_or_throw("-in_hazard");
  CHECK(shaped_reward(0.2, &h, {{"in_hazard", 1.0}}, 2.0) == doctest::Approx(-1.8));
}

TEST_CASE("lagrange_update") {
  CHECK(lagrange_update({0.0, 0.1, 10.0}, 12.0).lambda == doctest::Approx(0.2));
  CHECK(lagrange_update({0.0, 0.1, 10.0}, 5.0).lambda == 0.0);
  CHECK(lagrange_update({1.0, 0.1, 10.0}, 10.0).lambda == 1.0);
}

TEST_CASE("mix_advantage") {
  CHECK(mix_advantage(2.0, 1.0, 0.0) == 2.0);
  CHECK(mix_advantage(2.0, 1.0, 1.0) == 0.5);
}

TEST_CASE("normalize") {
  std::vector<double> xs = {1, 2, 3, 4};
  normalize(xs);
  double mean = 0.0, var = 0.0;
  for (double x : xs) mean += x;
  for (double x : xs) var += x * x;
  CHECK(std::abs(mean) < 1e-12);
  CHECK(var / 4 == doctest::Approx(1.0));
  std::vector<double> flat = {3, 3, 3};
  normalize(flat);
  CHECK(flat == std::vector<double>{0, 0, 0});
}

TEST_CASE("stop_after 0 returns the initial policy") {
  TrainOptions o;
  o.stop_after = 0;
  const auto a = train(EnvConfig{}, tiny(), o);
  const auto b = train(EnvConfig{}, tiny(), o);
  CHECK(a.epochs.empty());
  CHECK(a.policy.mean_net().params() == b.policy.mean_net().params());
  o.stop_after = 1;
  const auto c = train(EnvConfig{}, tiny(), o);
  CHECK(c.epochs.size() == 1);
  CHECK(c.policy.mean_net().params() != a.policy.mean_net().params());
}

TEST_CASE("training is deterministic for a seed") {
  const auto a = train(EnvConfig{}, tiny());
  const auto b = train(EnvConfig{}, tiny());
  REQUIRE(a.epochs.size() == 2);
  CHECK(same_statistics(a.epochs[0], b.epochs[0]));
  CHECK(same_statistics(a.epochs[1], b.epochs[1]));
  CHECK(a.policy.mean_net().params() == b.policy.mean_net().params());
  auto other = tiny();
  other.seed = 18;
  CHECK_FALSE(same_statistics(train(EnvConfig{}, other).epochs[0], a.epochs[0]));
}

TEST_CASE("shaping changes the shaped return only") {
  TrainOptions o;
  o.stop_after = 1;
  o.shaping = dsl::parse_or_throw("-1");
  const auto shaped = train(EnvConfig{}, tiny(), o);
  const auto plain = train(EnvConfig{}, tiny(), TrainOptions{.stop_after = 1});
  // The first epoch's rollouts precede any update, so raw statistics agree.
  CHECK(shaped.epochs[0].avg_return == plain.epochs[0].avg_return);
  CHECK(shaped.epochs[0].avg_shaped_return < plain.epochs[0].avg_shaped_return);
}

TEST_CASE("unbindable shaping fails the report") {
  TrainOptions o;
  o.shaping = dsl::parse_or_throw("dist_to_moon");
  const auto r = train(EnvConfig{}, tiny(), o);
  CHECK(r.failed);
  CHECK_FALSE(r.failure.empty());
}

TEST_CASE("ppo-lagrangian records the multiplier") {
  TrainOptions o;
  o.algorithm = Algorithm::kPpoLagrangian;
  o.lagrange = {0.0, 0.5, 0.0};
  const auto r = train(EnvConfig{}, tiny(), o);
  REQUIRE(r.epochs.size() == 2);
  for (const auto& e : r.epochs) CHECK(e.lambda >= 0.0);
  // A zero cost limit can only push lambda up.
  CHECK(r.epochs[1].lambda >= r.epochs[0].lambda);
}

TEST_CASE("evaluation is deterministic") {
  TrainOptions o;
  o.stop_after = 1;
  const auto r = train(EnvConfig{}, tiny(), o);
  const auto a = evaluate_policy(EnvConfig{}, r.policy, 5, 0.99);
  const auto b = evaluate_policy(EnvConfig{}, r.policy, 5, 0.99);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a[i].j_r == b[i].j_r);
    CHECK(a[i].j_c == b[i].j_c);
  }
}

TEST_CASE("invalid config is rejected") {
  auto c = tiny();
  c.gamma = 1.5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.steps_per_epoch = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}
