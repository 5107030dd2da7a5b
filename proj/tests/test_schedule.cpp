#include <cmath>

#include "doctest.h"
#include "dpmcov/schedule.hpp"

using namespace dpmcov;

TEST_CASE("explicit schedule cumulative products") {
  Schedule s = Schedule::explicit_betas({0.1, 0.2});
  CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(s.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-14));
  CHECK(s.beta_bar(1) == doctest::Approx(0.1).epsilon(1e-14));
  CHECK(s.beta_bar(2) == doctest::Approx(0.28).epsilon(1e-14));
  CHECK(s.alpha_bar(0) == 1.0);
  CHECK(s.beta_bar(0) == 0.0);
}

TEST_CASE("single step schedule") {
  Schedule s = Schedule::explicit_betas({0.3});
  CHECK(s.alpha_bar(1) == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("linear schedule endpoints and terminal noise") {
  Schedule s = Schedule::linear(1000);
  CHECK(s.beta(1) == doctest::Approx(1e-4).epsilon(1e-12));
  CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-12));
  // cumulative-product oracle value
  CHECK(s.alpha_bar(1000) == doctest::Approx(4.035830e-05).epsilon(1e-5));
  // alpha_bar strictly decreasing in (0,1)
  for (int n = 2; n <= 1000; ++n) {
    CHECK(s.alpha_bar(n) < s.alpha_bar(n - 1));
    CHECK(s.alpha_bar(n) > 0.0);
  }
}

TEST_CASE("schedule rejects bad betas") {
  CHECK_THROWS_AS(Schedule::explicit_betas({}), invalid_argument);
  CHECK_THROWS_AS(Schedule::explicit_betas({0.0}), invalid_argument);
  CHECK_THROWS_AS(Schedule::explicit_betas({1.0}), invalid_argument);
  CHECK_THROWS_AS(Schedule::explicit_betas({0.1, -0.2}), invalid_argument);
}

TEST_CASE("lambda_sq per process family") {
  Schedule s = Schedule::explicit_betas({0.1, 0.2});
  CHECK(lambda_sq(s, ProcessKind::ddpm(), 2) ==
        doctest::Approx(0.1 / 0.28 * 0.2).epsilon(1e-12));
  CHECK(lambda_sq(s, ProcessKind::ddpm(), 1) == 0.0);  // beta_bar_0 convention
  CHECK(lambda_sq(s, ProcessKind::ddim(), 2) == 0.0);
  ProcessKind c = ProcessKind::custom({0.01, 0.02});
  CHECK(lambda_sq(s, c, 2) == 0.02);
  CHECK_THROWS_AS(lambda_sq(s, ProcessKind::ddpm(), 3), invalid_argument);
}

TEST_CASE("gamma values for the two-step schedule") {
  Schedule s = Schedule::explicit_betas({0.1, 0.2});
  double tb2 = s.tilde_beta(2);
  CHECK(gamma_coef(s, 2, tb2) == doctest::Approx(0.6776309271789385).epsilon(1e-10));
  CHECK(gamma_coef(s, 2, 0.0) == doctest::Approx(0.4415907452134038).epsilon(1e-10));
  // lambda^2 = beta_bar_{n-1} kills the second term
  CHECK(gamma_coef(s, 2, s.beta_bar(1)) ==
        doctest::Approx(std::sqrt(s.alpha_bar(1))).epsilon(1e-14));
  CHECK_THROWS_AS(gamma_coef(s, 2, 0.5), invalid_argument);
}

TEST_CASE("ddpm gamma identity across a long schedule") {
  Schedule s = Schedule::linear(200);
  for (int n = 2; n <= 200; ++n) {
    double lhs = gamma_coef(s, n, s.tilde_beta(n));
    double rhs = std::sqrt(s.alpha_bar(n - 1)) * s.beta(n) / s.beta_bar(n);
    CHECK(std::abs(lhs - rhs) < 1e-12);
  }
}

TEST_CASE("tilde_mu closed form and edge cases") {
  Schedule s = Schedule::explicit_betas({0.1, 0.2});
  Vec zero = Vec::Zero(1);
  CHECK(tilde_mu(s, 2, 0.0, zero, zero)[0] == 0.0);
  // oracle-computed scalar example (n=2, lambda=0, x0=1, x2=1)
  Vec one = Vec::Constant(1, 1.0);
  CHECK(tilde_mu(s, 2, 0.0, one, one)[0] ==
        doctest::Approx(1.0392050498806005).epsilon(1e-12));
  // lambda^2 = beta_bar_{n-1} leaves only the x0 term
  Vec x2 = Vec::Constant(1, 5.0);
  CHECK(tilde_mu(s, 2, s.beta_bar(1), x2, one)[0] ==
        doctest::Approx(std::sqrt(0.9)).epsilon(1e-12));
  Vec bad(2);
  CHECK_THROWS_AS(tilde_mu(s, 2, 0.0, bad, one), invalid_argument);
}

TEST_CASE("tilde_mu eps-slope matches -gamma sqrt(bbar/abar)") {
  Schedule s = Schedule::linear(50);
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    int n = 1 + static_cast<int>(rng.uniform() * 50);
    n = std::min(n, 50);
    double lam = rng.uniform() * s.tilde_beta(n);
    double g = gamma_coef(s, n, lam);
    Vec x_n = Vec::Constant(1, -2.0 + 4.0 * rng.uniform());
    auto mu = [&](double eps) {
      Vec x0 = (x_n - std::sqrt(s.beta_bar(n)) * Vec::Constant(1, eps)) /
               std::sqrt(s.alpha_bar(n));
      return tilde_mu(s, n, lam, x_n, x0)[0];
    };
    double h = 1e-5;
    double slope = (mu(h) - mu(-h)) / (2.0 * h);
    CHECK(std::abs(slope + g * std::sqrt(s.beta_bar(n) / s.alpha_bar(n))) < 1e-10);
  }
}

TEST_CASE("forward_sample mean and spread") {
  Schedule s = Schedule::explicit_betas({0.1, 0.2});
  Vec x0 = Vec::Constant(1, 0.0);
  // x = sqrt(abar) x0 + sqrt(bbar) eps
  Rng rng(3);
  auto [x, eps] = forward_sample(s, 2, x0, rng);
  CHECK(x[0] == doctest::Approx(std::sqrt(0.28) * eps[0]).epsilon(1e-14));

  // Monte Carlo: mean within 4 standard errors
  const int draws = 200000;
  double acc = 0.0;
  Vec x0b = Vec::Constant(1, 2.0);
  for (int i = 0; i < draws; ++i) {
    Rng r(11, i);
    acc += forward_sample(s, 2, x0b, r).first[0];
  }
  double mean = acc / draws;
  double se = std::sqrt(0.28 / draws);
  CHECK(std::abs(mean - std::sqrt(0.72) * 2.0) < 4.0 * se);
}

TEST_CASE("vp sde closed forms") {
  VpSde sde;
  CHECK(sde.alpha(0.0, 1.0) == doctest::Approx(std::exp(-10.05)).epsilon(1e-12));
  CHECK(sde.alpha(0.7, 0.7) == 1.0);
  CHECK(sde.beta_jump(0.7, 0.7) == 0.0);
  CHECK(sde.alpha(0.0, 1.0) ==
        doctest::Approx(sde.alpha(0.0, 0.5) * sde.alpha(0.5, 1.0)).epsilon(1e-12));
  CHECK_THROWS_AS(sde.alpha(0.5, 0.4), invalid_argument);
  CHECK_THROWS_AS(sde.tilde_beta(0.5, 0.5), invalid_argument);
}

TEST_CASE("sde discretization reproduces the marginal coefficients") {
  VpSde sde;
  const int n_steps = 128;
  Schedule disc = sde.discretize(n_steps);
  for (int n = 1; n <= n_steps; ++n) {
    double want = sde.alpha(0.0, sde.grid_time(n, n_steps));
    CHECK(std::abs(disc.alpha_bar(n) - want) < 1e-10);
  }
}

TEST_CASE("jump quantities at the boundaries") {
  Schedule s = Schedule::explicit_betas({0.1, 0.2});
  Jump j = make_trajectory_jump(s, ProcessKind::ddpm(), 0, 2);
  CHECK(j.lambda_sq == 0.0);
  CHECK(j.alpha_bar_s == 1.0);
  CHECK(j.gamma == doctest::Approx(1.0).epsilon(1e-12));
  // identity trajectory jumps match the per-step quantities
  Jump step2 = make_step_jump(s, ProcessKind::ddpm(), 2);
  CHECK(step2.lambda_sq == doctest::Approx(s.tilde_beta(2)).epsilon(1e-14));
  CHECK(step2.gamma ==
        doctest::Approx(gamma_coef(s, 2, s.tilde_beta(2))).epsilon(1e-14));
  CHECK_THROWS_AS(make_trajectory_jump(s, ProcessKind::ddpm(), 2, 2),
                  invalid_argument);
}

TEST_CASE("schedule hash distinguishes schedules") {
  Schedule a = Schedule::explicit_betas({0.1, 0.2});
  Schedule b = Schedule::explicit_betas({0.1, 0.21});
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == Schedule::explicit_betas({0.1, 0.2}).hash());
}
