#include <cmath>

#include "doctest.h"
#include "dpmcov/checks.hpp"
#include "dpmcov/gmm.hpp"

using namespace dpmcov;

TEST_CASE("spec validation") {
  GmmSpec bad = GmmSpec::unit_gaussian(1);
  bad.weights = {0.6, 0.6};
  bad.means = {Vec::Zero(1), Vec::Ones(1)};
  CHECK_THROWS_AS(bad.validate(), invalid_argument);
  bad.weights = {0.5, 0.5};
  bad.var = 0.0;
  CHECK_THROWS_AS(bad.validate(), invalid_argument);
}

TEST_CASE("single-component posterior is the conjugate formula") {
  GmmSpec spec;
  spec.dim = 1;
  spec.weights = {1.0};
  spec.means = {Vec::Constant(1, 1.5)};
  spec.var = 0.7;
  double ab = 0.6, bb = 0.4;
  Vec x = Vec::Constant(1, 0.3);
  GmmPosterior p = posterior(spec, ab, bb, x);
  REQUIRE(p.eta.size() == 1);
  CHECK(p.eta[0] == 1.0);
  double denom = spec.var * ab + bb;
  CHECK(p.nu[0][0] == doctest::Approx((bb * 1.5 + 0.7 * std::sqrt(ab) * 0.3) / denom));
  CHECK(p.pvar == doctest::Approx(0.7 * bb / denom));
  X0Moments m = x0_moments(spec, ab, bb, x);
  CHECK(m.cov(0, 0) == doctest::Approx(p.pvar).epsilon(1e-14));
}

TEST_CASE("symmetric mixture at the origin") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 2.0, 0.3);
  GmmPosterior p = posterior(spec, 0.5, 0.5, Vec::Zero(1));
  CHECK(p.eta[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.nu[0][0] == doctest::Approx(-p.nu[1][0]).epsilon(1e-12));
  EpsMoments em = eps_moments(spec, 0.5, 0.5, Vec::Zero(1));
  CHECK(em.mean[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("posterior concentrates along a component direction") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.5);
  double prev = 0.5;
  for (double t : {1.0, 5.0, 20.0, 50.0}) {
    GmmPosterior p = posterior(spec, 0.5, 0.5, Vec::Constant(1, t));
    CHECK(p.eta[1] >= prev - 1e-12);
    prev = p.eta[1];
  }
  CHECK(prev > 1.0 - 1e-6);
}

TEST_CASE("unit-gaussian data gives linear conditional expectations") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  double ab = 0.72, bb = 0.28;
  Vec x = Vec::Constant(1, 0.9);
  X0Moments m = x0_moments(spec, ab, bb, x);
  CHECK(m.mean[0] == doctest::Approx(std::sqrt(0.72) * 0.9).epsilon(1e-12));
  CHECK(m.cov_diag[0] == doctest::Approx(0.28).epsilon(1e-12));
  EpsMoments em = eps_moments(spec, ab, bb, x);
  CHECK(em.mean[0] == doctest::Approx(std::sqrt(0.28) * 0.9).epsilon(1e-12));
}

TEST_CASE("eps second moment dominates the squared mean") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    GmmSpec spec = random_gmm_1d(rng);
    double ab = 0.05 + 0.9 * rng.uniform();
    Vec x = Vec::Constant(1, -4.0 + 8.0 * rng.uniform());
    EpsMoments em = eps_moments(spec, ab, 1.0 - ab, x);
    CHECK(em.second[0] >= em.mean[0] * em.mean[0] - 1e-12);
  }
}

TEST_CASE("posterior moments match brute-force quadrature") {
  Rng rng(17);
  for (int trial = 0; trial < 8; ++trial) {
    GmmSpec spec = random_gmm_1d(rng);
    double ab = 0.1 + 0.8 * rng.uniform();
    double bb = 1.0 - ab;
    Rng draw(18, trial);
    Vec x0 = sample_x0_one(spec, draw);
    Vec x = std::sqrt(ab) * x0 + std::sqrt(bb) * draw.normal_vec(1);
    QuadratureMoments q = quadrature_x0_moments(spec, ab, bb, x[0]);
    X0Moments m = x0_moments(spec, ab, bb, x);
    CHECK(std::abs(m.mean[0] - q.mean) < 1e-8);
    CHECK(std::abs(m.cov_diag[0] - q.var) < 1e-7);
  }
}

TEST_CASE("marginal logpdf: standard normal special case") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  double lp = marginal_logpdf(spec, 0.72, 0.28, Vec::Constant(1, 1.3));
  CHECK(lp == doctest::Approx(-0.5 * 1.3 * 1.3 - 0.5 * std::log(2.0 * M_PI))
                  .epsilon(1e-12));
}

TEST_CASE("marginal logpdf score identity") {
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    GmmSpec spec = random_gmm_1d(rng);
    double ab = 0.2 + 0.6 * rng.uniform();
    double bb = 1.0 - ab;
    double x = -3.0 + 6.0 * rng.uniform();
    double h = 1e-5;
    double grad = (marginal_logpdf(spec, ab, bb, Vec::Constant(1, x + h)) -
                   marginal_logpdf(spec, ab, bb, Vec::Constant(1, x - h))) /
                  (2.0 * h);
    EpsMoments em = eps_moments(spec, ab, bb, Vec::Constant(1, x));
    CHECK(std::abs(grad + em.mean[0] / std::sqrt(bb)) < 1e-6);
  }
}

TEST_CASE("marginal logpdf normalizes to one") {
  Rng rng(29);
  GmmSpec spec = random_gmm_1d(rng);
  double ab = 0.45, bb = 0.55;
  const int points = 200001;
  const double lo = -50.0, hi = 50.0, h = (hi - lo) / (points - 1);
  double z = 0.0;
  for (int i = 0; i < points; ++i) {
    double w = (i == 0 || i == points - 1) ? 0.5 : 1.0;
    z += w * std::exp(marginal_logpdf(spec, ab, bb, Vec::Constant(1, lo + h * i)));
  }
  CHECK(std::abs(z * h - 1.0) < 1e-8);
}

TEST_CASE("sampling respects weights and moments") {
  GmmSpec one;
  one.dim = 1;
  one.weights = {1.0 - 1e-13, 1e-13};  // effectively all mass on component 1
  one.means = {Vec::Constant(1, 3.0), Vec::Constant(1, -40.0)};
  one.var = 0.1;
  Rng rng(31);
  for (int i = 0; i < 200; ++i)
    CHECK(sample_x0_one(one, rng)[0] > 0.0);

  GmmSpec spec = GmmSpec::symmetric_pair(1, 2.0, 0.5);
  const int draws = 1000000;
  double acc = 0.0, acc2 = 0.0;
  for (int i = 0; i < draws; ++i) {
    Rng r(37, i);
    double v = sample_x0_one(spec, r)[0];
    acc += v;
    acc2 += v * v;
  }
  double mean = acc / draws;
  double second = acc2 / draws;
  double var = spec.mixture_cov()(0, 0);
  CHECK(std::abs(mean) < 4.0 * std::sqrt(var / draws));
  double second_true = 0.5 * (0.5 + 4.0) + 0.5 * (0.5 + 4.0);
  CHECK(std::abs(second - second_true) / second_true < 0.01);
}

TEST_CASE("law of total variance holds within monte carlo error") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.5, 0.4);
  double ab = 0.55, bb = 0.45;
  const int draws = 100000;
  double acc_condvar = 0.0, acc_mean = 0.0, acc_mean_sq = 0.0;
  std::vector<double> totals(draws);
  for (int i = 0; i < draws; ++i) {
    Rng r(41, i);
    Vec x0 = sample_x0_one(spec, r);
    Vec x = std::sqrt(ab) * x0 + std::sqrt(bb) * r.normal_vec(1);
    X0Moments m = x0_moments(spec, ab, bb, x);
    acc_condvar += m.cov_diag[0];
    acc_mean += m.mean[0];
    acc_mean_sq += m.mean[0] * m.mean[0];
    totals[i] = m.cov_diag[0] + m.mean[0] * m.mean[0];
  }
  double lhs = acc_condvar / draws + acc_mean_sq / draws -
               (acc_mean / draws) * (acc_mean / draws);
  double rhs = spec.mixture_cov()(0, 0);
  double mean_tot = 0.0;
  for (double t : totals) mean_tot += t;
  mean_tot /= draws;
  double var_tot = 0.0;
  for (double t : totals) var_tot += (t - mean_tot) * (t - mean_tot);
  double se = std::sqrt(var_tot / (draws - 1.0) / draws);
  CHECK(std::abs(lhs - rhs) < 3.0 * se + 1e-6);
}
