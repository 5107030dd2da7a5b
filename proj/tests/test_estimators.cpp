#include <cmath>

#include "doctest.h"
#include "dpmcov/checks.hpp"
#include "dpmcov/kernels.hpp"
#include "dpmcov/providers.hpp"

using namespace dpmcov;

namespace {

// deterministic stub: e, s, r are fixed vectors
class StubMoments : public MomentProvider {
 public:
  StubMoments(Vec e, Vec s, Vec r) : e_(e), s_(s), r_(r) {}
  std::string name() const override { return "stub"; }
  int dim() const override { return static_cast<int>(e_.size()); }
  Vec noise_mean(const Vec&, const StepInfo&) const override { return e_; }
  Vec noise_second_moment(const Vec&, const StepInfo&) const override { return s_; }
  Vec noise_residual_moment(const Vec&, const StepInfo&) const override { return r_; }

 private:
  Vec e_, s_, r_;
};

Schedule two_step() { return Schedule::explicit_betas({0.1, 0.2}); }

}  // namespace

TEST_CASE("optimal mean: markov chain closed form on unit-gaussian data") {
  // for x0 ~ N(0,1) under the ddpm kind, E[x_{n-1}|x_n] = sqrt(alpha_n) x_n
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  Schedule s = two_step();
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 2);
  for (double xv : {-1.5, 0.0, 0.4, 2.0}) {
    Vec x = Vec::Constant(1, xv);
    Vec mean = optimal_mean(oracle, j, x);
    CHECK(mean[0] == doctest::Approx(std::sqrt(s.alpha_step(2)) * xv).epsilon(1e-10));
  }
}

TEST_CASE("optimal mean: zero prediction reduces to tilde_mu substitution") {
  Schedule s = two_step();
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 2);
  StubMoments zero(Vec::Zero(1), Vec::Ones(1), Vec::Ones(1));
  Vec x = Vec::Constant(1, 0.8);
  Vec want = tilde_mu(j, x, x / std::sqrt(s.alpha_bar(2)));
  CHECK(optimal_mean(zero, j, x)[0] == doctest::Approx(want[0]).epsilon(1e-14));
}

TEST_CASE("optimal mean: bias shifts by -gamma sqrt(bbar/abar) delta") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 2.0, 0.3);
  OracleMoments oracle(spec);
  double delta = 0.37;
  BiasedMeanMoments biased(spec, delta);
  Schedule s = two_step();
  for (auto kind : {ProcessKind::ddpm(), ProcessKind::ddim()}) {
    Jump j = make_step_jump(s, kind, 2);
    Vec x = Vec::Constant(1, 0.33);
    double shift = optimal_mean(biased, j, x)[0] - optimal_mean(oracle, j, x)[0];
    CHECK(shift == doctest::Approx(-j.mean_shift_coef() * delta).epsilon(1e-12));
  }
}

TEST_CASE("sn variance: frozen two-step example equals beta_2") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  Schedule s = two_step();
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 2);
  Vec v = sn_diag_var(oracle, j, Vec::Constant(1, 0.37));
  CHECK(v[0] == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("sn variance: quadrature route agrees on a random mixture") {
  Rng rng(4);
  GmmSpec spec = random_gmm_1d(rng);
  OracleMoments oracle(spec);
  Schedule s = Schedule::linear(40);
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 17);
  for (int i = 0; i < 5; ++i) {
    Vec x = Vec::Constant(1, -3.0 + 1.5 * i);
    QuadratureMoments q =
        quadrature_x0_moments(spec, j.alpha_bar_t, j.beta_bar_t, x[0]);
    double var_eps = j.alpha_bar_t / j.beta_bar_t * q.var;
    double want = j.lambda_sq + j.var_coef() * var_eps;
    CHECK(sn_diag_var(oracle, j, x)[0] == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("sn variance: clamps when the squared mean exceeds the second moment") {
  Schedule s = two_step();
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 2);
  StubMoments bad(Vec::Constant(1, 2.0), Vec::Constant(1, 1.0), Vec::Ones(1));
  Vec v = sn_diag_var(bad, j, Vec::Zero(1));
  CHECK(v[0] == doctest::Approx(j.lambda_sq).epsilon(1e-14));
  // ddim: lambda = 0, clamp bottoms out at the floor
  Jump jd = make_step_jump(s, ProcessKind::ddim(), 2);
  Vec vd = sn_diag_var(bad, jd, Vec::Zero(1));
  CHECK(vd[0] == kVarianceFloor);
}

TEST_CASE("npr variance matches sn with an exact mean and corrects a biased one") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.5, 0.2);
  OracleMoments oracle(spec);
  Schedule s = Schedule::linear(40);
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 21);
  Vec x = Vec::Constant(1, 0.6);
  CHECK(npr_diag_var(oracle, j, x)[0] ==
        doctest::Approx(sn_diag_var(oracle, j, x)[0]).epsilon(1e-12));
  double delta = 0.4;
  BiasedMeanMoments biased(spec, delta);
  double want = sn_diag_var(oracle, j, x)[0] + j.var_coef() * delta * delta;
  CHECK(npr_diag_var(biased, j, x)[0] == doctest::Approx(want).epsilon(1e-10));
  // r = 0 collapses to lambda^2
  StubMoments zero_r(Vec::Zero(1), Vec::Ones(1), Vec::Zero(1));
  CHECK(npr_diag_var(zero_r, j, x)[0] == doctest::Approx(j.lambda_sq).epsilon(1e-14));
}

TEST_CASE("iso variance: empty prediction gives the upper end") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  Schedule s = two_step();
  StubMoments zero(Vec::Zero(1), Vec::Ones(1), Vec::Ones(1));
  double v = analytic_iso_var(zero, spec, s, ProcessKind::ddpm(), 2, 200, 9);
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 2);
  CHECK(v == doctest::Approx(j.lambda_sq + j.var_coef()).epsilon(1e-12));
}

TEST_CASE("iso variance: unit-gaussian oracle value and determinism") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  Schedule s = two_step();
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 2);
  IsoCache cache = build_iso_cache(oracle, spec, s, 40000, 13);
  double v = analytic_iso_var(cache, j);
  double want = j.lambda_sq + j.gamma * j.gamma * j.beta_bar_t;
  CHECK(std::abs(v - want) < 0.01);  // monte carlo, ~3 se
  IsoCache cache2 = build_iso_cache(oracle, spec, s, 40000, 13);
  CHECK(analytic_iso_var(cache2, j) == v);
  CHECK_THROWS_AS(build_iso_cache(oracle, spec, s, 0, 13), invalid_argument);
}

TEST_CASE("full covariance: dimension collapse and rank-one correction") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.4);
  OracleMoments oracle(spec);
  Schedule s = Schedule::linear(30);
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 15);
  Vec x = Vec::Constant(1, -0.2);
  Mat full = full_covariance(oracle, j, x, oracle);
  CHECK(full(0, 0) == doctest::Approx(sn_diag_var(oracle, j, x)[0]).epsilon(1e-12));
  double delta = 0.3;
  BiasedMeanMoments biased(spec, delta);
  Mat corrected = full_covariance(oracle, j, x, biased);
  CHECK(corrected(0, 0) ==
        doctest::Approx(full(0, 0) + j.var_coef() * delta * delta).epsilon(1e-12));
}

TEST_CASE("full covariance: axis symmetry forces a diagonal") {
  GmmSpec spec = GmmSpec::symmetric_pair(2, 1.5, 0.3);
  OracleMoments oracle(spec);
  Schedule s = Schedule::linear(30);
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 14);
  Vec x = Vec::Zero(2);
  x[0] = 0.7;
  Mat full = full_covariance(oracle, j, x, oracle);
  CHECK(std::abs(full(0, 1)) < 1e-14);
  CHECK(std::abs(full(1, 0)) < 1e-14);
}

TEST_CASE("continuous variance: degenerate jump vanishes and routes agree") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  VpSde sde;
  Vec x = Vec::Constant(1, 0.5);
  Vec tiny = continuous_diag_var(oracle, sde, 0.5, 0.5 + 1e-9, x, false);
  CHECK(tiny[0] < 1e-7);
  Vec a = continuous_diag_var(oracle, sde, 0.3, 0.6, x, false);
  Vec b = continuous_diag_var(oracle, sde, 0.3, 0.6, x, true);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-12));  // exact mean
  CHECK_THROWS_AS(continuous_diag_var(oracle, sde, 0.6, 0.6, x, false),
                  invalid_argument);
}

TEST_CASE("variance clip: bound semantics") {
  ReverseKernel k;
  k.mean = Vec::Zero(2);
  k.cov_kind = ReverseKernel::Cov::Diag;
  k.diag = Vec::Constant(2, 1e-8);
  ReverseKernel same = clip_variance(k, 1.0, 1.0);
  CHECK(same.diag[0] == k.diag[0]);

  double bound = 2.0 / 255.0;  // y = 1, data_scale = 1
  k.diag = Vec::Constant(2, 100.0 * bound * bound);
  ReverseKernel clipped = clip_variance(k, 1.0, 1.0);
  double sigma_inf = std::sqrt(clipped.diag.maxCoeff());
  CHECK(sigma_inf * std::sqrt(2.0 / M_PI) == doctest::Approx(bound).epsilon(1e-12));
  // doubling y doubles the bound
  ReverseKernel clipped2 = clip_variance(k, 2.0, 1.0);
  CHECK(std::sqrt(clipped2.diag.maxCoeff()) ==
        doctest::Approx(2.0 * sigma_inf).epsilon(1e-12));
  CHECK_THROWS_AS(clip_variance(k, 0.0, 1.0), invalid_argument);
}

TEST_CASE("kernel model assembly and variance scaling") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  Schedule s = two_step();
  Jump j = make_step_jump(s, ProcessKind::ddpm(), 2);
  Vec x = Vec::Constant(1, 0.4);

  KernelModel sn{"sn", &oracle, KernelModel::Variance::SnDiag, nullptr, nullptr};
  ReverseKernel k = make_kernel(sn, j, x);
  CHECK(k.cov_kind == ReverseKernel::Cov::Diag);

  KernelModel scaled = sn;
  scaled.variance_scale = 2.0;
  CHECK(make_kernel(scaled, j, x).diag[0] == doctest::Approx(2.0 * k.diag[0]));

  KernelModel lam{"lam", &oracle, KernelModel::Variance::FixedLambda, nullptr,
                  nullptr};
  CHECK(make_kernel(lam, j, x).iso == doctest::Approx(s.tilde_beta(2)));
  KernelModel fb{"fb", &oracle, KernelModel::Variance::FixedBeta, nullptr, nullptr};
  CHECK(make_kernel(fb, j, x).iso == doctest::Approx(s.beta(2)));

  KernelModel full{"full", &oracle, KernelModel::Variance::OracleFull, nullptr,
                   &oracle};
  CHECK(make_kernel(full, j, x).cov_kind == ReverseKernel::Cov::Full);
  KernelModel broken{"broken", &oracle, KernelModel::Variance::OracleFull,
                     nullptr, nullptr};
  CHECK_THROWS_AS(make_kernel(broken, j, x), invalid_argument);
}

TEST_CASE("oracle-only surfaces reject other providers") {
  StubMoments stub(Vec::Zero(1), Vec::Ones(1), Vec::Ones(1));
  Vec x = Vec::Zero(1);
  StepInfo st{0.7, 0.3, 1};
  CHECK_THROWS_AS(stub.noise_cov(x, st), invalid_argument);
}
