#include <cmath>

#include "doctest.h"
#include "dpmcov/elbo.hpp"
#include "dpmcov/providers.hpp"

using namespace dpmcov;

namespace {

Schedule mid_sched(int n = 20) {
  std::vector<double> beta(n);
  for (int i = 0; i < n; ++i) beta[i] = 0.01 + 0.25 * i / std::max(1, n - 1);
  return Schedule::explicit_betas(std::move(beta));
}

}  // namespace

TEST_CASE("direct elbo of the exact gaussian chain hits the data entropy") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched();
  KernelModel model{"oracle-sn", &oracle, KernelModel::Variance::SnDiag, nullptr,
                    nullptr};
  TrajectorySpec traj = TrajectorySpec::identity(sched.steps());
  ElboReport rep =
      elbo_direct({model}, sched, ProcessKind::ddpm(), traj, spec, 20000, 31);
  double want = -0.5 * std::log(2.0 * M_PI * std::exp(1.0));
  CHECK(std::abs(rep.value[0] - want) < 3.0 * rep.se[0] + 1e-4);
  // per-jump decomposition sums to the total
  REQUIRE(!rep.per_jump.empty());
  double sum = 0.0;
  for (double t : rep.per_jump[0]) sum += t;
  CHECK(sum == doctest::Approx(rep.value[0]).epsilon(1e-10));
}

TEST_CASE("doubling the exact variance strictly lowers the elbo") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.5);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched();
  KernelModel good{"good", &oracle, KernelModel::Variance::SnDiag, nullptr,
                   nullptr};
  KernelModel bad = good;
  bad.name = "scaled";
  bad.variance_scale = 2.0;
  TrajectorySpec traj = TrajectorySpec::identity(sched.steps());
  ElboReport rep = elbo_direct({good, bad}, sched, ProcessKind::ddpm(), traj,
                               spec, 20000, 33);
  double gap = rep.value[0] - rep.value[1];
  CHECK(gap > 3.0 * rep.diff_se(0, 1));
}

TEST_CASE("single-step elbo telescopes") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.4);
  OracleMoments oracle(spec);
  Schedule sched = Schedule::explicit_betas({0.4});
  KernelModel model{"m", &oracle, KernelModel::Variance::SnDiag, nullptr, nullptr};
  TrajectorySpec traj = TrajectorySpec::identity(1);
  const std::uint64_t seed = 77;
  const int draws = 500;
  ElboReport rep =
      elbo_direct({model}, sched, ProcessKind::ddpm(), traj, spec, draws, seed);

  // replicate the stream discipline: value_i = log p(x0|x1) + log p(x1) - log q(x1|x0)
  Jump jump = make_step_jump(sched, ProcessKind::ddpm(), 1);
  double acc = 0.0;
  for (int i = 0; i < draws; ++i) {
    Rng rng0 = Rng::stream(seed, i + 1, 0);
    Vec x0 = sample_x0_one(spec, rng0);
    Rng rng1 = Rng::stream(seed, i + 1, 1);
    Vec eps = rng1.normal_vec(1);
    Vec mu_q = std::sqrt(sched.alpha_bar(1)) * x0;
    Vec x1 = mu_q + std::sqrt(sched.beta_bar(1)) * eps;
    ReverseKernel k = make_kernel(model, jump, x1);
    acc += kernel_logpdf(k, x0) + gaussian_logpdf_iso(x1, Vec::Zero(1), 1.0) -
           gaussian_logpdf_iso(x1, mu_q, sched.beta_bar(1));
  }
  CHECK(rep.value[0] == doctest::Approx(acc / draws).epsilon(1e-12));
}

TEST_CASE("direct elbo rejects the degenerate ddim family") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched();
  KernelModel model{"m", &oracle, KernelModel::Variance::SnDiag, nullptr, nullptr};
  TrajectorySpec traj = TrajectorySpec::identity(sched.steps());
  CHECK_THROWS_AS(
      elbo_direct({model}, sched, ProcessKind::ddim(), traj, spec, 100, 1),
      invalid_argument);
}

TEST_CASE("reduced kl: the moment-matched kernel attains the analytic minimum") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.5, 0.3);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched();
  Jump jump = make_step_jump(sched, ProcessKind::ddpm(), 12);
  const std::uint64_t seed = 5;
  const int states = 4000;
  KernelModel model{"m", &oracle, KernelModel::Variance::SnDiag, nullptr, nullptr};
  MultiKl kl = kl_reduced_jump({model}, jump, spec, states, seed);
  // same state streams: the reference is (1/2) E[1 + log M]
  Mat m = reduced_m_diag(jump, spec, states, seed);
  double want = 0.5 * (1.0 + m.array().log().mean());
  CHECK(kl.value[0] == doctest::Approx(want).epsilon(1e-10));
  // any perturbed diagonal evaluates strictly higher
  KernelModel worse = model;
  worse.name = "worse";
  worse.variance_scale = 1.3;
  MultiKl kl2 = kl_reduced_jump({model, worse}, jump, spec, states, seed);
  CHECK(kl2.value[1] > kl2.value[0]);
}

TEST_CASE("reduced kl: mean offset adds the exact quadratic term") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.5);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched();
  Jump jump = make_step_jump(sched, ProcessKind::ddpm(), 9);
  Vec x = Vec::Constant(1, 0.8);
  StepInfo st = jump.step_t();
  EpsMoments em = eps_moments(spec, st.alpha_bar, st.beta_bar, x);
  Vec x0m = (x - std::sqrt(st.beta_bar) * em.mean) / std::sqrt(st.alpha_bar);
  Vec mu_q = tilde_mu(jump, x, x0m);
  Vec var_eps = em.second - em.mean.cwiseProduct(em.mean);
  Vec m_diag = ((jump.var_coef() * var_eps).array() + jump.lambda_sq).matrix();

  ReverseKernel k;
  k.cov_kind = ReverseKernel::Cov::Diag;
  k.mean = mu_q;
  k.diag = m_diag;
  double base = reduced_kl_state(k, mu_q, m_diag, nullptr);
  Vec delta = Vec::Constant(1, 0.21);
  k.mean = mu_q + delta;
  double shifted = reduced_kl_state(k, mu_q, m_diag, nullptr);
  CHECK(shifted - base ==
        doctest::Approx(0.5 * delta[0] * delta[0] / m_diag[0]).epsilon(1e-12));
}

TEST_CASE("reduced kl: full covariance collapses to the diagonal formula") {
  Vec mu_q = Vec::Zero(2);
  Vec m_diag(2);
  m_diag << 0.3, 0.9;
  Mat m_full = m_diag.asDiagonal();
  ReverseKernel diag_kernel;
  diag_kernel.cov_kind = ReverseKernel::Cov::Diag;
  diag_kernel.mean = Vec::Constant(2, 0.1);
  diag_kernel.diag = Vec::Constant(2, 0.5);
  ReverseKernel full_kernel;
  full_kernel.cov_kind = ReverseKernel::Cov::Full;
  full_kernel.mean = diag_kernel.mean;
  full_kernel.full = diag_kernel.diag.asDiagonal();
  double a = reduced_kl_state(diag_kernel, mu_q, m_diag, &m_full);
  double b = reduced_kl_state(full_kernel, mu_q, m_diag, &m_full);
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("continuous and discrete reduced kl agree on the grid") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.5);
  OracleMoments oracle(spec);
  VpSde sde;
  const int n_steps = 50;
  Schedule disc = sde.discretize(n_steps);
  KernelModel model{"m", &oracle, KernelModel::Variance::SnDiag, nullptr, nullptr};
  int n = 23;
  MultiKl cont = kl_continuous({model}, sde, sde.grid_time(n - 1, n_steps),
                               sde.grid_time(n, n_steps), spec, 2000, 9);
  Jump jd = make_step_jump(disc, ProcessKind::ddpm(), n);
  MultiKl discrete = kl_reduced_jump({model}, jd, spec, 2000, 9);
  CHECK(cont.value[0] == doctest::Approx(discrete.value[0]).epsilon(1e-8));
  CHECK_THROWS_AS(kl_continuous({model}, sde, 0.5, 0.5, spec, 100, 1),
                  invalid_argument);
}

TEST_CASE("npr bound: corrected never loses to sn on any state") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 2.0, 0.1);
  double delta = 0.1;
  BiasedMeanMoments biased(spec, delta);
  Schedule sched = Schedule::linear(50);
  Rng rng(12);
  int total = 0, strict = 0;
  for (int n : {8, 12, 16, 20}) {
    Jump jump = make_step_jump(sched, ProcessKind::ddpm(), n);
    for (int i = 0; i < 500; ++i) {
      Rng draw(13, n, i);
      Vec x0 = sample_x0_one(spec, draw);
      Vec x = std::sqrt(jump.alpha_bar_t) * x0 +
              std::sqrt(jump.beta_bar_t) * draw.normal_vec(1);
      StepInfo st = jump.step_t();
      EpsMoments em = eps_moments(spec, st.alpha_bar, st.beta_bar, x);
      Vec x0m = (x - std::sqrt(st.beta_bar) * em.mean) / std::sqrt(st.alpha_bar);
      Vec mu_q = tilde_mu(jump, x, x0m);
      Vec var_eps = em.second - em.mean.cwiseProduct(em.mean);
      Vec m_diag = ((jump.var_coef() * var_eps).array() + jump.lambda_sq).matrix();
      ReverseKernel k;
      k.cov_kind = ReverseKernel::Cov::Diag;
      k.mean = optimal_mean(biased, jump, x);
      k.diag = npr_diag_var(biased, jump, x);
      double v_npr = reduced_kl_state(k, mu_q, m_diag, nullptr);
      k.diag = sn_diag_var(biased, jump, x);
      double v_sn = reduced_kl_state(k, mu_q, m_diag, nullptr);
      CHECK(v_npr <= v_sn + 1e-12);
      ++total;
      if (v_sn - v_npr > 1e-9) ++strict;
    }
  }
  CHECK(static_cast<double>(strict) / total >= 0.99);
  (void)rng;
}

TEST_CASE("compare rows: duplicates coincide and error shrinks with draws") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.5);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched();
  KernelModel model{"oracle-sn", &oracle, KernelModel::Variance::SnDiag, nullptr,
                    nullptr};
  TrajectorySpec traj = even_trajectory(sched.steps(), 5);
  auto rows = compare_models({model, model}, sched, ProcessKind::ddpm(), traj,
                             spec, false, 4000, 3);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].value == rows[1].value);
  CHECK(rows[0].se == rows[1].se);

  auto rows2 = compare_models({model}, sched, ProcessKind::ddpm(), traj, spec,
                              false, 8000, 3);
  double ratio = rows2[0].se / rows[0].se;
  CHECK(ratio == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("reduced ordering: npr <= sn <= analytic iso under a biased mean") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 2.0, 0.1);
  BiasedMeanMoments biased(spec, 0.2);
  Schedule sched = Schedule::linear(50);
  IsoCache cache = build_iso_cache(biased, spec, sched, 4000, 17);
  KernelModel npr{"npr", &biased, KernelModel::Variance::NprDiag, nullptr,
                  nullptr};
  KernelModel sn{"sn", &biased, KernelModel::Variance::SnDiag, nullptr, nullptr};
  KernelModel iso{"iso", &biased, KernelModel::Variance::AnalyticIso, &cache,
                  nullptr};
  TrajectorySpec traj = even_trajectory(sched.steps(), 10);
  ElboReport rep = kl_reduced_total({npr, sn, iso}, sched, ProcessKind::ddpm(),
                                    traj, spec, 4000, 21);
  CHECK(rep.value[0] < rep.value[1] - 3.0 * rep.diff_se(0, 1));
  CHECK(rep.value[1] < rep.value[2] - 3.0 * rep.diff_se(1, 2));
}

TEST_CASE("direct and reduced deltas agree for covariance-only pairs") {
  GmmSpec spec = GmmSpec::symmetric_pair(1, 1.0, 0.4);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched(10);
  KernelModel a{"a", &oracle, KernelModel::Variance::SnDiag, nullptr, nullptr};
  KernelModel b = a;
  b.name = "b";
  b.variance_scale = 1.5;
  TrajectorySpec traj = TrajectorySpec::identity(10);
  ElboReport direct =
      elbo_direct({a, b}, sched, ProcessKind::ddpm(), traj, spec, 30000, 25);
  ElboReport reduced = kl_reduced_total({a, b}, sched, ProcessKind::ddpm(), traj,
                                        spec, 30000, 26);
  double d_direct = direct.value[0] - direct.value[1];
  double d_reduced = reduced.value[1] - reduced.value[0];
  double se = std::sqrt(std::pow(direct.diff_se(0, 1), 2) +
                        std::pow(reduced.diff_se(0, 1), 2));
  CHECK(std::abs(d_direct - d_reduced) < 4.0 * se);
}

TEST_CASE("reduced kl input validation") {
  GmmSpec spec = GmmSpec::unit_gaussian(1);
  OracleMoments oracle(spec);
  Schedule sched = mid_sched();
  Jump jump = make_step_jump(sched, ProcessKind::ddpm(), 3);
  CHECK_THROWS_AS(kl_reduced_jump({}, jump, spec, 100, 1), invalid_argument);
  KernelModel model{"m", &oracle, KernelModel::Variance::SnDiag, nullptr, nullptr};
  CHECK_THROWS_AS(kl_reduced_jump({model}, jump, spec, 1, 1), invalid_argument);
}
