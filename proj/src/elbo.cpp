#include "dpmcov/elbo.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "dpmcov/parallel.hpp"

namespace dpmcov {

double ElboReport::diff_se(int a, int b) const {
  double v = cov(a, a) + cov(b, b) - 2.0 * cov(a, b);
  return std::sqrt(std::max(v, 0.0));
}

namespace {

// mean and covariance of per-draw rows (draws x models)
void summarize(const Mat& values, std::vector<double>& mean, Mat& cov) {
  const int n = static_cast<int>(values.rows());
  const int m = static_cast<int>(values.cols());
  Vec mu = values.colwise().mean();
  mean.assign(mu.data(), mu.data() + m);
  Mat centered = values.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / (static_cast<double>(n) - 1.0);
  cov /= static_cast<double>(n);  // covariance of the mean estimates
}

}  // namespace

// Reduced KL of one kernel against the exact conditional moments, dropping
// the model-independent -log|M| - d part.
double reduced_kl_state(const ReverseKernel& kernel, const Vec& mu_q,
                        const Vec& m_diag, const Mat* m_full) {
  const int d = static_cast<int>(mu_q.size());
  Vec dmu = kernel.mean - mu_q;
  switch (kernel.cov_kind) {
    case ReverseKernel::Cov::Iso: {
      double acc = 0.0;
      for (int i = 0; i < d; ++i)
        acc += (m_diag[i] + dmu[i] * dmu[i]) / kernel.iso + std::log(kernel.iso);
      return 0.5 * acc;
    }
    case ReverseKernel::Cov::Diag: {
      double acc = 0.0;
      for (int i = 0; i < d; ++i) {
        require(kernel.diag[i] > 0.0, "reduced kl: nonpositive variance");
        acc += (m_diag[i] + dmu[i] * dmu[i]) / kernel.diag[i] +
               std::log(kernel.diag[i]);
      }
      return 0.5 * acc;
    }
    case ReverseKernel::Cov::Full: {
      require(m_full != nullptr, "reduced kl: full target moments unavailable");
      Eigen::LLT<Mat> llt(kernel.full);
      if (llt.info() != Eigen::Success)
        throw runtime_fault("reduced kl: kernel covariance not positive definite");
      Mat target = *m_full + dmu * dmu.transpose();
      double tr = llt.solve(target).trace();
      double logdet = 0.0;
      for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
      return 0.5 * (tr + logdet);
    }
  }
  return 0.0;
}

namespace {

bool any_full(const std::vector<KernelModel>& models) {
  for (const auto& m : models)
    if (m.variance == KernelModel::Variance::OracleFull) return true;
  return false;
}

}  // namespace

MultiKl kl_reduced_jump(const std::vector<KernelModel>& models, const Jump& jump,
                        const GmmSpec& spec, int states, std::uint64_t seed) {
  require(!models.empty(), "reduced kl: empty model list");
  require(states >= 2, "reduced kl: need at least two states");
  spec.validate();
  OracleMoments oracle(spec);
  const bool full = any_full(models);
  const int m = static_cast<int>(models.size());
  Mat values(states, m);

  parallel_for(states, [&](int i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i) + 1);
    Vec x0 = sample_x0_one(spec, rng);
    Vec eps = rng.normal_vec(spec.dim);
    Vec x_t = std::sqrt(jump.alpha_bar_t) * x0 + std::sqrt(jump.beta_bar_t) * eps;

    StepInfo st = jump.step_t();
    EpsMoments em = eps_moments(spec, st.alpha_bar, st.beta_bar, x_t);
    Vec x0_mean = (x_t - std::sqrt(st.beta_bar) * em.mean) / std::sqrt(st.alpha_bar);
    Vec mu_q = tilde_mu(jump, x_t, x0_mean);
    Vec var_eps = em.second - em.mean.cwiseProduct(em.mean);
    Vec m_diag = ((jump.var_coef() * var_eps).array() + jump.lambda_sq).matrix();
    Mat m_full;
    if (full)
      m_full = jump.lambda_sq * Mat::Identity(spec.dim, spec.dim) +
               jump.var_coef() * em.cov;

    for (int j = 0; j < m; ++j) {
      ReverseKernel kernel = make_kernel(models[j], jump, x_t);
      values(i, j) = reduced_kl_state(kernel, mu_q, m_diag, full ? &m_full : nullptr);
    }
  });

  MultiKl out;
  out.states = states;
  summarize(values, out.value, out.cov);
  return out;
}

MultiKl kl_continuous(const std::vector<KernelModel>& models, const VpSde& sde,
                      double s, double t, const GmmSpec& spec, int states,
                      std::uint64_t seed) {
  require(s < t, "continuous kl: need s < t");
  return kl_reduced_jump(models, make_continuous_jump(sde, s, t), spec, states, seed);
}

Mat reduced_m_diag(const Jump& jump, const GmmSpec& spec, int states,
                   std::uint64_t seed) {
  Mat out(states, spec.dim);
  parallel_for(states, [&](int i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i) + 1);
    Vec x0 = sample_x0_one(spec, rng);
    Vec eps = rng.normal_vec(spec.dim);
    Vec x_t = std::sqrt(jump.alpha_bar_t) * x0 + std::sqrt(jump.beta_bar_t) * eps;
    StepInfo st = jump.step_t();
    EpsMoments em = eps_moments(spec, st.alpha_bar, st.beta_bar, x_t);
    Vec var_eps = em.second - em.mean.cwiseProduct(em.mean);
    out.row(i) =
        (((jump.var_coef() * var_eps).array() + jump.lambda_sq).matrix()).transpose();
  });
  return out;
}

ElboReport kl_reduced_total(const std::vector<KernelModel>& models,
                            const Schedule& sched, const ProcessKind& kind,
                            const TrajectorySpec& traj, const GmmSpec& spec,
                            int states_per_jump, std::uint64_t seed) {
  require(!models.empty(), "reduced kl: empty model list");
  auto jumps = restrict_to(sched, kind, traj);
  const int m = static_cast<int>(models.size());
  ElboReport rep;
  rep.mode = "reduced";
  for (const auto& model : models) rep.model_names.push_back(model.name);
  rep.value.assign(m, 0.0);
  rep.cov = Mat::Zero(m, m);
  rep.per_jump.assign(m, {});
  rep.draws = states_per_jump;
  for (std::size_t k = 0; k < jumps.size(); ++k) {
    MultiKl kl = kl_reduced_jump(models, jumps[k], spec, states_per_jump,
                                 seed + 0x9e3779b9ULL * (k + 1));
    for (int j = 0; j < m; ++j) {
      rep.value[j] += kl.value[j];
      rep.per_jump[j].push_back(kl.value[j]);
    }
    rep.cov += kl.cov;
  }
  rep.se.resize(m);
  for (int j = 0; j < m; ++j) rep.se[j] = std::sqrt(rep.cov(j, j));
  return rep;
}

ElboReport elbo_direct(const std::vector<KernelModel>& models,
                       const Schedule& sched, const ProcessKind& kind,
                       const TrajectorySpec& traj, const GmmSpec& spec,
                       int draws, std::uint64_t seed) {
  require(!models.empty(), "elbo: empty model list");
  require(draws >= 2, "elbo: need at least two draws");
  spec.validate();
  auto jumps = restrict_to(sched, kind, traj);
  for (const Jump& j : jumps)
    require(j.s == 0 || j.lambda_sq > 0.0,
            "elbo: direct mode needs lambda^2 > 0 (ddim forward process rejected)");

  const int m = static_cast<int>(models.size());
  const int n_jumps = static_cast<int>(jumps.size());
  Mat values(draws, m);

  // Per-jump decomposition (reconstruction first, prior/endpoint term last).
  // Skipped when the per-draw term storage would be excessive.
  const bool keep_terms =
      static_cast<long long>(draws) * (n_jumps + 1) * m <= 5'000'000LL;
  std::vector<Mat> term_store;
  if (keep_terms) term_store.assign(m, Mat::Zero(draws, n_jumps + 1));

  parallel_for(draws, [&](int i) {
    // forward trajectory draw, shared across models (streams keyed by timestep)
    Rng rng0 = Rng::stream(seed, static_cast<std::uint64_t>(i) + 1, 0);
    Vec x0 = sample_x0_one(spec, rng0);
    std::vector<Vec> xs(n_jumps + 1);  // xs[k] = state at jumps[k].s ; xs[n] at N
    std::vector<double> logq(n_jumps + 1, 0.0);  // logq[k]: density into xs[k]
    xs[0] = x0;
    {
      const Jump& top = jumps[n_jumps - 1];
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i) + 1,
                            static_cast<std::uint64_t>(top.t));
      Vec eps = rng.normal_vec(spec.dim);
      Vec mu = std::sqrt(top.alpha_bar_t) * x0;
      xs[n_jumps] = mu + std::sqrt(top.beta_bar_t) * eps;
      logq[n_jumps] = gaussian_logpdf_iso(xs[n_jumps], mu, top.beta_bar_t);
    }
    for (int k = n_jumps - 1; k >= 1; --k) {
      const Jump& jump = jumps[k];
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(i) + 1,
                            static_cast<std::uint64_t>(jump.s));
      Vec mu = tilde_mu(jump, xs[k + 1], x0);
      xs[k] = mu + std::sqrt(jump.lambda_sq) * rng.normal_vec(spec.dim);
      logq[k] = gaussian_logpdf_iso(xs[k], mu, jump.lambda_sq);
    }
    double log_prior = gaussian_logpdf_iso(xs[n_jumps], Vec::Zero(spec.dim), 1.0);
    for (int j = 0; j < m; ++j) {
      double total = log_prior - logq[n_jumps];
      if (keep_terms) term_store[j](i, n_jumps) = total;
      for (int k = 0; k < n_jumps; ++k) {
        ReverseKernel kernel = make_kernel(models[j], jumps[k], xs[k + 1]);
        double term = kernel_logpdf(kernel, xs[k]) - logq[k];
        if (keep_terms) term_store[j](i, k) = term;
        total += term;
      }
      values(i, j) = total;
    }
  });

  ElboReport rep;
  rep.mode = "direct";
  for (const auto& model : models) rep.model_names.push_back(model.name);
  summarize(values, rep.value, rep.cov);
  rep.se.resize(m);
  for (int j = 0; j < m; ++j) rep.se[j] = std::sqrt(rep.cov(j, j));
  rep.draws = draws;
  if (keep_terms) {
    rep.per_jump.assign(m, {});
    for (int j = 0; j < m; ++j) {
      Vec col_mean = term_store[j].colwise().mean();
      rep.per_jump[j].assign(col_mean.data(), col_mean.data() + n_jumps + 1);
    }
  }
  return rep;
}

std::vector<CompareRow> compare_models(const std::vector<KernelModel>& models,
                                       const Schedule& sched,
                                       const ProcessKind& kind,
                                       const TrajectorySpec& traj,
                                       const GmmSpec& spec, bool direct,
                                       int draws, std::uint64_t seed) {
  ElboReport rep = direct
                       ? elbo_direct(models, sched, kind, traj, spec, draws, seed)
                       : kl_reduced_total(models, sched, kind, traj, spec, draws, seed);
  std::vector<CompareRow> rows;
  for (std::size_t j = 0; j < models.size(); ++j) {
    CompareRow r;
    r.model = rep.model_names[j];
    r.mode = rep.mode;
    r.steps = traj.steps();
    r.value = rep.value[j];
    r.se = rep.se[j];
    r.seed = seed;
    r.draws = draws;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace dpmcov
