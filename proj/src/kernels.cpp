#include "dpmcov/kernels.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <sstream>

namespace dpmcov {

Vec ReverseKernel::diag_or_fill(int d) const {
  switch (cov_kind) {
    case Cov::Iso: return Vec::Constant(d, iso);
    case Cov::Diag: return diag;
    case Cov::Full: return full.diagonal();
  }
  return Vec();
}

std::string ReverseKernel::to_json_string() const {
  std::ostringstream os;
  os << "{\"mean\":[";
  for (int i = 0; i < mean.size(); ++i) os << (i ? "," : "") << mean[i];
  os << "],";
  if (cov_kind == Cov::Iso) {
    os << "\"iso\":" << iso;
  } else if (cov_kind == Cov::Diag) {
    os << "\"diag\":[";
    for (int i = 0; i < diag.size(); ++i) os << (i ? "," : "") << diag[i];
    os << "]";
  } else {
    os << "\"full\":[";
    for (int r = 0; r < full.rows(); ++r) {
      os << (r ? ",[" : "[");
      for (int c = 0; c < full.cols(); ++c) os << (c ? "," : "") << full(r, c);
      os << "]";
    }
    os << "]";
  }
  os << "}";
  return os.str();
}

Vec optimal_mean(const MomentProvider& provider, const Jump& jump, const Vec& x) {
  Vec e = provider.noise_mean(x, jump.step_t());
  Vec x0_hat = (x - std::sqrt(jump.beta_bar_t) * e) / std::sqrt(jump.alpha_bar_t);
  return tilde_mu(jump, x, x0_hat);
}

namespace {

Vec floored(Vec v) {
  for (int i = 0; i < v.size(); ++i) v[i] = std::max(v[i], kVarianceFloor);
  return v;
}

}  // namespace

Vec sn_diag_var(const MomentProvider& provider, const Jump& jump, const Vec& x) {
  StepInfo st = jump.step_t();
  Vec e = provider.noise_mean(x, st);
  Vec s = provider.noise_second_moment(x, st);
  Vec centered = (s - e.cwiseProduct(e)).cwiseMax(0.0);
  Vec out = ((jump.var_coef() * centered).array() + jump.lambda_sq).matrix();
  return floored(std::move(out));
}

Vec npr_diag_var(const MomentProvider& provider, const Jump& jump, const Vec& x) {
  Vec r = provider.noise_residual_moment(x, jump.step_t());
  Vec out = ((jump.var_coef() * r.cwiseMax(0.0)).array() + jump.lambda_sq).matrix();
  return floored(std::move(out));
}

Mat full_covariance(const OracleMoments& oracle, const Jump& jump, const Vec& x,
                    const MomentProvider& mean_provider) {
  StepInfo st = jump.step_t();
  Mat cov = oracle.noise_cov(x, st);
  Vec err = mean_provider.noise_mean(x, st) - oracle.noise_mean(x, st);
  Mat out = jump.lambda_sq * Mat::Identity(cov.rows(), cov.cols()) +
            jump.var_coef() * (cov + err * err.transpose());
  return out;
}

IsoCache build_iso_cache(const MomentProvider& provider, const GmmSpec& spec,
                         const Schedule& sched, int budget, std::uint64_t seed) {
  require(budget >= 1, "iso cache: budget must be >= 1");
  IsoCache cache;
  cache.budget = budget;
  cache.seed = seed;
  cache.mean_sq_norm_over_d.resize(sched.steps());
  for (int n = 1; n <= sched.steps(); ++n) {
    StepInfo st{sched.alpha_bar(n), sched.beta_bar(n), static_cast<double>(n)};
    double acc = 0.0;
    for (int i = 0; i < budget; ++i) {
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(n),
                            static_cast<std::uint64_t>(i) + 1);
      Vec x0 = sample_x0_one(spec, rng);
      Vec eps = rng.normal_vec(spec.dim);
      Vec x = std::sqrt(st.alpha_bar) * x0 + std::sqrt(st.beta_bar) * eps;
      acc += provider.noise_mean(x, st).squaredNorm() / spec.dim;
    }
    cache.mean_sq_norm_over_d[n - 1] = acc / budget;
  }
  return cache;
}

double analytic_iso_var(const IsoCache& cache, const Jump& jump) {
  require(jump.t >= 1 &&
              jump.t <= static_cast<int>(cache.mean_sq_norm_over_d.size()),
          "iso cache: jump target outside cached schedule");
  double coef = jump.var_coef();
  double v = jump.lambda_sq + coef * (1.0 - cache.mean_sq_norm_over_d[jump.t - 1]);
  return std::min(std::max(v, kVarianceFloor), jump.lambda_sq + coef);
}

double analytic_iso_var(const MomentProvider& provider, const GmmSpec& spec,
                        const Schedule& sched, const ProcessKind& kind, int n,
                        int budget, std::uint64_t seed) {
  IsoCache one;
  one.budget = budget;
  one.seed = seed;
  one.mean_sq_norm_over_d.assign(sched.steps(), 0.0);
  StepInfo st{sched.alpha_bar(n), sched.beta_bar(n), static_cast<double>(n)};
  double acc = 0.0;
  for (int i = 0; i < budget; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(n),
                          static_cast<std::uint64_t>(i) + 1);
    Vec x0 = sample_x0_one(spec, rng);
    Vec eps = rng.normal_vec(spec.dim);
    Vec x = std::sqrt(st.alpha_bar) * x0 + std::sqrt(st.beta_bar) * eps;
    acc += provider.noise_mean(x, st).squaredNorm() / spec.dim;
  }
  one.mean_sq_norm_over_d[n - 1] = acc / budget;
  return analytic_iso_var(one, make_step_jump(sched, kind, n));
}

Vec continuous_mean(const MomentProvider& provider, const VpSde& sde, double s,
                    double t, const Vec& x) {
  require(s < t, "continuous mean: need s < t");
  return optimal_mean(provider, make_continuous_jump(sde, s, t), x);
}

Vec continuous_diag_var(const MomentProvider& provider, const VpSde& sde,
                        double s, double t, const Vec& x, bool corrected) {
  require(s < t, "continuous variance: need s < t");
  Jump jump = make_continuous_jump(sde, s, t);
  return corrected ? npr_diag_var(provider, jump, x)
                   : sn_diag_var(provider, jump, x);
}

ReverseKernel clip_variance(ReverseKernel kernel, double y, double data_scale) {
  require(y > 0.0, "clip: channel scale must be positive");
  require(data_scale > 0.0, "clip: data scale must be positive");
  const double mean_abs_noise = std::sqrt(2.0 / M_PI);
  const double bound = 2.0 / 255.0 * y * data_scale;
  int d = static_cast<int>(kernel.mean.size());
  Vec sigma = kernel.diag_or_fill(d).cwiseSqrt();
  double worst = sigma.maxCoeff();
  if (worst * mean_abs_noise <= bound) return kernel;
  double factor = bound / (mean_abs_noise * worst);
  double f2 = factor * factor;
  switch (kernel.cov_kind) {
    case ReverseKernel::Cov::Iso: kernel.iso *= f2; break;
    case ReverseKernel::Cov::Diag: kernel.diag *= f2; break;
    case ReverseKernel::Cov::Full: kernel.full *= f2; break;
  }
  return kernel;
}

ReverseKernel make_kernel(const KernelModel& model, const Jump& jump, const Vec& x) {
  require(model.moments != nullptr, "kernel model: missing moment provider");
  ReverseKernel k;
  k.mean = optimal_mean(*model.moments, jump, x);
  switch (model.variance) {
    case KernelModel::Variance::FixedLambda:
      k.cov_kind = ReverseKernel::Cov::Iso;
      k.iso = std::max(jump.lambda_sq, kVarianceFloor);
      break;
    case KernelModel::Variance::FixedBeta:
      k.cov_kind = ReverseKernel::Cov::Iso;
      k.iso = std::max(jump.beta_jump(), kVarianceFloor);
      break;
    case KernelModel::Variance::AnalyticIso:
      require(model.iso_cache != nullptr, "kernel model: analytic-iso needs a cache");
      k.cov_kind = ReverseKernel::Cov::Iso;
      k.iso = analytic_iso_var(*model.iso_cache, jump);
      break;
    case KernelModel::Variance::SnDiag:
      k.cov_kind = ReverseKernel::Cov::Diag;
      k.diag = sn_diag_var(*model.moments, jump, x);
      break;
    case KernelModel::Variance::NprDiag:
      k.cov_kind = ReverseKernel::Cov::Diag;
      k.diag = npr_diag_var(*model.moments, jump, x);
      break;
    case KernelModel::Variance::OracleFull:
      require(model.oracle != nullptr, "kernel model: full covariance needs the oracle");
      k.cov_kind = ReverseKernel::Cov::Full;
      k.full = full_covariance(*model.oracle, jump, x, *model.moments);
      break;
  }
  if (model.variance_scale != 1.0) {
    require(model.variance_scale > 0.0, "kernel model: variance scale must be positive");
    k.iso *= model.variance_scale;
    if (k.diag.size()) k.diag *= model.variance_scale;
    if (k.full.size()) k.full *= model.variance_scale;
  }
  return k;
}

double gaussian_logpdf_iso(const Vec& x, const Vec& mean, double var) {
  require(var > 0.0, "logpdf: variance must be positive");
  double d = static_cast<double>(x.size());
  return -0.5 * (x - mean).squaredNorm() / var -
         0.5 * d * std::log(2.0 * M_PI * var);
}

double kernel_logpdf(const ReverseKernel& kernel, const Vec& x) {
  const int d = static_cast<int>(x.size());
  switch (kernel.cov_kind) {
    case ReverseKernel::Cov::Iso:
      return gaussian_logpdf_iso(x, kernel.mean, kernel.iso);
    case ReverseKernel::Cov::Diag: {
      double acc = -0.5 * d * std::log(2.0 * M_PI);
      for (int i = 0; i < d; ++i) {
        double v = kernel.diag[i];
        double r = x[i] - kernel.mean[i];
        acc -= 0.5 * (std::log(v) + r * r / v);
      }
      return acc;
    }
    case ReverseKernel::Cov::Full: {
      Eigen::LLT<Mat> llt(kernel.full);
      if (llt.info() != Eigen::Success)
        throw runtime_fault("logpdf: full covariance is not positive definite");
      Vec r = x - kernel.mean;
      Vec sol = llt.solve(r);
      double logdet = 0.0;
      for (int i = 0; i < d; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
      return -0.5 * (r.dot(sol) + logdet + d * std::log(2.0 * M_PI));
    }
  }
  return 0.0;
}

}  // namespace dpmcov
