#include "dpmcov/sampler.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "dpmcov/parallel.hpp"

namespace dpmcov {
namespace {

Vec kernel_draw(const ReverseKernel& kernel, Rng& rng) {
  const int d = static_cast<int>(kernel.mean.size());
  Vec z = rng.normal_vec(d);
  switch (kernel.cov_kind) {
    case ReverseKernel::Cov::Iso:
      return kernel.mean + std::sqrt(kernel.iso) * z;
    case ReverseKernel::Cov::Diag:
      return kernel.mean + kernel.diag.cwiseSqrt().cwiseProduct(z);
    case ReverseKernel::Cov::Full: {
      Eigen::LLT<Mat> llt(kernel.full);
      if (llt.info() != Eigen::Success)
        throw runtime_fault("sampler: full covariance is not positive definite");
      return kernel.mean + llt.matrixL() * z;
    }
  }
  return kernel.mean;
}

void check_finite(const Vec& x, int step) {
  if (!x.allFinite())
    throw runtime_fault("sampler: non-finite state at step " + std::to_string(step));
}

}  // namespace

SampleRun ancestral_sample(const KernelModel& model, const Schedule& sched,
                           const ProcessKind& kind, const TrajectorySpec& traj,
                           int batch, std::uint64_t seed,
                           const ClipConfig& clip, bool record) {
  require(batch >= 1, "sampler: batch must be >= 1");
  require(model.moments != nullptr, "sampler: model needs a moment provider");
  auto jumps = restrict_to(sched, kind, traj);
  const int n_jumps = static_cast<int>(jumps.size());
  const int d = model.moments->dim();

  SampleRun run;
  run.seed = seed;
  run.tau = traj.tau;
  run.model = model.name;
  run.samples.resize(batch, d);
  if (record) run.intermediates.assign(n_jumps, Mat(batch, d));

  parallel_for(batch, [&](int chain) {
    Rng prior_rng = Rng::stream(seed, static_cast<std::uint64_t>(chain) + 1, 0);
    Vec x = prior_rng.normal_vec(d);
    for (int k = n_jumps - 1; k >= 0; --k) {
      const Jump& jump = jumps[k];
      if (record) run.intermediates[k].row(chain) = x.transpose();
      ReverseKernel kernel = make_kernel(model, jump, x);
      // second-to-last transition: optional covariance clip
      if (clip.enabled && k == 1)
        kernel = clip_variance(std::move(kernel), clip.y, clip.data_scale);
      if (jump.is_reconstruction()) {
        x = kernel.mean;  // final step emitted noiselessly
      } else {
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(chain) + 1,
                              static_cast<std::uint64_t>(jump.t));
        x = kernel_draw(kernel, rng);
      }
      check_finite(x, jump.t);
    }
    run.samples.row(chain) = x.transpose();
  });
  return run;
}

SampleRun continuous_sample(const MomentProvider& provider, const VpSde& sde,
                            const std::vector<double>& grid, int batch,
                            std::uint64_t seed, bool corrected) {
  require(batch >= 1, "sampler: batch must be >= 1");
  require(grid.size() >= 2, "sampler: grid needs at least two times");
  require(grid.front() == sde.horizon, "sampler: grid must start at the horizon");
  require(grid.back() == 0.0, "sampler: grid must end at 0");
  for (std::size_t i = 1; i < grid.size(); ++i)
    require(grid[i] < grid[i - 1], "sampler: grid must strictly decrease");
  const int d = provider.dim();
  const int n_jumps = static_cast<int>(grid.size()) - 1;

  SampleRun run;
  run.seed = seed;
  run.model = "continuous/" + provider.name();
  run.samples.resize(batch, d);

  parallel_for(batch, [&](int chain) {
    Rng prior_rng = Rng::stream(seed, static_cast<std::uint64_t>(chain) + 1, 0);
    Vec x = prior_rng.normal_vec(d);
    for (int k = 0; k < n_jumps; ++k) {
      double t = grid[k];
      double s = grid[k + 1];
      Jump jump = make_continuous_jump(sde, std::max(s, 0.0), t);
      Vec mean = optimal_mean(provider, jump, x);
      if (s <= 0.0) {
        x = mean;  // final emission, mean only
      } else {
        Vec var = corrected ? npr_diag_var(provider, jump, x)
                            : sn_diag_var(provider, jump, x);
        Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(chain) + 1,
                              static_cast<std::uint64_t>(k) + 1);
        x = mean + var.cwiseSqrt().cwiseProduct(rng.normal_vec(d));
      }
      check_finite(x, k);
    }
    run.samples.row(chain) = x.transpose();
  });
  return run;
}

SampleRun euler_maruyama(const MomentProvider& provider, const VpSde& sde,
                         int k, int batch, std::uint64_t seed, double t_min) {
  require(k >= 1, "sampler: need at least one step");
  require(batch >= 1, "sampler: batch must be >= 1");
  require(t_min >= 0.0 && t_min < sde.horizon, "sampler: bad t_min");
  const int d = provider.dim();

  SampleRun run;
  run.seed = seed;
  run.model = "euler-maruyama/" + provider.name();
  run.samples.resize(batch, d);
  const double dt = (sde.horizon - t_min) / k;

  parallel_for(batch, [&](int chain) {
    Rng prior_rng = Rng::stream(seed, static_cast<std::uint64_t>(chain) + 1, 0);
    Vec x = prior_rng.normal_vec(d);
    double t = sde.horizon;
    for (int step = 0; step < k; ++step) {
      double g2 = sde.diffusion_sq(t);
      Vec drift = sde.drift(t) * x;
      if (g2 > 0.0) {
        double beta_t0 = sde.beta_jump(0.0, t);
        StepInfo st{sde.alpha(0.0, t), beta_t0, t};
        Vec score = -provider.noise_mean(x, st) / std::sqrt(beta_t0);
        drift -= g2 * score;
      }
      Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(chain) + 1,
                            static_cast<std::uint64_t>(step) + 1);
      x = x - dt * drift +
          std::sqrt(g2 * dt) * rng.normal_vec(d);
      check_finite(x, step);
      t -= dt;
    }
    run.samples.row(chain) = x.transpose();
  });
  return run;
}

SampleMetrics sample_metrics(const SampleRun& run, const GmmSpec& spec) {
  require(run.samples.rows() >= 2, "metrics: empty batch");
  require(run.samples.cols() == spec.dim, "metrics: dimension mismatch");
  spec.validate();
  const int b = static_cast<int>(run.samples.rows());
  const int d = spec.dim;
  const int J = spec.components();

  SampleMetrics m;
  Vec emp_mean = run.samples.colwise().mean();
  Mat centered = run.samples.rowwise() - emp_mean.transpose();
  Mat emp_cov = centered.transpose() * centered / (b - 1.0);

  Vec true_mean = spec.mixture_mean();
  Mat true_cov = spec.mixture_cov();
  m.mean_err = (emp_mean - true_mean).cwiseAbs().maxCoeff();
  m.mean_band = std::sqrt(true_cov.diagonal().maxCoeff() / b);
  m.cov_err = (emp_cov - true_cov).cwiseAbs().maxCoeff();
  double cov_band = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      cov_band = std::max(cov_band, std::sqrt((true_cov(i, i) * true_cov(j, j) +
                                               true_cov(i, j) * true_cov(i, j)) /
                                              b));
  m.cov_band = cov_band;

  // data-level responsibilities: argmax component per sample
  std::vector<double> share(J, 0.0);
  double loglik = 0.0, loglik_sq = 0.0;
  for (int i = 0; i < b; ++i) {
    Vec x = run.samples.row(i).transpose();
    int best = 0;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < J; ++j) {
      double lp = std::log(spec.weights[j]) -
                  (x - spec.means[j]).squaredNorm() / (2.0 * spec.var);
      if (lp > best_lp) {
        best_lp = lp;
        best = j;
      }
    }
    share[best] += 1.0 / b;
    double ll = marginal_logpdf(spec, 1.0, 0.0, x);
    loglik += ll;
    loglik_sq += ll * ll;
  }
  m.weight_err = 0.0;
  m.weight_band = 0.0;
  for (int j = 0; j < J; ++j) {
    m.weight_err = std::max(m.weight_err, std::abs(share[j] - spec.weights[j]));
    m.weight_band = std::max(
        m.weight_band, std::sqrt(spec.weights[j] * (1.0 - spec.weights[j]) / b));
  }
  m.avg_loglik = loglik / b;
  double var = (loglik_sq - loglik * loglik / b) / (b - 1.0);
  m.loglik_se = std::sqrt(std::max(var, 0.0) / b);
  return m;
}

}  // namespace dpmcov
