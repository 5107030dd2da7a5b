#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dpmcov/providers.hpp"
#include "dpmcov/schedule.hpp"

namespace dpmcov {

// Variances are floored here after every estimate; learned s - e^2 may go
// negative and is clamped at zero first.
inline constexpr double kVarianceFloor = 1e-12;

// One reverse transition p(x_s | x_t): mean plus an isotropic, diagonal, or
// full covariance.
struct ReverseKernel {
  enum class Cov { Iso, Diag, Full };
  Vec mean;
  Cov cov_kind = Cov::Iso;
  double iso = 0.0;
  Vec diag;
  Mat full;

  Vec diag_or_fill(int d) const;  // diagonal view of whichever form is stored
  std::string to_json_string() const;
};

// mu(x) = tilde_mu(x, (x - sqrt(beta_bar_t) e(x)) / sqrt(alpha_bar_t)).
Vec optimal_mean(const MomentProvider& provider, const Jump& jump, const Vec& x);

// Diagonal estimate from the second moment route: lambda^2 + coef * (s - e^2),
// clamped elementwise at zero before the floor.
Vec sn_diag_var(const MomentProvider& provider, const Jump& jump, const Vec& x);

// Diagonal estimate from the residual route: lambda^2 + coef * r, floored.
Vec npr_diag_var(const MomentProvider& provider, const Jump& jump, const Vec& x);

// Oracle full covariance: lambda^2 I + coef * [Cov[eps|x] + d d^T] where d is
// the mean provider's error against the exact conditional mean. Pass the same
// oracle as mean_provider for the joint-optimal covariance.
Mat full_covariance(const OracleMoments& oracle, const Jump& jump, const Vec& x,
                    const MomentProvider& mean_provider);

// State-independent isotropic estimate per timestep: lambda^2 + coef * (1 -
// E||e||^2 / d), expectation over the forward marginal, clamped to
// [floor, lambda^2 + coef].
struct IsoCache {
  std::vector<double> mean_sq_norm_over_d;  // index n-1, over the full schedule
  int budget = 0;
  std::uint64_t seed = 0;
};
IsoCache build_iso_cache(const MomentProvider& provider, const GmmSpec& spec,
                         const Schedule& sched, int budget, std::uint64_t seed);
double analytic_iso_var(const IsoCache& cache, const Jump& jump);
// Uncached single-step variant (Eq.-style direct estimate for one n).
double analytic_iso_var(const MomentProvider& provider, const GmmSpec& spec,
                        const Schedule& sched, const ProcessKind& kind, int n,
                        int budget, std::uint64_t seed);

// Continuous-time diagonal estimate over the jump t -> s. corrected = false
// uses the s - e^2 route, corrected = true the residual route. Matches the
// discrete formulas on grid-adjacent jumps.
Vec continuous_diag_var(const MomentProvider& provider, const VpSde& sde,
                        double s, double t, const Vec& x, bool corrected);
Vec continuous_mean(const MomentProvider& provider, const VpSde& sde, double s,
                    double t, const Vec& x);

// Penultimate-step covariance clip: rescales sigma so that
// ||sigma||_inf * E|eps| <= (2/255) * y * data_scale, with E|eps| = sqrt(2/pi).
ReverseKernel clip_variance(ReverseKernel kernel, double y, double data_scale);

// A named reverse-kernel recipe: where the mean comes from and how the
// covariance is estimated.
struct KernelModel {
  enum class Variance {
    FixedLambda,  // handcrafted sigma^2 = lambda^2 (beta_tilde under ddpm)
    FixedBeta,    // handcrafted sigma^2 = beta_{t|s}
    AnalyticIso,  // per-timestep isotropic estimate (needs iso_cache)
    SnDiag,
    NprDiag,
    OracleFull,
  };
  std::string name;
  const MomentProvider* moments = nullptr;
  Variance variance = Variance::SnDiag;
  const IsoCache* iso_cache = nullptr;
  const OracleMoments* oracle = nullptr;  // OracleFull only
  // Multiplies the estimated covariance; lets tests build model pairs that
  // differ only in covariance.
  double variance_scale = 1.0;
};

ReverseKernel make_kernel(const KernelModel& model, const Jump& jump, const Vec& x);

// log N(x; mean, cov) for whichever covariance form the kernel stores.
double kernel_logpdf(const ReverseKernel& kernel, const Vec& x);
double gaussian_logpdf_iso(const Vec& x, const Vec& mean, double var);

}  // namespace dpmcov
