#pragma once

#include <string>
#include <vector>

#include "dpmcov/elbo.hpp"
#include "dpmcov/gmm.hpp"
#include "dpmcov/kernels.hpp"
#include "dpmcov/trajectory.hpp"

namespace dpmcov {

struct ClipConfig {
  bool enabled = false;
  double y = 1.0;          // maximum tolerated channel perturbation
  double data_scale = 1.0; // half-range of the data, 1 for [-1,1] images
};

struct SampleRun {
  Mat samples;  // batch x dim
  std::uint64_t seed = 0;
  std::vector<int> tau;
  std::string model;
  std::vector<Mat> intermediates;  // recorded states, coarse to fine
};

// Reverses the chain along the trajectory: x at tau_K from the standard
// normal prior, Gaussian kernel at every jump, final step emitted as the
// kernel mean without noise. Chains are independent with per-(chain, step)
// randomness, so results do not depend on sharding. Aborts on non-finite
// states.
SampleRun ancestral_sample(const KernelModel& model, const Schedule& sched,
                           const ProcessKind& kind, const TrajectorySpec& traj,
                           int batch, std::uint64_t seed,
                           const ClipConfig& clip = {}, bool record = false);

// Continuous-time analogue on a decreasing time grid ending at 0. corrected
// selects the residual-route variance, otherwise the second-moment route.
SampleRun continuous_sample(const MomentProvider& provider, const VpSde& sde,
                            const std::vector<double>& grid, int batch,
                            std::uint64_t seed, bool corrected);

// Euler-Maruyama discretization of the reverse SDE with the score read off
// the provider's noise mean; baseline only. Integrates from horizon down to
// t_min on an even grid of k steps.
SampleRun euler_maruyama(const MomentProvider& provider, const VpSde& sde,
                         int k, int batch, std::uint64_t seed,
                         double t_min = 1e-3);

// Empirical-vs-exact diagnostics plus the average data log density of the
// samples under the mixture. Bands are one-standard-error scales of each
// error statistic.
struct SampleMetrics {
  double mean_err = 0.0, mean_band = 0.0;      // max-abs over coordinates
  double cov_err = 0.0, cov_band = 0.0;        // max-abs over entries
  double weight_err = 0.0, weight_band = 0.0;  // max-abs over components
  double avg_loglik = 0.0, loglik_se = 0.0;
};
SampleMetrics sample_metrics(const SampleRun& run, const GmmSpec& spec);

}  // namespace dpmcov
