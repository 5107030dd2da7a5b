#pragma once

#include <string>
#include <vector>

#include "dpmcov/gmm.hpp"
#include "dpmcov/kernels.hpp"
#include "dpmcov/trajectory.hpp"

namespace dpmcov {

// Shared-randomness evaluation of several models at once: `cov` is the
// covariance matrix of the per-model estimates, so paired differences carry
// honest standard errors.
struct ElboReport {
  std::string mode;  // "direct" or "reduced"
  std::vector<std::string> model_names;
  std::vector<double> value;
  std::vector<double> se;
  Mat cov;
  // Per-jump decomposition, reconstruction jump first; direct mode appends
  // the prior/endpoint term last. Rows sum to value.
  std::vector<std::vector<double>> per_jump;
  int draws = 0;

  double diff_se(int a, int b) const;
};

// Monte Carlo ELBO over full forward trajectories drawn from q (common
// random numbers across models). Rejects families with a degenerate
// forward transition (ddim), whose ELBO is -inf.
ElboReport elbo_direct(const std::vector<KernelModel>& models,
                       const Schedule& sched, const ProcessKind& kind,
                       const TrajectorySpec& traj, const GmmSpec& spec,
                       int draws, std::uint64_t seed);

// Per-state reduced KL for one jump, up to additive model-independent
// constants: (1/2) avg over x_t of sum_i [ sigma_i^-2 (M_ii + dmu_i^2) +
// log sigma_i^2 ], with M and the target mean from the exact posterior
// moments. Full-covariance kernels use the trace/log-det form.
struct MultiKl {
  std::vector<double> value;
  Mat cov;
  int states = 0;
};
MultiKl kl_reduced_jump(const std::vector<KernelModel>& models, const Jump& jump,
                        const GmmSpec& spec, int states, std::uint64_t seed);

// Sum of reduced per-jump KLs along a trajectory (independent draws per jump).
ElboReport kl_reduced_total(const std::vector<KernelModel>& models,
                            const Schedule& sched, const ProcessKind& kind,
                            const TrajectorySpec& traj, const GmmSpec& spec,
                            int states_per_jump, std::uint64_t seed);

// Continuous-time jump t -> s under the VP SDE; same reduction.
MultiKl kl_continuous(const std::vector<KernelModel>& models, const VpSde& sde,
                      double s, double t, const GmmSpec& spec, int states,
                      std::uint64_t seed);

// Per-state reduced KL of one kernel against exact target moments: the
// (1/2)[sum_i ((M_ii + dmu_i^2)/sigma_i^2 + log sigma_i^2)] reduction, or its
// trace/log-det form for full-covariance kernels.
double reduced_kl_state(const ReverseKernel& kernel, const Vec& mu_q,
                        const Vec& m_diag, const Mat* m_full);

// Per-state diagonal of the conditional covariance M(x) of the jump target
// (states x d), for variance-scan style analyses.
Mat reduced_m_diag(const Jump& jump, const GmmSpec& spec, int states,
                   std::uint64_t seed);

// CSV-able comparison rows.
struct CompareRow {
  std::string model;
  std::string mode;
  int steps = 0;
  double value = 0.0;
  double se = 0.0;
  std::uint64_t seed = 0;
  int draws = 0;
};
std::vector<CompareRow> compare_models(const std::vector<KernelModel>& models,
                                       const Schedule& sched,
                                       const ProcessKind& kind,
                                       const TrajectorySpec& traj,
                                       const GmmSpec& spec, bool direct,
                                       int draws, std::uint64_t seed);

}  // namespace dpmcov
