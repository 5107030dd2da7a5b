#pragma once

#include <string>
#include <vector>

#include "dpmcov/elbo.hpp"
#include "dpmcov/gmm.hpp"
#include "dpmcov/kernels.hpp"

namespace dpmcov {

// Brute-force trapezoid quadrature over the 1-d posterior q(x0|x); kept
// independent of the closed-form mixture-posterior code path on purpose.
struct QuadratureMoments {
  double mean = 0.0;
  double var = 0.0;
  double mass = 0.0;  // integral of the unnormalized posterior
};
QuadratureMoments quadrature_x0_moments(const GmmSpec& spec, double alpha_bar,
                                        double beta_bar, double x,
                                        int points = 100001,
                                        double half_range = 40.0);

struct CheckResult {
  std::string name;
  bool pass = false;
  double margin = 0.0;  // distance inside the tolerance; negative on failure
  std::string detail;
};

struct CheckOptions {
  std::uint64_t seed = 20260810;
  int instances = 20;       // random (spec, timestep) draws per check
  int states = 200;         // Monte Carlo states per instance
  int quadrature_points = 100001;
  // Mutation hook: multiplies the gamma^2 variance coefficient in the
  // theorem-optimality kernel route. Anything but +1 must make the
  // perturbation check fail.
  double variance_coef_sign = 1.0;
};

CheckResult check_schedule_identities(const CheckOptions& opt = {});
CheckResult check_sde_consistency(const CheckOptions& opt = {});
CheckResult check_gmm_quadrature(const CheckOptions& opt = {});
CheckResult check_gmm_score_identity(const CheckOptions& opt = {});
CheckResult check_gmm_normalization(const CheckOptions& opt = {});
CheckResult check_gmm_total_variance(const CheckOptions& opt = {});
CheckResult check_joint_optimal_variance(const CheckOptions& opt = {});
CheckResult check_corrected_variance(const CheckOptions& opt = {});
CheckResult check_diag_beats_iso_gap(const CheckOptions& opt = {});
CheckResult check_full_cov_dominance(const CheckOptions& opt = {});
CheckResult check_continuous_discrete(const CheckOptions& opt = {});
CheckResult check_dp_bruteforce(const CheckOptions& opt = {});
CheckResult check_gradients(const CheckOptions& opt = {});
CheckResult check_error_amplification(const CheckOptions& opt = {});

std::vector<CheckResult> run_all_checks(const CheckOptions& opt = {});
std::string checks_report_json(const std::vector<CheckResult>& results);

// Random 1-d mixture for property checks: J in {1,2,3}, means in [-3,3],
// component variance in [0.05, 2].
GmmSpec random_gmm_1d(Rng& rng);
GmmSpec random_gmm(int dim, Rng& rng);

}  // namespace dpmcov
