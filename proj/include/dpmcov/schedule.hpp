#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpmcov/rng.hpp"
#include "dpmcov/types.hpp"

namespace dpmcov {

// Discrete forward-process schedule. alpha_bar is strictly decreasing in
// (0,1); beta_bar = 1 - alpha_bar. Index n is 1-based; n = 0 is the data end
// with alpha_bar = 1, beta_bar = 0.
class Schedule {
 public:
  enum class Kind { Linear, Explicit };

  static Schedule linear(int n_steps);
  static Schedule explicit_betas(std::vector<double> beta);

  int steps() const { return static_cast<int>(beta_.size()); }
  Kind kind() const { return kind_; }
  const std::vector<double>& betas() const { return beta_; }

  double beta(int n) const { check(n); return beta_[n - 1]; }
  double alpha_bar(int n) const { check0(n); return n == 0 ? 1.0 : alpha_bar_[n - 1]; }
  double beta_bar(int n) const { check0(n); return n == 0 ? 0.0 : beta_bar_[n - 1]; }
  double alpha_step(int n) const { check(n); return 1.0 - beta_[n - 1]; }
  // tilde_beta_n = (beta_bar_{n-1} / beta_bar_n) * beta_n, zero at n = 1.
  double tilde_beta(int n) const;

  std::uint64_t hash() const;

 private:
  Schedule(Kind kind, std::vector<double> beta);
  void check(int n) const {
    require(n >= 1 && n <= steps(), "schedule: timestep out of range");
  }
  void check0(int n) const {
    require(n >= 0 && n <= steps(), "schedule: timestep out of range");
  }

  Kind kind_;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> beta_bar_;
};

// Forward-process family selector: the per-step transition variance lambda_n^2.
struct ProcessKind {
  enum class Tag { Ddpm, Ddim, Custom };
  Tag tag = Tag::Ddpm;
  std::vector<double> custom_lambda_sq;  // used when tag == Custom, length N

  static ProcessKind ddpm() { return {Tag::Ddpm, {}}; }
  static ProcessKind ddim() { return {Tag::Ddim, {}}; }
  static ProcessKind custom(std::vector<double> lambda_sq) {
    return {Tag::Custom, std::move(lambda_sq)};
  }
  std::string name() const;
};

double lambda_sq(const Schedule& sched, const ProcessKind& kind, int n);

// gamma_n = sqrt(alpha_bar_{n-1}) - sqrt(beta_bar_{n-1} - lambda_sq) *
//           sqrt(alpha_bar_n / beta_bar_n)
double gamma_coef(const Schedule& sched, int n, double lambda_sq);

// Mean of the forward transition q(x_{n-1} | x_n, x_0).
Vec tilde_mu(const Schedule& sched, int n, double lambda_sq, const Vec& x_n,
             const Vec& x_0);

// Draws eps ~ N(0, I) and returns (x_n, eps) with x_n = sqrt(alpha_bar_n) x0
// + sqrt(beta_bar_n) eps.
std::pair<Vec, Vec> forward_sample(const Schedule& sched, int n, const Vec& x0,
                                   Rng& rng);

// Variance-preserving SDE dx = -beta(t)/2 x dt + sqrt(beta(t)) dw with
// beta(t) linear from beta_min at t=0 to beta_max at t=horizon.
struct VpSde {
  double beta_min = 0.1;
  double beta_max = 20.0;
  double horizon = 1.0;

  double beta(double t) const {
    return beta_min + (beta_max - beta_min) * t / horizon;
  }
  double drift(double t) const { return -0.5 * beta(t); }
  double diffusion_sq(double t) const { return beta(t); }

  // alpha_{t|s} = exp(-int_s^t beta), closed form for the linear beta.
  double alpha(double s, double t) const;
  // beta_{t|s} = 1 - alpha_{t|s}
  double beta_jump(double s, double t) const { return 1.0 - alpha(s, t); }
  // tilde_beta_{s|t} = (beta_{s|0} / beta_{t|0}) * beta_{t|s}, 0 at s = 0.
  double tilde_beta(double s, double t) const;

  double grid_time(int n, int n_steps) const {
    return horizon * static_cast<double>(n) / static_cast<double>(n_steps);
  }
  // Discrete schedule with beta_n = beta_{t_n | t_{n-1}} on the even grid, so
  // that alpha_bar_n reproduces alpha_{t_n | 0}.
  Schedule discretize(int n_steps) const;
};

// One reverse jump t -> s (0 <= s < t). Covers a single discrete step, a
// trajectory jump, and a continuous-time jump: all reverse-kernel formulas
// consume only these quantities.
struct Jump {
  int s = 0, t = 0;  // indices when built from a discrete schedule
  double alpha_bar_s = 1.0, beta_bar_s = 0.0;
  double alpha_bar_t = 1.0, beta_bar_t = 0.0;
  double lambda_sq = 0.0;
  double gamma = 0.0;
  double time_s = 0.0, time_t = 0.0;  // provider-facing times

  StepInfo step_t() const { return {alpha_bar_t, beta_bar_t, time_t}; }
  StepInfo step_s() const { return {alpha_bar_s, beta_bar_s, time_s}; }
  double alpha_jump() const { return alpha_bar_t / alpha_bar_s; }
  double beta_jump() const { return 1.0 - alpha_jump(); }
  // gamma^2 * beta_bar_t / alpha_bar_t: multiplies the conditional noise
  // moment in every covariance formula.
  double var_coef() const { return gamma * gamma * beta_bar_t / alpha_bar_t; }
  // gamma * sqrt(beta_bar_t / alpha_bar_t): kernel-mean shift per unit of
  // noise-prediction error.
  double mean_shift_coef() const {
    return gamma * std::sqrt(beta_bar_t / alpha_bar_t);
  }
  bool is_reconstruction() const { return s == 0; }
};

// gamma for arbitrary (alpha_bar_s, beta_bar_s, alpha_bar_t, beta_bar_t, lambda_sq).
double gamma_coef_raw(double alpha_bar_s, double beta_bar_s, double alpha_bar_t,
                      double beta_bar_t, double lambda_sq);

// Adjacent step n (jump n -> n-1).
Jump make_step_jump(const Schedule& sched, const ProcessKind& kind, int n);
// Trajectory jump t -> s over a discrete schedule; s = 0 is the
// reconstruction jump with lambda_sq = 0. Custom kinds are only defined on
// adjacent jumps.
Jump make_trajectory_jump(const Schedule& sched, const ProcessKind& kind,
                          int s, int t);
// Continuous-time jump t -> s under the VP SDE (ddpm-family lambda).
Jump make_continuous_jump(const VpSde& sde, double s, double t);

Vec tilde_mu(const Jump& jump, const Vec& x_t, const Vec& x_0);

}  // namespace dpmcov
