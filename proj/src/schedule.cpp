#include "dpmcov/schedule.hpp"

#include <cmath>
#include <cstring>

namespace dpmcov {

Schedule::Schedule(Kind kind, std::vector<double> beta)
    : kind_(kind), beta_(std::move(beta)) {
  require(!beta_.empty(), "schedule: needs at least one step");
  alpha_bar_.resize(beta_.size());
  beta_bar_.resize(beta_.size());
  double prod = 1.0;
  for (std::size_t i = 0; i < beta_.size(); ++i) {
    require(beta_[i] > 0.0 && beta_[i] < 1.0, "schedule: beta must lie in (0,1)");
    prod *= 1.0 - beta_[i];
    alpha_bar_[i] = prod;
    beta_bar_[i] = 1.0 - prod;
  }
}

Schedule Schedule::linear(int n_steps) {
  require(n_steps >= 1, "schedule: N must be >= 1");
  // Endpoints scaled by 1000/N so total injected noise is N-invariant.
  double scale = 1000.0 / static_cast<double>(n_steps);
  double lo = 1e-4 * scale, hi = 0.02 * scale;
  require(hi < 1.0, "schedule: linear schedule needs N large enough that beta < 1");
  std::vector<double> beta(n_steps);
  if (n_steps == 1) {
    beta[0] = lo;
  } else {
    for (int i = 0; i < n_steps; ++i)
      beta[i] = lo + (hi - lo) * static_cast<double>(i) / (n_steps - 1);
  }
  return Schedule(Kind::Linear, std::move(beta));
}

Schedule Schedule::explicit_betas(std::vector<double> beta) {
  return Schedule(Kind::Explicit, std::move(beta));
}

double Schedule::tilde_beta(int n) const {
  check(n);
  if (n == 1) return 0.0;  // beta_bar_0 := 0
  return beta_bar(n - 1) / beta_bar(n) * beta(n);
}

std::uint64_t Schedule::hash() const {
  // FNV-1a over the beta bit patterns plus the kind tag.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(kind_));
  for (double b : beta_) {
    std::uint64_t bits;
    std::memcpy(&bits, &b, sizeof bits);
    mix(bits);
  }
  return h;
}

std::string ProcessKind::name() const {
  switch (tag) {
    case Tag::Ddpm: return "ddpm";
    case Tag::Ddim: return "ddim";
    case Tag::Custom: return "custom";
  }
  return "?";
}

double lambda_sq(const Schedule& sched, const ProcessKind& kind, int n) {
  require(n >= 1 && n <= sched.steps(), "lambda_sq: timestep out of range");
  switch (kind.tag) {
    case ProcessKind::Tag::Ddpm:
      return sched.tilde_beta(n);
    case ProcessKind::Tag::Ddim:
      return 0.0;
    case ProcessKind::Tag::Custom:
      require(kind.custom_lambda_sq.size() == static_cast<std::size_t>(sched.steps()),
              "lambda_sq: custom vector length must equal N");
      return kind.custom_lambda_sq[n - 1];
  }
  return 0.0;
}

double gamma_coef_raw(double alpha_bar_s, double beta_bar_s, double alpha_bar_t,
                      double beta_bar_t, double lambda_sq) {
  double radicand = beta_bar_s - lambda_sq;
  require(radicand >= -1e-15, "gamma: lambda_sq exceeds beta_bar at the target step");
  if (radicand < 0.0) radicand = 0.0;
  return std::sqrt(alpha_bar_s) -
         std::sqrt(radicand) * std::sqrt(alpha_bar_t / beta_bar_t);
}

double gamma_coef(const Schedule& sched, int n, double lambda_sq) {
  require(n >= 1 && n <= sched.steps(), "gamma: timestep out of range");
  return gamma_coef_raw(sched.alpha_bar(n - 1), sched.beta_bar(n - 1),
                        sched.alpha_bar(n), sched.beta_bar(n), lambda_sq);
}

Vec tilde_mu(const Schedule& sched, int n, double lambda_sq, const Vec& x_n,
             const Vec& x_0) {
  require(x_n.size() == x_0.size(), "tilde_mu: shape mismatch");
  require(n >= 1 && n <= sched.steps(), "tilde_mu: timestep out of range");
  double radicand = sched.beta_bar(n - 1) - lambda_sq;
  require(radicand >= -1e-15, "tilde_mu: lambda_sq exceeds beta_bar_{n-1}");
  if (radicand < 0.0) radicand = 0.0;
  double a = std::sqrt(sched.alpha_bar(n - 1));
  double b = std::sqrt(radicand) / std::sqrt(sched.beta_bar(n));
  return a * x_0 + b * (x_n - std::sqrt(sched.alpha_bar(n)) * x_0);
}

Vec tilde_mu(const Jump& jump, const Vec& x_t, const Vec& x_0) {
  require(x_t.size() == x_0.size(), "tilde_mu: shape mismatch");
  double radicand = jump.beta_bar_s - jump.lambda_sq;
  if (radicand < 0.0) radicand = 0.0;
  double a = std::sqrt(jump.alpha_bar_s);
  double b = jump.beta_bar_t > 0.0 ? std::sqrt(radicand) / std::sqrt(jump.beta_bar_t) : 0.0;
  return a * x_0 + b * (x_t - std::sqrt(jump.alpha_bar_t) * x_0);
}

std::pair<Vec, Vec> forward_sample(const Schedule& sched, int n, const Vec& x0,
                                   Rng& rng) {
  require(n >= 1 && n <= sched.steps(), "forward_sample: timestep out of range");
  Vec eps = rng.normal_vec(static_cast<int>(x0.size()));
  Vec x_n = std::sqrt(sched.alpha_bar(n)) * x0 + std::sqrt(sched.beta_bar(n)) * eps;
  return {std::move(x_n), std::move(eps)};
}

double VpSde::alpha(double s, double t) const {
  require(s >= 0.0 && t <= horizon && s <= t, "sde: need 0 <= s <= t <= horizon");
  // int_s^t beta = beta_min*(t-s) + (beta_max-beta_min)*(t^2-s^2)/(2*horizon)
  double integral = beta_min * (t - s) +
                    (beta_max - beta_min) * (t * t - s * s) / (2.0 * horizon);
  return std::exp(-integral);
}

double VpSde::tilde_beta(double s, double t) const {
  require(s < t, "sde: tilde_beta needs s < t");
  double bs0 = beta_jump(0.0, s);
  double bt0 = beta_jump(0.0, t);
  if (bs0 == 0.0) return 0.0;
  return bs0 / bt0 * beta_jump(s, t);
}

Schedule VpSde::discretize(int n_steps) const {
  require(n_steps >= 1, "sde: discretize needs N >= 1");
  std::vector<double> beta(n_steps);
  for (int n = 1; n <= n_steps; ++n)
    beta[n - 1] = beta_jump(grid_time(n - 1, n_steps), grid_time(n, n_steps));
  return Schedule::explicit_betas(std::move(beta));
}

Jump make_step_jump(const Schedule& sched, const ProcessKind& kind, int n) {
  return make_trajectory_jump(sched, kind, n - 1, n);
}

Jump make_trajectory_jump(const Schedule& sched, const ProcessKind& kind,
                          int s, int t) {
  require(0 <= s && s < t && t <= sched.steps(),
          "jump: need 0 <= s < t <= N");
  Jump j;
  j.s = s;
  j.t = t;
  j.alpha_bar_s = sched.alpha_bar(s);
  j.beta_bar_s = sched.beta_bar(s);
  j.alpha_bar_t = sched.alpha_bar(t);
  j.beta_bar_t = sched.beta_bar(t);
  j.time_s = s;
  j.time_t = t;
  if (s == 0) {
    j.lambda_sq = 0.0;  // reconstruction jump: beta_bar_0 = 0
  } else {
    switch (kind.tag) {
      case ProcessKind::Tag::Ddpm:
        j.lambda_sq = j.beta_bar_s / j.beta_bar_t * j.beta_jump();
        break;
      case ProcessKind::Tag::Ddim:
        j.lambda_sq = 0.0;
        break;
      case ProcessKind::Tag::Custom:
        require(t == s + 1,
                "jump: custom lambda vectors only define adjacent transitions");
        j.lambda_sq = lambda_sq(sched, kind, t);
        break;
    }
  }
  j.gamma = gamma_coef_raw(j.alpha_bar_s, j.beta_bar_s, j.alpha_bar_t,
                           j.beta_bar_t, j.lambda_sq);
  return j;
}

Jump make_continuous_jump(const VpSde& sde, double s, double t) {
  require(0.0 <= s && s < t && t <= sde.horizon,
          "jump: need 0 <= s < t <= horizon");
  Jump j;
  j.s = -1;
  j.t = -1;
  j.alpha_bar_s = sde.alpha(0.0, s);
  j.beta_bar_s = sde.beta_jump(0.0, s);
  j.alpha_bar_t = sde.alpha(0.0, t);
  j.beta_bar_t = sde.beta_jump(0.0, t);
  j.lambda_sq = sde.tilde_beta(s, t);
  j.time_s = s;
  j.time_t = t;
  j.gamma = gamma_coef_raw(j.alpha_bar_s, j.beta_bar_s, j.alpha_bar_t,
                           j.beta_bar_t, j.lambda_sq);
  return j;
}

}  // namespace dpmcov
