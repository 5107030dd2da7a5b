#include "dpmcov/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dpmcov/parallel.hpp"

namespace dpmcov {

void TrajectorySpec::validate(int n_steps) const {
  require(!tau.empty(), "trajectory: empty");
  require(tau.back() == n_steps, "trajectory: must end at N");
  require(tau.front() >= 1, "trajectory: timesteps start at 1");
  for (std::size_t i = 1; i < tau.size(); ++i)
    require(tau[i] > tau[i - 1], "trajectory: timesteps must strictly increase");
}

TrajectorySpec TrajectorySpec::identity(int n_steps) {
  TrajectorySpec t;
  t.tau.resize(n_steps);
  for (int i = 0; i < n_steps; ++i) t.tau[i] = i + 1;
  return t;
}

TrajectorySpec even_trajectory(int n_steps, int k) {
  require(k >= 1 && k <= n_steps, "even trajectory: need 1 <= K <= N");
  TrajectorySpec t;
  t.tau.reserve(k);
  for (int i = 1; i <= k; ++i) {
    int v = static_cast<int>(std::floor(static_cast<double>(i) * n_steps / k));
    if (!t.tau.empty() && v <= t.tau.back()) v = t.tau.back() + 1;
    t.tau.push_back(v);
  }
  t.validate(n_steps);
  return t;
}

std::vector<Jump> restrict_to(const Schedule& sched, const ProcessKind& kind,
                              const TrajectorySpec& traj) {
  traj.validate(sched.steps());
  std::vector<Jump> jumps;
  jumps.reserve(traj.steps());
  int prev = 0;
  for (int t : traj.tau) {
    jumps.push_back(make_trajectory_jump(sched, kind, prev, t));
    prev = t;
  }
  return jumps;
}

Mat cost_matrix(const KernelModel& model, const Schedule& sched,
                const ProcessKind& kind, const GmmSpec& spec, int budget,
                std::uint64_t seed) {
  require(budget >= 1, "cost matrix: budget must be >= 1");
  spec.validate();
  const int n = sched.steps();
  Mat cost = Mat::Constant(n + 1, n + 1, std::numeric_limits<double>::infinity());

  std::vector<Jump> jumps;
  for (int t = 1; t <= n; ++t)
    for (int s = 0; s < t; ++s) {
      Jump jump = make_trajectory_jump(sched, kind, s, t);
      require(s == 0 || jump.lambda_sq > 0.0,
              "cost matrix: degenerate forward transition (ddim) has no density");
      jumps.push_back(jump);
    }

  parallel_for(static_cast<int>(jumps.size()), [&](int idx) {
    const Jump& jump = jumps[idx];
    std::uint64_t key = static_cast<std::uint64_t>(jump.s) * (n + 1) + jump.t;
    double acc = 0.0;
    for (int i = 0; i < budget; ++i) {
      Rng rng = Rng::stream(seed, key, static_cast<std::uint64_t>(i) + 1);
      Vec x0 = sample_x0_one(spec, rng);
      Vec eps = rng.normal_vec(spec.dim);
      Vec x_t = std::sqrt(jump.alpha_bar_t) * x0 + std::sqrt(jump.beta_bar_t) * eps;
      ReverseKernel kernel = make_kernel(model, jump, x_t);
      if (jump.s == 0) {
        acc -= kernel_logpdf(kernel, x0);
      } else {
        Vec mu = tilde_mu(jump, x_t, x0);
        Vec x_s = mu + std::sqrt(jump.lambda_sq) * rng.normal_vec(spec.dim);
        acc += gaussian_logpdf_iso(x_s, mu, jump.lambda_sq) -
               kernel_logpdf(kernel, x_s);
      }
    }
    cost(jump.s, jump.t) = acc / budget;
  });
  return cost;
}

double endpoint_cost(const Schedule& sched, const GmmSpec& spec, int budget,
                     std::uint64_t seed) {
  const int n = sched.steps();
  double acc = 0.0;
  for (int i = 0; i < budget; ++i) {
    Rng rng = Rng::stream(seed, 0xe4dULL, static_cast<std::uint64_t>(i) + 1);
    Vec x0 = sample_x0_one(spec, rng);
    Vec eps = rng.normal_vec(spec.dim);
    Vec x_n = std::sqrt(sched.alpha_bar(n)) * x0 + std::sqrt(sched.beta_bar(n)) * eps;
    Vec mu = std::sqrt(sched.alpha_bar(n)) * x0;
    acc += gaussian_logpdf_iso(x_n, mu, sched.beta_bar(n)) -
           gaussian_logpdf_iso(x_n, Vec::Zero(spec.dim), 1.0);
  }
  return acc / budget;
}

double trajectory_cost(const Mat& cost, const TrajectorySpec& traj) {
  double total = 0.0;
  int prev = 0;
  for (int t : traj.tau) {
    total += cost(prev, t);
    prev = t;
  }
  return total;
}

TrajectorySpec dp_trajectory(const Mat& cost, int k) {
  const int n = static_cast<int>(cost.rows()) - 1;
  require(k >= 1 && k <= n, "dp trajectory: need 1 <= K <= N");
  const double inf = std::numeric_limits<double>::infinity();
  Mat f = Mat::Constant(k + 1, n + 1, inf);
  Eigen::MatrixXi parent = Eigen::MatrixXi::Constant(k + 1, n + 1, -1);
  for (int t = 1; t <= n; ++t) f(1, t) = cost(0, t);
  for (int steps = 2; steps <= k; ++steps) {
    for (int t = steps; t <= n; ++t) {
      double best = inf;
      int best_s = -1;
      for (int s = steps - 1; s < t; ++s) {
        if (f(steps - 1, s) == inf) continue;
        double v = f(steps - 1, s) + cost(s, t);
        if (v < best) {  // strict: ties keep the smaller s
          best = v;
          best_s = s;
        }
      }
      f(steps, t) = best;
      parent(steps, t) = best_s;
    }
  }
  require(f(k, n) < inf, "dp trajectory: infeasible");
  TrajectorySpec traj;
  traj.tau.resize(k);
  int t = n;
  for (int steps = k; steps >= 1; --steps) {
    traj.tau[steps - 1] = t;
    t = steps > 1 ? parent(steps, t) : 0;
  }
  traj.validate(n);
  return traj;
}

}  // namespace dpmcov
