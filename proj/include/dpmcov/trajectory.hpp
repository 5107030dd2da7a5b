#pragma once

#include <vector>

#include "dpmcov/gmm.hpp"
#include "dpmcov/kernels.hpp"
#include "dpmcov/schedule.hpp"

namespace dpmcov {

// Increasing timestep subset tau_1 < ... < tau_K = N used for accelerated
// inference.
struct TrajectorySpec {
  std::vector<int> tau;

  int steps() const { return static_cast<int>(tau.size()); }
  void validate(int n_steps) const;
  static TrajectorySpec identity(int n_steps);
};

// K approximately evenly spaced timesteps ending at N: floor(k*N/K), bumped
// upward on collisions.
TrajectorySpec even_trajectory(int n_steps, int k);

// Reverse jumps along the trajectory, reconstruction jump (tau_1 -> 0) first.
// The moment networks trained on the full schedule are reused as-is.
std::vector<Jump> restrict_to(const Schedule& sched, const ProcessKind& kind,
                              const TrajectorySpec& traj);

// (N+1)x(N+1) matrix of per-jump negative-ELBO terms: cost(s,t) estimates
// E[log q(x_s|x_t,x_0) - log p(x_s|x_t)] for 1 <= s < t, and -E[log p(x_0|x_t)]
// for s = 0. Entries above the diagonal only; the rest is +inf. A trajectory's
// total cost is the sum of its jump entries plus the shared endpoint term.
Mat cost_matrix(const KernelModel& model, const Schedule& sched,
                const ProcessKind& kind, const GmmSpec& spec, int budget,
                std::uint64_t seed);

// The trajectory-independent endpoint term E[log q(x_N|x_0) - log p(x_N)].
double endpoint_cost(const Schedule& sched, const GmmSpec& spec, int budget,
                     std::uint64_t seed);

double trajectory_cost(const Mat& cost, const TrajectorySpec& traj);

// Exact minimizer of the total jump cost over trajectories with K steps
// ending at N (shortest path over (steps used, timestep)); ties break toward
// the smaller predecessor timestep.
TrajectorySpec dp_trajectory(const Mat& cost, int k);

}  // namespace dpmcov
