#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace dpmcov {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Thrown when a caller violates a documented precondition.
class invalid_argument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Thrown for faults detected mid-computation (divergence, corrupt files, ...).
class runtime_fault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw invalid_argument(msg);
}

// Cumulative forward-process state at one timestep: x = sqrt(alpha_bar)*x0 +
// sqrt(beta_bar)*eps. `time` is the raw timestep handed to moment providers
// (an integer index n for discrete chains, a real t for continuous ones).
struct StepInfo {
  double alpha_bar = 1.0;
  double beta_bar = 0.0;
  double time = 0.0;
};

}  // namespace dpmcov
