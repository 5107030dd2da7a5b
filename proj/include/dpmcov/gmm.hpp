#pragma once

#include <vector>

#include "dpmcov/rng.hpp"
#include "dpmcov/types.hpp"

namespace dpmcov {

// Mixture of Gaussians with a shared isotropic component variance. Every
// conditional expectation the prediction networks approximate has a closed
// form under this family.
struct GmmSpec {
  int dim = 1;
  std::vector<double> weights;  // J positive weights summing to 1
  std::vector<Vec> means;       // J means in R^dim
  double var = 1.0;             // shared component variance c > 0

  int components() const { return static_cast<int>(weights.size()); }
  void validate() const;

  Vec mixture_mean() const;
  Mat mixture_cov() const;

  static GmmSpec unit_gaussian(int d);
  // Symmetric two-component mixture at means +-m along the first axis.
  static GmmSpec symmetric_pair(int d, double m, double c);
};

// Posterior q(x0 | x) when x = sqrt(alpha_bar) x0 + sqrt(beta_bar) eps:
// itself a mixture of Gaussians with softmax weights.
struct GmmPosterior {
  std::vector<double> eta;  // posterior component weights
  std::vector<Vec> nu;      // posterior component means
  double pvar = 0.0;        // shared posterior variance c*beta_bar/(c*alpha_bar+beta_bar)
};

GmmPosterior posterior(const GmmSpec& spec, double alpha_bar, double beta_bar,
                       const Vec& x);

struct X0Moments {
  Vec mean;      // E[x0 | x]
  Vec cov_diag;  // diag Cov[x0 | x]
  Mat cov;       // Cov[x0 | x]
};
X0Moments x0_moments(const GmmSpec& spec, double alpha_bar, double beta_bar,
                     const Vec& x);

struct EpsMoments {
  Vec mean;    // E[eps | x]
  Vec second;  // E[eps^2 | x] elementwise
  Mat cov;     // Cov[eps | x]
};
EpsMoments eps_moments(const GmmSpec& spec, double alpha_bar, double beta_bar,
                       const Vec& x);

// log q(x) for the marginal mixture N(sqrt(alpha_bar) mu_j, (c*alpha_bar +
// beta_bar) I). alpha_bar = 1, beta_bar = 0 gives the data density.
double marginal_logpdf(const GmmSpec& spec, double alpha_bar, double beta_bar,
                       const Vec& x);

// batch x dim matrix of independent draws from the mixture.
Mat sample_x0(const GmmSpec& spec, Rng& rng, int batch);
Vec sample_x0_one(const GmmSpec& spec, Rng& rng);

}  // namespace dpmcov
