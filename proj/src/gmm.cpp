#include "dpmcov/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpmcov {

void GmmSpec::validate() const {
  require(dim >= 1, "gmm: dim must be >= 1");
  require(components() >= 1, "gmm: needs at least one component");
  require(means.size() == weights.size(), "gmm: weights/means length mismatch");
  require(var > 0.0, "gmm: component variance must be positive");
  double sum = 0.0;
  for (double w : weights) {
    require(w > 0.0, "gmm: weights must be positive");
    sum += w;
  }
  require(std::abs(sum - 1.0) <= 1e-12, "gmm: weights must sum to 1");
  for (const Vec& m : means)
    require(m.size() == dim, "gmm: mean dimension mismatch");
}

Vec GmmSpec::mixture_mean() const {
  Vec m = Vec::Zero(dim);
  for (int j = 0; j < components(); ++j) m += weights[j] * means[j];
  return m;
}

Mat GmmSpec::mixture_cov() const {
  Vec m = mixture_mean();
  Mat c = var * Mat::Identity(dim, dim);
  for (int j = 0; j < components(); ++j)
    c += weights[j] * means[j] * means[j].transpose();
  c -= m * m.transpose();
  return c;
}

GmmSpec GmmSpec::unit_gaussian(int d) {
  GmmSpec s;
  s.dim = d;
  s.weights = {1.0};
  s.means = {Vec::Zero(d)};
  s.var = 1.0;
  return s;
}

GmmSpec GmmSpec::symmetric_pair(int d, double m, double c) {
  GmmSpec s;
  s.dim = d;
  s.weights = {0.5, 0.5};
  Vec mu = Vec::Zero(d);
  mu[0] = m;
  s.means = {-mu, mu};
  s.var = c;
  return s;
}

GmmPosterior posterior(const GmmSpec& spec, double alpha_bar, double beta_bar,
                       const Vec& x) {
  require(x.size() == spec.dim, "gmm: state dimension mismatch");
  require(x.allFinite(), "gmm: non-finite state");
  require(alpha_bar > 0.0 && beta_bar >= 0.0, "gmm: invalid (alpha_bar, beta_bar)");
  const int J = spec.components();
  const double c = spec.var;
  const double denom = c * alpha_bar + beta_bar;
  const double sa = std::sqrt(alpha_bar);

  GmmPosterior post;
  post.pvar = c * beta_bar / denom;
  post.eta.resize(J);
  post.nu.resize(J);

  // phi_j = log w_j - (alpha_bar/denom) |mu_j|^2 / 2 + (sqrt(alpha_bar)/denom) mu_j.x
  std::vector<double> phi(J);
  double phi_max = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < J; ++j) {
    phi[j] = std::log(spec.weights[j]) -
             alpha_bar / denom * spec.means[j].squaredNorm() / 2.0 +
             sa / denom * spec.means[j].dot(x);
    phi_max = std::max(phi_max, phi[j]);
    post.nu[j] = (beta_bar * spec.means[j] + c * sa * x) / denom;
  }
  double z = 0.0;
  for (int j = 0; j < J; ++j) {
    post.eta[j] = std::exp(phi[j] - phi_max);
    z += post.eta[j];
  }
  for (int j = 0; j < J; ++j) post.eta[j] /= z;
  return post;
}

X0Moments x0_moments(const GmmSpec& spec, double alpha_bar, double beta_bar,
                     const Vec& x) {
  GmmPosterior post = posterior(spec, alpha_bar, beta_bar, x);
  const int J = spec.components();
  X0Moments m;
  m.mean = Vec::Zero(spec.dim);
  for (int j = 0; j < J; ++j) m.mean += post.eta[j] * post.nu[j];
  m.cov = post.pvar * Mat::Identity(spec.dim, spec.dim);
  for (int j = 0; j < J; ++j)
    m.cov += post.eta[j] * post.nu[j] * post.nu[j].transpose();
  m.cov -= m.mean * m.mean.transpose();
  m.cov_diag = m.cov.diagonal();
  return m;
}

EpsMoments eps_moments(const GmmSpec& spec, double alpha_bar, double beta_bar,
                       const Vec& x) {
  require(beta_bar > 0.0, "gmm: eps moments need beta_bar > 0");
  X0Moments x0 = x0_moments(spec, alpha_bar, beta_bar, x);
  const double sb = std::sqrt(beta_bar);
  EpsMoments m;
  m.mean = (x - std::sqrt(alpha_bar) * x0.mean) / sb;
  m.cov = alpha_bar / beta_bar * x0.cov;
  m.second = m.cov.diagonal() + m.mean.cwiseProduct(m.mean);
  return m;
}

double marginal_logpdf(const GmmSpec& spec, double alpha_bar, double beta_bar,
                       const Vec& x) {
  require(x.size() == spec.dim, "gmm: state dimension mismatch");
  const double v = spec.var * alpha_bar + beta_bar;
  const double sa = std::sqrt(alpha_bar);
  const int J = spec.components();
  std::vector<double> lp(J);
  double lp_max = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < J; ++j) {
    double d2 = (x - sa * spec.means[j]).squaredNorm();
    lp[j] = std::log(spec.weights[j]) - 0.5 * d2 / v -
            0.5 * spec.dim * std::log(2.0 * M_PI * v);
    lp_max = std::max(lp_max, lp[j]);
  }
  double z = 0.0;
  for (int j = 0; j < J; ++j) z += std::exp(lp[j] - lp_max);
  return lp_max + std::log(z);
}

Vec sample_x0_one(const GmmSpec& spec, Rng& rng) {
  int j = rng.categorical(spec.weights);
  return spec.means[j] + std::sqrt(spec.var) * rng.normal_vec(spec.dim);
}

Mat sample_x0(const GmmSpec& spec, Rng& rng, int batch) {
  require(batch >= 1, "gmm: batch must be >= 1");
  Mat out(batch, spec.dim);
  for (int i = 0; i < batch; ++i) out.row(i) = sample_x0_one(spec, rng).transpose();
  return out;
}

}  // namespace dpmcov
