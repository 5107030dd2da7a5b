#include "dpmcov/providers.hpp"

namespace dpmcov {

Mat MomentProvider::noise_cov(const Vec&, const StepInfo&) const {
  throw invalid_argument("provider '" + name() + "' has no exact noise covariance");
}

Vec OracleMoments::noise_mean(const Vec& x, const StepInfo& step) const {
  return eps_moments(spec_, step.alpha_bar, step.beta_bar, x).mean;
}

Vec OracleMoments::noise_second_moment(const Vec& x, const StepInfo& step) const {
  return eps_moments(spec_, step.alpha_bar, step.beta_bar, x).second;
}

Vec OracleMoments::noise_residual_moment(const Vec& x, const StepInfo& step) const {
  EpsMoments m = eps_moments(spec_, step.alpha_bar, step.beta_bar, x);
  return m.second - m.mean.cwiseProduct(m.mean);
}

Mat OracleMoments::noise_cov(const Vec& x, const StepInfo& step) const {
  return eps_moments(spec_, step.alpha_bar, step.beta_bar, x).cov;
}

Vec BiasedMeanMoments::noise_residual_moment(const Vec& x,
                                             const StepInfo& step) const {
  return oracle_.noise_residual_moment(x, step) + bias_.cwiseProduct(bias_);
}

NetworkMoments::NetworkMoments(std::shared_ptr<const PredictorBundle> bundle) {
  require(bundle != nullptr, "network provider: null bundle");
  if (bundle->aux_kind == AuxKind::Npr)
    npr_ = std::move(bundle);
  else
    sn_ = std::move(bundle);
}

NetworkMoments::NetworkMoments(std::shared_ptr<const PredictorBundle> sn_bundle,
                               std::shared_ptr<const PredictorBundle> npr_bundle)
    : sn_(std::move(sn_bundle)), npr_(std::move(npr_bundle)) {
  require(sn_ != nullptr || npr_ != nullptr, "network provider: null bundles");
  if (sn_) require(sn_->aux_kind == AuxKind::Sn, "network provider: sn bundle has wrong aux head");
  if (npr_) require(npr_->aux_kind == AuxKind::Npr, "network provider: npr bundle has wrong aux head");
}

Vec NetworkMoments::noise_mean(const Vec& x, const StepInfo& step) const {
  return mean_bundle().forward(x, step.time).eps;
}

Vec NetworkMoments::noise_second_moment(const Vec& x, const StepInfo& step) const {
  require(sn_ != nullptr, "network provider: no sn head available");
  return sn_->forward(x, step.time).aux;
}

Vec NetworkMoments::noise_residual_moment(const Vec& x, const StepInfo& step) const {
  require(npr_ != nullptr, "network provider: no npr head available");
  return npr_->forward(x, step.time).aux;
}

}  // namespace dpmcov
