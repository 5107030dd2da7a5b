#pragma once

#include <memory>
#include <string>

#include "dpmcov/gmm.hpp"
#include "dpmcov/net.hpp"
#include "dpmcov/types.hpp"

namespace dpmcov {

// Supplies the three conditional noise moments every covariance formula
// consumes: e = E[eps|x] (or a learned eps_hat), s = E[eps^2|x] (or h),
// r = E[(eps - e)^2|x] (or g). All elementwise over R^d.
class MomentProvider {
 public:
  virtual ~MomentProvider() = default;
  virtual std::string name() const = 0;
  virtual int dim() const = 0;
  virtual Vec noise_mean(const Vec& x, const StepInfo& step) const = 0;
  virtual Vec noise_second_moment(const Vec& x, const StepInfo& step) const = 0;
  virtual Vec noise_residual_moment(const Vec& x, const StepInfo& step) const = 0;
  // Full conditional covariance of the noise; only exact providers have one.
  virtual bool has_exact_moments() const { return false; }
  virtual Mat noise_cov(const Vec& x, const StepInfo& step) const;
};

// Closed-form moments from the mixture posterior. Its residual moment equals
// the conditional variance (the mean is exact).
class OracleMoments : public MomentProvider {
 public:
  explicit OracleMoments(const GmmSpec& spec) : spec_(spec) { spec_.validate(); }
  std::string name() const override { return "oracle"; }
  int dim() const override { return spec_.dim; }
  Vec noise_mean(const Vec& x, const StepInfo& step) const override;
  Vec noise_second_moment(const Vec& x, const StepInfo& step) const override;
  Vec noise_residual_moment(const Vec& x, const StepInfo& step) const override;
  bool has_exact_moments() const override { return true; }
  Mat noise_cov(const Vec& x, const StepInfo& step) const override;
  const GmmSpec& spec() const { return spec_; }

 private:
  GmmSpec spec_;
};

// Exact provider with a deliberately shifted mean: e = E[eps|x] + bias. The
// second moment is mean-independent; the residual moment carries the exact
// correction Var[eps|x] + bias^2.
class BiasedMeanMoments : public MomentProvider {
 public:
  BiasedMeanMoments(const GmmSpec& spec, Vec bias)
      : oracle_(spec), bias_(std::move(bias)) {
    require(bias_.size() == spec.dim, "biased provider: bias dimension mismatch");
  }
  BiasedMeanMoments(const GmmSpec& spec, double bias)
      : BiasedMeanMoments(spec, Vec::Constant(spec.dim, bias)) {}
  std::string name() const override { return "oracle+bias"; }
  int dim() const override { return oracle_.dim(); }
  Vec noise_mean(const Vec& x, const StepInfo& step) const override {
    return oracle_.noise_mean(x, step) + bias_;
  }
  Vec noise_second_moment(const Vec& x, const StepInfo& step) const override {
    return oracle_.noise_second_moment(x, step);
  }
  Vec noise_residual_moment(const Vec& x, const StepInfo& step) const override;
  Mat noise_cov(const Vec& x, const StepInfo& step) const override {
    return oracle_.noise_cov(x, step);
  }
  const Vec& bias() const { return bias_; }

 private:
  OracleMoments oracle_;
  Vec bias_;
};

// Learned moments. The eps head always serves the mean; the aux head serves
// s (sn bundles) or r (npr bundles). Pass two bundles sharing stage-1
// parameters to serve both.
class NetworkMoments : public MomentProvider {
 public:
  explicit NetworkMoments(std::shared_ptr<const PredictorBundle> bundle);
  NetworkMoments(std::shared_ptr<const PredictorBundle> sn_bundle,
                 std::shared_ptr<const PredictorBundle> npr_bundle);
  std::string name() const override { return "network"; }
  int dim() const override { return mean_bundle().dim; }
  Vec noise_mean(const Vec& x, const StepInfo& step) const override;
  Vec noise_second_moment(const Vec& x, const StepInfo& step) const override;
  Vec noise_residual_moment(const Vec& x, const StepInfo& step) const override;

 private:
  std::shared_ptr<const PredictorBundle> sn_;   // aux = E[eps^2] estimate
  std::shared_ptr<const PredictorBundle> npr_;  // aux = residual estimate
  const PredictorBundle& mean_bundle() const { return sn_ ? *sn_ : *npr_; }
};

}  // namespace dpmcov
