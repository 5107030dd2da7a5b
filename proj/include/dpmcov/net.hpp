#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpmcov/gmm.hpp"
#include "dpmcov/schedule.hpp"
#include "dpmcov/types.hpp"

namespace dpmcov {

enum class AuxKind { None, Sn, Npr };
enum class LossKind { Eps, Sn, Npr };

std::string to_string(AuxKind k);
AuxKind aux_kind_from_string(const std::string& s);

struct TimeDomain {
  bool continuous = false;
  int n_steps = 0;        // discrete chains
  double horizon = 1.0;   // continuous chains
};

// Shared-trunk predictor: a 3-layer SiLU MLP on (x, time embedding) feeding
// two affine heads. The noise head approximates E[eps|x_n]; the aux head
// (through a softplus, so its output is nonnegative) approximates E[eps^2|x_n]
// (sn) or E[(eps - eps_hat)^2|x_n] (npr).
struct PredictorBundle {
  int dim = 1;
  int embed_dim = 32;
  int hidden = 128;
  AuxKind aux_kind = AuxKind::None;
  TimeDomain domain;
  std::uint64_t schedule_hash = 0;

  Mat w1, w2, w3, w_eps, w_aux;
  Vec b1, b2, b3, b_eps, b_aux;

  static PredictorBundle init(int dim, int embed_dim, int hidden,
                              AuxKind aux_kind, TimeDomain domain,
                              std::uint64_t schedule_hash, std::uint64_t seed);

  Vec time_embedding(double time) const;

  struct Output {
    Vec eps;
    Vec aux;  // empty when aux_kind == None
  };
  Output forward(const Vec& x, double time) const;

  // Named views over every parameter block, in a fixed order (row-major data).
  struct ParamView {
    std::string name;
    double* data;
    int rows, cols;
    int size() const { return rows * cols; }
  };
  std::vector<ParamView> params();
  std::vector<ParamView> params() const;  // views over const data, do not write
};

struct NetArch {
  int embed_dim = 32;
  int hidden = 128;
};

struct TrainConfig {
  int iterations = 20000;
  int batch = 128;
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Cosine decay of the learning rate down to lr * lr_min_frac; 1.0 disables.
  double lr_min_frac = 0.1;
  std::uint64_t seed = 1;
  int log_every = 100;
  // Trailing window whose mean batch loss is reported as final_loss.
  int floor_window = 2000;
};

struct TrainResult {
  PredictorBundle bundle;
  std::vector<std::pair<int, double>> curve;  // (iteration, batch loss)
  double final_loss = 0.0;
};

// Stage 1: fit the noise head (and trunk) on the eps MSE loss. Timesteps are
// sampled uniformly; data comes from the mixture + forward process. Aborts
// with runtime_fault if the loss turns non-finite.
TrainResult train_eps(const GmmSpec& spec, const Schedule& sched,
                      const NetArch& arch, const TrainConfig& cfg);
TrainResult train_eps(const GmmSpec& spec, const VpSde& sde,
                      const NetArch& arch, const TrainConfig& cfg);

// Stage 2: freeze trunk and noise head, fit only the aux head on the sn or
// npr MSE loss. The returned bundle's frozen parameters are bit-identical to
// stage1's.
TrainResult train_aux(const PredictorBundle& stage1, AuxKind kind,
                      const GmmSpec& spec, const Schedule& sched,
                      const TrainConfig& cfg);
TrainResult train_aux(const PredictorBundle& stage1, AuxKind kind,
                      const GmmSpec& spec, const VpSde& sde,
                      const TrainConfig& cfg);

// Compares reverse-mode gradients against central finite differences (step
// 1e-5) on up to max_coords randomly chosen parameters of the loss's active
// set. Parameters outside the active set (frozen under the stage-2
// stop-gradient contract) must come back with exactly zero analytic gradient;
// the largest such magnitude is reported separately.
struct GradCheckReport {
  double max_rel_error = 0.0;
  double max_frozen_grad = 0.0;
  int coords_checked = 0;
};
GradCheckReport grad_check(const PredictorBundle& bundle, LossKind loss,
                           const GmmSpec& spec, const Schedule& sched,
                           int batch, std::uint64_t seed, int max_coords = 200,
                           bool head_only = false, double fd_step = 1e-5);

// Checkpoint JSON: {"version":1, "meta":{...}, "params":{name:{"shape":[...],
// "data":[...]}}}. Round trip is bit-identical on parameters.
void save_checkpoint(const PredictorBundle& bundle, const std::string& path);
PredictorBundle load_checkpoint(const std::string& path);
bool schedule_matches(const PredictorBundle& bundle, const Schedule& sched);

}  // namespace dpmcov
