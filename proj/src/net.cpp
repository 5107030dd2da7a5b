#include "dpmcov/net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>

#include "json.hpp"

namespace dpmcov {
namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
  double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

inline double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

Mat silu_mat(const Mat& m) { return m.unaryExpr([](double v) { return silu(v); }); }
Mat silu_grad_mat(const Mat& m) { return m.unaryExpr([](double v) { return silu_grad(v); }); }
Mat softplus_mat(const Mat& m) { return m.unaryExpr([](double v) { return softplus(v); }); }
Mat sigmoid_mat(const Mat& m) { return m.unaryExpr([](double v) { return sigmoid(v); }); }

Mat glorot(int rows, int cols, Rng& rng) {
  double s = std::sqrt(6.0 / (rows + cols));
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = (2.0 * rng.uniform() - 1.0) * s;
  return m;
}

// One timestep draw for training: cumulative coefficients plus the raw time.
struct StepSampler {
  std::function<StepInfo(Rng&)> draw;
};

StepSampler discrete_sampler(const Schedule& sched) {
  return {[&sched](Rng& rng) {
    int n = 1 + static_cast<int>(rng.uniform() * sched.steps());
    n = std::min(n, sched.steps());
    return StepInfo{sched.alpha_bar(n), sched.beta_bar(n), static_cast<double>(n)};
  }};
}

StepSampler continuous_sampler(const VpSde& sde) {
  return {[&sde](Rng& rng) {
    double t = rng.uniform() * sde.horizon;
    if (t <= 0.0) t = 1e-12;
    return StepInfo{sde.alpha(0.0, t), sde.beta_jump(0.0, t), t};
  }};
}

}  // namespace

std::string to_string(AuxKind k) {
  switch (k) {
    case AuxKind::None: return "none";
    case AuxKind::Sn: return "sn";
    case AuxKind::Npr: return "npr";
  }
  return "?";
}

AuxKind aux_kind_from_string(const std::string& s) {
  if (s == "none") return AuxKind::None;
  if (s == "sn") return AuxKind::Sn;
  if (s == "npr") return AuxKind::Npr;
  throw invalid_argument("unknown aux kind: " + s);
}

PredictorBundle PredictorBundle::init(int dim, int embed_dim, int hidden,
                                      AuxKind aux_kind, TimeDomain domain,
                                      std::uint64_t schedule_hash,
                                      std::uint64_t seed) {
  require(dim >= 1, "net: dim must be >= 1");
  require(embed_dim >= 2 && embed_dim % 2 == 0, "net: embed_dim must be even and >= 2");
  require(hidden >= 1, "net: hidden width must be >= 1");
  PredictorBundle b;
  b.dim = dim;
  b.embed_dim = embed_dim;
  b.hidden = hidden;
  b.aux_kind = aux_kind;
  b.domain = domain;
  b.schedule_hash = schedule_hash;
  int in = dim + embed_dim;
  Rng rng = Rng::stream(seed, 0x6e6574ULL);
  b.w1 = glorot(hidden, in, rng);
  b.b1 = Vec::Zero(hidden);
  b.w2 = glorot(hidden, hidden, rng);
  b.b2 = Vec::Zero(hidden);
  b.w3 = glorot(hidden, hidden, rng);
  b.b3 = Vec::Zero(hidden);
  b.w_eps = glorot(dim, hidden, rng);
  b.b_eps = Vec::Zero(dim);
  b.w_aux = glorot(dim, hidden, rng);
  b.b_aux = Vec::Zero(dim);
  return b;
}

Vec PredictorBundle::time_embedding(double time) const {
  int half = embed_dim / 2;
  double scale = domain.continuous ? 1000.0 / domain.horizon : 1.0;
  double arg = time * scale;
  Vec e(embed_dim);
  for (int i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
    e[2 * i] = std::sin(arg * freq);
    e[2 * i + 1] = std::cos(arg * freq);
  }
  return e;
}

PredictorBundle::Output PredictorBundle::forward(const Vec& x, double time) const {
  require(x.size() == dim, "net: input dimension mismatch");
  Vec in(dim + embed_dim);
  in << x, time_embedding(time);
  Vec h1 = (w1 * in + b1).unaryExpr([](double v) { return silu(v); });
  Vec h2 = (w2 * h1 + b2).unaryExpr([](double v) { return silu(v); });
  Vec h3 = (w3 * h2 + b3).unaryExpr([](double v) { return silu(v); });
  Output out;
  out.eps = w_eps * h3 + b_eps;
  if (aux_kind != AuxKind::None)
    out.aux = (w_aux * h3 + b_aux).unaryExpr([](double v) { return softplus(v); });
  return out;
}

std::vector<PredictorBundle::ParamView> PredictorBundle::params() {
  auto mat = [](const char* n, Mat& m) {
    return ParamView{n, m.data(), static_cast<int>(m.rows()), static_cast<int>(m.cols())};
  };
  auto vec = [](const char* n, Vec& v) {
    return ParamView{n, v.data(), static_cast<int>(v.size()), 1};
  };
  return {mat("trunk.w1", w1), vec("trunk.b1", b1), mat("trunk.w2", w2),
          vec("trunk.b2", b2), mat("trunk.w3", w3), vec("trunk.b3", b3),
          mat("head_eps.w", w_eps), vec("head_eps.b", b_eps),
          mat("head_aux.w", w_aux), vec("head_aux.b", b_aux)};
}

std::vector<PredictorBundle::ParamView> PredictorBundle::params() const {
  return const_cast<PredictorBundle*>(this)->params();
}

namespace {

// Batched activations cached for the backward pass. Rows are samples.
struct ForwardCache {
  Mat in;                  // B x (dim + embed)
  Mat z1, h1, z2, h2, z3, h3;
  Mat eps;                 // B x dim
  Mat aux_pre, aux;        // stage-2 only
};

void forward_batch(const PredictorBundle& b, const Mat& x, const Vec& times,
                   bool want_aux, ForwardCache& c) {
  const int B = static_cast<int>(x.rows());
  c.in.resize(B, b.dim + b.embed_dim);
  c.in.leftCols(b.dim) = x;
  for (int i = 0; i < B; ++i)
    c.in.row(i).tail(b.embed_dim) = b.time_embedding(times[i]).transpose();
  c.z1 = (c.in * b.w1.transpose()).rowwise() + b.b1.transpose();
  c.h1 = silu_mat(c.z1);
  c.z2 = (c.h1 * b.w2.transpose()).rowwise() + b.b2.transpose();
  c.h2 = silu_mat(c.z2);
  c.z3 = (c.h2 * b.w3.transpose()).rowwise() + b.b3.transpose();
  c.h3 = silu_mat(c.z3);
  c.eps = (c.h3 * b.w_eps.transpose()).rowwise() + b.b_eps.transpose();
  if (want_aux) {
    c.aux_pre = (c.h3 * b.w_aux.transpose()).rowwise() + b.b_aux.transpose();
    c.aux = softplus_mat(c.aux_pre);
  }
}

struct Grads {
  Mat w1, w2, w3, w_eps, w_aux;
  Vec b1, b2, b3, b_eps, b_aux;

  static Grads zero(const PredictorBundle& b) {
    Grads g;
    g.w1 = Mat::Zero(b.w1.rows(), b.w1.cols());
    g.b1 = Vec::Zero(b.b1.size());
    g.w2 = Mat::Zero(b.w2.rows(), b.w2.cols());
    g.b2 = Vec::Zero(b.b2.size());
    g.w3 = Mat::Zero(b.w3.rows(), b.w3.cols());
    g.b3 = Vec::Zero(b.b3.size());
    g.w_eps = Mat::Zero(b.w_eps.rows(), b.w_eps.cols());
    g.b_eps = Vec::Zero(b.b_eps.size());
    g.w_aux = Mat::Zero(b.w_aux.rows(), b.w_aux.cols());
    g.b_aux = Vec::Zero(b.b_aux.size());
    return g;
  }

  std::vector<PredictorBundle::ParamView> views() {
    auto mat = [](const char* n, Mat& m) {
      return PredictorBundle::ParamView{n, m.data(), static_cast<int>(m.rows()),
                                        static_cast<int>(m.cols())};
    };
    auto vec = [](const char* n, Vec& v) {
      return PredictorBundle::ParamView{n, v.data(), static_cast<int>(v.size()), 1};
    };
    return {mat("trunk.w1", w1), vec("trunk.b1", b1), mat("trunk.w2", w2),
            vec("trunk.b2", b2), mat("trunk.w3", w3), vec("trunk.b3", b3),
            mat("head_eps.w", w_eps), vec("head_eps.b", b_eps),
            mat("head_aux.w", w_aux), vec("head_aux.b", b_aux)};
  }
};

// Mean-over-batch of the squared L2 norm, plus gradients. For Eps the full
// trunk participates; for Sn/Npr only the aux head does (stop-gradient on the
// trunk and noise head).
double loss_and_grads(const PredictorBundle& b, LossKind loss, const Mat& x,
                      const Vec& times, const Mat& noise, Grads& g) {
  const int B = static_cast<int>(x.rows());
  ForwardCache c;
  forward_batch(b, x, times, loss != LossKind::Eps, c);

  Mat target;
  Mat out;
  if (loss == LossKind::Eps) {
    target = noise;
    out = c.eps;
  } else if (loss == LossKind::Sn) {
    target = noise.cwiseProduct(noise);
    out = c.aux;
  } else {
    Mat resid = noise - c.eps;
    target = resid.cwiseProduct(resid);
    out = c.aux;
  }
  Mat diff = out - target;
  double value = diff.squaredNorm() / B;
  Mat d_out = (2.0 / B) * diff;

  if (loss != LossKind::Eps) {
    Mat d_pre = d_out.cwiseProduct(sigmoid_mat(c.aux_pre));
    g.w_aux = d_pre.transpose() * c.h3;
    g.b_aux = d_pre.colwise().sum().transpose();
    return value;
  }

  g.w_eps = d_out.transpose() * c.h3;
  g.b_eps = d_out.colwise().sum().transpose();
  Mat d_h3 = d_out * b.w_eps;
  Mat d_z3 = d_h3.cwiseProduct(silu_grad_mat(c.z3));
  g.w3 = d_z3.transpose() * c.h2;
  g.b3 = d_z3.colwise().sum().transpose();
  Mat d_h2 = d_z3 * b.w3;
  Mat d_z2 = d_h2.cwiseProduct(silu_grad_mat(c.z2));
  g.w2 = d_z2.transpose() * c.h1;
  g.b2 = d_z2.colwise().sum().transpose();
  Mat d_h1 = d_z2 * b.w2;
  Mat d_z1 = d_h1.cwiseProduct(silu_grad_mat(c.z1));
  g.w1 = d_z1.transpose() * c.in;
  g.b1 = d_z1.colwise().sum().transpose();
  return value;
}

struct AdamState {
  std::vector<Mat> m, v;
  long step = 0;
};

void adam_update(PredictorBundle& b, Grads& g, AdamState& st,
                 const TrainConfig& cfg, double lr,
                 const std::vector<int>& active) {
  auto pv = b.params();
  auto gv = g.views();
  if (st.m.empty()) {
    st.m.resize(pv.size());
    st.v.resize(pv.size());
    for (std::size_t i = 0; i < pv.size(); ++i) {
      st.m[i] = Mat::Zero(pv[i].size(), 1);
      st.v[i] = Mat::Zero(pv[i].size(), 1);
    }
  }
  ++st.step;
  double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(st.step));
  double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(st.step));
  for (int i : active) {
    double* p = pv[i].data;
    const double* grad = gv[i].data;
    double* m = st.m[i].data();
    double* v = st.v[i].data();
    int n = pv[i].size();
    for (int k = 0; k < n; ++k) {
      m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * grad[k];
      v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * grad[k] * grad[k];
      double mh = m[k] / c1;
      double vh = v[k] / c2;
      p[k] -= lr * mh / (std::sqrt(vh) + cfg.adam_eps);
    }
  }
}

std::vector<int> active_params(LossKind loss) {
  if (loss == LossKind::Eps) return {0, 1, 2, 3, 4, 5, 6, 7};  // trunk + eps head
  return {8, 9};                                               // aux head only
}

// Draws one training batch. Streams are keyed on the iteration so the draw
// order is fixed by the seed alone.
void draw_batch(const GmmSpec& spec, const StepSampler& steps, int B,
                std::uint64_t seed, long iter, Mat& x, Vec& times, Mat& noise) {
  x.resize(B, spec.dim);
  noise.resize(B, spec.dim);
  times.resize(B);
  for (int i = 0; i < B; ++i) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(iter),
                          static_cast<std::uint64_t>(i) + 1);
    Vec x0 = sample_x0_one(spec, rng);
    StepInfo s = steps.draw(rng);
    Vec eps = rng.normal_vec(spec.dim);
    x.row(i) = (std::sqrt(s.alpha_bar) * x0 + std::sqrt(s.beta_bar) * eps).transpose();
    noise.row(i) = eps.transpose();
    times[i] = s.time;
  }
}

TrainResult train_loop(PredictorBundle bundle, LossKind loss,
                       const GmmSpec& spec, const StepSampler& steps,
                       const TrainConfig& cfg) {
  spec.validate();
  require(cfg.iterations >= 1 && cfg.batch >= 1, "train: bad config");
  TrainResult res;
  AdamState adam;
  Grads g = Grads::zero(bundle);
  auto active = active_params(loss);
  Mat x, noise;
  Vec times;
  double tail_sum = 0.0;
  int tail_count = 0;
  int tail_start = std::max(0, cfg.iterations - cfg.floor_window);
  for (int it = 0; it < cfg.iterations; ++it) {
    draw_batch(spec, steps, cfg.batch, cfg.seed, it, x, times, noise);
    double value = loss_and_grads(bundle, loss, x, times, noise, g);
    if (!std::isfinite(value))
      throw runtime_fault("train: loss diverged at iteration " + std::to_string(it));
    double lr = cfg.lr;
    if (cfg.lr_min_frac < 1.0 && cfg.iterations > 1) {
      double frac = static_cast<double>(it) / (cfg.iterations - 1);
      double lo = cfg.lr * cfg.lr_min_frac;
      lr = lo + 0.5 * (cfg.lr - lo) * (1.0 + std::cos(M_PI * frac));
    }
    adam_update(bundle, g, adam, cfg, lr, active);
    if (it % cfg.log_every == 0 || it == cfg.iterations - 1)
      res.curve.emplace_back(it, value);
    if (it >= tail_start) {
      tail_sum += value;
      ++tail_count;
    }
  }
  res.final_loss = tail_sum / std::max(1, tail_count);
  res.bundle = std::move(bundle);
  return res;
}

}  // namespace

TrainResult train_eps(const GmmSpec& spec, const Schedule& sched,
                      const NetArch& arch, const TrainConfig& cfg) {
  TimeDomain dom{false, sched.steps(), 0.0};
  PredictorBundle b = PredictorBundle::init(spec.dim, arch.embed_dim, arch.hidden,
                                            AuxKind::None, dom, sched.hash(), cfg.seed);
  return train_loop(std::move(b), LossKind::Eps, spec, discrete_sampler(sched), cfg);
}

TrainResult train_eps(const GmmSpec& spec, const VpSde& sde,
                      const NetArch& arch, const TrainConfig& cfg) {
  TimeDomain dom{true, 0, sde.horizon};
  PredictorBundle b = PredictorBundle::init(spec.dim, arch.embed_dim, arch.hidden,
                                            AuxKind::None, dom, 0, cfg.seed);
  return train_loop(std::move(b), LossKind::Eps, spec, continuous_sampler(sde), cfg);
}

namespace {

TrainResult train_aux_impl(const PredictorBundle& stage1, AuxKind kind,
                           const GmmSpec& spec, const StepSampler& steps,
                           const TrainConfig& cfg) {
  require(kind != AuxKind::None, "train: stage 2 needs an aux target");
  PredictorBundle b = stage1;
  b.aux_kind = kind;
  LossKind loss = kind == AuxKind::Sn ? LossKind::Sn : LossKind::Npr;
  return train_loop(std::move(b), loss, spec, steps, cfg);
}

}  // namespace

TrainResult train_aux(const PredictorBundle& stage1, AuxKind kind,
                      const GmmSpec& spec, const Schedule& sched,
                      const TrainConfig& cfg) {
  require(!stage1.domain.continuous && stage1.domain.n_steps == sched.steps(),
          "train: stage-1 bundle domain mismatch");
  return train_aux_impl(stage1, kind, spec, discrete_sampler(sched), cfg);
}

TrainResult train_aux(const PredictorBundle& stage1, AuxKind kind,
                      const GmmSpec& spec, const VpSde& sde,
                      const TrainConfig& cfg) {
  require(stage1.domain.continuous, "train: stage-1 bundle domain mismatch");
  return train_aux_impl(stage1, kind, spec, continuous_sampler(sde), cfg);
}

GradCheckReport grad_check(const PredictorBundle& bundle, LossKind loss,
                           const GmmSpec& spec, const Schedule& sched,
                           int batch, std::uint64_t seed, int max_coords,
                           bool head_only, double fd_step) {
  require(batch >= 1, "grad_check: batch must be >= 1");
  PredictorBundle b = bundle;
  if (loss != LossKind::Eps && b.aux_kind == AuxKind::None)
    b.aux_kind = loss == LossKind::Sn ? AuxKind::Sn : AuxKind::Npr;

  Mat x, noise;
  Vec times;
  StepSampler steps = discrete_sampler(sched);
  draw_batch(spec, steps, batch, seed, 0, x, times, noise);

  Grads g = Grads::zero(b);
  loss_and_grads(b, loss, x, times, noise, g);

  auto active = active_params(loss);
  if (head_only)
    active = loss == LossKind::Eps ? std::vector<int>{6, 7} : std::vector<int>{8, 9};
  std::vector<bool> is_active(b.params().size(), false);
  for (int i : active) is_active[i] = true;
  if (head_only)
    for (int i : active_params(loss)) is_active[i] = true;  // frozen set unchanged

  GradCheckReport rep;
  auto gv = g.views();
  auto pv = b.params();

  for (std::size_t i = 0; i < pv.size(); ++i) {
    if (is_active[i]) continue;
    for (int k = 0; k < gv[i].size(); ++k)
      rep.max_frozen_grad = std::max(rep.max_frozen_grad, std::abs(gv[i].data[k]));
  }

  // Sample coordinates uniformly over the active blocks.
  int total = 0;
  for (int i : active) total += pv[i].size();
  int n_check = std::min(max_coords, total);
  Rng rng = Rng::stream(seed, 0x67636bULL);
  const double h = fd_step;
  for (int c = 0; c < n_check; ++c) {
    int flat = static_cast<int>(rng.uniform() * total);
    flat = std::min(flat, total - 1);
    int block = -1, off = flat;
    for (int i : active) {
      if (off < pv[i].size()) { block = i; break; }
      off -= pv[i].size();
    }
    double* p = pv[block].data + off;
    double saved = *p;
    Grads dummy = Grads::zero(b);
    *p = saved + h;
    double lp = loss_and_grads(b, loss, x, times, noise, dummy);
    *p = saved - h;
    double lm = loss_and_grads(b, loss, x, times, noise, dummy);
    *p = saved;
    double fd = (lp - lm) / (2.0 * h);
    double an = gv[block].data[off];
    double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    rep.max_rel_error = std::max(rep.max_rel_error, std::abs(fd - an) / denom);
    ++rep.coords_checked;
  }
  return rep;
}

void save_checkpoint(const PredictorBundle& bundle, const std::string& path) {
  nlohmann::json j;
  j["version"] = 1;
  j["meta"] = {{"dim", bundle.dim},
               {"embed_dim", bundle.embed_dim},
               {"hidden", bundle.hidden},
               {"aux_kind", to_string(bundle.aux_kind)},
               {"continuous", bundle.domain.continuous},
               {"n_steps", bundle.domain.n_steps},
               {"horizon", bundle.domain.horizon},
               {"schedule_hash", bundle.schedule_hash}};
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : bundle.params()) {
    std::vector<double> flat(p.size());
    // row-major serialization
    for (int r = 0; r < p.rows; ++r)
      for (int c = 0; c < p.cols; ++c)
        flat[r * p.cols + c] = p.data[c * p.rows + r];
    params[p.name] = {{"shape", {p.rows, p.cols}}, {"data", flat}};
  }
  j["params"] = std::move(params);
  std::ofstream out(path);
  if (!out) throw runtime_fault("checkpoint: cannot open " + path + " for writing");
  out << j.dump();
  out << "\n";
}

PredictorBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw runtime_fault("checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw runtime_fault("checkpoint: corrupt file " + path + ": " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != 1)
    throw runtime_fault("checkpoint: unsupported version in " + path);
  const auto& meta = j.at("meta");
  TimeDomain dom{meta.at("continuous").get<bool>(), meta.at("n_steps").get<int>(),
                 meta.at("horizon").get<double>()};
  PredictorBundle b = PredictorBundle::init(
      meta.at("dim").get<int>(), meta.at("embed_dim").get<int>(),
      meta.at("hidden").get<int>(),
      aux_kind_from_string(meta.at("aux_kind").get<std::string>()), dom,
      meta.at("schedule_hash").get<std::uint64_t>(), 0);
  for (auto& p : b.params()) {
    if (!j.at("params").contains(p.name))
      throw runtime_fault("checkpoint: missing parameter " + p.name);
    const auto& entry = j["params"][p.name];
    auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 2 || shape[0] != p.rows || shape[1] != p.cols)
      throw runtime_fault("checkpoint: shape mismatch for " + p.name);
    auto flat = entry.at("data").get<std::vector<double>>();
    if (static_cast<int>(flat.size()) != p.size())
      throw runtime_fault("checkpoint: data length mismatch for " + p.name);
    for (int r = 0; r < p.rows; ++r)
      for (int c = 0; c < p.cols; ++c)
        p.data[c * p.rows + r] = flat[r * p.cols + c];
  }
  return b;
}

bool schedule_matches(const PredictorBundle& bundle, const Schedule& sched) {
  return !bundle.domain.continuous && bundle.schedule_hash == sched.hash() &&
         bundle.domain.n_steps == sched.steps();
}

}  // namespace dpmcov
