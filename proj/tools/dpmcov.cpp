// Experiment driver: train predictor heads, evaluate ELBO/KL tables, draw
// samples, select trajectories, and run the verification suite.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "dpmcov/checks.hpp"
#include "dpmcov/elbo.hpp"
#include "dpmcov/io.hpp"
#include "dpmcov/net.hpp"
#include "dpmcov/parallel.hpp"
#include "dpmcov/providers.hpp"
#include "dpmcov/sampler.hpp"
#include "dpmcov/trajectory.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dpmcov;

namespace {

enum LogLevel { kError = 0, kInfo = 1, kDebug = 2 };

int log_level() {
  static int level = [] {
    const char* env = std::getenv("DPM_COVLAB_LOG");
    if (!env) return kError;
    std::string v(env);
    if (v == "debug") return kDebug;
    if (v == "info") return kInfo;
    return kError;
  }();
  return level;
}

void log_info(const std::string& msg) {
  if (log_level() >= kInfo) std::cerr << "[info] " << msg << "\n";
}

struct Config {
  json raw;
  GmmSpec spec;
  Schedule schedule = Schedule::linear(100);
  ProcessKind kind = ProcessKind::ddpm();
  std::uint64_t seed = 0;
  fs::path out = "results";
};

json require_key(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key))
    throw invalid_argument("config: missing key '" + where + "." + key + "'");
  return j.at(key);
}

Config load_config(const std::string& path, std::optional<std::uint64_t> seed_flag,
                   std::optional<std::string> out_flag) {
  Config cfg;
  std::string text = read_text_file(path);
  try {
    cfg.raw = json::parse(text);
  } catch (const json::parse_error& e) {
    throw invalid_argument("config: " + std::string(e.what()));
  }
  cfg.spec = gmm_from_json(require_key(cfg.raw, "spec", "").dump());

  json sj = require_key(cfg.raw, "schedule", "");
  std::string kind = require_key(sj, "kind", "schedule").get<std::string>();
  if (kind == "linear" && !sj.contains("beta"))
    cfg.schedule = Schedule::linear(require_key(sj, "n", "schedule").get<int>());
  else
    cfg.schedule = schedule_from_json(sj.dump());

  if (cfg.raw.contains("process")) {
    const json& p = cfg.raw["process"];
    if (p.is_string()) {
      std::string name = p.get<std::string>();
      if (name == "ddpm")
        cfg.kind = ProcessKind::ddpm();
      else if (name == "ddim")
        cfg.kind = ProcessKind::ddim();
      else
        throw invalid_argument("config: unknown process '" + name + "'");
    } else {
      cfg.kind = ProcessKind::custom(
          require_key(p, "custom", "process").get<std::vector<double>>());
    }
  }

  if (seed_flag)
    cfg.seed = *seed_flag;
  else if (cfg.raw.contains("seed"))
    cfg.seed = cfg.raw["seed"].get<std::uint64_t>();
  else
    throw invalid_argument("config: seed is mandatory (config key or --seed)");

  if (out_flag)
    cfg.out = *out_flag;
  else if (cfg.raw.contains("out"))
    cfg.out = cfg.raw["out"].get<std::string>();
  fs::create_directories(cfg.out);
  return cfg;
}

TrainConfig train_config_from(const json& t, std::uint64_t seed, int iterations) {
  TrainConfig tc;
  tc.iterations = iterations;
  tc.batch = t.value("batch", 128);
  tc.lr = t.value("lr", 1e-3);
  tc.seed = seed;
  tc.log_every = 1;
  return tc;
}

void write_curve_csv(const fs::path& path,
                     const std::vector<std::pair<int, double>>& curve) {
  std::string out = "iteration,loss\n";
  for (const auto& [it, loss] : curve)
    out += std::to_string(it) + "," + std::to_string(loss) + "\n";
  write_text_file(path.string(), out);
}

int cmd_train(const Config& cfg) {
  json t = cfg.raw.value("train", json::object());
  NetArch arch{t.value("embed", 32), t.value("hidden", 128)};
  std::vector<std::string> stages =
      t.value("stages", std::vector<std::string>{"eps", "sn", "npr"});
  int iters_eps = t.value("iterations", 20000);
  int iters_aux = t.value("iterations_aux", iters_eps);

  fs::path eps_path = cfg.out / "eps.ckpt.json";
  std::optional<PredictorBundle> stage1;
  bool train_stage1 =
      std::find(stages.begin(), stages.end(), "eps") != stages.end();
  if (train_stage1) {
    log_info("training noise head, " + std::to_string(iters_eps) + " iterations");
    TrainResult r = train_eps(cfg.spec, cfg.schedule, arch,
                              train_config_from(t, cfg.seed, iters_eps));
    save_checkpoint(r.bundle, eps_path.string());
    write_curve_csv(cfg.out / "train_eps.csv", r.curve);
    stage1 = std::move(r.bundle);
  } else {
    if (!fs::exists(eps_path))
      throw invalid_argument("train: stage-2 only run needs " + eps_path.string());
    stage1 = load_checkpoint(eps_path.string());
    if (!schedule_matches(*stage1, cfg.schedule))
      std::cerr << "[warn] checkpoint schedule hash does not match the config schedule\n";
  }
  for (const std::string& stage : stages) {
    if (stage == "eps") continue;
    AuxKind kind = aux_kind_from_string(stage);
    log_info("training " + stage + " head, " + std::to_string(iters_aux) +
             " iterations");
    TrainResult r = train_aux(*stage1, kind, cfg.spec, cfg.schedule,
                              train_config_from(t, cfg.seed + 1, iters_aux));
    save_checkpoint(r.bundle, (cfg.out / (stage + ".ckpt.json")).string());
    write_curve_csv(cfg.out / ("train_" + stage + ".csv"), r.curve);
  }
  return 0;
}

// Owns the providers and caches a set of named kernel models refers to.
struct ModelSet {
  std::unique_ptr<OracleMoments> oracle;
  std::unique_ptr<BiasedMeanMoments> biased;
  std::unique_ptr<NetworkMoments> net;
  std::shared_ptr<const PredictorBundle> sn_bundle, npr_bundle;
  std::unique_ptr<IsoCache> iso_oracle, iso_biased, iso_net;
  std::vector<KernelModel> models;
};

ModelSet build_models(const std::vector<std::string>& names, const Config& cfg,
                      double bias, int iso_budget) {
  ModelSet set;
  set.oracle = std::make_unique<OracleMoments>(cfg.spec);
  auto need = [&](const std::string& prefix) {
    for (const auto& n : names)
      if (n.rfind(prefix, 0) == 0) return true;
    return false;
  };
  if (need("biased")) {
    set.biased = std::make_unique<BiasedMeanMoments>(cfg.spec, bias);
  }
  if (need("net")) {
    fs::path sn = cfg.out / "sn.ckpt.json";
    fs::path npr = cfg.out / "npr.ckpt.json";
    if (fs::exists(sn))
      set.sn_bundle = std::make_shared<PredictorBundle>(load_checkpoint(sn.string()));
    if (fs::exists(npr))
      set.npr_bundle =
          std::make_shared<PredictorBundle>(load_checkpoint(npr.string()));
    if (!set.sn_bundle && !set.npr_bundle)
      throw invalid_argument("models: no sn/npr checkpoint under " +
                             cfg.out.string());
    if (set.sn_bundle && !schedule_matches(*set.sn_bundle, cfg.schedule))
      std::cerr << "[warn] sn checkpoint schedule hash mismatch\n";
    set.net = set.sn_bundle && set.npr_bundle
                  ? std::make_unique<NetworkMoments>(set.sn_bundle, set.npr_bundle)
                  : std::make_unique<NetworkMoments>(
                        set.sn_bundle ? set.sn_bundle : set.npr_bundle);
  }

  auto provider_for = [&](const std::string& name) -> const MomentProvider* {
    if (name.rfind("oracle", 0) == 0) return set.oracle.get();
    if (name.rfind("biased", 0) == 0) return set.biased.get();
    if (name.rfind("net", 0) == 0) return set.net.get();
    throw invalid_argument("models: unknown provider in '" + name + "'");
  };
  auto iso_cache_for = [&](const std::string& name) -> const IsoCache* {
    auto build = [&](std::unique_ptr<IsoCache>& slot, const MomentProvider& p) {
      if (!slot)
        slot = std::make_unique<IsoCache>(build_iso_cache(
            p, cfg.spec, cfg.schedule, iso_budget, cfg.seed + 0x150));
      return slot.get();
    };
    if (name.rfind("oracle", 0) == 0) return build(set.iso_oracle, *set.oracle);
    if (name.rfind("biased", 0) == 0) return build(set.iso_biased, *set.biased);
    return build(set.iso_net, *set.net);
  };

  for (const std::string& name : names) {
    KernelModel m;
    m.name = name;
    m.moments = provider_for(name);
    auto ends_with = [&](const std::string& suffix) {
      return name.size() >= suffix.size() &&
             name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with("-sn")) {
      m.variance = KernelModel::Variance::SnDiag;
    } else if (ends_with("-npr")) {
      m.variance = KernelModel::Variance::NprDiag;
    } else if (ends_with("-iso")) {
      m.variance = KernelModel::Variance::AnalyticIso;
      m.iso_cache = iso_cache_for(name);
    } else if (ends_with("-full")) {
      m.variance = KernelModel::Variance::OracleFull;
      m.oracle = set.oracle.get();
    } else if (name == "fixed-lambda") {
      m.moments = set.oracle.get();
      m.variance = KernelModel::Variance::FixedLambda;
    } else if (name == "fixed-beta") {
      m.moments = set.oracle.get();
      m.variance = KernelModel::Variance::FixedBeta;
    } else {
      throw invalid_argument("models: unknown variance in '" + name + "'");
    }
    set.models.push_back(m);
  }
  return set;
}

std::string eval_csv_header() {
  return "model,mode,trajectory,K,value,stderr,seed,M\n";
}

int cmd_eval_elbo(const Config& cfg) {
  if (cfg.kind.tag == ProcessKind::Tag::Ddim)
    throw invalid_argument(
        "eval-elbo: the ddim forward process has -L_elbo = inf; use ddpm");
  json e = cfg.raw.value("eval", json::object());
  auto names = e.value("models", std::vector<std::string>{"oracle-npr", "oracle-sn",
                                                          "oracle-iso"});
  bool direct = e.value("mode", std::string("reduced")) == "direct";
  auto k_list = e.value("K", std::vector<int>{10, 25, 50});
  auto traj_kinds = e.value("trajectory", std::vector<std::string>{"even"});
  int draws = direct ? e.value("trajectories", 10000) : e.value("states", 100000);
  double bias = e.value("bias", 0.5);
  int iso_budget = e.value("iso_budget", 10000);
  int cost_budget = e.value("cost_budget", 2000);

  ModelSet set = build_models(names, cfg, bias, iso_budget);
  std::string csv = eval_csv_header();

  std::optional<Mat> cost;
  for (int k : k_list) {
    for (const std::string& tk : traj_kinds) {
      TrajectorySpec traj;
      if (tk == "even") {
        traj = even_trajectory(cfg.schedule.steps(), k);
      } else if (tk == "dp") {
        if (!cost)
          cost = cost_matrix(set.models[0], cfg.schedule, cfg.kind, cfg.spec,
                             cost_budget, cfg.seed + 0xc057);
        traj = dp_trajectory(*cost, k);
      } else {
        throw invalid_argument("eval-elbo: unknown trajectory kind '" + tk + "'");
      }
      log_info("evaluating K=" + std::to_string(k) + " " + tk);
      auto rows = compare_models(set.models, cfg.schedule, cfg.kind, traj,
                                 cfg.spec, direct, draws, cfg.seed);
      for (const auto& r : rows) {
        std::ostringstream os;
        os.precision(12);
        os << r.model << ',' << r.mode << ',' << tk << ',' << r.steps << ','
           << r.value << ',' << r.se << ',' << r.seed << ',' << r.draws << '\n';
        csv += os.str();
      }
    }
  }
  write_text_file((cfg.out / "eval_elbo.csv").string(), csv);
  std::cout << csv;
  return 0;
}

int cmd_sample(const Config& cfg) {
  json s = cfg.raw.value("sample", json::object());
  std::string name = s.value("model", std::string("oracle-sn"));
  int k = s.value("K", 10);
  int batch = s.value("batch", 10000);
  ModelSet set = build_models({name}, cfg, s.value("bias", 0.0),
                              s.value("iso_budget", 10000));
  ClipConfig clip;
  if (s.contains("clip")) {
    clip.enabled = s["clip"].value("enabled", false);
    clip.y = s["clip"].value("y", 1.0);
    clip.data_scale = s["clip"].value("data_scale", 1.0);
  }
  TrajectorySpec traj = even_trajectory(cfg.schedule.steps(), k);
  SampleRun run = ancestral_sample(set.models[0], cfg.schedule, cfg.kind, traj,
                                   batch, cfg.seed, clip);
  write_samples_csv((cfg.out / "samples.csv").string(), run.samples);
  SampleMetrics m = sample_metrics(run, cfg.spec);
  json meta = {{"model", name},
               {"K", k},
               {"batch", batch},
               {"seed", cfg.seed},
               {"trajectory", run.tau},
               {"metrics",
                {{"mean_err", m.mean_err},
                 {"mean_band", m.mean_band},
                 {"cov_err", m.cov_err},
                 {"cov_band", m.cov_band},
                 {"weight_err", m.weight_err},
                 {"weight_band", m.weight_band},
                 {"avg_loglik", m.avg_loglik},
                 {"loglik_se", m.loglik_se}}}};
  write_text_file((cfg.out / "sample_metrics.json").string(), meta.dump(2));
  std::cout << meta.dump(2) << "\n";
  return 0;
}

int cmd_trajectory(const Config& cfg) {
  json t = cfg.raw.value("trajectory", json::object());
  auto k_list = t.value("K", std::vector<int>{10, 25});
  int cost_budget = t.value("cost_budget", 2000);
  auto names = t.value("model", std::string("oracle-sn"));
  ModelSet set = build_models({names}, cfg, t.value("bias", 0.0),
                              t.value("iso_budget", 10000));
  Mat cost = cost_matrix(set.models[0], cfg.schedule, cfg.kind, cfg.spec,
                         cost_budget, cfg.seed + 0xc057);
  if (t.value("dump_cost", false))
    write_cost_matrix_csv((cfg.out / "cost_matrix.csv").string(), cost);
  json out = json::object();
  for (int k : k_list) {
    TrajectorySpec even = even_trajectory(cfg.schedule.steps(), k);
    TrajectorySpec dp = dp_trajectory(cost, k);
    out[std::to_string(k)] = {{"even", even.tau},
                              {"dp", dp.tau},
                              {"cost_even", trajectory_cost(cost, even)},
                              {"cost_dp", trajectory_cost(cost, dp)}};
  }
  write_text_file((cfg.out / "trajectories.json").string(), out.dump(2));
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_verify(const Config& cfg) {
  CheckOptions opt;
  opt.seed = cfg.seed;
  if (cfg.raw.contains("verify")) {
    const json& v = cfg.raw["verify"];
    opt.instances = v.value("instances", opt.instances);
    opt.states = v.value("states", opt.states);
  }
  auto results = run_all_checks(opt);
  std::string report = checks_report_json(results);
  write_text_file((cfg.out / "verify_report.json").string(), report);
  std::cout << report << "\n";
  for (const auto& r : results)
    if (!r.pass) return 1;
  return 0;
}

int cmd_plot_data(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw invalid_argument("plot-data: not a directory: " + dir);
  // long format: series = model/mode/trajectory
  std::map<std::pair<std::string, int>, std::pair<double, double>> rows;
  bool any = false;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    std::string text = read_text_file(entry.path().string());
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) continue;
    if (line.rfind("model,mode,trajectory,K,value,stderr", 0) != 0) continue;
    any = true;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::string model, mode, traj, k, value, se;
      std::getline(ls, model, ',');
      std::getline(ls, mode, ',');
      std::getline(ls, traj, ',');
      std::getline(ls, k, ',');
      std::getline(ls, value, ',');
      std::getline(ls, se, ',');
      if (model.empty()) continue;
      std::pair<std::string, int> key{model + "/" + mode + "/" + traj,
                                      std::stoi(k)};
      if (rows.count(key))
        std::cerr << "[warn] duplicate series row " << key.first << " K=" << k
                  << ", keeping the last\n";
      rows[key] = {std::stod(value), std::stod(se)};
    }
  }
  if (!any) throw invalid_argument("plot-data: no result csv files in " + dir);
  std::ostringstream os;
  os.precision(12);
  os << "series,K,value,stderr\n";
  for (const auto& [key, vs] : rows)
    os << key.first << ',' << key.second << ',' << vs.first << ',' << vs.second
       << '\n';
  fs::path out = fs::path(dir) / "plot_data.csv";
  write_text_file(out.string(), os.str());
  std::cout << os.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"covariance estimators for diffusion models on mixture oracles"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  std::optional<std::string> out_flag;
  int threads = 0;
  app.add_option("--config", config_path, "experiment config (json)");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "rng seed (overrides config)");
  std::string out_value;
  auto* out_opt = app.add_option("--out", out_value, "output directory");
  app.add_option("--threads", threads,
                 "worker thread cap, 0 = single-threaded deterministic");

  auto* train = app.add_subcommand("train", "two-stage training of the predictor heads");
  auto* eval = app.add_subcommand("eval-elbo", "ELBO/KL comparison table");
  auto* sample = app.add_subcommand("sample", "ancestral sampling + metrics");
  auto* traj = app.add_subcommand("trajectory", "even and DP-optimal trajectories");
  auto* verify = app.add_subcommand("verify", "run the invariant suite");
  auto* plot = app.add_subcommand("plot-data", "aggregate result csv files");
  std::string plot_dir;
  plot->add_option("dir", plot_dir, "results directory")->required();

  CLI11_PARSE(app, argc, argv);
  if (*seed_opt) seed_flag = seed_value;
  if (*out_opt) out_flag = out_value;
  set_max_threads(threads);

  try {
    if (plot->parsed()) return cmd_plot_data(plot_dir);
    if (config_path.empty())
      throw invalid_argument("config: --config is required for this subcommand");
    Config cfg = load_config(config_path, seed_flag, out_flag);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval_elbo(cfg);
    if (sample->parsed()) return cmd_sample(cfg);
    if (traj->parsed()) return cmd_trajectory(cfg);
    if (verify->parsed()) return cmd_verify(cfg);
  } catch (const invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
