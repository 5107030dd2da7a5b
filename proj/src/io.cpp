#include "dpmcov/io.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace dpmcov {

using nlohmann::json;

std::string schedule_to_json(const Schedule& sched) {
  json j;
  j["kind"] = sched.kind() == Schedule::Kind::Linear ? "linear" : "explicit";
  j["beta"] = sched.betas();
  return j.dump();
}

Schedule schedule_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw invalid_argument(std::string("schedule json: ") + e.what());
  }
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "linear" && !j.contains("beta"))
    return Schedule::linear(j.at("n").get<int>());
  auto beta = j.at("beta").get<std::vector<double>>();
  if (kind == "linear") {
    // round-trip of a linear schedule: keep the betas, tag preserved only
    // through the values themselves
    return Schedule::explicit_betas(std::move(beta));
  }
  if (kind != "explicit")
    throw invalid_argument("schedule json: unknown kind '" + kind + "'");
  return Schedule::explicit_betas(std::move(beta));
}

std::string gmm_to_json(const GmmSpec& spec) {
  json j;
  j["weights"] = spec.weights;
  std::vector<std::vector<double>> means;
  for (const Vec& m : spec.means)
    means.emplace_back(m.data(), m.data() + m.size());
  j["means"] = means;
  j["var"] = spec.var;
  return j.dump();
}

GmmSpec gmm_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw invalid_argument(std::string("gmm json: ") + e.what());
  }
  GmmSpec spec;
  spec.weights = j.at("weights").get<std::vector<double>>();
  auto means = j.at("means").get<std::vector<std::vector<double>>>();
  require(!means.empty(), "gmm json: empty means");
  spec.dim = static_cast<int>(means[0].size());
  for (const auto& m : means) {
    require(static_cast<int>(m.size()) == spec.dim, "gmm json: ragged means");
    spec.means.push_back(Eigen::Map<const Vec>(m.data(), m.size()));
  }
  spec.var = j.at("var").get<double>();
  spec.validate();
  return spec;
}

std::string trajectory_to_json(const TrajectorySpec& traj) {
  return json(traj.tau).dump();
}

TrajectorySpec trajectory_from_json(const std::string& text) {
  TrajectorySpec traj;
  try {
    traj.tau = json::parse(text).get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw invalid_argument(std::string("trajectory json: ") + e.what());
  }
  return traj;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw runtime_fault("cannot open " + path + " for writing");
  out << text;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw runtime_fault("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string compare_rows_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream os;
  os << "model,mode,K,value,stderr,seed,M\n";
  os << std::setprecision(12);
  for (const auto& r : rows)
    os << r.model << ',' << r.mode << ',' << r.steps << ',' << r.value << ','
       << r.se << ',' << r.seed << ',' << r.draws << '\n';
  return os.str();
}

void write_samples_csv(const std::string& path, const Mat& samples) {
  std::ofstream out(path);
  if (!out) throw runtime_fault("cannot open " + path + " for writing");
  out << std::setprecision(17);
  for (int i = 0; i < samples.rows(); ++i) {
    for (int j = 0; j < samples.cols(); ++j)
      out << (j ? "," : "") << samples(i, j);
    out << '\n';
  }
}

void write_cost_matrix_csv(const std::string& path, const Mat& cost) {
  std::ofstream out(path);
  if (!out) throw runtime_fault("cannot open " + path + " for writing");
  out << std::setprecision(12);
  for (int s = 0; s < cost.rows(); ++s) {
    for (int t = 0; t < cost.cols(); ++t) out << (t ? "," : "") << cost(s, t);
    out << '\n';
  }
}

}  // namespace dpmcov
