#pragma once

#include <string>
#include <vector>

#include "dpmcov/elbo.hpp"
#include "dpmcov/gmm.hpp"
#include "dpmcov/schedule.hpp"
#include "dpmcov/trajectory.hpp"

namespace dpmcov {

// JSON forms: schedule {"kind": "...", "beta": [...]} (a linear schedule may
// also be given as {"kind":"linear","n":N}); mixture {"weights":[...],
// "means":[[...]], "var": c}; trajectories are plain arrays.

std::string schedule_to_json(const Schedule& sched);
Schedule schedule_from_json(const std::string& text);

std::string gmm_to_json(const GmmSpec& spec);
GmmSpec gmm_from_json(const std::string& text);

std::string trajectory_to_json(const TrajectorySpec& traj);
TrajectorySpec trajectory_from_json(const std::string& text);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// columns: model,mode,K,value,stderr,seed,M
std::string compare_rows_csv(const std::vector<CompareRow>& rows);
void write_samples_csv(const std::string& path, const Mat& samples);
void write_cost_matrix_csv(const std::string& path, const Mat& cost);

}  // namespace dpmcov
