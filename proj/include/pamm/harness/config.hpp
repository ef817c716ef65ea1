#pragma once

// Run configuration. JSON layout (every key optional, defaults shown by
// Config::to_json()):
//
//   data       kind, seed, train_count, eval_count, image_size, classes
//   backbone   patch_stride, width, depth, taps
//   decoder    stages, mlp_nonlinear
//   pame       state_dim, expansion, dw_kernel, tasks, priors
//   experts    count, top_k, share_bc_bank, noise, enabled
//   mdhs       directions
//   train      steps, batch_size, lr, seed, threads, probe_samples
//   grad_check coords_per_group, step, five_point, tolerance, training,
//              seed
//   report     path, baseline, baseline_name

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "pamm/harness/data.hpp"
#include "pamm/model.hpp"

namespace pamm::harness {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DataSettings {
  DatasetKind kind = DatasetKind::kBlobs;
  std::uint64_t seed = 1;
  std::size_t train_count = 512;
  std::size_t eval_count = 128;
  DataShape shape;
};

struct TrainSettings {
  std::size_t steps = 200;
  std::size_t batch_size = 6;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  // Fixed training subset whose loss is reported before and after training.
  std::size_t probe_samples = 32;
};

struct GradCheckSettings {
  std::size_t coords_per_group = 200;
  double step = 1e-2;
  // Fourth-order central stencil; false uses the two-point one.
  bool five_point = true;
  double tolerance = 1e-4;
  bool training = false;  // run the forward in training mode
  std::uint64_t seed = 0;
};

struct Config {
  DataSettings data;
  ModelSettings model;
  TrainSettings train;
  GradCheckSettings grad_check;
  std::string report_path;
  std::string baseline_path;
  std::string baseline_name = "baseline";

  // Default desk-scale setup on the blob dataset.
  static Config defaults();
  // Small 8x8 stack used for gradient verification.
  static Config grad_check_defaults();

  static Config from_json(const nlohmann::json& j);
  static Config load(const std::string& path);
  nlohmann::json to_json() const;

  std::vector<TaskSpec> tasks() const { return task_specs_for(data.kind, data.shape); }
  // Throws ConfigError on inconsistent settings.
  void validate() const;
};

}  // namespace pamm::harness
