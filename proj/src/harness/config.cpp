#include "pamm/harness/config.hpp"

#include <fstream>
#include <set>

namespace pamm::harness {

using nlohmann::json;

namespace {

const json& section(const json& root, const char* name,
                    std::initializer_list<const char*> keys) {
  static const json empty = json::object();
  if (!root.contains(name)) return empty;
  const json& s = root.at(name);
  if (!s.is_object()) throw ConfigError(std::string("config: '") + name + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (auto it = s.begin(); it != s.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(std::string("config: unknown key '") + name + "." + it.key() + "'");
    }
  }
  return s;
}

template <class T>
void read(const json& s, const char* key, T& out) {
  if (!s.contains(key)) return;
  try {
    out = s.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

std::size_t count_stages(const json& decoder, std::size_t fallback) {
  std::size_t stages = fallback;
  read(decoder, "stages", stages);
  return stages;
}

}  // namespace

Config Config::defaults() {
  Config c;
  c.model.backbone = BackboneSettings{};
  c.model.pame.tasks = 3;
  for (const auto& t : c.tasks()) c.model.head_channels.push_back(t.channels);
  return c;
}

Config Config::grad_check_defaults() {
  Config c = defaults();
  c.data.shape.image_size = 16;
  c.data.shape.stride = 2;
  c.data.train_count = 1;
  c.data.eval_count = 1;
  c.model.backbone.patch_stride = 2;
  c.model.backbone.width = 8;
  c.model.backbone.depth = 2;
  c.model.backbone.taps = {1, 2};
  c.model.pame.channels = 8;
  c.model.pame.state_dim = 4;
  c.model.pame.expansion = 2;
  return c;
}

Config Config::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::set<std::string> sections{"data", "backbone", "decoder", "pame",
                                              "experts", "mdhs", "train", "grad_check",
                                              "report"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!sections.count(it.key())) throw ConfigError("config: unknown section '" + it.key() + "'");
  }

  Config c = defaults();
  const json& data = section(j, "data", {"kind", "seed", "train_count", "eval_count",
                                         "image_size", "classes"});
  std::string kind = to_string(c.data.kind);
  read(data, "kind", kind);
  try {
    c.data.kind = dataset_kind_from_string(kind);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  read(data, "seed", c.data.seed);
  read(data, "train_count", c.data.train_count);
  read(data, "eval_count", c.data.eval_count);
  read(data, "image_size", c.data.shape.image_size);
  read(data, "classes", c.data.shape.classes);

  auto& bb = c.model.backbone;
  const json& backbone = section(j, "backbone", {"patch_stride", "width", "depth", "taps"});
  read(backbone, "patch_stride", bb.patch_stride);
  read(backbone, "width", bb.width);
  read(backbone, "depth", bb.depth);
  read(backbone, "taps", bb.taps);
  c.data.shape.stride = bb.patch_stride;

  const json& decoder = section(j, "decoder", {"stages", "mlp_nonlinear"});
  read(decoder, "mlp_nonlinear", c.model.mlp_nonlinear);
  if (count_stages(decoder, bb.taps.size()) != bb.taps.size()) {
    throw ConfigError("config: decoder.stages must equal the number of backbone.taps");
  }

  auto& pame = c.model.pame;
  const std::size_t dataset_tasks = c.tasks().size();
  pame.tasks = dataset_tasks;
  const json& pj = section(j, "pame", {"state_dim", "expansion", "dw_kernel", "tasks", "priors"});
  read(pj, "state_dim", pame.state_dim);
  read(pj, "expansion", pame.expansion);
  read(pj, "dw_kernel", pame.dw_kernel);
  read(pj, "tasks", pame.tasks);
  read(pj, "priors", pame.use_priors);
  pame.channels = bb.width;

  const json& ex = section(j, "experts", {"count", "top_k", "share_bc_bank", "noise", "enabled"});
  read(ex, "count", pame.experts);
  read(ex, "top_k", pame.expert.top_k);
  read(ex, "share_bc_bank", pame.share_bc_bank);
  read(ex, "noise", pame.expert.noise);
  read(ex, "enabled", pame.expert.use_experts);

  const json& mdhs = section(j, "mdhs", {"directions"});
  read(mdhs, "directions", pame.directions);

  const json& tr = section(j, "train", {"steps", "batch_size", "lr", "seed", "threads",
                                        "probe_samples"});
  read(tr, "steps", c.train.steps);
  read(tr, "batch_size", c.train.batch_size);
  read(tr, "lr", c.train.lr);
  read(tr, "seed", c.train.seed);
  read(tr, "threads", c.train.threads);
  read(tr, "probe_samples", c.train.probe_samples);

  const json& gc = section(j, "grad_check", {"coords_per_group", "step", "five_point", "tolerance",
                                             "training", "seed"});
  read(gc, "coords_per_group", c.grad_check.coords_per_group);
  read(gc, "step", c.grad_check.step);
  read(gc, "five_point", c.grad_check.five_point);
  read(gc, "tolerance", c.grad_check.tolerance);
  read(gc, "training", c.grad_check.training);
  read(gc, "seed", c.grad_check.seed);

  const json& rep = section(j, "report", {"path", "baseline", "baseline_name"});
  read(rep, "path", c.report_path);
  read(rep, "baseline", c.baseline_path);
  read(rep, "baseline_name", c.baseline_name);

  c.model.head_channels.clear();
  for (const auto& t : c.tasks()) c.model.head_channels.push_back(t.channels);
  c.validate();
  return c;
}

Config Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: invalid JSON in '" + path + "': " + e.what());
  }
  return from_json(j);
}

json Config::to_json() const {
  const auto& bb = model.backbone;
  const auto& p = model.pame;
  return json{
      {"data",
       {{"kind", to_string(data.kind)},
        {"seed", data.seed},
        {"train_count", data.train_count},
        {"eval_count", data.eval_count},
        {"image_size", data.shape.image_size},
        {"classes", data.shape.classes}}},
      {"backbone",
       {{"patch_stride", bb.patch_stride},
        {"width", bb.width},
        {"depth", bb.depth},
        {"taps", bb.taps}}},
      {"decoder", {{"stages", bb.taps.size()}, {"mlp_nonlinear", model.mlp_nonlinear}}},
      {"pame",
       {{"state_dim", p.state_dim},
        {"expansion", p.expansion},
        {"dw_kernel", p.dw_kernel},
        {"tasks", p.tasks},
        {"priors", p.use_priors}}},
      {"experts",
       {{"count", p.experts},
        {"top_k", p.expert.top_k},
        {"share_bc_bank", p.share_bc_bank},
        {"noise", p.expert.noise},
        {"enabled", p.expert.use_experts}}},
      {"mdhs", {{"directions", p.directions}}},
      {"train",
       {{"steps", train.steps},
        {"batch_size", train.batch_size},
        {"lr", train.lr},
        {"seed", train.seed},
        {"threads", train.threads},
        {"probe_samples", train.probe_samples}}},
      {"grad_check",
       {{"coords_per_group", grad_check.coords_per_group},
        {"step", grad_check.step},
        {"five_point", grad_check.five_point},
        {"tolerance", grad_check.tolerance},
        {"training", grad_check.training},
        {"seed", grad_check.seed}}},
      {"report",
       {{"path", report_path}, {"baseline", baseline_path}, {"baseline_name", baseline_name}}},
  };
}

void Config::validate() const {
  try {
    data.shape.validate();
    model.validate();
    for (const auto& t : tasks()) t.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (data.shape.stride != model.backbone.patch_stride) {
    throw ConfigError("config: label stride must equal backbone.patch_stride");
  }
  if (model.pame.tasks != tasks().size()) {
    throw ConfigError("config: pame.tasks=" + std::to_string(model.pame.tasks) +
                      " but dataset '" + to_string(data.kind) + "' has " +
                      std::to_string(tasks().size()) + " tasks");
  }
  if (data.train_count < 1 || data.eval_count < 1) {
    throw ConfigError("config: train_count and eval_count must be >= 1");
  }
  if (train.batch_size < 1) throw ConfigError("config: train.batch_size must be >= 1");
  if (train.threads < 1) throw ConfigError("config: train.threads must be >= 1");
  if (!(train.lr >= 0.0)) throw ConfigError("config: train.lr must be >= 0");
  if (!(grad_check.step > 0.0) || !(grad_check.tolerance > 0.0)) {
    throw ConfigError("config: grad_check.step and tolerance must be positive");
  }
}

}  // namespace pamm::harness
