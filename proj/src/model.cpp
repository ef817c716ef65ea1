#include "pamm/model.hpp"

#include <stdexcept>
#include <string>

namespace pamm {

void ModelSettings::validate() const {
  backbone.validate();
  pame.validate();
  if (pame.channels != backbone.width) {
    throw std::invalid_argument("model: pame channels must equal backbone width");
  }
  if (head_channels.size() != pame.tasks) {
    throw std::invalid_argument("model: " + std::to_string(head_channels.size()) +
                                " heads for " + std::to_string(pame.tasks) + " tasks");
  }
  for (auto k : head_channels) {
    if (k == 0) throw std::invalid_argument("model: head channels must be positive");
  }
}

PammModel PammModel::create(Rng& rng, ModelSettings settings) {
  settings.pame.channels = settings.backbone.width;
  settings.validate();
  PammModel m;
  m.settings_ = settings;
  const std::size_t c = settings.backbone.width;
  Rng backbone_rng = rng.derive(1);
  m.backbone = ToyBackbone::create(backbone_rng, settings.backbone);
  for (std::size_t s = 0; s < settings.stages(); ++s) {
    Rng stage_rng = rng.derive(100 + s);
    std::vector<TaskConv> convs;
    for (std::size_t t = 0; t < settings.pame.tasks; ++t) {
      convs.push_back(TaskConv::create(stage_rng, c));
    }
    m.task_convs.push_back(std::move(convs));
    m.blocks.push_back(PameBlock::create(stage_rng, settings.pame));
  }
  for (std::size_t t = 0; t < settings.pame.tasks; ++t) {
    Rng task_rng = rng.derive(200 + t);
    m.fusions.push_back(
        StageFusion::create(task_rng, settings.stages(), c, settings.mlp_nonlinear));
    m.heads.push_back(ConvHead::create(task_rng, c, settings.head_channels[t]));
  }
  return m;
}

std::vector<Tensor> PammModel::forward(const Tensor& image, bool training,
                                       Rng* rng) const {
  const std::size_t tasks = settings_.pame.tasks;
  std::vector<Tensor> stage_maps = backbone.forward(image);
  // per_task[t][s] = refined output of stage s for task t
  std::vector<std::vector<Tensor>> per_task(tasks);
  for (std::size_t s = 0; s < stage_maps.size(); ++s) {
    std::vector<Tensor> local;
    for (std::size_t t = 0; t < tasks; ++t) {
      local.push_back(task_convs[s][t].apply(stage_maps[s]));
    }
    Rng stage_rng = rng ? rng->derive(s) : Rng(0);
    PameOutput out = blocks[s].forward(local, training, rng ? &stage_rng : nullptr);
    // The block's residual already carries the locally decoded features.
    for (std::size_t t = 0; t < tasks; ++t) per_task[t].push_back(out.refined[t]);
  }
  std::vector<Tensor> predictions;
  for (std::size_t t = 0; t < tasks; ++t) {
    FusionResult fused = fuse_stages(per_task[t], fusions[t]);
    predictions.push_back(heads[t].apply(fused.fused));
  }
  return predictions;
}

ParameterList PammModel::parameters() const {
  ParameterList out;
  backbone.collect("backbone", out);
  for (std::size_t s = 0; s < blocks.size(); ++s) {
    const std::string stage = "stage" + std::to_string(s);
    for (std::size_t t = 0; t < task_convs[s].size(); ++t) {
      task_convs[s][t].collect(stage + ".task_conv" + std::to_string(t), out);
    }
    blocks[s].collect(stage + ".pame", out);
  }
  for (std::size_t t = 0; t < fusions.size(); ++t) {
    fusions[t].collect("decoder.task" + std::to_string(t) + ".fusion", out);
    heads[t].collect("decoder.task" + std::to_string(t) + ".head", out);
  }
  return out;
}

}  // namespace pamm
