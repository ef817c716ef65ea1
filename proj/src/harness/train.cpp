#include "pamm/harness/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pamm/harness/parallel.hpp"
#include "pamm/ops.hpp"

namespace pamm::harness {

namespace {

constexpr std::uint64_t kModelStream = 11;
constexpr std::uint64_t kShuffleStream = 12;
constexpr std::uint64_t kNoiseStream = 13;

std::vector<std::size_t> permutation(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

double mean_loss(const PammModel& model, const std::vector<SyntheticSample>& samples,
                 std::size_t count, const std::vector<TaskSpec>& tasks, std::size_t threads) {
  count = std::min(count, samples.size());
  std::vector<double> losses(count, 0.0);
  parallel_for(count, threads, [&](std::size_t i) {
    losses[i] = sample_loss(model.forward(samples[i].image, false, nullptr), samples[i], tasks)
                    .item();
  });
  double total = 0.0;
  for (double l : losses) total += l;
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::string format_metrics(const TaskMetrics& m) {
  std::ostringstream os;
  for (const auto& [k, v] : m) os << ' ' << k << '=' << v;
  return os.str();
}

}  // namespace

Tensor sample_loss(const std::vector<Tensor>& predictions, const SyntheticSample& sample,
                   const std::vector<TaskSpec>& tasks) {
  if (predictions.size() != tasks.size() || sample.labels.size() != tasks.size()) {
    throw ShapeError("sample_loss: task count mismatch");
  }
  Tensor total;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    Tensor l = tasks[t].loss == LossKind::kCrossEntropy
                   ? cross_entropy(predictions[t], sample.labels[t].classes)
                   : l1_loss(predictions[t], sample.labels[t].values);
    total = total.defined() ? add(total, l) : l;
  }
  return total;
}

TaskMetrics evaluate(const PammModel& model, const std::vector<SyntheticSample>& samples,
                     const std::vector<TaskSpec>& tasks, std::size_t threads) {
  std::vector<std::vector<Tensor>> preds(samples.size());
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    // Detached copies release each sample's graph straight away.
    for (const auto& p : model.forward(samples[i].image, false, nullptr)) {
      preds[i].push_back(p.detach());
    }
  });
  TaskMetrics out;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].kind == TaskKind::kClassification) {
      std::vector<int> pred, gt;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto p = argmax_classes(preds[i][t]);
        pred.insert(pred.end(), p.begin(), p.end());
        const auto& g = samples[i].labels[t].classes;
        gt.insert(gt.end(), g.begin(), g.end());
      }
      out[tasks[t].name] = compute_miou(pred, gt, tasks[t].channels);
    } else {
      std::vector<double> pred, gt;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto p = preds[i][t].values();
        pred.insert(pred.end(), p.begin(), p.end());
        const auto g = samples[i].labels[t].values.values();
        gt.insert(gt.end(), g.begin(), g.end());
      }
      out[tasks[t].name] = compute_rmse(pred, gt);
    }
  }
  return out;
}

TaskMetrics trivial_metrics(const std::vector<SyntheticSample>& train,
                            const std::vector<SyntheticSample>& eval,
                            const std::vector<TaskSpec>& tasks) {
  TaskMetrics out;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    if (tasks[t].kind == TaskKind::kClassification) {
      std::vector<std::size_t> counts(tasks[t].channels, 0);
      for (const auto& s : train) {
        for (int c : s.labels[t].classes) ++counts[static_cast<std::size_t>(c)];
      }
      const int majority = static_cast<int>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      std::vector<int> pred, gt;
      for (const auto& s : eval) {
        const auto& g = s.labels[t].classes;
        gt.insert(gt.end(), g.begin(), g.end());
        pred.insert(pred.end(), g.size(), majority);
      }
      out[tasks[t].name] = compute_miou(pred, gt, tasks[t].channels);
    } else {
      double total = 0.0;
      std::size_t n = 0;
      for (const auto& s : train) {
        for (double v : s.labels[t].values.values()) total += v;
        n += s.labels[t].values.numel();
      }
      const double mean = total / static_cast<double>(n);
      std::vector<double> pred, gt;
      for (const auto& s : eval) {
        const auto g = s.labels[t].values.values();
        gt.insert(gt.end(), g.begin(), g.end());
        pred.insert(pred.end(), g.size(), mean);
      }
      out[tasks[t].name] = compute_rmse(pred, gt);
    }
  }
  return out;
}

Adam::Adam(const ParameterList& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params) {
    m_.emplace_back(p.tensor.numel(), 0.0);
    v_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step(ParameterList& params, const std::vector<std::vector<double>>& grads) {
  if (grads.size() != params.size() || params.size() != m_.size()) {
    throw std::invalid_argument("adam: parameter count mismatch");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].tensor.mutable_values();
    const auto& g = grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m_[i][k] = beta1_ * m_[i][k] + (1.0 - beta1_) * g[k];
      v_[i][k] = beta2_ * v_[i][k] + (1.0 - beta2_) * g[k] * g[k];
      w[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
    }
  }
}

RunReport train_and_evaluate(const Config& config, const ProgressFn& progress) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const auto tasks = config.tasks();
  const auto& ts = config.train;
  const auto train_set = gen_dataset(config.data.kind, config.data.seed, config.data.train_count,
                                     config.data.shape, 0, ts.threads);
  const auto eval_set =
      gen_dataset(config.data.kind, config.data.seed, config.data.eval_count, config.data.shape,
                  config.data.train_count, ts.threads);

  Rng model_rng(ts.seed, kModelStream);
  PammModel model = PammModel::create(model_rng, config.model);
  ParameterList params = model.parameters();
  Adam adam(params, ts.lr);

  RunReport report;
  report.tasks = tasks;
  report.config = config.to_json();
  report.trivial_metrics = trivial_metrics(train_set, eval_set, tasks);
  report.initial_train_loss = mean_loss(model, train_set, ts.probe_samples, tasks, ts.threads);
  if (progress) {
    progress("initial probe loss " + std::to_string(report.initial_train_loss));
  }

  const std::size_t batch = std::min(ts.batch_size, train_set.size());
  const std::size_t per_epoch = train_set.size() / batch;
  const Rng shuffle_root(ts.seed, kShuffleStream);
  const Rng noise_root(ts.seed, kNoiseStream);
  std::vector<std::size_t> order;

  for (std::size_t step = 0; step < ts.steps; ++step) {
    const std::size_t epoch = step / per_epoch;
    const std::size_t pos = step % per_epoch;
    if (pos == 0) order = permutation(train_set.size(), shuffle_root.derive(epoch));

    std::vector<GradSink> sinks(batch);
    std::vector<double> losses(batch, 0.0);
    const Rng step_noise = noise_root.derive(step);
    parallel_for(batch, ts.threads, [&](std::size_t b) {
      const auto& sample = train_set[order[pos * batch + b]];
      Rng noise = step_noise.derive(b);
      Tensor loss = sample_loss(model.forward(sample.image, true, &noise), sample, tasks);
      losses[b] = loss.item();
      backward(scale(loss, 1.0 / static_cast<double>(batch)), &sinks[b]);
    });

    std::vector<std::vector<double>> grads(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      grads[i].assign(params[i].tensor.numel(), 0.0);
      for (const auto& sink : sinks) {
        const auto g = sink.grad(params[i].tensor);
        for (std::size_t k = 0; k < g.size(); ++k) grads[i][k] += g[k];
      }
      for (double g : grads[i]) {
        if (!std::isfinite(g)) {
          throw NumericError("train: non-finite gradient in '" + params[i].name + "' at step " +
                             std::to_string(step));
        }
      }
    }
    double batch_loss = 0.0;
    for (double l : losses) batch_loss += l;
    batch_loss /= static_cast<double>(batch);
    if (!std::isfinite(batch_loss)) {
      throw NumericError("train: non-finite loss at step " + std::to_string(step));
    }
    report.step_losses.push_back(batch_loss);
    adam.step(params, grads);

    const bool epoch_end = pos + 1 == per_epoch;
    const bool last = step + 1 == ts.steps;
    if (epoch_end || last) {
      EpochRecord rec{epoch, step + 1, evaluate(model, eval_set, tasks, ts.threads)};
      if (progress) {
        progress("epoch " + std::to_string(epoch) + " step " + std::to_string(step + 1) +
                 " loss " + std::to_string(batch_loss) + format_metrics(rec.metrics));
      }
      report.epochs.push_back(std::move(rec));
    }
  }

  report.final_metrics =
      report.epochs.empty() ? evaluate(model, eval_set, tasks, ts.threads) : report.epochs.back().metrics;
  report.final_train_loss = mean_loss(model, train_set, ts.probe_samples, tasks, ts.threads);

  if (!config.baseline_path.empty()) {
    const RunReport base = RunReport::load(config.baseline_path);
    report.baseline = BaselineComparison{
        config.baseline_name, base.final_metrics,
        compute_delta_g(report.final_metrics, base.final_metrics, tasks)};
  }
  report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace pamm::harness
