#include "pamm/harness/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "pamm/rng.hpp"

namespace pamm::harness {

namespace {

constexpr std::array<std::array<double, 3>, 8> kPalette{{
    {0.9, 0.2, 0.2},
    {0.2, 0.8, 0.3},
    {0.2, 0.3, 0.9},
    {0.9, 0.8, 0.2},
    {0.7, 0.2, 0.8},
    {0.2, 0.8, 0.8},
    {0.9, 0.5, 0.1},
    {0.5, 0.5, 0.5},
}};

struct Blob {
  double row = 0, col = 0;  // unit-square coordinates
  double sigma = 0.2;
  double height = 1.0;
  int label = 0;

  double strength(double r, double c) const {
    const double dr = r - row, dc = c - col;
    return height * std::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma));
  }
};

SyntheticSample make_blob_sample(std::uint64_t seed, std::uint64_t index,
                                 const DataShape& shape) {
  Rng rng = Rng(seed, 0).derive(index);
  const std::size_t blob_count = 3 + rng.below(3);
  std::vector<Blob> blobs(blob_count);
  for (auto& b : blobs) {
    b.row = rng.uniform();
    b.col = rng.uniform();
    b.sigma = rng.uniform(0.12, 0.3);
    b.height = rng.uniform(0.5, 1.5);
    b.label = static_cast<int>(rng.below(shape.classes));
  }

  const std::size_t n0 = shape.image_size;
  std::vector<double> image(3 * n0 * n0);
  for (std::size_t i = 0; i < n0; ++i) {
    for (std::size_t j = 0; j < n0; ++j) {
      const double r = (static_cast<double>(i) + 0.5) / static_cast<double>(n0);
      const double c = (static_cast<double>(j) + 0.5) / static_cast<double>(n0);
      // Soft ownership blend of class colours, brightened by the field.
      double z = 0.0, field = 0.0;
      std::array<double, 3> rgb{0, 0, 0};
      for (const auto& b : blobs) {
        const double s = b.strength(r, c);
        field += s;
        const double w = std::exp(8.0 * s);
        z += w;
        const auto& col = kPalette[static_cast<std::size_t>(b.label) % kPalette.size()];
        for (std::size_t ch = 0; ch < 3; ++ch) rgb[ch] += w * col[ch];
      }
      for (std::size_t ch = 0; ch < 3; ++ch) {
        image[(ch * n0 + i) * n0 + j] =
            (rgb[ch] / z) * (0.4 + 0.3 * field) + 0.05 * rng.normal();
      }
    }
  }

  const std::size_t n = shape.label_size();
  std::vector<int> seg(n * n);
  std::vector<double> depth(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double r = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double c = (static_cast<double>(j) + 0.5) / static_cast<double>(n);
      double best = -1.0, field = 0.0;
      int owner = 0;
      for (const auto& b : blobs) {
        const double s = b.strength(r, c);
        field += s;
        if (s > best) {
          best = s;
          owner = b.label;
        }
      }
      seg[i * n + j] = owner;
      depth[i * n + j] = field;
    }
  }

  SyntheticSample sample;
  sample.image = Tensor::from({3, n0, n0}, std::move(image));
  sample.dataset_seed = seed;
  sample.index = index;
  TaskLabels seg_labels;
  seg_labels.classes = seg;
  TaskLabels depth_labels;
  depth_labels.values = Tensor::from({1, n, n}, std::move(depth));
  TaskLabels edge_labels;
  edge_labels.classes = boundary_from_segmentation(seg, n, n);
  sample.labels = {std::move(seg_labels), std::move(depth_labels), std::move(edge_labels)};
  return sample;
}

SyntheticSample make_diagonal_sample(std::uint64_t seed, std::uint64_t index,
                                     const DataShape& shape) {
  Rng rng = Rng(seed, 1).derive(index);
  const std::size_t n0 = shape.image_size;
  const int orientation = static_cast<int>(rng.below(2));
  const std::size_t length = std::min<std::size_t>(2 * shape.stride, n0);
  const std::size_t r0 = rng.below(n0 - length + 1);
  const std::size_t c0 = rng.below(n0 - length + 1);

  std::vector<double> image(3 * n0 * n0);
  for (auto& v : image) v = 0.05 * rng.normal();
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t r = r0 + t;
    const std::size_t c = orientation == 0 ? c0 + t : c0 + length - 1 - t;
    for (std::size_t ch = 0; ch < 3; ++ch) image[(ch * n0 + r) * n0 + c] += 1.0;
  }

  const std::size_t n = shape.label_size();
  SyntheticSample sample;
  sample.image = Tensor::from({3, n0, n0}, std::move(image));
  sample.dataset_seed = seed;
  sample.index = index;
  TaskLabels labels;
  labels.classes.assign(n * n, orientation);
  sample.labels = {std::move(labels)};
  return sample;
}

}  // namespace

void TaskSpec::validate() const {
  const bool expected_lower = metric != MetricKind::kMIoU;
  if (lower_is_better != expected_lower) {
    throw std::invalid_argument("task " + name + ": metric " + to_string(metric) +
                                " has the wrong optimisation direction");
  }
  if (channels == 0) throw std::invalid_argument("task " + name + ": zero channels");
}

std::string to_string(MetricKind m) {
  switch (m) {
    case MetricKind::kMIoU: return "mIoU";
    case MetricKind::kRMSE: return "RMSE";
    case MetricKind::kMeanAngularError: return "mErr";
  }
  return "?";
}

MetricKind metric_from_string(const std::string& s) {
  if (s == "mIoU") return MetricKind::kMIoU;
  if (s == "RMSE") return MetricKind::kRMSE;
  if (s == "mErr") return MetricKind::kMeanAngularError;
  throw std::invalid_argument("unknown metric '" + s + "'");
}

std::string to_string(DatasetKind k) {
  return k == DatasetKind::kBlobs ? "blobs" : "diagonal";
}

DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "blobs") return DatasetKind::kBlobs;
  if (s == "diagonal") return DatasetKind::kDiagonal;
  throw std::invalid_argument("unknown dataset kind '" + s + "'");
}

void DataShape::validate() const {
  if (stride == 0 || image_size == 0 || image_size % stride != 0) {
    throw std::invalid_argument("data: image_size must be a positive multiple of stride");
  }
  if (classes < 2 || classes > kPalette.size()) {
    throw std::invalid_argument("data: classes must be in [2, 8]");
  }
  if (image_size < 2 * stride) {
    throw std::invalid_argument("data: image too small for the stride");
  }
}

std::vector<TaskSpec> task_specs_for(DatasetKind kind, const DataShape& shape) {
  if (kind == DatasetKind::kDiagonal) {
    return {{"orientation", TaskKind::kClassification, 2, LossKind::kCrossEntropy,
             MetricKind::kMIoU, false}};
  }
  return {
      {"semseg", TaskKind::kClassification, shape.classes, LossKind::kCrossEntropy,
       MetricKind::kMIoU, false},
      {"depth", TaskKind::kRegression, 1, LossKind::kL1, MetricKind::kRMSE, true},
      {"boundary", TaskKind::kClassification, 2, LossKind::kCrossEntropy,
       MetricKind::kMIoU, false},
  };
}

SyntheticSample make_sample(DatasetKind kind, std::uint64_t seed,
                            std::uint64_t index, const DataShape& shape) {
  shape.validate();
  return kind == DatasetKind::kBlobs ? make_blob_sample(seed, index, shape)
                                     : make_diagonal_sample(seed, index, shape);
}

std::vector<SyntheticSample> gen_dataset(DatasetKind kind, std::uint64_t seed,
                                         std::size_t count, const DataShape& shape,
                                         std::uint64_t first_index,
                                         std::size_t threads) {
  if (count < 1) throw std::invalid_argument("gen_dataset: count must be >= 1");
  shape.validate();
  std::vector<SyntheticSample> out(count);
  threads = std::max<std::size_t>(1, std::min(threads, count));
  auto work = [&](std::size_t worker) {
    for (std::size_t i = worker; i < count; i += threads) {
      out[i] = make_sample(kind, seed, first_index + i, shape);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < threads; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<int> boundary_from_segmentation(const std::vector<int>& seg,
                                            std::size_t height, std::size_t width) {
  if (seg.size() != height * width) {
    throw std::invalid_argument("boundary: segmentation size mismatch");
  }
  std::vector<int> edge(seg.size(), 0);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      const int own = seg[i * width + j];
      bool mixed = false;
      for (std::size_t u = (i > 0 ? i - 1 : 0); u <= std::min(i + 1, height - 1); ++u) {
        for (std::size_t v = (j > 0 ? j - 1 : 0); v <= std::min(j + 1, width - 1); ++v) {
          mixed = mixed || seg[u * width + v] != own;
        }
      }
      edge[i * width + j] = mixed ? 1 : 0;
    }
  }
  return edge;
}

}  // namespace pamm::harness
