#pragma once

// Synthetic multi-task dense-prediction scenes.

#include <cstdint>
#include <string>
#include <vector>

#include "pamm/tensor.hpp"

namespace pamm::harness {

enum class TaskKind { kClassification, kRegression };
enum class LossKind { kCrossEntropy, kL1 };
enum class MetricKind { kMIoU, kRMSE, kMeanAngularError };

struct TaskSpec {
  std::string name;
  TaskKind kind = TaskKind::kClassification;
  std::size_t channels = 1;
  LossKind loss = LossKind::kCrossEntropy;
  MetricKind metric = MetricKind::kMIoU;
  bool lower_is_better = false;

  // Throws if the metric direction disagrees with the metric kind.
  void validate() const;
};

std::string to_string(MetricKind m);
MetricKind metric_from_string(const std::string& s);

enum class DatasetKind {
  // Soft blobs: segmentation, depth-like field, ownership boundaries.
  kBlobs,
  // One short diagonal stroke; every cell is labelled with its orientation.
  kDiagonal,
};

std::string to_string(DatasetKind k);
DatasetKind dataset_kind_from_string(const std::string& s);

struct DataShape {
  std::size_t image_size = 32;  // H0 = W0
  std::size_t stride = 4;       // labels live on the (H0/stride)^2 grid
  std::size_t classes = 4;      // segmentation classes (blobs only)

  std::size_t label_size() const { return image_size / stride; }
  void validate() const;
};

struct TaskLabels {
  std::vector<int> classes;  // [H x W] class indices (classification)
  Tensor values;             // [K x H x W] targets (regression)
};

struct SyntheticSample {
  Tensor image;  // [3 x H0 x W0]
  std::vector<TaskLabels> labels;
  std::uint64_t dataset_seed = 0;
  std::uint64_t index = 0;
};

std::vector<TaskSpec> task_specs_for(DatasetKind kind, const DataShape& shape);

SyntheticSample make_sample(DatasetKind kind, std::uint64_t seed,
                            std::uint64_t index, const DataShape& shape);
// Samples first_index .. first_index + count - 1.
std::vector<SyntheticSample> gen_dataset(DatasetKind kind, std::uint64_t seed,
                                         std::size_t count, const DataShape& shape,
                                         std::uint64_t first_index = 0,
                                         std::size_t threads = 1);

// 1 where the 3x3 neighbourhood (clipped at the border) holds >= 2 classes.
std::vector<int> boundary_from_segmentation(const std::vector<int>& seg,
                                            std::size_t height, std::size_t width);

}  // namespace pamm::harness
