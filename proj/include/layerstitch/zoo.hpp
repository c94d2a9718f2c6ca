#pragma once

// Toy model family: residual MLP stacks standing in for a base model and its
// task-specialized finetunes.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace layerstitch {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Generator { kGaussianBlobs, kXorBands, kModularSum };

std::string to_string(Generator g);
// Throws ConfigError for unknown names.
Generator parse_generator(const std::string& name);

struct TaskSpec {
  std::string task_id;
  Generator generator = Generator::kGaussianBlobs;
  std::uint64_t seed = 0;
  int num_classes = 4;
  int input_dim = 8;
  std::size_t train_size = 0;
  std::size_t calib_size = 0;
  std::size_t test_size = 0;

  bool operator==(const TaskSpec&) const = default;
};

struct LabeledDataset {
  Matrix inputs;            // n x input_dim
  std::vector<int> labels;  // n entries in [0, num_classes)
  std::uint64_t order_seed = 0;

  std::size_t size() const { return labels.size(); }
};

struct TaskDatasets {
  LabeledDataset train;
  LabeledDataset calib;
  LabeledDataset test;
};

// Generates the three disjoint splits of a task. Every class receives an equal
// quota (up to one example of rounding), then each split is permuted by a
// seed derived from spec.seed.
TaskDatasets make_task_datasets(const TaskSpec& spec);

// One residual block: x + scale * (W2 relu(W1 x + b1) + b2).
// A block whose parameters are all zero is the identity.
struct ResidualBlock {
  Matrix W1;
  Vector b1;
  Matrix W2;
  Vector b2;
  // Multiplier on the residual branch only. Zoo models always carry 1.0;
  // assembled models may set it from a config's output_scale.
  double scale = 1.0;

  static ResidualBlock zeros(int hidden_dim);
  std::size_t parameter_count() const;
  bool same_shape(const ResidualBlock& other) const;
};

struct Head {
  Matrix W;  // num_classes x hidden_dim
  Vector b;  // num_classes
};

struct ModelShape {
  int input_dim = 8;
  int hidden_dim = 32;
  int num_layers = 8;
  int num_classes = 4;

  bool operator==(const ModelShape&) const = default;
};

// Inputs are zero-padded from input_dim to hidden_dim before the first block,
// so input_dim <= hidden_dim is required.
struct LayeredModel {
  int input_dim = 0;
  int hidden_dim = 0;
  int num_classes = 0;
  std::vector<ResidualBlock> blocks;
  Head head;
  std::string label;

  int num_layers() const { return static_cast<int>(blocks.size()); }
  ModelShape shape() const { return {input_dim, hidden_dim, num_layers(), num_classes}; }
  std::size_t parameter_count() const;
  // Throws IntegrityError if any tensor disagrees with the declared dims.
  void check_shapes() const;
};

// All parameters (including block scales) bitwise equal.
bool parameters_equal(const LayeredModel& a, const LayeredModel& b);
// Euclidean distance over all trainable parameters; shapes must match.
double parameter_distance(const LayeredModel& a, const LayeredModel& b);

// Seeded uniform init in [-1/sqrt(hidden), 1/sqrt(hidden)] for weights; zero biases.
LayeredModel init_model(const ModelShape& shape, std::uint64_t seed);

// Logits of shape (batch rows, num_classes).
Matrix forward(const LayeredModel& model, const Matrix& batch);
std::vector<int> predict_labels(const LayeredModel& model, const Matrix& batch);
double error_rate(const LayeredModel& model, const LabeledDataset& data);
double mean_cross_entropy(const LayeredModel& model, const LabeledDataset& data);

struct TrainHyper {
  std::size_t steps = 200;
  double learning_rate = 0.05;
  std::size_t batch_size = 16;
};

// Gradient of the mean cross-entropy, stored in the same layout as a model.
struct ModelGradient {
  std::vector<ResidualBlock> blocks;
  Head head;
};

double loss_and_gradient(const LayeredModel& model, const Matrix& inputs,
                         std::span<const int> labels, ModelGradient& grad);

LayeredModel train_base(const std::vector<TaskSpec>& tasks, const ModelShape& shape,
                        const TrainHyper& hyper, std::uint64_t seed);

// Trains the blocks only; the head stays the base model's, so every family
// member shares one head and stitched models can reuse it.
LayeredModel finetune_variant(const LayeredModel& base, const TaskSpec& task,
                              const TrainHyper& hyper, std::uint64_t seed);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  // Parameters skipped because a ReLU pre-activation changed sign inside the
  // finite-difference interval (the loss is not differentiable there).
  std::size_t skipped_kinks = 0;
  // Every example's top softmax probability exceeds 1 - 1e-6.
  bool saturated = false;
};

// Central finite differences over a random subset of `samples` parameters.
GradCheckResult grad_check(const LayeredModel& model, const LabeledDataset& data,
                           double epsilon, std::size_t samples = 64,
                           std::uint64_t seed = 0);

// Portable JSON checkpoint (format_version 1).
void save_checkpoint(const LayeredModel& model, const std::filesystem::path& path);
LayeredModel load_checkpoint(const std::filesystem::path& path);

}  // namespace layerstitch
