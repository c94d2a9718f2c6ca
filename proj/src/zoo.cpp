#include "layerstitch/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layerstitch/error.hpp"
#include "layerstitch/rng.hpp"

namespace layerstitch {

std::string to_string(Generator g) {
  switch (g) {
    case Generator::kGaussianBlobs: return "gaussian-blobs";
    case Generator::kXorBands: return "xor-bands";
    case Generator::kModularSum: return "modular-sum";
  }
  return "unknown";
}

Generator parse_generator(const std::string& name) {
  if (name == "gaussian-blobs") return Generator::kGaussianBlobs;
  if (name == "xor-bands") return Generator::kXorBands;
  if (name == "modular-sum") return Generator::kModularSum;
  throw ConfigError("unknown task generator '" + name + "'");
}

namespace {

// Draws one input whose label is `label`. Each family samples conditionally
// on the label so class quotas are met exactly.
class TaskSampler {
 public:
  TaskSampler(const TaskSpec& spec) : spec_(spec), rng_(spec.seed) {
    if (spec.generator == Generator::kGaussianBlobs) {
      Rng center_rng(splitmix64(spec.seed ^ 0xb10bULL));
      centers_ = Matrix(spec.num_classes, spec.input_dim);
      for (int c = 0; c < spec.num_classes; ++c)
        for (int d = 0; d < spec.input_dim; ++d) centers_(c, d) = 1.5 * center_rng.normal();
    }
  }

  void draw(int label, Eigen::RowVectorXd& x) {
    switch (spec_.generator) {
      case Generator::kGaussianBlobs: draw_blob(label, x); break;
      case Generator::kXorBands: draw_xor(label, x); break;
      case Generator::kModularSum: draw_modular(label, x); break;
    }
  }

 private:
  void draw_blob(int label, Eigen::RowVectorXd& x) {
    for (int d = 0; d < spec_.input_dim; ++d) x(d) = centers_(label, d) + rng_.normal();
  }

  int xor_label(const Eigen::RowVectorXd& x) const {
    const int bands = std::max(1, (spec_.num_classes + 1) / 2);
    const int parity = (x(0) * x(1) > 0.0) ? 1 : 0;
    const double u = spec_.input_dim > 2 ? (x(2) + 1.0) / 2.0 : 0.0;
    const int band = std::min(bands - 1, static_cast<int>(u * bands));
    return (2 * band + parity) % spec_.num_classes;
  }

  void draw_xor(int label, Eigen::RowVectorXd& x) {
    do {
      for (int d = 0; d < spec_.input_dim; ++d) x(d) = rng_.uniform(-1.0, 1.0);
    } while (xor_label(x) != label);
  }

  void draw_modular(int label, Eigen::RowVectorXd& x) {
    const int c = spec_.num_classes;
    const int digits = std::min(3, spec_.input_dim);
    std::vector<int> z(digits);
    int rest = 0;
    for (int i = 1; i < digits; ++i) {
      z[i] = static_cast<int>(rng_.uniform_index(c));
      rest += z[i];
    }
    z[0] = ((label - rest) % c + c) % c;
    const double denom = c > 1 ? c - 1 : 1;
    for (int i = 0; i < digits; ++i) x(i) = 2.0 * z[i] / denom - 1.0 + 0.05 * rng_.normal();
    for (int d = digits; d < spec_.input_dim; ++d) x(d) = 0.5 * rng_.normal();
  }

  const TaskSpec& spec_;
  Rng rng_;
  Matrix centers_;
};

LabeledDataset draw_split(TaskSampler& sampler, const TaskSpec& spec, std::size_t n,
                          std::uint64_t order_seed) {
  LabeledDataset out;
  out.order_seed = order_seed;
  out.inputs = Matrix(static_cast<Eigen::Index>(n), spec.input_dim);
  out.labels.resize(n);
  Matrix raw(static_cast<Eigen::Index>(n), spec.input_dim);
  std::vector<int> raw_labels(n);
  Eigen::RowVectorXd x(spec.input_dim);
  for (std::size_t i = 0; i < n; ++i) {
    raw_labels[i] = static_cast<int>(i % static_cast<std::size_t>(spec.num_classes));
    sampler.draw(raw_labels[i], x);
    raw.row(static_cast<Eigen::Index>(i)) = x;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng order(order_seed);
  order.shuffle(std::span<std::size_t>(perm));
  for (std::size_t i = 0; i < n; ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = raw.row(static_cast<Eigen::Index>(perm[i]));
    out.labels[i] = raw_labels[perm[i]];
  }
  return out;
}

}  // namespace

TaskDatasets make_task_datasets(const TaskSpec& spec) {
  if (spec.num_classes < 1) throw ConfigError("task " + spec.task_id + ": num_classes must be positive");
  if (spec.input_dim < 1) throw ConfigError("task " + spec.task_id + ": input_dim must be positive");
  if (spec.generator == Generator::kXorBands && spec.input_dim < 2)
    throw ConfigError("task " + spec.task_id + ": xor-bands needs input_dim >= 2");
  TaskSampler sampler(spec);
  TaskDatasets out;
  out.train = draw_split(sampler, spec, spec.train_size, splitmix64(spec.seed ^ 1));
  out.calib = draw_split(sampler, spec, spec.calib_size, splitmix64(spec.seed ^ 2));
  out.test = draw_split(sampler, spec, spec.test_size, splitmix64(spec.seed ^ 3));
  return out;
}

// ---------------------------------------------------------------------------

ResidualBlock ResidualBlock::zeros(int hidden_dim) {
  ResidualBlock b;
  b.W1 = Matrix::Zero(hidden_dim, hidden_dim);
  b.b1 = Vector::Zero(hidden_dim);
  b.W2 = Matrix::Zero(hidden_dim, hidden_dim);
  b.b2 = Vector::Zero(hidden_dim);
  return b;
}

std::size_t ResidualBlock::parameter_count() const {
  return static_cast<std::size_t>(W1.size() + b1.size() + W2.size() + b2.size());
}

bool ResidualBlock::same_shape(const ResidualBlock& o) const {
  return W1.rows() == o.W1.rows() && W1.cols() == o.W1.cols() && b1.size() == o.b1.size() &&
         W2.rows() == o.W2.rows() && W2.cols() == o.W2.cols() && b2.size() == o.b2.size();
}

std::size_t LayeredModel::parameter_count() const {
  std::size_t n = static_cast<std::size_t>(head.W.size() + head.b.size());
  for (const auto& b : blocks) n += b.parameter_count();
  return n;
}

void LayeredModel::check_shapes() const {
  if (input_dim < 1 || hidden_dim < 1 || num_classes < 1)
    throw IntegrityError("model '" + label + "': dimensions must be positive");
  if (input_dim > hidden_dim)
    throw IntegrityError("model '" + label + "': input_dim exceeds hidden_dim");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto& b = blocks[i];
    if (b.W1.rows() != hidden_dim || b.W1.cols() != hidden_dim || b.b1.size() != hidden_dim ||
        b.W2.rows() != hidden_dim || b.W2.cols() != hidden_dim || b.b2.size() != hidden_dim)
      throw IntegrityError("model '" + label + "': block " + std::to_string(i) +
                           " does not match hidden_dim " + std::to_string(hidden_dim));
  }
  if (head.W.rows() != num_classes || head.W.cols() != hidden_dim || head.b.size() != num_classes)
    throw IntegrityError("model '" + label + "': head does not match (num_classes, hidden_dim)");
}

namespace {

template <typename Blocks, typename HeadT, typename F>
void for_each_param(Blocks& blocks, HeadT& head, F&& f) {
  for (auto& b : blocks) {
    for (Eigen::Index i = 0; i < b.W1.size(); ++i) f(b.W1.data()[i]);
    for (Eigen::Index i = 0; i < b.b1.size(); ++i) f(b.b1.data()[i]);
    for (Eigen::Index i = 0; i < b.W2.size(); ++i) f(b.W2.data()[i]);
    for (Eigen::Index i = 0; i < b.b2.size(); ++i) f(b.b2.data()[i]);
  }
  for (Eigen::Index i = 0; i < head.W.size(); ++i) f(head.W.data()[i]);
  for (Eigen::Index i = 0; i < head.b.size(); ++i) f(head.b.data()[i]);
}

bool bits_equal(const Matrix& a, const Matrix& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::equal(a.data(), a.data() + a.size(), b.data());
}

bool bits_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() && std::equal(a.data(), a.data() + a.size(), b.data());
}

}  // namespace

bool parameters_equal(const LayeredModel& a, const LayeredModel& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.blocks.size(); ++i) {
    const auto& x = a.blocks[i];
    const auto& y = b.blocks[i];
    if (!bits_equal(x.W1, y.W1) || !bits_equal(x.b1, y.b1) || !bits_equal(x.W2, y.W2) ||
        !bits_equal(x.b2, y.b2) || x.scale != y.scale)
      return false;
  }
  return bits_equal(a.head.W, b.head.W) && bits_equal(a.head.b, b.head.b);
}

double parameter_distance(const LayeredModel& a, const LayeredModel& b) {
  if (a.shape() != b.shape()) throw ConfigError("parameter_distance: shape mismatch");
  std::vector<double> va, vb;
  for_each_param(a.blocks, a.head, [&](const double& p) { va.push_back(p); });
  for_each_param(b.blocks, b.head, [&](const double& p) { vb.push_back(p); });
  double sum = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) sum += (va[i] - vb[i]) * (va[i] - vb[i]);
  return std::sqrt(sum);
}

LayeredModel init_model(const ModelShape& shape, std::uint64_t seed) {
  if (shape.input_dim < 1 || shape.hidden_dim < 1 || shape.num_layers < 0 || shape.num_classes < 1)
    throw ConfigError("model shape: dimensions must be positive");
  if (shape.input_dim > shape.hidden_dim)
    throw ConfigError("model shape: input_dim must not exceed hidden_dim");
  Rng rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(shape.hidden_dim));
  auto fill = [&](Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = rng.uniform(-bound, bound);
  };
  LayeredModel model;
  model.input_dim = shape.input_dim;
  model.hidden_dim = shape.hidden_dim;
  model.num_classes = shape.num_classes;
  model.label = "init";
  for (int i = 0; i < shape.num_layers; ++i) {
    auto block = ResidualBlock::zeros(shape.hidden_dim);
    fill(block.W1);
    fill(block.W2);
    model.blocks.push_back(std::move(block));
  }
  model.head.W = Matrix(shape.num_classes, shape.hidden_dim);
  fill(model.head.W);
  model.head.b = Vector::Zero(shape.num_classes);
  return model;
}

namespace {

Matrix embed(const LayeredModel& model, const Matrix& batch) {
  if (batch.cols() != model.input_dim)
    throw ConfigError("forward: batch has " + std::to_string(batch.cols()) +
                      " columns, model expects input_dim " + std::to_string(model.input_dim));
  Matrix h = Matrix::Zero(batch.rows(), model.hidden_dim);
  h.leftCols(model.input_dim) = batch;
  return h;
}

// Per-block activations kept for backprop.
struct Trace {
  std::vector<Matrix> inputs;  // H_k
  std::vector<Matrix> pre;     // Z_k
  std::vector<Matrix> act;     // relu(Z_k)
  Matrix last;
};

Matrix run(const LayeredModel& model, const Matrix& batch, Trace* trace) {
  Matrix h = embed(model, batch);
  for (const auto& b : model.blocks) {
    Matrix z = h * b.W1.transpose();
    z.rowwise() += b.b1.transpose();
    Matrix a = z.cwiseMax(0.0);
    Matrix f = a * b.W2.transpose();
    f.rowwise() += b.b2.transpose();
    if (trace) {
      trace->inputs.push_back(h);
      trace->pre.push_back(z);
      trace->act.push_back(a);
    }
    if (b.scale == 1.0)
      h += f;
    else
      h += b.scale * f;
  }
  Matrix logits = h * model.head.W.transpose();
  logits.rowwise() += model.head.b.transpose();
  if (trace) trace->last = std::move(h);
  return logits;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      p(r, c) = std::exp(logits(r, c) - mx);
      sum += p(r, c);
    }
    p.row(r) /= sum;
  }
  return p;
}

double cross_entropy(const Matrix& logits, std::span<const int> labels) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const double lse = mx + std::log((logits.row(r).array() - mx).exp().sum());
    total += lse - logits(r, labels[static_cast<std::size_t>(r)]);
  }
  return total / static_cast<double>(logits.rows());
}

}  // namespace

Matrix forward(const LayeredModel& model, const Matrix& batch) { return run(model, batch, nullptr); }

std::vector<int> predict_labels(const LayeredModel& model, const Matrix& batch) {
  const Matrix logits = forward(model, batch);
  std::vector<int> out(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index arg = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, arg)) arg = c;
    out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
  }
  return out;
}

double error_rate(const LayeredModel& model, const LabeledDataset& data) {
  if (data.size() == 0) throw ConfigError("error_rate: empty dataset");
  const auto pred = predict_labels(model, data.inputs);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) wrong += pred[i] != data.labels[i];
  return static_cast<double>(wrong) / static_cast<double>(pred.size());
}

double mean_cross_entropy(const LayeredModel& model, const LabeledDataset& data) {
  if (data.size() == 0) throw ConfigError("mean_cross_entropy: empty dataset");
  return cross_entropy(forward(model, data.inputs), data.labels);
}

double loss_and_gradient(const LayeredModel& model, const Matrix& inputs,
                         std::span<const int> labels, ModelGradient& grad) {
  if (static_cast<std::size_t>(inputs.rows()) != labels.size() || labels.empty())
    throw ConfigError("loss_and_gradient: inputs and labels disagree or are empty");
  Trace trace;
  const Matrix logits = run(model, inputs, &trace);
  const double loss = cross_entropy(logits, labels);
  const double n = static_cast<double>(inputs.rows());

  Matrix dlogits = softmax_rows(logits);
  for (Eigen::Index r = 0; r < dlogits.rows(); ++r) dlogits(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
  dlogits /= n;

  grad.head.W = dlogits.transpose() * trace.last;
  grad.head.b = dlogits.colwise().sum().transpose();
  Matrix dh = dlogits * model.head.W;

  grad.blocks.resize(model.blocks.size());
  for (std::size_t k = model.blocks.size(); k-- > 0;) {
    const auto& b = model.blocks[k];
    auto& g = grad.blocks[k];
    const Matrix df = b.scale == 1.0 ? dh : Matrix(b.scale * dh);
    g.W2 = df.transpose() * trace.act[k];
    g.b2 = df.colwise().sum().transpose();
    Matrix dz = df * b.W2;
    dz = dz.cwiseProduct((trace.pre[k].array() > 0.0).cast<double>().matrix());
    g.W1 = dz.transpose() * trace.inputs[k];
    g.b1 = dz.colwise().sum().transpose();
    dh += dz * b.W1;
  }
  return loss;
}

namespace {

void sgd(LayeredModel& model, const Matrix& inputs, const std::vector<int>& labels,
         const TrainHyper& hyper, Rng& rng, bool train_head) {
  if (hyper.steps == 0) return;
  const std::size_t n = labels.size();
  if (n == 0) throw ConfigError("training set is empty");
  if (hyper.batch_size == 0) throw ConfigError("batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = n;
  const std::size_t bs = std::min(hyper.batch_size, n);
  Matrix xb(static_cast<Eigen::Index>(bs), inputs.cols());
  std::vector<int> yb(bs);
  ModelGradient grad;
  for (std::size_t step = 0; step < hyper.steps; ++step) {
    for (std::size_t i = 0; i < bs; ++i) {
      if (cursor == n) {
        rng.shuffle(std::span<std::size_t>(order));
        cursor = 0;
      }
      const std::size_t idx = order[cursor++];
      xb.row(static_cast<Eigen::Index>(i)) = inputs.row(static_cast<Eigen::Index>(idx));
      yb[i] = labels[idx];
    }
    loss_and_gradient(model, xb, yb, grad);
    for (std::size_t k = 0; k < model.blocks.size(); ++k) {
      auto& b = model.blocks[k];
      const auto& g = grad.blocks[k];
      b.W1 -= hyper.learning_rate * g.W1;
      b.b1 -= hyper.learning_rate * g.b1;
      b.W2 -= hyper.learning_rate * g.W2;
      b.b2 -= hyper.learning_rate * g.b2;
    }
    if (!train_head) continue;
    model.head.W -= hyper.learning_rate * grad.head.W;
    model.head.b -= hyper.learning_rate * grad.head.b;
  }
}

}  // namespace

LayeredModel train_base(const std::vector<TaskSpec>& tasks, const ModelShape& shape,
                        const TrainHyper& hyper, std::uint64_t seed) {
  if (tasks.empty()) throw ConfigError("train_base: at least one task is required");
  for (const auto& t : tasks) {
    if (t.input_dim != shape.input_dim || t.num_classes != shape.num_classes)
      throw ConfigError("train_base: task '" + t.task_id +
                        "' does not match the model's input_dim/num_classes");
  }
  LayeredModel model = init_model(shape, seed);
  model.label = "base";
  if (hyper.steps == 0) return model;

  std::size_t total = 0;
  std::vector<TaskDatasets> data;
  for (const auto& t : tasks) {
    data.push_back(make_task_datasets(t));
    total += data.back().train.size();
  }
  Matrix inputs(static_cast<Eigen::Index>(total), shape.input_dim);
  std::vector<int> labels;
  labels.reserve(total);
  Eigen::Index row = 0;
  for (const auto& d : data) {
    inputs.middleRows(row, static_cast<Eigen::Index>(d.train.size())) = d.train.inputs;
    row += static_cast<Eigen::Index>(d.train.size());
    labels.insert(labels.end(), d.train.labels.begin(), d.train.labels.end());
  }
  Rng rng(splitmix64(seed) ^ 0x7a11ULL);
  sgd(model, inputs, labels, hyper, rng, true);
  return model;
}

LayeredModel finetune_variant(const LayeredModel& base, const TaskSpec& task,
                              const TrainHyper& hyper, std::uint64_t seed) {
  if (task.input_dim != base.input_dim || task.num_classes != base.num_classes)
    throw ConfigError("finetune_variant: task '" + task.task_id +
                      "' is incompatible with the base model dimensions");
  LayeredModel model = base;
  model.label = "variant-" + task.task_id;
  if (hyper.steps == 0) return model;
  const auto data = make_task_datasets(task);
  Rng rng(splitmix64(seed) ^ 0xf1e7ULL);
  sgd(model, data.train.inputs, data.train.labels, hyper, rng, false);
  return model;
}

namespace {

std::vector<bool> relu_pattern(const LayeredModel& model, const Matrix& inputs) {
  Trace trace;
  run(model, inputs, &trace);
  std::vector<bool> bits;
  for (const auto& z : trace.pre)
    for (Eigen::Index i = 0; i < z.size(); ++i) bits.push_back(z.data()[i] > 0.0);
  return bits;
}

}  // namespace

GradCheckResult grad_check(const LayeredModel& model, const LabeledDataset& data,
                           double epsilon, std::size_t samples, std::uint64_t seed) {
  if (!(epsilon > 0.0 && epsilon <= 1e-2)) throw ConfigError("grad_check: epsilon must lie in (0, 1e-2]");
  GradCheckResult result;
  ModelGradient grad;
  loss_and_gradient(model, data.inputs, data.labels, grad);

  const Matrix probs = softmax_rows(forward(model, data.inputs));
  result.saturated = (probs.rowwise().maxCoeff().array() > 1.0 - 1e-6).all();

  LayeredModel probe = model;
  std::vector<double*> params;
  std::vector<double> analytic;
  for_each_param(probe.blocks, probe.head, [&](double& p) { params.push_back(&p); });
  for_each_param(grad.blocks, grad.head, [&](const double& g) { analytic.push_back(g); });

  const auto base_pattern = relu_pattern(model, data.inputs);
  Rng rng(seed);
  const std::size_t attempts = std::min(params.size(), samples * 4);
  std::vector<std::size_t> order(params.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<std::size_t>(order));
  for (std::size_t a = 0; a < attempts && result.checked < samples; ++a) {
    const std::size_t idx = order[a];
    double& p = *params[idx];
    const double saved = p;
    p = saved + epsilon;
    const bool kink_hi = relu_pattern(probe, data.inputs) != base_pattern;
    const double up = cross_entropy(forward(probe, data.inputs), data.labels);
    p = saved - epsilon;
    const bool kink_lo = relu_pattern(probe, data.inputs) != base_pattern;
    const double down = cross_entropy(forward(probe, data.inputs), data.labels);
    p = saved;
    if (kink_hi || kink_lo) {
      ++result.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / (2.0 * epsilon);
    const double denom = std::max({std::abs(numeric), std::abs(analytic[idx]), 1e-6});
    result.max_relative_error =
        std::max(result.max_relative_error, std::abs(numeric - analytic[idx]) / denom);
    ++result.checked;
  }
  return result;
}

}  // namespace layerstitch
