#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "layerstitch/error.hpp"
#include "layerstitch/objective.hpp"
#include "layerstitch/zoo.hpp"

using namespace layerstitch;

namespace {

TaskSpec blob_task(std::uint64_t seed, std::size_t train, std::size_t calib, std::size_t test) {
  TaskSpec t;
  t.task_id = "blobs";
  t.generator = Generator::kGaussianBlobs;
  t.seed = seed;
  t.train_size = train;
  t.calib_size = calib;
  t.test_size = test;
  return t;
}

bool same_bytes(const LabeledDataset& a, const LabeledDataset& b) {
  if (a.labels != b.labels || a.inputs.rows() != b.inputs.rows() || a.inputs.cols() != b.inputs.cols())
    return false;
  return std::equal(a.inputs.data(), a.inputs.data() + a.inputs.size(), b.inputs.data());
}

LayeredModel zero_model(int input_dim, int hidden, int layers, int classes) {
  LayeredModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden;
  m.num_classes = classes;
  for (int i = 0; i < layers; ++i) m.blocks.push_back(ResidualBlock::zeros(hidden));
  m.head.W = Matrix::Zero(classes, hidden);
  m.head.b = Vector::Zero(classes);
  return m;
}

}  // namespace

TEST_CASE("datasets are deterministic in the spec") {
  const TaskSpec t = blob_task(7, 64, 32, 32);
  const auto a = make_task_datasets(t);
  const auto b = make_task_datasets(t);
  CHECK(same_bytes(a.train, b.train));
  CHECK(same_bytes(a.calib, b.calib));
  CHECK(same_bytes(a.test, b.test));
  CHECK(a.train.size() == 64);
  CHECK(a.calib.size() == 32);
  CHECK(a.test.size() == 32);
  CHECK_FALSE(same_bytes(a.calib, make_task_datasets(blob_task(8, 64, 32, 32)).calib));
}

TEST_CASE("class counts are balanced for every generator") {
  for (auto gen : {Generator::kGaussianBlobs, Generator::kXorBands, Generator::kModularSum}) {
    TaskSpec t = blob_task(5, 200, 120, 40);
    t.generator = gen;
    const auto d = make_task_datasets(t);
    for (const auto* split : {&d.train, &d.calib, &d.test}) {
      std::vector<int> counts(t.num_classes, 0);
      for (int y : split->labels) {
        REQUIRE(y >= 0);
        REQUIRE(y < t.num_classes);
        ++counts[y];
      }
      const double share = static_cast<double>(split->size()) / t.num_classes;
      for (int c : counts) CHECK(std::abs(c - share) <= 0.1 * share);
    }
  }
}

TEST_CASE("modular-sum with two classes and 32 calibration rows") {
  TaskSpec t = blob_task(1, 10, 32, 10);
  t.generator = Generator::kModularSum;
  t.num_classes = 2;
  const auto d = make_task_datasets(t);
  const auto ones = std::count(d.calib.labels.begin(), d.calib.labels.end(), 1);
  CHECK(ones >= 13);
  CHECK(ones <= 19);
  CHECK(32 - ones >= 13);
}

TEST_CASE("empty calibration split cannot be evaluated") {
  const auto d = make_task_datasets(blob_task(2, 10, 0, 10));
  CHECK(d.calib.size() == 0);
  CHECK_THROWS_AS(make_calibration_task("blobs", d.calib, 1, 0), ConfigError);
}

TEST_CASE("unknown generator name is a configuration error") {
  CHECK_THROWS_AS(parse_generator("spirals"), ConfigError);
  CHECK(parse_generator("xor-bands") == Generator::kXorBands);
}

TEST_CASE("forward output shape and zero-model logits") {
  const LayeredModel m = zero_model(3, 5, 4, 2);
  Matrix batch = Matrix::Random(7, 3);
  const Matrix logits = forward(m, batch);
  CHECK(logits.rows() == 7);
  CHECK(logits.cols() == 2);
  CHECK(logits.isZero(0.0));
  CHECK_THROWS_AS(forward(m, Matrix::Zero(2, 4)), ConfigError);
}

TEST_CASE("an all-zero block is the identity, so removing it leaves logits unchanged") {
  LayeredModel m = init_model(ModelShape{4, 6, 3, 3}, 17);
  Matrix batch = Matrix::Random(5, 4);
  LayeredModel with_zero = m;
  with_zero.blocks.insert(with_zero.blocks.begin() + 1, ResidualBlock::zeros(6));
  const Matrix a = forward(m, batch);
  const Matrix b = forward(with_zero, batch);
  CHECK(std::equal(a.data(), a.data() + a.size(), b.data()));
}

TEST_CASE("hand-set one-layer model matches the hand computation") {
  LayeredModel m = zero_model(2, 2, 1, 2);
  auto& blk = m.blocks[0];
  blk.W1 << 1, 0, 0, -1;
  blk.b1 << 0, 0.5;
  blk.W2 << 2, 0, 0, 1;
  blk.b2 << 0.1, 0;
  m.head.W << 1, 1, 1, -1;
  m.head.b << 0, 0.2;
  Matrix batch(2, 2);
  batch << 1, 2, -1, 0.5;
  // x=(1,2): z=(1,-1.5), relu=(1,0), branch=(2.1,0), h=(3.1,2), logits=(5.1,1.3).
  // x=(-1,0.5): z=(-1,0), relu=(0,0), branch=(0.1,0), h=(-0.9,0.5), logits=(-0.4,-1.2).
  const Matrix logits = forward(m, batch);
  CHECK(logits(0, 0) == doctest::Approx(5.1).epsilon(1e-14));
  CHECK(logits(0, 1) == doctest::Approx(1.3).epsilon(1e-14));
  CHECK(logits(1, 0) == doctest::Approx(-0.4).epsilon(1e-14));
  CHECK(logits(1, 1) == doctest::Approx(-1.2).epsilon(1e-14));
}

TEST_CASE("block scale multiplies only the residual branch") {
  LayeredModel m = init_model(ModelShape{3, 4, 1, 2}, 4);
  Matrix x = Matrix::Random(3, 3);
  LayeredModel half = m;
  half.blocks[0].scale = 0.5;
  LayeredModel none = m;
  none.blocks[0].scale = 0.0;
  const Matrix full = forward(m, x), mid = forward(half, x), skip = forward(none, x);
  // Logits are affine in the scale, so the midpoint is the average.
  CHECK(((full + skip) / 2.0 - mid).cwiseAbs().maxCoeff() < 1e-12);
  LayeredModel identity = m;
  identity.blocks.clear();
  const Matrix id = forward(identity, x);
  CHECK((id - skip).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("training reduces the training error") {
  const auto cfg = default_zoo_config();
  ModelShape shape = cfg.shape;
  const LayeredModel init = init_model(shape, 1);
  TrainHyper hyper;
  hyper.steps = 200;
  const LayeredModel trained = train_base(cfg.tasks, shape, hyper, 1);
  double before = 0.0, after = 0.0;
  for (const auto& t : cfg.tasks) {
    const auto d = make_task_datasets(t);
    before += error_rate(init, d.train);
    after += error_rate(trained, d.train);
  }
  CHECK(after < before);
}

TEST_CASE("zero training steps return the seeded initialization") {
  const auto cfg = default_zoo_config();
  TrainHyper none;
  none.steps = 0;
  const LayeredModel base = train_base(cfg.tasks, cfg.shape, none, 5);
  LayeredModel init = init_model(cfg.shape, 5);
  init.label = base.label;
  CHECK(parameters_equal(base, init));
  const LayeredModel variant = finetune_variant(base, cfg.tasks[0], none, 9);
  CHECK(parameters_equal(variant, base));
  CHECK(variant.label == "variant-" + cfg.tasks[0].task_id);
}

TEST_CASE("mismatched tasks are rejected") {
  auto cfg = default_zoo_config();
  cfg.tasks[1].num_classes = 3;
  CHECK_THROWS_AS(train_base(cfg.tasks, cfg.shape, TrainHyper{}, 1), ConfigError);
  const LayeredModel base = init_model(cfg.shape, 1);
  CHECK_THROWS_AS(finetune_variant(base, cfg.tasks[1], TrainHyper{}, 1), ConfigError);
}

TEST_CASE("single linearly separable blob task is learned") {
  TaskSpec t = blob_task(31, 1000, 200, 500);
  t.num_classes = 2;
  const LayeredModel m = train_base({t}, ModelShape{8, 16, 2, 2}, TrainHyper{500, 0.05, 16}, 2);
  // Class centres are drawn 1.5 sigma apart per coordinate in 8 dims.
  CHECK(error_rate(m, make_task_datasets(t).test) <= 0.05);
}

TEST_CASE("variants specialize and differ from each other") {
  const Family& fam = fixtures::default_family();
  REQUIRE(fam.variants.size() == 3);
  for (std::size_t t = 0; t < fam.tasks.size(); ++t) {
    const auto calib = make_task_datasets(fam.tasks[t]).calib;
    CHECK(error_rate(fam.variants[t], calib) <= error_rate(fam.base, calib));
    CHECK(fam.variants[t].shape() == fam.base.shape());
  }
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = a + 1; b < 3; ++b) CHECK(parameter_distance(fam.variants[a], fam.variants[b]) > 0.0);
}

TEST_CASE("grad_check on a tiny model") {
  const LayeredModel m = init_model(ModelShape{4, 6, 2, 3}, 12);
  TaskSpec t = blob_task(4, 8, 8, 8);
  t.num_classes = 3;
  t.input_dim = 4;
  const auto d = make_task_datasets(t);
  const auto r = grad_check(m, d.train, 1e-4, 64, 1);
  CHECK(r.checked > 32);
  CHECK(r.max_relative_error < 1e-4);
  CHECK_FALSE(r.saturated);
}

TEST_CASE("grad_check on a saturated model is flagged and still accurate") {
  LayeredModel m = init_model(ModelShape{2, 4, 1, 2}, 3);
  for (auto& b : m.blocks) {
    b.W1.setZero();
    b.W2.setZero();
  }
  m.head.W.setZero();
  m.head.W(0, 0) = 8.0;
  m.head.W(1, 0) = -8.0;
  LabeledDataset d;
  d.inputs = Matrix(4, 2);
  d.inputs << 3, 0, 2.5, 1, -3, 0, -2, -1;
  d.labels = {0, 0, 1, 1};
  const auto r = grad_check(m, d, 1e-4, 64, 2);
  CHECK(r.saturated);
  CHECK(r.checked > 0);
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("grad_check on a constant-input dataset") {
  const LayeredModel m = init_model(ModelShape{3, 5, 2, 2}, 6);
  LabeledDataset d;
  d.inputs = Matrix::Constant(6, 3, 0.7);
  d.labels = {0, 1, 0, 1, 1, 0};
  ModelGradient g;
  loss_and_gradient(m, d.inputs, d.labels, g);
  // Every input column is equal, so each W1 row's gradient entries over the
  // input columns are tied.
  for (Eigen::Index r = 0; r < g.blocks[0].W1.rows(); ++r)
    for (Eigen::Index c = 1; c < 3; ++c) CHECK(g.blocks[0].W1(r, c) == doctest::Approx(g.blocks[0].W1(r, 0)));
  const auto res = grad_check(m, d, 1e-4, 64, 3);
  CHECK(res.max_relative_error < 1e-3);
}

TEST_CASE("grad_check rejects an out-of-range epsilon") {
  const LayeredModel m = init_model(ModelShape{2, 2, 1, 2}, 1);
  LabeledDataset d;
  d.inputs = Matrix::Zero(1, 2);
  d.labels = {0};
  CHECK_THROWS_AS(grad_check(m, d, 0.1), ConfigError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = fixtures::scratch_dir("zoo_ckpt");
  LayeredModel m = init_model(ModelShape{5, 7, 3, 3}, 99);
  m.label = "variant-x";
  m.blocks[1].scale = 0.7;
  m.blocks[2].b2(3) = 1.0 / 3.0;
  save_checkpoint(m, dir / "m.json");
  const LayeredModel back = load_checkpoint(dir / "m.json");
  CHECK(parameters_equal(m, back));
  CHECK(back.label == "variant-x");
  save_checkpoint(back, dir / "m2.json");
  CHECK(fixtures::read_file(dir / "m.json") == fixtures::read_file(dir / "m2.json"));
}

TEST_CASE("checkpoint layer count disagreeing with its blocks is an integrity error") {
  const auto dir = fixtures::scratch_dir("zoo_integrity");
  LayeredModel m = init_model(ModelShape{2, 3, 8, 2}, 1);
  save_checkpoint(m, dir / "m.json");
  auto doc = nlohmann::json::parse(fixtures::read_file(dir / "m.json"));
  doc["blocks"].erase(doc["blocks"].size() - 1);
  std::ofstream(dir / "bad.json") << doc.dump();
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), IntegrityError);
}

TEST_CASE("malformed checkpoint names the offending field") {
  const auto dir = fixtures::scratch_dir("zoo_malformed");
  LayeredModel m = init_model(ModelShape{2, 3, 4, 2}, 1);
  save_checkpoint(m, dir / "m.json");
  auto doc = nlohmann::json::parse(fixtures::read_file(dir / "m.json"));
  doc["blocks"][3]["W1"] = "oops";
  std::ofstream(dir / "bad.json") << doc.dump();
  try {
    load_checkpoint(dir / "bad.json");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("blocks[3].W1") != std::string::npos);
  }
  std::ofstream(dir / "junk.json") << "{not json";
  CHECK_THROWS_AS(load_checkpoint(dir / "junk.json"), ParseError);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.json"), IoError);
}
