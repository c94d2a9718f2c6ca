#pragma once

// Small families and spaces shared by the test binaries.

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "layerstitch/app.hpp"
#include "layerstitch/space.hpp"
#include "layerstitch/zoo.hpp"

namespace fixtures {

namespace ls = layerstitch;

// Three layers, two task variants: the family behind the 108-config space.
inline ls::ZooConfig toy_zoo_config() {
  ls::ZooConfig cfg;
  cfg.seed = 3;
  cfg.shape = ls::ModelShape{8, 16, 3, 4};
  ls::TaskSpec a;
  a.task_id = "blobs";
  a.generator = ls::Generator::kGaussianBlobs;
  a.seed = 21;
  a.train_size = 1000;
  a.calib_size = 1000;
  a.test_size = 500;
  ls::TaskSpec b = a;
  b.task_id = "modsum";
  b.generator = ls::Generator::kModularSum;
  b.seed = 22;
  cfg.tasks = {a, b};
  cfg.base = ls::TrainHyper{800, 0.05, 16};
  cfg.finetune = ls::TrainHyper{300, 0.05, 16};
  return cfg;
}

inline const ls::Family& toy_family() {
  static const ls::Family family = ls::build_family(toy_zoo_config());
  return family;
}

inline const ls::Family& default_family() {
  static const ls::Family family = ls::build_family(ls::default_zoo_config());
  return family;
}

// l=3, K=2, remove 1, merge grid {0.5, 0.75, 1.0}, scale grid {1.0}: 108 configs.
inline ls::SpaceSpec space_108() {
  ls::SpaceSpec spec = ls::make_space_spec(3, 2, ls::Rational{1, 3});
  spec.merge_factor_grid = {0.5, 0.75, 1.0};
  spec.output_scale_grid = {1.0};
  return spec;
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("layerstitch_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace fixtures
