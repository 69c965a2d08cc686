#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "motionid/nn/tensor.hpp"

namespace testing {

using Gen = std::mt19937_64;

inline double uni(Gen& g, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(g); }
inline int uni_int(Gen& g, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(g); }

template <typename T>
motionid::nn::Tensor<T> random_tensor(Gen& g, std::vector<int> shape, double lo = -1.0, double hi = 1.0) {
  motionid::nn::Tensor<T> t(std::move(shape));
  for (auto& v : t.vec()) v = static_cast<T>(uni(g, lo, hi));
  return t;
}

// Fresh empty directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("motionid_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testing
