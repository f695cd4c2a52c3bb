#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "oddvox/tensor.hpp"

namespace oddvox::testutil {

inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  int checked = 0;
  std::string worst;
};

// Central-difference check of node-resident gradients against a forward
// closure. `forward` must rebuild the graph from the current leaf values
// and return the scalar loss. With max_per_tensor == 0 every component is
// checked, otherwise an evenly strided subsample per tensor.
inline GradCheckResult check_gradients(const std::function<diffcore::Tensor<double>()>& forward,
                                       std::vector<diffcore::Tensor<double>> leaves,
                                       int max_per_tensor = 0, double h = 1e-5) {
  using diffcore::NoGradGuard;
  for (auto& leaf : leaves) {
    leaf.zero_grad();
  }
  auto loss = forward();
  loss.backward();

  GradCheckResult res;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = leaves[li];
    const std::vector<double> analytic = leaf.grad();
    auto& vals = leaf.mutable_values();
    const std::int64_t n = static_cast<std::int64_t>(vals.size());
    std::int64_t stride = 1;
    if (max_per_tensor > 0 && n > max_per_tensor) stride = (n + max_per_tensor - 1) / max_per_tensor;
    for (std::int64_t j = 0; j < n; j += stride) {
      const double keep = vals[static_cast<std::size_t>(j)];
      double fp, fm;
      {
        NoGradGuard ng;
        vals[static_cast<std::size_t>(j)] = keep + h;
        fp = forward().item();
        vals[static_cast<std::size_t>(j)] = keep - h;
        fm = forward().item();
        vals[static_cast<std::size_t>(j)] = keep;
      }
      const double fd = (fp - fm) / (2.0 * h);
      const double re = rel_err(analytic[static_cast<std::size_t>(j)], fd);
      ++res.checked;
      if (re > res.max_rel_err) {
        res.max_rel_err = re;
        res.worst = "leaf " + std::to_string(li) + " comp " + std::to_string(j) + ": analytic " +
                    std::to_string(analytic[static_cast<std::size_t>(j)]) + " fd " + std::to_string(fd);
      }
    }
  }
  return res;
}

// Scratch directory removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("oddvox_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace oddvox::testutil
