// SPDX-License-Identifier: Apache-2.0
//
// Test-only helpers: central finite differences and small fixtures.
#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>
#include <vector>

#include "mask3d/rng.hpp"
#include "mask3d/tensor.hpp"

namespace mask3d::test {

struct GradReport {
  double max_rel = 0;
  std::string worst;
};

/// Relative error with a floor on the denominator so that exact zeros on
/// both sides pass.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares backward() against central differences for every element of
/// every input. `loss` must rebuild the graph from the given tensors.
inline GradReport gradcheck(std::vector<Tensor<double>> inputs,
                            const std::function<Tensor<double>(const std::vector<Tensor<double>>&)>& loss,
                            double h = 1e-5, double floor = 1e-6) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  backward(loss(inputs));
  GradReport report;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    const auto analytic = inputs[a].grad();
    auto values = inputs[a].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss(inputs).item();
      values[i] = saved - h;
      const double down = loss(inputs).item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      const double e = rel_err(analytic[i], numeric, floor);
      if (e > report.max_rel) {
        report.max_rel = e;
        report.worst = "input " + std::to_string(a) + "[" + std::to_string(i) + "] analytic " +
                       std::to_string(analytic[i]) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return report;
}

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1, double hi = 1) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = uniform(rng, lo, hi);
  return Tensor<double>::from(std::move(shape), std::move(v));
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("mask3d-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace mask3d::test
