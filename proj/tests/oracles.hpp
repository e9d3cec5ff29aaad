// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used as test oracles.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace mask3d::test {

/// Direct transcription of the loss definition: two passes per row for the
/// statistics, then the squared difference of the standardized rows.
inline double naive_patch_loss(const std::vector<double>& pred, const std::vector<double>& target,
                                const std::vector<std::uint8_t>& valid, std::size_t rows, std::size_t len, double eps) {
  double total = 0;
  std::size_t scored = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<double> p, t;
    for (std::size_t j = 0; j < len; ++j)
      if (valid.empty() || valid[r * len + j]) {
        p.push_back(pred[r * len + j]);
        t.push_back(target[r * len + j]);
      }
    if (p.empty() || p.size() * 4 < len) continue;
    auto standardize = [eps](std::vector<double> v) {
      double mu = 0;
      for (double x : v) mu += x;
      mu /= v.size();
      double var = 0;
      for (double x : v) var += (x - mu) * (x - mu);
      var /= v.size();
      for (double& x : v) x = (x - mu) / std::sqrt(var + eps);
      return v;
    };
    const auto ps = standardize(p), ts = standardize(t);
    double s = 0;
    for (std::size_t j = 0; j < ps.size(); ++j) s += (ps[j] - ts[j]) * (ps[j] - ts[j]);
    total += s / ps.size();
    ++scored;
  }
  return total / scored;
}

}  // namespace mask3d::test
