// Copyright 2026 The FGU Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "fgu/common.hpp"

namespace fgu {

// |P(Ŷ=1|S=0) - P(Ŷ=1|S=1)| over `mask`; nullopt when a group is empty.
inline std::optional<double> delta_dp(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> sensitive,
                                      std::span<const NodeId> mask) {
  std::array<double, 2> positives{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  for (NodeId v : mask) {
    positives[sensitive[v]] += predicted[v];
    ++count[sensitive[v]];
  }
  if (count[0] == 0 || count[1] == 0) return std::nullopt;
  return std::abs(positives[0] / static_cast<double>(count[0]) - positives[1] / static_cast<double>(count[1]));
}

// |P(Ŷ=1|S=0,Y=1) - P(Ŷ=1|S=1,Y=1)| over `mask`; nullopt when a positive
// cell is empty.
inline std::optional<double> delta_eo(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                                      std::span<const std::uint8_t> sensitive, std::span<const NodeId> mask) {
  std::array<double, 2> hits{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  for (NodeId v : mask) {
    if (!truth[v]) continue;
    hits[sensitive[v]] += predicted[v];
    ++count[sensitive[v]];
  }
  if (count[0] == 0 || count[1] == 0) return std::nullopt;
  return std::abs(hits[0] / static_cast<double>(count[0]) - hits[1] / static_cast<double>(count[1]));
}

struct GapAndGrad {
  double value = 0.0;
  Eigen::VectorXd grad;  // d value / d prob_i; zero off-mask
};

// Differentiable demographic-parity surrogate on soft probabilities:
// |mean(p | S=0) - mean(p | S=1)| over `mask`. Degenerate masks (a group
// missing) give value 0 and a zero gradient, as does a gap of exactly 0.
inline GapAndGrad soft_group_gap(const Eigen::VectorXd& probs, std::span<const std::uint8_t> sensitive,
                                 std::span<const NodeId> mask) {
  GapAndGrad out;
  out.grad = Eigen::VectorXd::Zero(probs.size());
  std::array<double, 2> sum{0.0, 0.0};
  std::array<std::size_t, 2> count{0, 0};
  for (NodeId v : mask) {
    sum[sensitive[v]] += probs(v);
    ++count[sensitive[v]];
  }
  if (count[0] == 0 || count[1] == 0) return out;
  const double gap = sum[0] / static_cast<double>(count[0]) - sum[1] / static_cast<double>(count[1]);
  out.value = std::abs(gap);
  const double sign = gap > 0.0 ? 1.0 : (gap < 0.0 ? -1.0 : 0.0);
  if (sign == 0.0) return out;
  const std::array<double, 2> slope{sign / static_cast<double>(count[0]), -sign / static_cast<double>(count[1])};
  for (NodeId v : mask) out.grad(v) = slope[sensitive[v]];
  return out;
}

struct AccuracyF1 {
  double accuracy = 0.0;
  double f1 = 0.0;
};

inline AccuracyF1 accuracy_f1(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                              std::span<const NodeId> mask) {
  if (mask.empty()) throw ValidationError("accuracy over an empty node mask");
  std::size_t correct = 0, tp = 0, fp = 0, fn = 0;
  for (NodeId v : mask) {
    correct += predicted[v] == truth[v];
    tp += predicted[v] && truth[v];
    fp += predicted[v] && !truth[v];
    fn += !predicted[v] && truth[v];
  }
  AccuracyF1 out;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(mask.size());
  // F1 = 2TP / (2TP + FP + FN), defined as 0 when precision + recall = 0.
  out.f1 = tp == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
  return out;
}

struct FairnessReport {
  double accuracy = 0.0;
  double f1 = 0.0;
  double delta_dp = 0.0;
  double delta_eo = 0.0;
  // group_sizes[s][y]: evaluated nodes with S = s and Y = y.
  std::array<std::array<std::size_t, 2>, 2> group_sizes{};
};

// Hard-label evaluation. Throws when a sensitive group (or a positive cell,
// for ΔEO) is absent from the mask.
inline FairnessReport evaluate(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                               std::span<const std::uint8_t> sensitive, std::span<const NodeId> mask) {
  FairnessReport r;
  const auto af = accuracy_f1(predicted, truth, mask);
  r.accuracy = af.accuracy;
  r.f1 = af.f1;
  const auto dp = delta_dp(predicted, sensitive, mask);
  if (!dp) throw ValidationError("ΔDP undefined: a sensitive group is empty in the evaluation mask");
  const auto eo = delta_eo(predicted, truth, sensitive, mask);
  if (!eo) throw ValidationError("ΔEO undefined: a sensitive group has no positives in the evaluation mask");
  r.delta_dp = *dp;
  r.delta_eo = *eo;
  for (NodeId v : mask) ++r.group_sizes[sensitive[v]][truth[v]];
  return r;
}

inline constexpr const char* kReportCsvHeader = "method,r_n,r_e,seed,accuracy,f1,delta_dp,delta_eo";

// One row in kReportCsvHeader order.
inline void write_report_row(std::ostream& out, const std::string& method, double r_n, double r_e,
                             std::uint64_t seed, const FairnessReport& r) {
  out << method << ',' << r_n << ',' << r_e << ',' << seed << ',' << r.accuracy << ',' << r.f1 << ','
      << r.delta_dp << ',' << r.delta_eo;
}

}  // namespace fgu
