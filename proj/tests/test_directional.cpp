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

// Baseline behavior on N = 600 SBM draws at the default training settings.

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace fgu {
namespace {

constexpr std::uint64_t kSeeds = 10;

Graph draw(double correlation, std::uint64_t seed) {
  SbmSpec spec;
  spec.nodes_per_block = 300;
  spec.label_sensitive_correlation = correlation;
  spec.seed = seed;
  return generate_sbm(spec);
}

TrainConfig train_config(std::uint64_t seed) {
  TrainConfig cfg = FguConfig{}.train;
  cfg.seed = seed;
  return cfg;
}

TEST(RetrainBaseline, UnbiasedGraphHasSmallGap) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto r = retrain_baseline(draw(0.0, seed), train_config(seed));
    EXPECT_LE(r.report.delta_dp, 0.1) << "seed " << seed << ": ΔDP " << r.report.delta_dp;
  }
}

TEST(RetrainBaseline, BiasedGraphPropagatesBias) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const auto r = retrain_baseline(draw(0.6, seed), train_config(seed));
    EXPECT_GE(r.report.delta_dp, 0.2) << "seed " << seed;
  }
}

TEST(FairRetrainBaseline, LowersGapOnEachBiasedDraw) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const Graph g = draw(0.6, seed);
    const auto plain = retrain_baseline(g, train_config(seed));
    const auto fair = fair_retrain_baseline(g, train_config(seed), 3.0);
    EXPECT_LT(fair.report.delta_dp, plain.report.delta_dp) << "seed " << seed;
  }
}

TEST(FairRetrainBaseline, AccuracyWithinSixPointsOfRetrain) {
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const Graph g = draw(0.6, seed);
    const auto plain = retrain_baseline(g, train_config(seed));
    const auto fair = fair_retrain_baseline(g, train_config(seed), 3.0);
    EXPECT_GE(fair.report.accuracy, plain.report.accuracy - 0.06)
        << "seed " << seed << ": fair " << fair.report.accuracy << " vs retrain " << plain.report.accuracy;
  }
}

}  // namespace
}  // namespace fgu
