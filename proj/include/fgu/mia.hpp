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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fgu/common.hpp"
#include "fgu/gcn.hpp"
#include "fgu/graph.hpp"
#include "fgu/unlearn.hpp"

namespace fgu {

// A shadow model and which nodes' labels it was trained on.
struct Shadow {
  ShardModel model;
  std::vector<std::uint8_t> member;
};

// Each shadow trains on a seeded random half of the nodes (labels of all
// nodes are assumed known to the attacker); the other half are its
// non-members. Shadow i uses its own derived seed.
inline std::uint64_t shadow_seed(std::uint64_t seed, std::size_t index) { return derive_seed(seed, 1000 + index); }

// Sorted member half of shadow `index`'s split over n nodes.
inline NodeMask shadow_members(std::size_t n, std::uint64_t seed, std::size_t index) {
  NodeMask all(n);
  for (NodeId v = 0; v < n; ++v) all[v] = v;
  Rng rng(shadow_seed(seed, index));
  NodeMask members = sample_without_replacement(std::move(all), n / 2, rng);
  std::sort(members.begin(), members.end());
  return members;
}

inline std::vector<Shadow> train_shadows(const Graph& g, const TrainConfig& cfg, std::size_t num_shadows) {
  if (num_shadows < 2) throw ValidationError("at least 2 shadow models are required");
  if (g.num_nodes() < 4) throw ValidationError("graph too small for a member / non-member split");
  const GcnInput in = make_input(g);
  std::vector<Shadow> shadows;
  for (std::size_t i = 0; i < num_shadows; ++i) {
    TrainConfig shadow_cfg = cfg;
    shadow_cfg.seed = shadow_seed(cfg.seed, i);
    const NodeMask members = shadow_members(g.num_nodes(), cfg.seed, i);
    Shadow s;
    s.member.assign(g.num_nodes(), 0);
    for (NodeId v : members) s.member[v] = 1;
    s.model = train_gcn(in, g, members, shadow_cfg);
    shadows.push_back(std::move(s));
  }
  return shadows;
}

inline constexpr std::size_t kAttackFeatures = 3;
using AttackFeatures = std::array<double, kAttackFeatures>;

// (posterior, binary entropy of the posterior, cross-entropy against the label)
inline AttackFeatures attack_features(double prob, std::uint8_t label) {
  const double p = std::clamp(prob, kProbFloor, 1.0 - kProbFloor);
  const double entropy = -p * std::log(p) - (1.0 - p) * std::log1p(-p);
  const double loss = label ? -std::log(p) : -std::log1p(-p);
  return {p, entropy, loss};
}

struct AttackRow {
  AttackFeatures features{};
  std::uint8_t member = 0;
};

struct AttackDataset {
  std::vector<AttackRow> rows;

  std::size_t count(std::uint8_t member) const {
    return static_cast<std::size_t>(
        std::count_if(rows.begin(), rows.end(), [&](const AttackRow& r) { return r.member == member; }));
  }
};

// One row per (shadow, node); the majority class is downsampled so member
// and non-member counts match.
inline AttackDataset build_attack_dataset(std::span<const Shadow> shadows, const Graph& g, std::uint64_t seed) {
  const GcnInput in = make_input(g);
  std::array<std::vector<AttackRow>, 2> by_class;
  for (const auto& s : shadows) {
    const Eigen::VectorXd probs = forward(s.model, in).probs;
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      by_class[s.member[v]].push_back({attack_features(probs(v), g.labels()[v]), s.member[v]});
    }
  }
  const std::size_t n = std::min(by_class[0].size(), by_class[1].size());
  Rng rng(derive_seed(seed, 51));
  AttackDataset ds;
  for (auto& rows : by_class) {
    for (auto& r : sample_without_replacement(rows, n, rng)) ds.rows.push_back(r);
  }
  return ds;
}

// Logistic regression over standardized attack features.
struct AttackModel {
  AttackFeatures weights{};
  double bias = 0.0;
  AttackFeatures mean{};
  AttackFeatures scale{1.0, 1.0, 1.0};

  double score(const AttackFeatures& x) const {
    double z = bias;
    for (std::size_t j = 0; j < kAttackFeatures; ++j) z += weights[j] * (x[j] - mean[j]) / scale[j];
    return sigmoid(z);
  }
  bool predicts_member(const AttackFeatures& x) const { return score(x) >= 0.5; }
};

struct AttackFitConfig {
  std::size_t steps = 500;
  double learning_rate = 0.5;
  std::uint64_t seed = 0;
};

// Full-batch gradient descent on the mean logistic loss from a small seeded
// initialization.
inline AttackModel fit_attack(const AttackDataset& ds, const AttackFitConfig& cfg = {}) {
  if (ds.count(0) == 0 || ds.count(1) == 0) throw ValidationError("attack dataset needs both classes");
  AttackModel m;
  const auto n = static_cast<double>(ds.rows.size());
  for (std::size_t j = 0; j < kAttackFeatures; ++j) {
    double mu = 0.0, sq = 0.0;
    for (const auto& r : ds.rows) mu += r.features[j];
    mu /= n;
    for (const auto& r : ds.rows) sq += (r.features[j] - mu) * (r.features[j] - mu);
    m.mean[j] = mu;
    const double sd = std::sqrt(sq / n);
    m.scale[j] = sd > 1e-12 ? sd : 1.0;
  }
  Rng rng(derive_seed(cfg.seed, 61));
  for (auto& w : m.weights) w = 0.02 * uniform01(rng) - 0.01;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    AttackFeatures gw{};
    double gb = 0.0;
    for (const auto& r : ds.rows) {
      const double err = m.score(r.features) - r.member;
      for (std::size_t j = 0; j < kAttackFeatures; ++j) gw[j] += err * (r.features[j] - m.mean[j]) / m.scale[j];
      gb += err;
    }
    for (std::size_t j = 0; j < kAttackFeatures; ++j) m.weights[j] -= cfg.learning_rate * gw[j] / n;
    m.bias -= cfg.learning_rate * gb / n;
  }
  return m;
}

inline double attack_accuracy(const AttackModel& m, const AttackDataset& ds) {
  std::size_t correct = 0;
  for (const auto& r : ds.rows) correct += m.predicts_member(r.features) == static_cast<bool>(r.member);
  return static_cast<double>(correct) / static_cast<double>(ds.rows.size());
}

// Attack accuracy on a balanced probe: the larger probe set is downsampled
// (seeded) to the size of the smaller one. `probs` are the target model's
// posteriors over every node of `g`.
inline double run_attack(const AttackModel& attack, const Eigen::VectorXd& probs, const Graph& g,
                         std::span<const NodeId> probe_members, std::span<const NodeId> probe_nonmembers,
                         std::uint64_t seed = 0) {
  if (probe_members.empty() || probe_nonmembers.empty()) throw ValidationError("probe sets must be non-empty");
  std::vector<std::uint8_t> in_members(g.num_nodes(), 0);
  for (NodeId v : probe_members) in_members[v] = 1;
  for (NodeId v : probe_nonmembers) {
    if (in_members[v]) throw ValidationError("node " + std::to_string(v) + " is in both probe sets");
  }
  const std::size_t n = std::min(probe_members.size(), probe_nonmembers.size());
  Rng rng(derive_seed(seed, 71));
  std::size_t correct = 0;
  auto score = [&](std::span<const NodeId> set, bool member) {
    for (NodeId v : sample_without_replacement(std::vector<NodeId>(set.begin(), set.end()), n, rng)) {
      correct += attack.predicts_member(attack_features(probs(v), g.labels()[v])) == member;
    }
  };
  score(probe_members, true);
  score(probe_nonmembers, false);
  return static_cast<double>(correct) / static_cast<double>(2 * n);
}

// Deleted nodes as members, a seeded sample of never-trained (test) nodes
// as non-members.
struct AuditProbe {
  NodeMask members;
  NodeMask nonmembers;
};

inline AuditProbe deletion_probe(const Graph& g, const UnlearnRequest& req, std::uint64_t seed) {
  AuditProbe p;
  p.members = req.nodes;
  NodeMask never_trained = g.mask(Split::kTest);
  Rng rng(derive_seed(seed, 81));
  p.nonmembers = sample_without_replacement(never_trained, std::min(never_trained.size(), p.members.size()), rng);
  std::sort(p.nonmembers.begin(), p.nonmembers.end());
  return p;
}

}  // namespace fgu
