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

#include <array>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgu/common.hpp"
#include "fgu/fairness.hpp"
#include "fgu/gcn.hpp"
#include "fgu/graph.hpp"
#include "fgu/partition.hpp"
#include "fgu/request.hpp"
#include "fgu/trainer.hpp"

namespace fgu {

// Sensitive value of the group with the higher positive rate among training
// nodes; ties go to S = 1.
inline std::uint8_t privileged_group(const Graph& g) {
  std::array<double, 2> pos{0, 0}, cnt{0, 0};
  for (NodeId v : g.mask(Split::kTrain)) {
    pos[g.sensitive()[v]] += g.labels()[v];
    cnt[g.sensitive()[v]] += 1;
  }
  const double r0 = cnt[0] > 0 ? pos[0] / cnt[0] : 0.0;
  const double r1 = cnt[1] > 0 ? pos[1] / cnt[1] : 0.0;
  return r0 > r1 ? 0 : 1;
}

// Samples ⌊r_e·|E_pool|⌋ edges, then ⌊r_n·N⌋ training nodes. Uniform draws
// from the whole graph; the group strategies restrict nodes to the chosen
// sensitive group and edges to those touching it. Edges are drawn from the
// original edge set, so some may also vanish with a deleted endpoint.
inline UnlearnRequest sample_request(const Graph& g, const DeletionSpec& spec) {
  if (!(spec.node_ratio >= 0.0 && spec.node_ratio < 1.0) || !(spec.edge_ratio >= 0.0 && spec.edge_ratio < 1.0)) {
    throw ValidationError("deletion ratios must lie in [0, 1)");
  }
  if (spec.strategy == DeletionStrategy::kExplicit) {
    throw ValidationError("explicit requests are read from a file, not sampled");
  }
  const bool uniform = spec.strategy == DeletionStrategy::kUniform;
  std::uint8_t group = 0;
  if (!uniform) {
    const std::uint8_t priv = privileged_group(g);
    group = spec.strategy == DeletionStrategy::kPrivileged ? priv : static_cast<std::uint8_t>(1 - priv);
  }

  std::vector<Edge> edge_pool;
  for (const Edge& e : g.edges()) {
    if (uniform || g.sensitive()[e.u] == group || g.sensitive()[e.v] == group) edge_pool.push_back(e);
  }
  std::vector<NodeId> node_pool;
  std::array<std::size_t, 2> train_per_group{0, 0};
  for (NodeId v : g.mask(Split::kTrain)) {
    ++train_per_group[g.sensitive()[v]];
    if (uniform || g.sensitive()[v] == group) node_pool.push_back(v);
  }

  const auto node_count = static_cast<std::size_t>(std::floor(spec.node_ratio * static_cast<double>(g.num_nodes())));
  const auto edge_count =
      static_cast<std::size_t>(std::floor(spec.edge_ratio * static_cast<double>(edge_pool.size())));
  if (node_count > node_pool.size()) {
    throw ValidationError("infeasible node ratio: " + std::to_string(node_count) + " deletions requested but only " +
                          std::to_string(node_pool.size()) + " eligible training nodes");
  }

  UnlearnRequest req;
  req.provenance = spec.strategy;
  Rng edge_rng(derive_seed(spec.seed, 41));
  req.edges = sample_without_replacement(edge_pool, edge_count, edge_rng);
  Rng node_rng(derive_seed(spec.seed, 42));
  req.nodes = sample_without_replacement(node_pool, node_count, node_rng);
  req.normalize();

  std::array<std::size_t, 2> removed{0, 0};
  for (NodeId v : req.nodes) ++removed[g.sensitive()[v]];
  for (int s = 0; s < 2; ++s) {
    if (train_per_group[s] < removed[s] + 2) {
      throw ValidationError("infeasible node ratio: sensitive group " + std::to_string(s) +
                            " must keep at least 2 training nodes");
    }
  }
  return req;
}

// Requests on disk name nodes by the graph's external ids.
inline UnlearnRequest to_external_ids(const UnlearnRequest& req, const Graph& g) {
  UnlearnRequest out = req;
  auto map = [&](NodeId v) { return static_cast<NodeId>(g.ids().at(v)); };
  for (auto& v : out.nodes) v = map(v);
  for (auto& v : out.feature_nodes) v = map(v);
  for (auto& e : out.edges) e = canonical_edge(map(e.u), map(e.v));
  out.normalize();
  return out;
}

inline UnlearnRequest to_internal_ids(const UnlearnRequest& req, const Graph& g) {
  std::unordered_map<std::uint64_t, NodeId> index;
  for (NodeId v = 0; v < g.num_nodes(); ++v) index.emplace(g.ids()[v], v);
  auto map = [&](NodeId id) {
    const auto it = index.find(id);
    if (it == index.end()) throw ValidationError("request names unknown node id " + std::to_string(id));
    return it->second;
  };
  UnlearnRequest out = req;
  for (auto& v : out.nodes) v = map(v);
  for (auto& v : out.feature_nodes) v = map(v);
  for (auto& e : out.edges) e = canonical_edge(map(e.u), map(e.v));
  out.normalize();
  return out;
}

// A request carried through a partition: the post-deletion parent graph and
// the replacement shard graphs.
struct PartitionedDeletion {
  Graph g_prime;
  std::vector<NodeId> old_to_new;
  std::vector<Graph> updated_shards;
  std::set<std::size_t> dirty;
  std::vector<Edge> cross_shard_edges;  // honored logically, no shard change
};

inline PartitionedDeletion apply_to_partition(const Graph& g, const Partition& p, const UnlearnRequest& req) {
  PartitionedDeletion out;
  auto parent = apply_deletion(g, req);
  out.g_prime = std::move(parent.graph);
  out.old_to_new = std::move(parent.old_to_new);
  const RoutedRequest routed = route_request(p, req);
  out.cross_shard_edges = routed.cross_shard_edges;
  for (std::size_t k = 0; k < p.k; ++k) {
    if (routed.per_shard[k].empty()) {
      out.updated_shards.push_back(p.shards[k].graph);
    } else {
      out.updated_shards.push_back(apply_deletion(p.shards[k].graph, routed.per_shard[k]).graph);
      out.dirty.insert(k);
    }
  }
  return out;
}

// Full-batch GCN training on U + alpha * soft gap over `mask`.
inline ShardModel train_gcn(const GcnInput& in, const Graph& g, std::span<const NodeId> mask, const TrainConfig& cfg,
                            double alpha = 0.0) {
  ShardModel m = init_model(g.feature_dim(), cfg.hidden_dim, cfg.seed);
  OptimizerState opt = OptimizerState::for_model(m, cfg.adam);
  for (std::size_t t = 0; t < cfg.epochs; ++t) {
    const Predictions pred = forward(m, in);
    LossAndGrad loss = utility_loss_with_grad(pred.probs, g.labels(), mask);
    if (alpha != 0.0) loss.grad += alpha * soft_group_gap(pred.probs, g.sensitive(), mask).grad;
    adam_step(m, opt, backward(m, pred, in, loss.grad));
  }
  return m;
}

// Hard-label report on the graph's test nodes.
inline FairnessReport evaluate_on_test(const Eigen::VectorXd& probs, const Graph& g) {
  const auto predicted = predict_labels(probs);
  return evaluate(predicted, g.labels(), g.sensitive(), g.mask(Split::kTest));
}

struct BaselineResult {
  ShardModel model;
  FairnessReport report;
};

// Fairness-regularized retraining from scratch: one GCN on g_prime's
// training nodes with loss U + alpha * soft group gap.
inline BaselineResult fair_retrain_baseline(const Graph& g_prime, const TrainConfig& cfg, double alpha) {
  const GcnInput in = make_input(g_prime);
  const NodeMask mask = g_prime.mask(Split::kTrain);
  BaselineResult out;
  out.model = train_gcn(in, g_prime, mask, cfg, alpha);
  out.report = evaluate_on_test(forward(out.model, in).probs, g_prime);
  return out;
}

// Retraining from scratch without sharding or fairness terms.
inline BaselineResult retrain_baseline(const Graph& g_prime, const TrainConfig& cfg) {
  return fair_retrain_baseline(g_prime, cfg, 0.0);
}

}  // namespace fgu
