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
#include <cstdint>
#include <deque>
#include <fstream>
#include <sstream>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fgu/common.hpp"
#include "fgu/graph.hpp"
#include "fgu/request.hpp"

namespace fgu {

// One shard: its induced subgraph and the parent index of each local node.
struct Shard {
  Graph graph;
  std::vector<NodeId> local_to_global;
};

// Induced shard subgraphs. Local ids follow increasing parent index; edges
// crossing shards are dropped.
inline std::vector<Shard> induce_shards(const Graph& g, std::span<const std::uint32_t> assignment,
                                        std::size_t k) {
  if (assignment.size() != g.num_nodes()) throw ValidationError("assignment does not cover every node");
  std::vector<Shard> shards(k);
  std::vector<NodeId> local(g.num_nodes());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (assignment[v] >= k) throw ValidationError("assignment names shard " + std::to_string(assignment[v]));
    local[v] = static_cast<NodeId>(shards[assignment[v]].local_to_global.size());
    shards[assignment[v]].local_to_global.push_back(v);
  }
  for (std::size_t s = 0; s < k; ++s) {
    const auto& members = shards[s].local_to_global;
    const auto m = static_cast<Eigen::Index>(members.size());
    Eigen::MatrixXd features(m, g.features().cols());
    std::vector<std::uint8_t> sensitive(members.size()), labels(members.size());
    std::vector<Split> split(members.size());
    std::vector<std::uint64_t> ids(members.size());
    std::vector<Edge> edges;
    for (NodeId i = 0; i < members.size(); ++i) {
      const NodeId v = members[i];
      features.row(i) = g.features().row(v);
      sensitive[i] = g.sensitive()[v];
      labels[i] = g.labels()[v];
      split[i] = g.split()[v];
      ids[i] = g.ids()[v];
      for (NodeId w : g.neighbors(v)) {
        if (v < w && assignment[w] == s) edges.push_back({i, local[w]});
      }
    }
    shards[s].graph = Graph(std::move(features), std::move(sensitive), std::move(labels), std::move(split),
                            edges, std::move(ids));
  }
  return shards;
}

struct Partition {
  std::size_t k = 0;
  std::vector<std::uint32_t> assignment;  // parent node -> shard
  std::vector<Shard> shards;

  std::vector<std::size_t> sizes() const {
    std::vector<std::size_t> out(k, 0);
    for (auto s : assignment) ++out[s];
    return out;
  }
};

// Balanced partition by constrained label propagation.
//
// Starts from a seeded random assignment with shard sizes differing by at
// most one. Each pass visits nodes in a fresh seeded order and proposes a
// move to the shard holding the plurality of its neighbors (ties to the
// lowest shard id; no move when the current shard is already maximal). A
// move is taken directly when it keeps every shard size within
// [floor(N/K), ceil(N/K)]; otherwise it waits in a queue and is executed as a
// swap with a node wanting the opposite move, provided the swap strictly
// shrinks the cut. The cut decreases with every change, so the procedure
// terminates; it stops early after a pass with no change.
//
// `on_pass` is invoked after every pass with the current assignment.
template <typename PassHook>
Partition balanced_partition(const Graph& g, std::size_t k, std::uint64_t seed, std::size_t max_iters,
                             PassHook&& on_pass) {
  const std::size_t n = g.num_nodes();
  if (k == 0 || k > n) {
    throw ValidationError("shard count " + std::to_string(k) + " must lie in 1.." + std::to_string(n));
  }
  Rng rng(derive_seed(seed, 11));
  std::vector<NodeId> order(n);
  for (NodeId v = 0; v < n; ++v) order[v] = v;
  shuffle(order, rng);

  Partition p;
  p.k = k;
  p.assignment.assign(n, 0);
  std::vector<std::size_t> size(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    p.assignment[order[i]] = static_cast<std::uint32_t>(i % k);
    ++size[i % k];
  }
  const std::size_t floor_size = n / k;
  const std::size_t ceil_size = (n + k - 1) / k;

  std::vector<std::size_t> counts(k, 0);
  auto count_neighbors = [&](NodeId v) {
    std::fill(counts.begin(), counts.end(), 0);
    for (NodeId w : g.neighbors(v)) ++counts[p.assignment[w]];
  };
  // Preferred destination of v, or its own shard when no strict gain exists.
  auto preferred = [&](NodeId v) -> std::uint32_t {
    count_neighbors(v);
    const std::uint32_t cur = p.assignment[v];
    std::uint32_t best = cur;
    for (std::uint32_t s = 0; s < k; ++s) {
      if (counts[s] > counts[best] || (counts[s] == counts[best] && s < best && counts[s] > counts[cur])) {
        best = s;
      }
    }
    return best;
  };
  auto gain = [&](NodeId v, std::uint32_t to) -> long long {
    count_neighbors(v);
    return static_cast<long long>(counts[to]) - static_cast<long long>(counts[p.assignment[v]]);
  };

  std::vector<std::deque<NodeId>> waiting(k * k);
  for (std::size_t pass = 0; pass < max_iters && k > 1; ++pass) {
    for (auto& q : waiting) q.clear();
    shuffle(order, rng);
    std::size_t changes = 0;
    for (NodeId v : order) {
      const std::uint32_t from = p.assignment[v];
      const std::uint32_t to = preferred(v);
      if (to == from) continue;
      if (size[from] > floor_size && size[to] < ceil_size) {
        p.assignment[v] = to;
        --size[from];
        ++size[to];
        ++changes;
        continue;
      }
      bool swapped = false;
      auto& partners = waiting[to * k + from];
      while (!partners.empty()) {
        const NodeId u = partners.front();
        partners.pop_front();
        if (p.assignment[u] != to) continue;
        const long long gain_u = gain(u, from);
        if (gain_u <= 0) continue;
        if (gain_u + gain(v, to) - (g.has_edge(u, v) ? 2 : 0) > 0) {
          p.assignment[u] = from;
          p.assignment[v] = to;
          changes += 2;
          swapped = true;
          break;
        }
      }
      if (!swapped) waiting[from * k + to].push_back(v);
    }
    on_pass(std::as_const(p.assignment));
    if (changes == 0) break;
  }
  p.shards = induce_shards(g, p.assignment, k);
  return p;
}

inline Partition balanced_partition(const Graph& g, std::size_t k, std::uint64_t seed,
                                    std::size_t max_iters = 30) {
  return balanced_partition(g, k, seed, max_iters, [](const std::vector<std::uint32_t>&) {});
}

// Shard-local view of a request against the parent graph.
struct RoutedRequest {
  std::vector<UnlearnRequest> per_shard;  // local ids
  std::vector<Edge> cross_shard_edges;    // parent ids; never materialized in a shard
};

inline RoutedRequest route_request(const Partition& p, const UnlearnRequest& req) {
  const std::size_t n = p.assignment.size();
  std::vector<NodeId> local(n);
  for (const auto& shard : p.shards) {
    for (NodeId i = 0; i < shard.local_to_global.size(); ++i) local[shard.local_to_global[i]] = i;
  }
  auto check = [&](NodeId v) {
    if (v >= n) throw ValidationError("request references unknown node " + std::to_string(v));
  };
  RoutedRequest out;
  out.per_shard.resize(p.k);
  for (auto& r : out.per_shard) r.provenance = req.provenance;
  for (NodeId v : req.nodes) {
    check(v);
    out.per_shard[p.assignment[v]].nodes.push_back(local[v]);
  }
  for (NodeId v : req.feature_nodes) {
    check(v);
    out.per_shard[p.assignment[v]].feature_nodes.push_back(local[v]);
  }
  for (const Edge& e : req.edges) {
    check(e.u);
    check(e.v);
    if (p.assignment[e.u] == p.assignment[e.v]) {
      out.per_shard[p.assignment[e.u]].edges.push_back(canonical_edge(local[e.u], local[e.v]));
    } else {
      out.cross_shard_edges.push_back(canonical_edge(e.u, e.v));
    }
  }
  for (auto& r : out.per_shard) r.normalize();
  return out;
}

// `node_id<TAB>shard_id` per line, node ids being the graph's external ids.
inline void save_assignment(const std::string& path, const Partition& p, const Graph& g) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  for (NodeId v = 0; v < p.assignment.size(); ++v) out << g.ids()[v] << '\t' << p.assignment[v] << '\n';
}

inline Partition load_assignment(const std::string& path, const Graph& g) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  Partition p;
  p.assignment.assign(g.num_nodes(), 0);
  std::vector<std::uint8_t> seen(g.num_nodes(), 0);
  std::unordered_map<std::uint64_t, NodeId> index;
  for (NodeId v = 0; v < g.num_nodes(); ++v) index.emplace(g.ids()[v], v);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream row(line);
    long long v = -1, s = -1;
    if (detail::trim(line).empty()) continue;
    if (!(row >> v >> s) || v < 0 || s < 0) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected node_id and shard_id");
    }
    const auto it = index.find(static_cast<std::uint64_t>(v));
    if (it == index.end()) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": unknown node " + std::to_string(v));
    }
    if (seen[it->second]) {
      throw ValidationError(path + ":" + std::to_string(lineno) + ": node " + std::to_string(v) + " listed twice");
    }
    p.assignment[it->second] = static_cast<std::uint32_t>(s);
    seen[it->second] = 1;
    p.k = std::max(p.k, static_cast<std::size_t>(s) + 1);
  }
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    if (!seen[v]) throw ValidationError(path + ": node " + std::to_string(g.ids()[v]) + " has no shard");
  }
  p.shards = induce_shards(g, p.assignment, p.k);
  return p;
}

}  // namespace fgu
