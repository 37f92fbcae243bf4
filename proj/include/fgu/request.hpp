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
#include <compare>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fgu/common.hpp"

namespace fgu {

// Undirected edge, canonical when u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  auto operator<=>(const Edge&) const = default;
};

inline Edge canonical_edge(NodeId a, NodeId b) { return a < b ? Edge{a, b} : Edge{b, a}; }

enum class DeletionStrategy : std::uint8_t { kUniform, kPrivileged, kUnprivileged, kExplicit };

inline std::string to_string(DeletionStrategy s) {
  switch (s) {
    case DeletionStrategy::kUniform: return "uniform";
    case DeletionStrategy::kPrivileged: return "privileged";
    case DeletionStrategy::kUnprivileged: return "unprivileged";
    case DeletionStrategy::kExplicit: return "explicit";
  }
  return "explicit";
}

inline DeletionStrategy parse_strategy(const std::string& s) {
  if (s == "uniform") return DeletionStrategy::kUniform;
  if (s == "privileged") return DeletionStrategy::kPrivileged;
  if (s == "unprivileged") return DeletionStrategy::kUnprivileged;
  if (s == "explicit") return DeletionStrategy::kExplicit;
  throw ValidationError("unknown deletion strategy '" + s + "'");
}

// Parameters of a sampled deletion request.
struct DeletionSpec {
  double node_ratio = 0.0;  // r_n
  double edge_ratio = 0.0;  // r_e
  DeletionStrategy strategy = DeletionStrategy::kUniform;
  std::uint64_t seed = 0;
};

// Nodes to delete (V_u), edges to delete (E_u) and nodes whose features are
// erased (X_u). Ids are indices into the graph the request targets.
struct UnlearnRequest {
  std::vector<NodeId> nodes;
  std::vector<Edge> edges;
  std::vector<NodeId> feature_nodes;
  DeletionStrategy provenance = DeletionStrategy::kExplicit;

  bool empty() const { return nodes.empty() && edges.empty() && feature_nodes.empty(); }

  // Sorts, deduplicates and canonicalizes edges.
  void normalize() {
    auto uniq = [](auto& v) {
      std::sort(v.begin(), v.end());
      v.erase(std::unique(v.begin(), v.end()), v.end());
    };
    for (auto& e : edges) e = canonical_edge(e.u, e.v);
    uniq(nodes);
    uniq(edges);
    uniq(feature_nodes);
  }

  bool operator==(const UnlearnRequest&) const = default;
};

// Text form: optional "# key=value" header lines, then one of
// `node <id>`, `edge <u> <v>`, `feat <id>` per line.
inline void write_request(std::ostream& out, const UnlearnRequest& req,
                          const DeletionSpec* spec = nullptr) {
  out << "# strategy=" << to_string(spec ? spec->strategy : req.provenance) << "\n";
  if (spec) {
    out << "# r_n=" << spec->node_ratio << "\n";
    out << "# r_e=" << spec->edge_ratio << "\n";
    out << "# seed=" << spec->seed << "\n";
  }
  for (NodeId v : req.nodes) out << "node " << v << "\n";
  for (const Edge& e : req.edges) out << "edge " << e.u << " " << e.v << "\n";
  for (NodeId v : req.feature_nodes) out << "feat " << v << "\n";
}

inline UnlearnRequest read_request(std::istream& in, const std::string& name = "<request>") {
  UnlearnRequest req;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(name + ":" + std::to_string(lineno) + ": " + what);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("strategy=");
      if (pos != std::string::npos) {
        std::string value = line.substr(pos + 9);
        value.erase(value.find_last_not_of(" \t") + 1);
        req.provenance = parse_strategy(value);
      }
      continue;
    }
    std::istringstream row(line);
    std::string kind;
    row >> kind;
    long long a = -1;
    long long b = -1;
    if (kind == "node" || kind == "feat") {
      if (!(row >> a) || a < 0) fail("expected a node id");
      (kind == "node" ? req.nodes : req.feature_nodes).push_back(static_cast<NodeId>(a));
    } else if (kind == "edge") {
      if (!(row >> a >> b) || a < 0 || b < 0) fail("expected two node ids");
      req.edges.push_back(canonical_edge(static_cast<NodeId>(a), static_cast<NodeId>(b)));
    } else {
      fail("unknown record '" + kind + "'");
    }
    std::string extra;
    if (row >> extra) fail("trailing token '" + extra + "'");
  }
  req.normalize();
  return req;
}

inline void save_request(const std::string& path, const UnlearnRequest& req,
                         const DeletionSpec* spec = nullptr) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path);
  write_request(out, req, spec);
}

inline UnlearnRequest load_request(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  return read_request(in, path);
}

}  // namespace fgu
