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
#include <Eigen/Sparse>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "fgu/common.hpp"
#include "fgu/request.hpp"

namespace fgu {

enum class Split : std::uint8_t { kTrain = 0, kVal = 1, kTest = 2 };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "test";
}

// Undirected attributed graph in CSR form. Every node carries a feature row,
// a binary sensitive attribute, a binary label, a split tag and a stable
// external id that survives deletion and shard induction.
//
// Invariants: adjacency is symmetric, sorted per row, free of duplicates and
// self-loops.
class Graph {
 public:
  Graph() = default;

  // Symmetrizes and deduplicates `edges`; self-loops are dropped since the
  // normalized adjacency adds them back. Empty `ids` means ids 0..N-1.
  Graph(Eigen::MatrixXd features, std::vector<std::uint8_t> sensitive,
        std::vector<std::uint8_t> labels, std::vector<Split> split,
        std::span<const Edge> edges, std::vector<std::uint64_t> ids = {})
      : features_(std::move(features)),
        sensitive_(std::move(sensitive)),
        labels_(std::move(labels)),
        split_(std::move(split)),
        ids_(std::move(ids)) {
    const std::size_t n = static_cast<std::size_t>(features_.rows());
    if (sensitive_.size() != n || labels_.size() != n || split_.size() != n) {
      throw ValidationError("node attribute vectors disagree on node count");
    }
    if (ids_.empty()) {
      ids_.resize(n);
      for (std::size_t i = 0; i < n; ++i) ids_[i] = i;
    } else if (ids_.size() != n) {
      throw ValidationError("id vector disagrees on node count");
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (sensitive_[i] > 1) {
        throw ValidationError("node " + std::to_string(ids_[i]) + ": sensitive value must be 0 or 1");
      }
      if (labels_[i] > 1) {
        throw ValidationError("node " + std::to_string(ids_[i]) + ": label must be 0 or 1");
      }
    }
    std::vector<Edge> directed;
    directed.reserve(edges.size() * 2);
    for (const Edge& e : edges) {
      if (e.u >= n || e.v >= n) {
        throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                              ") references a node outside 0.." + std::to_string(n));
      }
      if (e.u == e.v) continue;
      directed.push_back({e.u, e.v});
      directed.push_back({e.v, e.u});
    }
    std::sort(directed.begin(), directed.end());
    directed.erase(std::unique(directed.begin(), directed.end()), directed.end());
    offsets_.assign(n + 1, 0);
    for (const Edge& e : directed) ++offsets_[e.u + 1];
    for (std::size_t i = 0; i < n; ++i) offsets_[i + 1] += offsets_[i];
    neighbors_.resize(directed.size());
    for (std::size_t i = 0; i < directed.size(); ++i) neighbors_[i] = directed[i].v;
  }

  std::size_t num_nodes() const { return sensitive_.size(); }
  std::size_t num_edges() const { return neighbors_.size() / 2; }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features_.cols()); }

  std::span<const NodeId> neighbors(NodeId v) const {
    return {neighbors_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  bool has_edge(NodeId u, NodeId v) const {
    if (u >= num_nodes() || v >= num_nodes()) return false;
    auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

  // Canonical (u < v) edges in lexicographic order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(num_edges());
    for (NodeId u = 0; u < num_nodes(); ++u) {
      for (NodeId v : neighbors(u)) {
        if (u < v) out.push_back({u, v});
      }
    }
    return out;
  }

  std::span<const std::size_t> offsets() const { return offsets_; }
  std::span<const NodeId> adjacency() const { return neighbors_; }
  const Eigen::MatrixXd& features() const { return features_; }
  const std::vector<std::uint8_t>& sensitive() const { return sensitive_; }
  const std::vector<std::uint8_t>& labels() const { return labels_; }
  const std::vector<Split>& split() const { return split_; }
  const std::vector<std::uint64_t>& ids() const { return ids_; }

  NodeMask mask(Split s) const {
    NodeMask m;
    for (NodeId v = 0; v < num_nodes(); ++v) {
      if (split_[v] == s) m.push_back(v);
    }
    return m;
  }

  NodeMask all_nodes() const {
    NodeMask m(num_nodes());
    for (NodeId v = 0; v < num_nodes(); ++v) m[v] = v;
    return m;
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.offsets_ == b.offsets_ && a.neighbors_ == b.neighbors_ &&
           a.sensitive_ == b.sensitive_ && a.labels_ == b.labels_ && a.split_ == b.split_ &&
           a.ids_ == b.ids_ && a.features_.rows() == b.features_.rows() &&
           a.features_.cols() == b.features_.cols() && a.features_ == b.features_;
  }

 private:
  Eigen::MatrixXd features_;
  std::vector<std::uint8_t> sensitive_;
  std::vector<std::uint8_t> labels_;
  std::vector<Split> split_;
  std::vector<std::uint64_t> ids_;
  std::vector<std::size_t> offsets_{0};
  std::vector<NodeId> neighbors_;
};

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// D^{-1/2} (A + I) D^{-1/2}, D taken from A + I.
struct NormalizedAdjacency {
  SparseMatrix matrix;
  std::size_t size() const { return static_cast<std::size_t>(matrix.rows()); }
};

inline NormalizedAdjacency normalize_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (NodeId v = 0; v < n; ++v) inv_sqrt[v] = 1.0 / std::sqrt(static_cast<double>(g.degree(v) + 1));
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(n + 2 * g.num_edges());
  for (NodeId u = 0; u < n; ++u) {
    triplets.emplace_back(u, u, inv_sqrt[u] * inv_sqrt[u]);
    for (NodeId v : g.neighbors(u)) triplets.emplace_back(u, v, inv_sqrt[u] * inv_sqrt[v]);
  }
  NormalizedAdjacency adj;
  adj.matrix.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  adj.matrix.setFromTriplets(triplets.begin(), triplets.end());
  adj.matrix.makeCompressed();
  return adj;
}

inline constexpr NodeId kRemovedNode = std::numeric_limits<NodeId>::max();

struct DeletionResult {
  Graph graph;
  // old index -> new index, kRemovedNode for deleted nodes.
  std::vector<NodeId> old_to_new;
};

// Removes V_u with all incident edges, removes E_u, zeroes the feature rows
// of X_u. Survivors are re-indexed in their original order.
inline DeletionResult apply_deletion(const Graph& g, const UnlearnRequest& req) {
  const std::size_t n = g.num_nodes();
  std::string offenders;
  auto note = [&](const std::string& what) {
    if (!offenders.empty()) offenders += ", ";
    offenders += what;
  };
  for (NodeId v : req.nodes) {
    if (v >= n) note("node " + std::to_string(v));
  }
  for (NodeId v : req.feature_nodes) {
    if (v >= n) note("feature node " + std::to_string(v));
  }
  for (const Edge& e : req.edges) {
    if (!g.has_edge(e.u, e.v)) note("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) + ")");
  }
  if (!offenders.empty()) throw ValidationError("request references absent entities: " + offenders);

  std::vector<std::uint8_t> removed(n, 0);
  for (NodeId v : req.nodes) removed[v] = 1;
  DeletionResult out;
  out.old_to_new.assign(n, kRemovedNode);
  NodeId next = 0;
  for (NodeId v = 0; v < n; ++v) {
    if (!removed[v]) out.old_to_new[v] = next++;
  }
  const std::size_t m = next;

  Eigen::MatrixXd features(static_cast<Eigen::Index>(m), g.features().cols());
  std::vector<std::uint8_t> sensitive(m);
  std::vector<std::uint8_t> labels(m);
  std::vector<Split> split(m);
  std::vector<std::uint64_t> ids(m);
  for (NodeId v = 0; v < n; ++v) {
    const NodeId w = out.old_to_new[v];
    if (w == kRemovedNode) continue;
    features.row(w) = g.features().row(v);
    sensitive[w] = g.sensitive()[v];
    labels[w] = g.labels()[v];
    split[w] = g.split()[v];
    ids[w] = g.ids()[v];
  }
  for (NodeId v : req.feature_nodes) {
    if (out.old_to_new[v] != kRemovedNode) features.row(out.old_to_new[v]).setZero();
  }

  std::vector<Edge> dropped = req.edges;
  std::sort(dropped.begin(), dropped.end());
  std::vector<Edge> kept;
  kept.reserve(g.num_edges());
  for (const Edge& e : g.edges()) {
    if (removed[e.u] || removed[e.v]) continue;
    if (std::binary_search(dropped.begin(), dropped.end(), e)) continue;
    kept.push_back({out.old_to_new[e.u], out.old_to_new[e.v]});
  }
  out.graph = Graph(std::move(features), std::move(sensitive), std::move(labels), std::move(split),
                    kept, std::move(ids));
  return out;
}

// Two-block stochastic block model whose blocks are the sensitive groups.
struct SbmSpec {
  std::size_t nodes_per_block = 300;
  double intra_edge_prob = 0.02;
  double inter_edge_prob = 0.005;
  // P(Y=1|S=1) - P(Y=1|S=0); group rates are 0.5 +/- correlation / 2.
  double label_sensitive_correlation = 0.6;
  std::size_t feature_dim = 16;
  // Distance between the class-conditional feature means, per dimension.
  double feature_shift = 1.0;
  std::uint64_t seed = 0;
  double train_fraction = 0.5;
  double val_fraction = 0.25;
};

inline void validate(const SbmSpec& spec) {
  auto prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string(name) + " must lie in [0,1]");
  };
  prob(spec.intra_edge_prob, "intra_edge_prob");
  prob(spec.inter_edge_prob, "inter_edge_prob");
  prob(spec.label_sensitive_correlation, "label_sensitive_correlation");
  prob(spec.train_fraction, "train_fraction");
  prob(spec.val_fraction, "val_fraction");
  if (spec.train_fraction + spec.val_fraction > 1.0) {
    throw ValidationError("train_fraction + val_fraction exceeds 1");
  }
  if (spec.nodes_per_block < 2) throw ValidationError("nodes_per_block must be at least 2");
}

// Nodes 0..n-1 have S = 0, nodes n..2n-1 have S = 1. Within each block the
// number of positives is fixed at round(n * rate), so the empirical rate gap
// equals the requested correlation up to rounding.
inline Graph generate_sbm(const SbmSpec& spec) {
  validate(spec);
  const std::size_t per_block = spec.nodes_per_block;
  const std::size_t n = 2 * per_block;
  Rng label_rng(derive_seed(spec.seed, 1));
  Rng feature_rng(derive_seed(spec.seed, 2));
  Rng edge_rng(derive_seed(spec.seed, 3));
  Rng split_rng(derive_seed(spec.seed, 4));

  std::vector<std::uint8_t> sensitive(n);
  std::vector<std::uint8_t> labels(n, 0);
  for (std::size_t s = 0; s < 2; ++s) {
    const double rate = 0.5 + (s == 1 ? 0.5 : -0.5) * spec.label_sensitive_correlation;
    const auto positives = static_cast<std::size_t>(std::llround(rate * static_cast<double>(per_block)));
    std::vector<NodeId> block(per_block);
    for (std::size_t i = 0; i < per_block; ++i) {
      block[i] = static_cast<NodeId>(s * per_block + i);
      sensitive[block[i]] = static_cast<std::uint8_t>(s);
    }
    for (NodeId v : sample_without_replacement(block, positives, label_rng)) labels[v] = 1;
  }

  Eigen::MatrixXd features(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(spec.feature_dim));
  for (std::size_t i = 0; i < n; ++i) {
    const double mean = (static_cast<double>(labels[i]) - 0.5) * spec.feature_shift;
    for (std::size_t j = 0; j < spec.feature_dim; ++j) {
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = mean + standard_normal(feature_rng);
    }
  }

  std::vector<Edge> edges;
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const double p = sensitive[u] == sensitive[v] ? spec.intra_edge_prob : spec.inter_edge_prob;
      if (uniform01(edge_rng) < p) edges.push_back({u, v});
    }
  }

  std::vector<NodeId> order(n);
  for (NodeId v = 0; v < n; ++v) order[v] = v;
  shuffle(order, split_rng);
  const auto n_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(spec.val_fraction * static_cast<double>(n)));
  std::vector<Split> split(n, Split::kTest);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      split[order[i]] = Split::kTrain;
    } else if (i < n_train + n_val) {
      split[order[i]] = Split::kVal;
    }
  }
  return Graph(std::move(features), std::move(sensitive), std::move(labels), std::move(split), edges);
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  if (delim == ' ') {
    std::istringstream in(line);
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
  }
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    out.push_back(trim(std::string_view(line).substr(start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

inline char detect_delimiter(const std::string& line) {
  if (line.find('\t') != std::string::npos) return '\t';
  if (line.find(',') != std::string::npos) return ',';
  return ' ';
}

}  // namespace detail

// Node file: header `id, f0..f{D-1}, sensitive, label, split` (tab or comma,
// detected from the header); edge file: `u v` per line, optional `u v`
// header. External ids are kept; indices follow node-file order.
inline Graph load_graph(const std::string& node_file, const std::string& edge_file) {
  std::ifstream nodes(node_file);
  if (!nodes) throw ValidationError("cannot open " + node_file);
  std::string line;
  std::size_t lineno = 0;
  auto parse_fail = [&](const std::string& file, const std::string& what) {
    throw ParseError(file + ":" + std::to_string(lineno) + ": " + what);
  };
  if (!std::getline(nodes, line)) parse_fail(node_file, "missing header");
  ++lineno;
  const char delim = detail::detect_delimiter(line);
  if (delim == ' ') parse_fail(node_file, "header must be tab or comma delimited");
  const auto header = detail::split_fields(line, delim);
  int id_col = -1, s_col = -1, y_col = -1, split_col = -1;
  std::vector<int> feature_cols;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const auto& h = header[static_cast<std::size_t>(c)];
    if (h == "id") id_col = c;
    else if (h == "sensitive") s_col = c;
    else if (h == "label") y_col = c;
    else if (h == "split") split_col = c;
    else feature_cols.push_back(c);
  }
  if (id_col < 0 || s_col < 0 || y_col < 0 || split_col < 0) {
    parse_fail(node_file, "header must name id, sensitive, label and split columns");
  }

  std::vector<std::uint64_t> ids;
  std::vector<double> feature_values;
  std::vector<std::uint8_t> sensitive, labels;
  std::vector<Split> split;
  std::unordered_map<std::uint64_t, NodeId> index;
  while (std::getline(nodes, line)) {
    ++lineno;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line, delim);
    if (fields.size() != header.size()) {
      parse_fail(node_file, "expected " + std::to_string(header.size()) + " fields, got " +
                                std::to_string(fields.size()));
    }
    std::uint64_t id = 0;
    if (!detail::parse_number(fields[static_cast<std::size_t>(id_col)], id)) parse_fail(node_file, "bad id");
    if (!index.emplace(id, static_cast<NodeId>(ids.size())).second) {
      throw ValidationError(node_file + ":" + std::to_string(lineno) + ": duplicate id " + std::to_string(id));
    }
    ids.push_back(id);
    for (int c : feature_cols) {
      double x = 0.0;
      if (!detail::parse_number(fields[static_cast<std::size_t>(c)], x)) {
        parse_fail(node_file, "bad feature value '" + fields[static_cast<std::size_t>(c)] + "'");
      }
      feature_values.push_back(x);
    }
    auto binary = [&](int col, const char* name, std::vector<std::uint8_t>& dst) {
      long long v = 0;
      if (!detail::parse_number(fields[static_cast<std::size_t>(col)], v)) {
        parse_fail(node_file, std::string("bad ") + name + " value");
      }
      if (v != 0 && v != 1) {
        throw ValidationError(node_file + ":" + std::to_string(lineno) + ": " + name +
                              " must be 0 or 1, got " + std::to_string(v));
      }
      dst.push_back(static_cast<std::uint8_t>(v));
    };
    binary(s_col, "sensitive", sensitive);
    binary(y_col, "label", labels);
    const auto& sp = fields[static_cast<std::size_t>(split_col)];
    if (sp == "train") split.push_back(Split::kTrain);
    else if (sp == "val") split.push_back(Split::kVal);
    else if (sp == "test") split.push_back(Split::kTest);
    else parse_fail(node_file, "split must be train, val or test, got '" + sp + "'");
  }

  const auto n = static_cast<Eigen::Index>(ids.size());
  const auto d = static_cast<Eigen::Index>(feature_cols.size());
  Eigen::MatrixXd features(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) features(i, j) = feature_values[static_cast<std::size_t>(i * d + j)];
  }

  std::ifstream edges_in(edge_file);
  if (!edges_in) throw ValidationError("cannot open " + edge_file);
  std::vector<Edge> edges;
  lineno = 0;
  while (std::getline(edges_in, line)) {
    ++lineno;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto fields = detail::split_fields(t, detail::detect_delimiter(t));
    if (fields.size() != 2) parse_fail(edge_file, "expected two fields");
    std::uint64_t a = 0, b = 0;
    if (!detail::parse_number(fields[0], a) || !detail::parse_number(fields[1], b)) {
      if (lineno == 1 && fields[0] == "u" && fields[1] == "v") continue;
      parse_fail(edge_file, "bad node id");
    }
    const auto ia = index.find(a);
    const auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) {
      throw ValidationError(edge_file + ":" + std::to_string(lineno) + ": edge references unknown id " +
                            std::to_string(ia == index.end() ? a : b));
    }
    edges.push_back({ia->second, ib->second});
  }
  return Graph(std::move(features), std::move(sensitive), std::move(labels), std::move(split), edges,
               std::move(ids));
}

// Writes the tab-separated format read by load_graph.
inline void save_graph(const Graph& g, const std::string& node_file, const std::string& edge_file) {
  std::ofstream nodes(node_file);
  if (!nodes) throw ValidationError("cannot write " + node_file);
  nodes << "id";
  for (std::size_t j = 0; j < g.feature_dim(); ++j) nodes << "\tf" << j;
  nodes << "\tsensitive\tlabel\tsplit\n";
  char buf[64];
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    nodes << g.ids()[v];
    for (Eigen::Index j = 0; j < g.features().cols(); ++j) {
      // Shortest round-trip representation.
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), g.features()(v, j));
      nodes << '\t' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    nodes << '\t' << int(g.sensitive()[v]) << '\t' << int(g.labels()[v]) << '\t' << to_string(g.split()[v]) << '\n';
  }
  std::ofstream edges(edge_file);
  if (!edges) throw ValidationError("cannot write " + edge_file);
  edges << "u\tv\n";
  for (const Edge& e : g.edges()) edges << g.ids()[e.u] << '\t' << g.ids()[e.v] << '\n';
}

}  // namespace fgu
