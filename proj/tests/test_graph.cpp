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

#include <gtest/gtest.h>

#include <fstream>

#include "test_support.hpp"

namespace fgu {
namespace {

using testing::dense_normalized;
using testing::random_graph;

Graph from_edges(std::size_t n, std::vector<Edge> edges) {
  return Graph(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), 2), std::vector<std::uint8_t>(n, 0),
               std::vector<std::uint8_t>(n, 0), std::vector<Split>(n, Split::kTrain), edges);
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

void expect_symmetric_loop_free(const Graph& g) {
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (NodeId w : g.neighbors(v)) {
      EXPECT_NE(v, w);
      EXPECT_TRUE(g.has_edge(w, v));
    }
  }
}

TEST(LoadGraph, ThreeNodesOneEdge) {
  const auto dir = testing::temp_dir("load3");
  write_file(dir / "n.tsv", "id\tf0\tsensitive\tlabel\tsplit\n0\t0.5\t0\t1\ttrain\n1\t1.5\t1\t0\tval\n2\t-1\t0\t0\ttest\n");
  write_file(dir / "e.tsv", "0\t1\n");
  const Graph g = load_graph((dir / "n.tsv").string(), (dir / "e.tsv").string());
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.num_edges(), 1u);
  EXPECT_EQ(g.degree(0), 1u);
  EXPECT_EQ(g.degree(1), 1u);
  EXPECT_EQ(g.degree(2), 0u);
  EXPECT_EQ(g.feature_dim(), 1u);
  EXPECT_DOUBLE_EQ(g.features()(1, 0), 1.5);
  EXPECT_EQ(g.split()[2], Split::kTest);
  EXPECT_EQ(g.labels()[0], 1);
}

TEST(LoadGraph, ReversedDuplicateEdgeStoredOnce) {
  const auto dir = testing::temp_dir("dup");
  write_file(dir / "n.csv", "id,f0,sensitive,label,split\n0,1,0,1,train\n1,2,1,0,train\n");
  write_file(dir / "e.tsv", "u\tv\n0\t1\n1\t0\n");
  const Graph g = load_graph((dir / "n.csv").string(), (dir / "e.tsv").string());
  EXPECT_EQ(g.num_edges(), 1u);
  expect_symmetric_loop_free(g);
}

TEST(LoadGraph, NonBinarySensitiveRejected) {
  const auto dir = testing::temp_dir("sens2");
  write_file(dir / "n.tsv", "id\tf0\tsensitive\tlabel\tsplit\n0\t1\t2\t1\ttrain\n");
  write_file(dir / "e.tsv", "");
  EXPECT_THROW(load_graph((dir / "n.tsv").string(), (dir / "e.tsv").string()), ValidationError);
}

TEST(LoadGraph, MalformedRowNamesLine) {
  const auto dir = testing::temp_dir("malformed");
  write_file(dir / "n.tsv", "id\tf0\tsensitive\tlabel\tsplit\n0\t1\t0\t1\ttrain\n1\tabc\t0\t1\ttrain\n");
  write_file(dir / "e.tsv", "");
  try {
    load_graph((dir / "n.tsv").string(), (dir / "e.tsv").string());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find(":3"), std::string::npos) << e.what();
  }
}

TEST(LoadGraph, UnknownEdgeEndpointRejected) {
  const auto dir = testing::temp_dir("unknown");
  write_file(dir / "n.tsv", "id\tf0\tsensitive\tlabel\tsplit\n0\t1\t0\t1\ttrain\n1\t1\t1\t0\ttrain\n");
  write_file(dir / "e.tsv", "0\t7\n");
  EXPECT_THROW(load_graph((dir / "n.tsv").string(), (dir / "e.tsv").string()), ValidationError);
}

TEST(LoadGraph, ExternalIdsCompactedInFileOrder) {
  const auto dir = testing::temp_dir("ids");
  write_file(dir / "n.tsv", "id\tf0\tsensitive\tlabel\tsplit\n40\t1\t0\t1\ttrain\n7\t1\t1\t0\ttrain\n19\t0\t1\t1\ttest\n");
  write_file(dir / "e.tsv", "40\t19\n");
  const Graph g = load_graph((dir / "n.tsv").string(), (dir / "e.tsv").string());
  EXPECT_EQ(g.ids(), (std::vector<std::uint64_t>{40, 7, 19}));
  EXPECT_TRUE(g.has_edge(0, 2));
}

TEST(LoadGraph, SaveLoadRoundTrip) {
  const Graph g = random_graph(25, 0.2, 3, 5);
  const auto dir = testing::temp_dir("roundtrip");
  save_graph(g, (dir / "n.tsv").string(), (dir / "e.tsv").string());
  EXPECT_EQ(load_graph((dir / "n.tsv").string(), (dir / "e.tsv").string()), g);
}

TEST(Graph, SelfLoopsDropped) {
  const Graph g = from_edges(3, {{0, 0}, {0, 1}, {2, 2}});
  EXPECT_EQ(g.num_edges(), 1u);
  expect_symmetric_loop_free(g);
}

TEST(NormalizeAdjacency, SingleIsolatedNode) {
  const auto a = normalize_adjacency(from_edges(1, {}));
  EXPECT_EQ(Eigen::MatrixXd(a.matrix), Eigen::MatrixXd::Constant(1, 1, 1.0));
}

TEST(NormalizeAdjacency, SingleEdge) {
  const Eigen::MatrixXd a(normalize_adjacency(from_edges(2, {{0, 1}})).matrix);
  EXPECT_TRUE(a.isApprox(Eigen::MatrixXd::Constant(2, 2, 0.5), 1e-15));
}

TEST(NormalizeAdjacency, PathGraph) {
  const Eigen::MatrixXd a(normalize_adjacency(from_edges(3, {{0, 1}, {1, 2}})).matrix);
  EXPECT_NEAR(a(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(a(0, 1), 0.40825, 1e-5);
  EXPECT_NEAR(a(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(a(0, 2), 0.0);
}

TEST(NormalizeAdjacency, MatchesDenseFormulaOnSmallGraphs) {
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    Rng rng(seed);
    const std::size_t n = 1 + uniform_index(rng, 8);
    const Graph g = random_graph(n, uniform01(rng), 2, seed);
    const Eigen::MatrixXd sparse(normalize_adjacency(g).matrix);
    const Eigen::MatrixXd dense = dense_normalized(g);
    ASSERT_LE((sparse - dense).cwiseAbs().maxCoeff(), 1e-12) << "seed " << seed;
    ASSERT_TRUE(sparse.isApprox(sparse.transpose()));
    for (Eigen::Index i = 0; i < sparse.rows(); ++i) {
      ASSERT_GT(sparse(i, i), 0.0);
      const double row = sparse.row(i).sum();
      ASSERT_GT(row, 0.0);
      ASSERT_LE(row, std::sqrt(static_cast<double>(n)) + 1e-12);
      for (Eigen::Index j = 0; j < sparse.cols(); ++j) ASSERT_LE(sparse(i, j), 1.0);
    }
  }
}

TEST(ApplyDeletion, NodeRemovesIncidentEdges) {
  const Graph tri = from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
  UnlearnRequest req;
  req.nodes = {2};
  const auto out = apply_deletion(tri, req);
  EXPECT_EQ(out.graph.num_nodes(), 2u);
  EXPECT_EQ(out.graph.edges(), (std::vector<Edge>{{0, 1}}));
  EXPECT_EQ(out.old_to_new, (std::vector<NodeId>{0, 1, kRemovedNode}));
}

TEST(ApplyDeletion, EdgeRemovesOnlyThatEdge) {
  const Graph tri = from_edges(3, {{0, 1}, {1, 2}, {0, 2}});
  UnlearnRequest req;
  req.edges = {{0, 1}};
  const auto out = apply_deletion(tri, req);
  EXPECT_EQ(out.graph.num_nodes(), 3u);
  EXPECT_EQ(out.graph.edges(), (std::vector<Edge>{{0, 2}, {1, 2}}));
}

TEST(ApplyDeletion, FeatureErasureZeroesRow) {
  const Graph g = random_graph(6, 0.5, 4, 3);
  UnlearnRequest req;
  req.feature_nodes = {0};
  const auto out = apply_deletion(g, req);
  EXPECT_EQ(out.graph.edges(), g.edges());
  EXPECT_TRUE(out.graph.features().row(0).isZero(0.0));
  EXPECT_EQ(out.graph.features().bottomRows(5), g.features().bottomRows(5));
}

TEST(ApplyDeletion, EmptyRequestIsIdentity) {
  const Graph g = random_graph(20, 0.3, 3, 8);
  EXPECT_EQ(apply_deletion(g, UnlearnRequest{}).graph, g);
}

TEST(ApplyDeletion, AbsentEntitiesListed) {
  const Graph g = from_edges(3, {{0, 1}});
  UnlearnRequest req;
  req.nodes = {9};
  req.edges = {{1, 2}};
  try {
    apply_deletion(g, req);
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find('9'), std::string::npos) << msg;
    EXPECT_NE(msg.find("(1,2)"), std::string::npos) << msg;
  }
}

TEST(ApplyDeletion, NoSurvivingEdgeTouchesDeletedNode) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Graph g = random_graph(30, 0.2, 2, seed);
    Rng rng(seed);
    UnlearnRequest req;
    req.nodes = sample_without_replacement(g.all_nodes(), 5, rng);
    req.normalize();
    const auto out = apply_deletion(g, req);
    ASSERT_EQ(out.graph.num_nodes(), 25u);
    for (const Edge& e : g.edges()) {
      const NodeId u = out.old_to_new[e.u], v = out.old_to_new[e.v];
      if (u == kRemovedNode || v == kRemovedNode) continue;
      ASSERT_TRUE(out.graph.has_edge(u, v));
    }
    const auto edges = g.edges();
    ASSERT_EQ(out.graph.num_edges(),
              static_cast<std::size_t>(std::count_if(edges.begin(), edges.end(), [&](const Edge& e) {
                return out.old_to_new[e.u] != kRemovedNode && out.old_to_new[e.v] != kRemovedNode;
              })));
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      if (out.old_to_new[v] != kRemovedNode) {
        ASSERT_EQ(out.graph.ids()[out.old_to_new[v]], g.ids()[v]);
      }
    }
    expect_symmetric_loop_free(out.graph);
  }
}

TEST(GenerateSbm, UncorrelatedLabelsBalancedAcrossGroups) {
  SbmSpec spec;
  spec.nodes_per_block = 500;
  spec.label_sensitive_correlation = 0.0;
  spec.intra_edge_prob = 0.0;
  spec.inter_edge_prob = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    spec.seed = seed;
    const Graph g = generate_sbm(spec);
    std::array<double, 2> pos{}, count{};
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      pos[g.sensitive()[v]] += g.labels()[v];
      ++count[g.sensitive()[v]];
    }
    EXPECT_LE(std::abs(pos[1] / count[1] - pos[0] / count[0]), 0.05);
  }
}

TEST(GenerateSbm, CorrelationControlsBaseRates) {
  SbmSpec spec;
  spec.label_sensitive_correlation = 0.6;
  const Graph g = generate_sbm(spec);
  std::array<double, 2> pos{}, count{};
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    pos[g.sensitive()[v]] += g.labels()[v];
    ++count[g.sensitive()[v]];
  }
  EXPECT_NEAR(pos[1] / count[1] - pos[0] / count[0], 0.6, 1e-12);
  expect_symmetric_loop_free(g);
}

TEST(GenerateSbm, SameSeedBitIdentical) {
  SbmSpec spec;
  spec.seed = 17;
  EXPECT_EQ(generate_sbm(spec), generate_sbm(spec));
  SbmSpec other = spec;
  other.seed = 18;
  EXPECT_FALSE(generate_sbm(spec) == generate_sbm(other));
}

TEST(GenerateSbm, ZeroProbabilitiesGiveEdgelessGraph) {
  SbmSpec spec;
  spec.intra_edge_prob = 0.0;
  spec.inter_edge_prob = 0.0;
  EXPECT_EQ(generate_sbm(spec).num_edges(), 0u);
}

TEST(GenerateSbm, HomophilyFollowsBlockProbabilities) {
  SbmSpec spec;
  spec.intra_edge_prob = 0.05;
  spec.inter_edge_prob = 0.0;
  const Graph g = generate_sbm(spec);
  EXPECT_GT(g.num_edges(), 0u);
  for (const Edge& e : g.edges()) EXPECT_EQ(g.sensitive()[e.u], g.sensitive()[e.v]);
}

TEST(GenerateSbm, InvalidSpecRejected) {
  SbmSpec spec;
  spec.intra_edge_prob = 1.5;
  EXPECT_THROW(generate_sbm(spec), ValidationError);
  spec = SbmSpec{};
  spec.nodes_per_block = 1;
  EXPECT_THROW(generate_sbm(spec), ValidationError);
}

}  // namespace
}  // namespace fgu
