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

#include <sstream>

#include "test_support.hpp"

namespace fgu {
namespace {

using testing::max_fd_error;
using testing::random_graph;
using testing::random_model;
using testing::shard_graphs;

FguConfig small_config(std::size_t k, std::size_t epochs = 20) {
  FguConfig c;
  c.num_shards = k;
  c.train.hidden_dim = 8;
  c.train.epochs = epochs;
  c.train.adam.learning_rate = 1e-2;
  c.train.seed = 3;
  c.t1 = 2;
  return c;
}

FguState state_with(std::vector<ShardModel> models, Eigen::VectorXd logits) {
  FguState s;
  s.logits = std::move(logits);
  for (std::size_t k = 0; k < models.size(); ++k) {
    s.optimizers.push_back(OptimizerState::for_model(models[k], AdamConfig{}));
    s.shard_ids.push_back(k);
    s.training_ids.emplace_back();
  }
  s.models = std::move(models);
  return s;
}

TEST(FguConfig, DefaultsAndValidation) {
  FguConfig c;
  EXPECT_EQ(c.alpha, 3.0);
  EXPECT_EQ(c.beta, 1.5);
  EXPECT_EQ(c.t1, 5u);
  EXPECT_EQ(c.train.epochs, 100u);
  EXPECT_EQ(c.train.adam.learning_rate, 1e-3);
  EXPECT_EQ(c.alpha_k(), c.alpha);
  EXPECT_EQ(c.beta_k(), c.beta);
  c.t1 = 0;
  EXPECT_THROW(c.validate(), ValidationError);
  c = FguConfig{};
  c.beta = -1;
  EXPECT_THROW(c.validate(), ValidationError);
  EXPECT_NE(FguConfig{}.hash(), c.hash());
}

TEST(TrainShards, SingleShardEqualsPlainTraining) {
  const Graph g = random_graph(30, 0.2, 4, 1);
  const FguConfig cfg = small_config(1);
  const std::vector<Graph> shards{g};
  const FguState s = train_shards(shards, g, cfg);
  EXPECT_EQ(s.lambda(), Eigen::VectorXd::Ones(1));
  EXPECT_EQ(s.models[0], train_gcn(make_input(g), g, g.mask(Split::kTrain), cfg.train));
}

TEST(TrainShards, UniformImportanceBeforeFirstUpdate) {
  const Graph g = random_graph(40, 0.2, 4, 2);
  FguConfig cfg = small_config(4, 0);
  const auto shards = shard_graphs(balanced_partition(g, 4, 0));
  const FguState s = train_shards(shards, g, cfg);
  EXPECT_TRUE(s.lambda().isApprox(Eigen::VectorXd::Constant(4, 0.25), 1e-15));
}

TEST(TrainShards, SeparableGraphLearned) {
  SbmSpec spec;
  spec.nodes_per_block = 60;
  spec.intra_edge_prob = 0.1;
  spec.inter_edge_prob = 0.01;
  // Labels follow the blocks and the features.
  spec.label_sensitive_correlation = 1.0;
  spec.feature_shift = 3.0;
  spec.feature_dim = 8;
  const Graph g = generate_sbm(spec);
  FguConfig cfg = small_config(3, 100);
  const auto shards = shard_graphs(balanced_partition(g, 3, 0));
  const FguState s = train_shards(shards, g, cfg);
  const auto yhat = predict_labels(aggregate(s, g, cfg.aggregation));
  EXPECT_GE(accuracy_f1(yhat, g.labels(), g.mask(Split::kTrain)).accuracy, 0.9);
}

TEST(TrainShards, ShardWithoutTrainingNodesUsesAllNodes) {
  Graph g = random_graph(20, 0.3, 3, 4);
  std::vector<Split> split = g.split();
  for (NodeId v = 10; v < 20; ++v) split[v] = Split::kTest;
  for (NodeId v = 0; v < 10; ++v) split[v] = Split::kTrain;
  g = Graph(g.features(), g.sensitive(), g.labels(), split, g.edges());
  std::vector<std::uint32_t> assignment(20, 0);
  for (NodeId v = 10; v < 20; ++v) assignment[v] = 1;
  const auto parts = induce_shards(g, assignment, 2);
  const std::vector<Graph> shards{parts[0].graph, parts[1].graph};
  const FguState s = train_shards(shards, g, small_config(2, 3));
  ASSERT_EQ(s.events.size(), 1u);
  EXPECT_NE(s.events[0].find("shard 1"), std::string::npos);
  EXPECT_EQ(s.training_ids[1].size(), 10u);
}

TEST(TrainShards, SimplexAtEveryEpoch) {
  const Graph g = random_graph(40, 0.2, 4, 5);
  const auto shards = shard_graphs(balanced_partition(g, 4, 1));
  FguConfig cfg = small_config(4, 30);
  cfg.lambda_lr = 5.0;
  std::size_t epochs = 0;
  train_shards(shards, g, cfg, [&](const FguState& s, std::size_t) {
    ++epochs;
    const Eigen::VectorXd l = s.lambda();
    EXPECT_GT(l.minCoeff(), 0.0);
    EXPECT_LE(std::abs(l.sum() - 1.0), 1e-12);
  });
  EXPECT_EQ(epochs, 30u);
}

TEST(Aggregate, OneHotSelectsShard) {
  const Graph g = random_graph(15, 0.3, 3, 6);
  const GcnInput in = make_input(g);
  const std::vector<ShardModel> models{random_model(3, 4, 1), random_model(3, 4, 2)};
  Eigen::VectorXd logits(2);
  logits << -1000.0, 0.0;
  const FguState s = state_with(models, logits);
  const Eigen::VectorXd own = forward(models[1], in).probs;
  EXPECT_EQ(aggregate(s, in, AggregationMode::kWeights).probs, own);
  EXPECT_EQ(aggregate(s, in, AggregationMode::kPosteriors).probs, own);
}

TEST(Aggregate, IdenticalModelsIgnoreMixing) {
  const Graph g = random_graph(15, 0.3, 3, 6);
  const GcnInput in = make_input(g);
  const ShardModel m = random_model(3, 4, 1);
  const FguState s = state_with({m, m, m}, Eigen::Vector3d(0.3, -1.2, 2.0));
  const Eigen::VectorXd own = forward(m, in).probs;
  EXPECT_TRUE(aggregate(s, in, AggregationMode::kWeights).probs.isApprox(own, 1e-12));
  EXPECT_TRUE(aggregate(s, in, AggregationMode::kPosteriors).probs.isApprox(own, 1e-12));
}

TEST(Aggregate, PosteriorMeanForEqualWeights) {
  const Graph g = random_graph(15, 0.3, 3, 6);
  const GcnInput in = make_input(g);
  const std::vector<ShardModel> models{random_model(3, 4, 1), random_model(3, 4, 2)};
  const FguState s = state_with(models, Eigen::Vector2d::Zero());
  const Eigen::VectorXd mean = 0.5 * (forward(models[0], in).probs + forward(models[1], in).probs);
  EXPECT_TRUE(aggregate(s, in, AggregationMode::kPosteriors).probs.isApprox(mean, 1e-15));
}

TEST(ShardObjective, GradientMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ShardData shard = make_shard_data(random_graph(25, 0.2, 4, seed));
    ShardModel m = random_model(4, 8, seed + 100, 0.7);
    const double alpha = 3.0;
    const ShardObjective obj = shard_objective(m, shard, alpha);
    EXPECT_GE(obj.value, 0.0);
    auto f = [&] { return shard_objective(m, shard, alpha).value; };
    EXPECT_LE(max_fd_error(m.w1, obj.grad.w1, f), 1e-4) << "seed " << seed;
    EXPECT_LE(max_fd_error(m.w2, obj.grad.w2, f), 1e-4) << "seed " << seed;
  }
}

class GlobalObjectiveTest : public ::testing::TestWithParam<AggregationMode> {};

TEST_P(GlobalObjectiveTest, GradientsMatchFiniteDifferences) {
  const AggregationMode mode = GetParam();
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = random_graph(25, 0.2, 4, seed);
    const GcnInput in = make_input(g);
    const NodeMask mask = g.mask(Split::kTrain);
    const GlobalTarget target = global_target(g, in, mask);
    std::vector<ShardModel> models{random_model(4, 6, seed + 1, 0.7), random_model(4, 6, seed + 2, 0.7),
                                   random_model(4, 6, seed + 3, 0.7)};
    Rng rng(seed);
    Eigen::VectorXd logits(3);
    for (Eigen::Index i = 0; i < 3; ++i) logits(i) = standard_normal(rng);
    const GlobalObjective obj = global_objective(models, logits, target, 3.0, mode);
    auto f = [&] { return global_objective(models, logits, target, 3.0, mode).value; };
    Eigen::MatrixXd logit_matrix = logits;
    auto f_logits = [&] {
      return global_objective(models, Eigen::VectorXd(logit_matrix), target, 3.0, mode).value;
    };
    EXPECT_LE(max_fd_error(logit_matrix, obj.logit_grad, f_logits), 1e-4) << "seed " << seed;
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_LE(max_fd_error(models[k].w1, obj.shard_grads[k].w1, f), 1e-4) << "seed " << seed;
      EXPECT_LE(max_fd_error(models[k].w2, obj.shard_grads[k].w2, f), 1e-4) << "seed " << seed;
    }
  }
}

TEST_P(GlobalObjectiveTest, IdenticalModelsHaveZeroImportanceGradient) {
  const Graph g = random_graph(20, 0.2, 3, 1);
  const GcnInput in = make_input(g);
  const NodeMask mask = g.mask(Split::kTrain);
  const ShardModel m = random_model(3, 5, 2);
  const std::vector<ShardModel> models{m, m, m};
  const auto obj = global_objective(models, Eigen::Vector3d(0.1, 0.5, -0.3), global_target(g, in, mask), 3.0,
                                    GetParam());
  EXPECT_LE(obj.logit_grad.cwiseAbs().maxCoeff(), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Modes, GlobalObjectiveTest,
                         ::testing::Values(AggregationMode::kWeights, AggregationMode::kPosteriors));

TEST(UpdateImportance, SingleShardStaysOne) {
  const Graph g = random_graph(20, 0.2, 3, 1);
  const GcnInput in = make_input(g);
  const NodeMask mask = g.mask(Split::kTrain);
  FguState s = state_with({random_model(3, 5, 2)}, Eigen::VectorXd::Zero(1));
  update_importance(s, global_target(g, in, mask), 3.0, 10.0, AggregationMode::kWeights);
  EXPECT_EQ(s.lambda(), Eigen::VectorXd::Ones(1));
}

TEST(UpdateImportance, StepDescends) {
  const Graph g = random_graph(30, 0.2, 3, 8);
  const GcnInput in = make_input(g);
  const NodeMask mask = g.mask(Split::kTrain);
  const GlobalTarget target = global_target(g, in, mask);
  FguState s = state_with({random_model(3, 5, 2), random_model(3, 5, 3), random_model(3, 5, 4)},
                          Eigen::Vector3d::Zero());
  const double before = update_importance(s, target, 3.0, 1e-2, AggregationMode::kWeights);
  const double after = global_objective(s.models, s.logits, target, 3.0, AggregationMode::kWeights).value;
  EXPECT_LT(after, before);
}

struct UnlearnFixture {
  Graph g;
  Partition p;
  FguConfig cfg;
  FguState trained;

  explicit UnlearnFixture(std::uint64_t seed, std::size_t k = 3) {
    g = random_graph(45, 0.15, 4, seed);
    p = balanced_partition(g, k, seed);
    cfg = small_config(k, 15);
    trained = train_shards(shard_graphs(p), g, cfg);
  }
};

TEST(UnlearnRetrain, FairnessOffMatchesPlainRetraining) {
  UnlearnFixture f(7);
  f.cfg.alpha = 0.0;
  f.cfg.beta = 0.0;
  f.cfg.t1 = 1000;
  UnlearnRequest req;
  req.nodes = {f.p.shards[1].local_to_global[0]};
  const auto del = apply_to_partition(f.g, f.p, req);
  ASSERT_EQ(del.dirty, (std::set<std::size_t>{1}));
  const FguState out = fgu_unlearn_retrain(f.trained, del.updated_shards, del.dirty, del.g_prime, f.cfg);
  const Graph& shard = del.updated_shards[1];
  EXPECT_EQ(out.models[1], train_gcn(make_input(shard), shard, shard.mask(Split::kTrain), f.cfg.train));
  // Clean shards continue from their trained state.
  ShardModel m = f.trained.models[0];
  OptimizerState opt = f.trained.optimizers[0];
  const Graph& clean = del.updated_shards[0];
  const GcnInput in = make_input(clean);
  for (std::size_t t = 0; t < f.cfg.train.epochs; ++t) train_step(m, opt, in, clean.labels(), clean.mask(Split::kTrain));
  EXPECT_EQ(out.models[0], m);
}

TEST(UnlearnRetrain, EmptyRequestStillDebiases) {
  UnlearnFixture f(8);
  const auto del = apply_to_partition(f.g, f.p, UnlearnRequest{});
  EXPECT_TRUE(del.dirty.empty());
  const FguState out = fgu_unlearn_retrain(f.trained, del.updated_shards, del.dirty, del.g_prime, f.cfg);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_FALSE(out.models[k] == f.trained.models[k]);
  EXPECT_EQ(out.epoch, f.trained.epoch + f.cfg.train.epochs);
}

TEST(UnlearnRetrain, EmptiedShardDropped) {
  UnlearnFixture f(9);
  UnlearnRequest req;
  req.nodes = f.p.shards[2].local_to_global;
  const auto del = apply_to_partition(f.g, f.p, req);
  const FguState out = fgu_unlearn_retrain(f.trained, del.updated_shards, del.dirty, del.g_prime, f.cfg);
  EXPECT_EQ(out.num_shards(), 2u);
  EXPECT_EQ(out.shard_ids, (std::vector<std::size_t>{0, 1}));
  EXPECT_LE(std::abs(out.lambda().sum() - 1.0), 1e-12);
  ASSERT_FALSE(out.events.empty());
  EXPECT_NE(out.events.back().find("shard 2"), std::string::npos);
}

TEST(UnlearnRetrain, SimplexAndNonNegativeLossEveryEpoch) {
  UnlearnFixture f(10);
  f.cfg.lambda_lr = 2.0;
  UnlearnRequest req;
  req.nodes = {0, 5};
  const auto del = apply_to_partition(f.g, f.p, req);
  fgu_unlearn_retrain(f.trained, del.updated_shards, del.dirty, del.g_prime, f.cfg,
                      [&](const FguState& s, std::size_t) {
                        const Eigen::VectorXd l = s.lambda();
                        EXPECT_GT(l.minCoeff(), 0.0);
                        EXPECT_LE(std::abs(l.sum() - 1.0), 1e-12);
                        for (std::size_t k = 0; k < s.num_shards(); ++k) {
                          const ShardData d = make_shard_data(del.updated_shards[k]);
                          EXPECT_GE(shard_objective(s.models[k], d, f.cfg.alpha_k()).value, 0.0);
                        }
                      });
}

TEST(UnlearnRetrain, Deterministic) {
  UnlearnFixture a(11), b(11);
  EXPECT_EQ(a.trained, b.trained);
  UnlearnRequest req;
  req.nodes = {1, 2, 3};
  const auto del = apply_to_partition(a.g, a.p, req);
  EXPECT_EQ(fgu_unlearn_retrain(a.trained, del.updated_shards, del.dirty, del.g_prime, a.cfg),
            fgu_unlearn_retrain(b.trained, del.updated_shards, del.dirty, del.g_prime, b.cfg));
}

TEST(StateCheckpoint, RoundTripAndResumeBitExact) {
  UnlearnFixture f(12);
  const auto dir = testing::temp_dir("state");
  save_state((dir / "s.bin").string(), f.trained, f.cfg.hash());
  const LoadedState loaded = load_state((dir / "s.bin").string());
  EXPECT_EQ(loaded.config_hash, f.cfg.hash());
  EXPECT_EQ(loaded.state, f.trained);
  std::stringstream a, b;
  write_state(a, f.trained, 1);
  write_state(b, loaded.state, 1);
  EXPECT_EQ(a.str(), b.str());
  UnlearnRequest req;
  req.nodes = {4};
  const auto del = apply_to_partition(f.g, f.p, req);
  EXPECT_EQ(fgu_unlearn_retrain(f.trained, del.updated_shards, del.dirty, del.g_prime, f.cfg),
            fgu_unlearn_retrain(loaded.state, del.updated_shards, del.dirty, del.g_prime, f.cfg));
}

TEST(StateCheckpoint, CorruptInputRejected) {
  UnlearnFixture f(13);
  std::stringstream buf;
  write_state(buf, f.trained, 0);
  std::string bytes = buf.str();
  std::stringstream cut(bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(read_state(cut), ParseError);
  bytes[0] ^= 1;
  std::stringstream bad(bytes);
  EXPECT_THROW(read_state(bad), ParseError);
}

}  // namespace
}  // namespace fgu
