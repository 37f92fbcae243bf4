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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fgu/common.hpp"
#include "fgu/fairness.hpp"
#include "fgu/gcn.hpp"
#include "fgu/graph.hpp"

namespace fgu {

enum class AggregationMode : std::uint8_t {
  kWeights,     // θ̃ = Σ λ_k θ_k, one forward pass
  kPosteriors,  // p = Σ λ_k p_k
};

inline const char* to_string(AggregationMode m) { return m == AggregationMode::kWeights ? "weights" : "posteriors"; }

inline AggregationMode parse_aggregation(const std::string& s) {
  if (s == "weights") return AggregationMode::kWeights;
  if (s == "posteriors") return AggregationMode::kPosteriors;
  throw ValidationError("aggregation mode must be weights or posteriors, got '" + s + "'");
}

struct FguConfig {
  std::size_t num_shards = 5;
  double alpha = 3.0;  // weight of the global fairness term inside L_global
  double beta = 1.5;   // weight of L_global inside every shard loss
  std::optional<double> shard_alpha;  // α_k; alpha when unset
  std::optional<double> shard_beta;   // β_k; beta when unset
  std::size_t t1 = 5;                 // λ update period in epochs
  TrainConfig train;                  // epochs, hidden size, Adam (η), seed
  std::optional<double> lambda_lr;    // step size for λ logits; η when unset
  AggregationMode aggregation = AggregationMode::kWeights;
  double lambda_sample_fraction = 0.5;  // |V_0| / |train| during initial training

  double alpha_k() const { return shard_alpha.value_or(alpha); }
  double beta_k() const { return shard_beta.value_or(beta); }
  double lambda_step() const { return lambda_lr.value_or(train.adam.learning_rate); }

  void validate() const {
    if (alpha < 0 || beta < 0 || alpha_k() < 0 || beta_k() < 0) {
      throw ValidationError("fairness weights must be non-negative");
    }
    if (t1 < 1) throw ValidationError("t1 must be at least 1");
    if (num_shards < 1) throw ValidationError("at least one shard is required");
    if (train.hidden_dim < 1) throw ValidationError("hidden dimension must be positive");
  }

  std::string canonical() const {
    std::ostringstream s;
    s.precision(17);
    s << "K=" << num_shards << ";alpha=" << alpha << ";beta=" << beta << ";alpha_k=" << alpha_k()
      << ";beta_k=" << beta_k() << ";t1=" << t1 << ";epochs=" << train.epochs << ";hidden=" << train.hidden_dim
      << ";lr=" << train.adam.learning_rate << ";wd=" << train.adam.weight_decay << ";seed=" << train.seed
      << ";lambda_lr=" << lambda_step() << ";aggregation=" << to_string(aggregation)
      << ";v0=" << lambda_sample_fraction;
    return s.str();
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }
};

// A shard graph with its precomputed propagation input and the nodes whose
// labels its loss reads.
struct ShardData {
  Graph graph;
  GcnInput input;
  NodeMask train_mask;
  bool trains_on_all_nodes = false;
};

inline ShardData make_shard_data(Graph g) {
  ShardData d;
  d.input = make_input(g);
  d.train_mask = g.mask(Split::kTrain);
  if (d.train_mask.empty()) {
    d.train_mask = g.all_nodes();
    d.trains_on_all_nodes = true;
  }
  d.graph = std::move(g);
  return d;
}

struct FguState {
  std::vector<ShardModel> models;
  std::vector<OptimizerState> optimizers;
  Eigen::VectorXd logits;  // λ = softmax(logits)
  // Original shard index of each surviving model.
  std::vector<std::size_t> shard_ids;
  // External ids of the nodes whose labels each shard's loss has read.
  std::vector<std::vector<std::uint64_t>> training_ids;
  std::uint64_t epoch = 0;
  std::vector<std::string> events;

  std::size_t num_shards() const { return models.size(); }

  Eigen::VectorXd lambda() const {
    const double top = logits.maxCoeff();
    Eigen::VectorXd e = (logits.array() - top).exp().matrix();
    return e / e.sum();
  }

  friend bool operator==(const FguState& a, const FguState& b) {
    return a.models == b.models && a.optimizers == b.optimizers && a.logits.size() == b.logits.size() &&
           a.logits == b.logits && a.shard_ids == b.shard_ids && a.training_ids == b.training_ids &&
           a.epoch == b.epoch;
  }
};

// θ̃ = Σ λ_k θ_k.
inline ShardModel aggregate_weights(std::span<const ShardModel> models, const Eigen::VectorXd& lambda) {
  ShardModel out{Eigen::MatrixXd::Zero(models[0].w1.rows(), models[0].w1.cols()),
                 Eigen::MatrixXd::Zero(models[0].w2.rows(), models[0].w2.cols())};
  for (std::size_t k = 0; k < models.size(); ++k) {
    out.w1 += lambda(static_cast<Eigen::Index>(k)) * models[k].w1;
    out.w2 += lambda(static_cast<Eigen::Index>(k)) * models[k].w2;
  }
  return out;
}

// Predictions of the shard ensemble on a whole graph.
inline Predictions aggregate(const FguState& state, const GcnInput& in, AggregationMode mode) {
  const Eigen::VectorXd lambda = state.lambda();
  if (mode == AggregationMode::kWeights) return forward(aggregate_weights(state.models, lambda), in);
  Predictions mix;
  mix.probs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(in.num_nodes()));
  for (std::size_t k = 0; k < state.models.size(); ++k) {
    mix.probs += lambda(static_cast<Eigen::Index>(k)) * forward(state.models[k], in).probs;
  }
  return mix;
}

inline Predictions aggregate(const FguState& state, const Graph& g, AggregationMode mode) {
  return aggregate(state, make_input(g), mode);
}

// Graph-side data for L_global.
struct GlobalTarget {
  const GcnInput* input = nullptr;
  std::span<const std::uint8_t> labels;
  std::span<const std::uint8_t> sensitive;
  std::span<const NodeId> mask;
};

struct GlobalObjective {
  double value = 0.0;  // U_global + α F_global
  double utility = 0.0;
  double fairness = 0.0;
  // d value / d θ_k, already carrying the chain factor through λ_k.
  std::vector<Gradients> shard_grads;
  Eigen::VectorXd logit_grad;  // d value / d logits
};

// L_global = U_global + α F_global of the aggregated model on `target`, with
// exact gradients through θ̃ (or the posterior mixture) and the softmax.
inline GlobalObjective global_objective(std::span<const ShardModel> models, const Eigen::VectorXd& logits,
                                        const GlobalTarget& target, double alpha, AggregationMode mode) {
  const auto k = models.size();
  const double top = logits.maxCoeff();
  Eigen::VectorXd lambda = (logits.array() - top).exp().matrix();
  lambda /= lambda.sum();

  GlobalObjective out;
  Eigen::VectorXd lambda_grad(static_cast<Eigen::Index>(k));
  auto loss_at = [&](const Eigen::VectorXd& probs) {
    const LossAndGrad u = utility_loss_with_grad(probs, target.labels, target.mask);
    const GapAndGrad f = soft_group_gap(probs, target.sensitive, target.mask);
    out.utility = u.value;
    out.fairness = f.value;
    out.value = u.value + alpha * f.value;
    return Eigen::VectorXd(u.grad + alpha * f.grad);
  };

  if (mode == AggregationMode::kWeights) {
    const ShardModel merged = aggregate_weights(models, lambda);
    const Predictions pred = forward(merged, *target.input);
    const Eigen::VectorXd dprob = loss_at(pred.probs);
    const Gradients g = backward(merged, pred, *target.input, dprob);
    for (std::size_t i = 0; i < k; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      lambda_grad(idx) = g.w1.cwiseProduct(models[i].w1).sum() + g.w2.cwiseProduct(models[i].w2).sum();
      Gradients scaled = g;
      scaled *= lambda(idx);
      out.shard_grads.push_back(std::move(scaled));
    }
  } else {
    std::vector<Predictions> preds;
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(target.input->num_nodes()));
    for (std::size_t i = 0; i < k; ++i) {
      preds.push_back(forward(models[i], *target.input));
      mix += lambda(static_cast<Eigen::Index>(i)) * preds.back().probs;
    }
    const Eigen::VectorXd dprob = loss_at(mix);
    for (std::size_t i = 0; i < k; ++i) {
      const auto idx = static_cast<Eigen::Index>(i);
      lambda_grad(idx) = dprob.dot(preds[i].probs);
      out.shard_grads.push_back(backward(models[i], preds[i], *target.input, lambda(idx) * dprob));
    }
  }
  // Softmax Jacobian: d/dl_j = λ_j (g_j - Σ_k λ_k g_k).
  const double mean = lambda.dot(lambda_grad);
  out.logit_grad = lambda.cwiseProduct((lambda_grad.array() - mean).matrix());
  return out;
}

struct ShardObjective {
  double value = 0.0;  // U_k + α_k F_k
  double utility = 0.0;
  double fairness = 0.0;
  Gradients grad;
};

// Shard-local loss on the shard's own graph and training nodes.
inline ShardObjective shard_objective(const ShardModel& m, const ShardData& shard, double alpha_k) {
  const Predictions pred = forward(m, shard.input);
  const LossAndGrad u = utility_loss_with_grad(pred.probs, shard.graph.labels(), shard.train_mask);
  ShardObjective out;
  out.utility = u.value;
  Eigen::VectorXd dprob = u.grad;
  if (alpha_k != 0.0) {
    const GapAndGrad f = soft_group_gap(pred.probs, shard.graph.sensitive(), shard.train_mask);
    out.fairness = f.value;
    dprob += alpha_k * f.grad;
  }
  out.value = out.utility + alpha_k * out.fairness;
  out.grad = backward(m, pred, shard.input, dprob);
  return out;
}

// One gradient step on the λ logits descending L_global.
inline double update_importance(FguState& state, const GlobalTarget& target, double alpha, double step,
                                AggregationMode mode) {
  if (state.models.empty()) throw ValidationError("no shard models");
  const GlobalObjective obj = global_objective(state.models, state.logits, target, alpha, mode);
  if (!obj.logit_grad.allFinite()) throw NumericError("non-finite gradient in importance logits");
  state.logits -= step * obj.logit_grad;
  return obj.value;
}

inline GlobalTarget global_target(const Graph& g, const GcnInput& input, std::span<const NodeId> mask) {
  return {&input, g.labels(), g.sensitive(), mask};
}

// Called after every epoch with the epoch index just completed.
using EpochObserver = std::function<void(const FguState&, std::size_t)>;

namespace detail {

inline std::vector<std::uint64_t> external_ids(const Graph& g, std::span<const NodeId> mask) {
  std::vector<std::uint64_t> ids;
  ids.reserve(mask.size());
  for (NodeId v : mask) ids.push_back(g.ids()[v]);
  return ids;
}

inline void check_shards(std::span<const Graph> shards) {
  if (shards.empty()) throw ValidationError("at least one shard is required");
  for (const auto& s : shards) {
    if (s.feature_dim() != shards[0].feature_dim()) throw ValidationError("shards disagree on feature dimension");
  }
}

}  // namespace detail

// Initial shard training. Every shard starts from the same seeded weights
// (so weight averaging stays meaningful) and takes one Adam step on its
// cross-entropy per epoch. Every t1 epochs (starting at epoch 0) the λ
// logits take one step descending the aggregated model's cross-entropy on
// V_0, a seeded sample of `full`'s training nodes.
inline FguState train_shards(std::span<const Graph> shards, const Graph& full, const FguConfig& cfg,
                             const EpochObserver& observer = {}) {
  cfg.validate();
  detail::check_shards(shards);
  const std::size_t d = shards[0].feature_dim();
  std::vector<ShardData> data;
  FguState state;
  for (std::size_t k = 0; k < shards.size(); ++k) {
    data.push_back(make_shard_data(shards[k]));
    if (data.back().trains_on_all_nodes) {
      state.events.push_back("shard " + std::to_string(k) + " has no training nodes; training on all its nodes");
    }
    state.models.push_back(init_model(d, cfg.train.hidden_dim, cfg.train.seed));
    state.optimizers.push_back(OptimizerState::for_model(state.models.back(), cfg.train.adam));
    state.shard_ids.push_back(k);
    state.training_ids.push_back(detail::external_ids(data.back().graph, data.back().train_mask));
  }
  state.logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(shards.size()));

  const GcnInput full_input = make_input(full);
  NodeMask pool = full.mask(Split::kTrain);
  Rng rng(derive_seed(cfg.train.seed, 31));
  const auto v0_size = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(cfg.lambda_sample_fraction * static_cast<double>(pool.size()))));
  NodeMask v0;
  if (!pool.empty()) {
    v0 = sample_without_replacement(pool, std::min(v0_size, pool.size()), rng);
    std::sort(v0.begin(), v0.end());
  }
  const GlobalTarget target = global_target(full, full_input, v0);

  for (std::size_t t = 0; t < cfg.train.epochs; ++t) {
    for (std::size_t k = 0; k < data.size(); ++k) {
      train_step(state.models[k], state.optimizers[k], data[k].input, data[k].graph.labels(), data[k].train_mask);
    }
    if (t % cfg.t1 == 0 && shards.size() > 1 && !v0.empty()) {
      update_importance(state, target, 0.0, cfg.lambda_step(), cfg.aggregation);
    }
    ++state.epoch;
    if (observer) observer(state, t);
  }
  return state;
}

// Fairness-aware retraining after a deletion.
//
// `updated_shards` replaces every shard graph (requested data already
// removed); `dirty` lists positions whose graph changed. Dirty models are
// reset to the shared seeded initialization with fresh optimizer state, the
// λ logits are reset to uniform, shards left without nodes are dropped, and
// then all shards run the debiasing loop for cfg.train.epochs epochs:
//   1. θ̃ = Σ λ_k θ_k and L_global = U_global + α F_global on g_prime;
//   2. each shard steps on U_k + α_k F_k + β_k L_global, where the last
//      term reaches θ_k only through its own factor λ_k;
//   3. every t1 epochs (epoch 0 included) λ steps down ∇ L_global.
inline FguState fgu_unlearn_retrain(const FguState& previous, std::span<const Graph> updated_shards,
                                    const std::set<std::size_t>& dirty, const Graph& g_prime, const FguConfig& cfg,
                                    const EpochObserver& observer = {}) {
  cfg.validate();
  if (updated_shards.size() != previous.num_shards()) {
    throw ValidationError("expected " + std::to_string(previous.num_shards()) + " updated shard graphs");
  }
  detail::check_shards(updated_shards);
  const std::size_t d = previous.models.front().feature_dim();

  FguState state;
  state.epoch = previous.epoch;
  state.events = previous.events;
  std::vector<ShardData> data;
  for (std::size_t k = 0; k < updated_shards.size(); ++k) {
    if (updated_shards[k].num_nodes() == 0) {
      state.events.push_back("shard " + std::to_string(previous.shard_ids[k]) + " emptied by deletion; dropped");
      continue;
    }
    data.push_back(make_shard_data(updated_shards[k]));
    if (dirty.contains(k)) {
      state.models.push_back(init_model(d, cfg.train.hidden_dim, cfg.train.seed));
      state.optimizers.push_back(OptimizerState::for_model(state.models.back(), cfg.train.adam));
    } else {
      state.models.push_back(previous.models[k]);
      state.optimizers.push_back(previous.optimizers[k]);
    }
    state.shard_ids.push_back(previous.shard_ids[k]);
    state.training_ids.push_back(detail::external_ids(data.back().graph, data.back().train_mask));
  }
  if (data.empty()) throw ValidationError("every shard was emptied by the deletion");
  state.logits = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(data.size()));

  const GcnInput global_input = make_input(g_prime);
  const NodeMask global_mask = g_prime.mask(Split::kTrain);
  if (global_mask.empty()) throw ValidationError("post-deletion graph has no training nodes");
  const GlobalTarget target = global_target(g_prime, global_input, global_mask);
  const double alpha_k = cfg.alpha_k();
  const double beta_k = cfg.beta_k();

  for (std::size_t t = 0; t < cfg.train.epochs; ++t) {
    std::optional<GlobalObjective> global;
    if (beta_k != 0.0) global = global_objective(state.models, state.logits, target, cfg.alpha, cfg.aggregation);
    for (std::size_t k = 0; k < data.size(); ++k) {
      ShardObjective local = shard_objective(state.models[k], data[k], alpha_k);
      if (global) {
        Gradients coupling = global->shard_grads[k];
        coupling *= beta_k;
        local.grad += coupling;
      }
      adam_step(state.models[k], state.optimizers[k], local.grad);
    }
    if (t % cfg.t1 == 0 && data.size() > 1) {
      update_importance(state, target, cfg.alpha, cfg.lambda_step(), cfg.aggregation);
    }
    ++state.epoch;
    if (observer) observer(state, t);
  }
  return state;
}

// ---- state checkpoints -----------------------------------------------------
//
// Little-endian u64 header (magic, version, K, feature_dim, hidden_dim,
// epoch, config hash), then per shard: shard id, Adam hyperparameters and
// step, W1, W2, the four moment matrices, and the training manifest (count
// followed by external node ids); finally the K importance logits.

inline constexpr std::uint64_t kStateMagic = 0x4554415453554746ULL;  // "FGUSTATE"

inline void write_state(std::ostream& out, const FguState& s, std::uint64_t config_hash) {
  if (s.models.empty()) throw ValidationError("empty state");
  const auto d = s.models[0].w1.rows();
  const auto h = s.models[0].w1.cols();
  io::write_u64(out, kStateMagic);
  io::write_u64(out, kCheckpointVersion);
  io::write_u64(out, s.models.size());
  io::write_u64(out, static_cast<std::uint64_t>(d));
  io::write_u64(out, static_cast<std::uint64_t>(h));
  io::write_u64(out, s.epoch);
  io::write_u64(out, config_hash);
  for (std::size_t k = 0; k < s.models.size(); ++k) {
    const auto& opt = s.optimizers[k];
    io::write_u64(out, s.shard_ids[k]);
    for (double x : {opt.config.learning_rate, opt.config.weight_decay, opt.config.beta1, opt.config.beta2,
                     opt.config.epsilon}) {
      io::write_f64(out, x);
    }
    io::write_u64(out, opt.step);
    write_matrix(out, s.models[k].w1);
    write_matrix(out, s.models[k].w2);
    write_matrix(out, opt.m1);
    write_matrix(out, opt.v1);
    write_matrix(out, opt.m2);
    write_matrix(out, opt.v2);
    io::write_u64(out, s.training_ids[k].size());
    for (auto id : s.training_ids[k]) io::write_u64(out, id);
  }
  for (Eigen::Index k = 0; k < s.logits.size(); ++k) io::write_f64(out, s.logits(k));
}

struct LoadedState {
  FguState state;
  std::uint64_t config_hash = 0;
};

inline LoadedState read_state(std::istream& in) {
  if (io::read_u64(in) != kStateMagic) throw ParseError("not an FGU state checkpoint");
  if (io::read_u64(in) != kCheckpointVersion) throw ParseError("unsupported checkpoint version");
  LoadedState out;
  auto& s = out.state;
  const auto k = io::read_u64(in);
  const auto d = static_cast<Eigen::Index>(io::read_u64(in));
  const auto h = static_cast<Eigen::Index>(io::read_u64(in));
  s.epoch = io::read_u64(in);
  out.config_hash = io::read_u64(in);
  if (k == 0 || k > (1u << 20) || d > (1 << 24) || h > (1 << 24)) throw ParseError("implausible checkpoint header");
  for (std::uint64_t i = 0; i < k; ++i) {
    s.shard_ids.push_back(io::read_u64(in));
    OptimizerState opt;
    opt.config.learning_rate = io::read_f64(in);
    opt.config.weight_decay = io::read_f64(in);
    opt.config.beta1 = io::read_f64(in);
    opt.config.beta2 = io::read_f64(in);
    opt.config.epsilon = io::read_f64(in);
    opt.step = io::read_u64(in);
    ShardModel m;
    read_matrix(in, m.w1, d, h);
    read_matrix(in, m.w2, h, 1);
    read_matrix(in, opt.m1, d, h);
    read_matrix(in, opt.v1, d, h);
    read_matrix(in, opt.m2, h, 1);
    read_matrix(in, opt.v2, h, 1);
    const auto count = io::read_u64(in);
    if (count > (1ull << 32)) throw ParseError("implausible training manifest length");
    std::vector<std::uint64_t> ids(count);
    for (auto& id : ids) id = io::read_u64(in);
    s.models.push_back(std::move(m));
    s.optimizers.push_back(std::move(opt));
    s.training_ids.push_back(std::move(ids));
  }
  s.logits.resize(static_cast<Eigen::Index>(k));
  for (Eigen::Index i = 0; i < s.logits.size(); ++i) s.logits(i) = io::read_f64(in);
  return out;
}

inline void save_state(const std::string& path, const FguState& s, std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  write_state(out, s, config_hash);
}

inline LoadedState load_state(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  return read_state(in);
}

}  // namespace fgu
