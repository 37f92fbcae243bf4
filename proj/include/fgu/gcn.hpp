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

#include <cmath>
#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "fgu/common.hpp"
#include "fgu/graph.hpp"

namespace fgu {

// Two-layer GCN without bias terms:
//   H = ReLU(Ã X W1),  p = sigmoid(Ã H W2).
struct ShardModel {
  Eigen::MatrixXd w1;  // feature_dim x hidden_dim
  Eigen::MatrixXd w2;  // hidden_dim x 1

  std::size_t feature_dim() const { return static_cast<std::size_t>(w1.rows()); }
  std::size_t hidden_dim() const { return static_cast<std::size_t>(w1.cols()); }

  friend bool operator==(const ShardModel& a, const ShardModel& b) {
    return a.w1.rows() == b.w1.rows() && a.w1.cols() == b.w1.cols() && a.w2.rows() == b.w2.rows() &&
           a.w1 == b.w1 && a.w2 == b.w2;
  }
};

// Same shapes as ShardModel.
struct Gradients {
  Eigen::MatrixXd w1;
  Eigen::MatrixXd w2;

  static Gradients zeros_like(const ShardModel& m) {
    return {Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols()), Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols())};
  }
  Gradients& operator+=(const Gradients& o) {
    w1 += o.w1;
    w2 += o.w2;
    return *this;
  }
  Gradients& operator*=(double c) {
    w1 *= c;
    w2 *= c;
    return *this;
  }
};

// Glorot-uniform weights, bound sqrt(6 / (fan_in + fan_out)).
inline ShardModel init_model(std::size_t feature_dim, std::size_t hidden_dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 21));
  ShardModel m;
  m.w1.resize(static_cast<Eigen::Index>(feature_dim), static_cast<Eigen::Index>(hidden_dim));
  m.w2.resize(static_cast<Eigen::Index>(hidden_dim), 1);
  const double b1 = std::sqrt(6.0 / static_cast<double>(feature_dim + hidden_dim));
  const double b2 = std::sqrt(6.0 / static_cast<double>(hidden_dim + 1));
  for (Eigen::Index i = 0; i < m.w1.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.w1.cols(); ++j) m.w1(i, j) = (2.0 * uniform01(rng) - 1.0) * b1;
  }
  for (Eigen::Index i = 0; i < m.w2.rows(); ++i) m.w2(i, 0) = (2.0 * uniform01(rng) - 1.0) * b2;
  return m;
}

// Graph-side inputs that stay fixed across epochs: Ã and Ã X.
struct GcnInput {
  NormalizedAdjacency adj;
  Eigen::MatrixXd propagated;

  std::size_t num_nodes() const { return adj.size(); }
};

inline GcnInput make_input(const NormalizedAdjacency& adj, const Eigen::MatrixXd& features) {
  if (static_cast<std::size_t>(features.rows()) != adj.size()) {
    throw ValidationError("feature rows do not match adjacency size");
  }
  GcnInput in{adj, Eigen::MatrixXd(adj.matrix * features)};
  return in;
}

inline GcnInput make_input(const Graph& g) { return make_input(normalize_adjacency(g), g.features()); }

inline constexpr double kProbFloor = 1e-7;

struct Predictions {
  Eigen::VectorXd probs;  // clamped to [kProbFloor, 1 - kProbFloor]

  // Backward cache; empty for mixtures that have no single forward pass.
  bool has_cache = false;
  Eigen::VectorXd raw_probs;
  Eigen::MatrixXd pre_hidden;  // Ã X W1
  Eigen::MatrixXd propagated_hidden;  // Ã H
  std::vector<std::uint8_t> clamped;

  std::size_t size() const { return static_cast<std::size_t>(probs.size()); }
};

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Predictions forward(const ShardModel& m, const GcnInput& in) {
  if (static_cast<std::size_t>(in.propagated.cols()) != m.feature_dim()) {
    throw ValidationError("feature dimension " + std::to_string(in.propagated.cols()) +
                          " does not match model input dimension " + std::to_string(m.feature_dim()));
  }
  Predictions p;
  p.has_cache = true;
  p.pre_hidden = in.propagated * m.w1;
  const Eigen::MatrixXd hidden = p.pre_hidden.cwiseMax(0.0);
  p.propagated_hidden = in.adj.matrix * hidden;
  const Eigen::VectorXd logits = p.propagated_hidden * m.w2;
  const auto n = logits.size();
  p.raw_probs.resize(n);
  p.probs.resize(n);
  p.clamped.assign(static_cast<std::size_t>(n), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = sigmoid(logits(i));
    p.raw_probs(i) = s;
    if (s < kProbFloor) {
      p.probs(i) = kProbFloor;
      p.clamped[static_cast<std::size_t>(i)] = 1;
    } else if (s > 1.0 - kProbFloor) {
      p.probs(i) = 1.0 - kProbFloor;
      p.clamped[static_cast<std::size_t>(i)] = 1;
    } else {
      p.probs(i) = s;
    }
  }
  return p;
}

inline Predictions forward(const ShardModel& m, const NormalizedAdjacency& adj, const Eigen::MatrixXd& features) {
  return forward(m, make_input(adj, features));
}

struct LossAndGrad {
  double value = 0.0;
  Eigen::VectorXd grad;  // d value / d prob, one entry per node
};

// Mean binary cross-entropy over `mask`.
inline LossAndGrad utility_loss_with_grad(const Eigen::VectorXd& probs, std::span<const std::uint8_t> labels,
                                          std::span<const NodeId> mask) {
  if (mask.empty()) throw ValidationError("utility loss over an empty node mask");
  LossAndGrad out;
  out.grad = Eigen::VectorXd::Zero(probs.size());
  const double inv = 1.0 / static_cast<double>(mask.size());
  for (NodeId v : mask) {
    const double p = probs(v);
    if (labels[v]) {
      out.value -= std::log(p);
      out.grad(v) = -inv / p;
    } else {
      out.value -= std::log1p(-p);
      out.grad(v) = inv / (1.0 - p);
    }
  }
  out.value *= inv;
  return out;
}

inline double utility_loss(const Predictions& pred, std::span<const std::uint8_t> labels,
                           std::span<const NodeId> mask) {
  return utility_loss_with_grad(pred.probs, labels, mask).value;
}

// Exact reverse-mode gradients of a scalar loss whose gradient with respect
// to the clamped probabilities is `loss_grad`. Clamped entries pass no
// gradient; the ReLU subgradient at 0 is 0.
inline Gradients backward(const ShardModel& m, const Predictions& pred, const GcnInput& in,
                          const Eigen::VectorXd& loss_grad) {
  if (!pred.has_cache) throw ContractError("backward() needs predictions from forward()");
  if (loss_grad.size() != pred.raw_probs.size()) throw ContractError("loss gradient has the wrong length");
  Eigen::VectorXd dlogit(loss_grad.size());
  for (Eigen::Index i = 0; i < dlogit.size(); ++i) {
    const double s = pred.raw_probs(i);
    dlogit(i) = pred.clamped[static_cast<std::size_t>(i)] ? 0.0 : loss_grad(i) * s * (1.0 - s);
  }
  Gradients g;
  g.w2 = pred.propagated_hidden.transpose() * dlogit;
  // Ã is symmetric, so Ãᵀ (dlogit W2ᵀ) = Ã (dlogit W2ᵀ).
  Eigen::MatrixXd dhidden = in.adj.matrix * (dlogit * m.w2.transpose());
  for (Eigen::Index i = 0; i < dhidden.rows(); ++i) {
    for (Eigen::Index j = 0; j < dhidden.cols(); ++j) {
      if (pred.pre_hidden(i, j) <= 0.0) dhidden(i, j) = 0.0;
    }
  }
  g.w1 = in.propagated.transpose() * dhidden;
  return g;
}

inline Gradients backward(const ShardModel& m, const Predictions& pred, const NormalizedAdjacency& adj,
                          const Eigen::MatrixXd& features, const Eigen::VectorXd& loss_grad) {
  return backward(m, pred, make_input(adj, features), loss_grad);
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  AdamConfig config;
  Eigen::MatrixXd m1, v1, m2, v2;
  std::uint64_t step = 0;

  static OptimizerState for_model(const ShardModel& m, const AdamConfig& cfg) {
    OptimizerState s;
    s.config = cfg;
    s.m1 = s.v1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
    s.m2 = s.v2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
    return s;
  }

  friend bool operator==(const OptimizerState& a, const OptimizerState& b) {
    return a.step == b.step && a.m1 == b.m1 && a.v1 == b.v1 && a.m2 == b.m2 && a.v2 == b.v2;
  }
};

namespace detail {

inline void adam_update(Eigen::MatrixXd& w, Eigen::MatrixXd& m, Eigen::MatrixXd& v, const Eigen::MatrixXd& g,
                        const AdamConfig& c, double bias1, double bias2) {
  w *= 1.0 - c.learning_rate * c.weight_decay;
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double mhat = m(i) / bias1;
    const double vhat = v(i) / bias2;
    w(i) -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
  }
}

}  // namespace detail

// Adam with decoupled weight decay (decay applied to the weights before the
// moment update, as in AdamW).
inline void adam_step(ShardModel& m, OptimizerState& s, const Gradients& g) {
  if (g.w1.rows() != m.w1.rows() || g.w1.cols() != m.w1.cols() || g.w2.rows() != m.w2.rows() ||
      g.w2.cols() != m.w2.cols()) {
    throw ValidationError("gradient shapes do not match the model");
  }
  if (!g.w1.allFinite()) throw NumericError("non-finite gradient in w1");
  if (!g.w2.allFinite()) throw NumericError("non-finite gradient in w2");
  ++s.step;
  const double bias1 = 1.0 - std::pow(s.config.beta1, static_cast<double>(s.step));
  const double bias2 = 1.0 - std::pow(s.config.beta2, static_cast<double>(s.step));
  detail::adam_update(m.w1, s.m1, s.v1, g.w1, s.config, bias1, bias2);
  detail::adam_update(m.w2, s.m2, s.v2, g.w2, s.config, bias1, bias2);
}

// 1 where p >= 0.5.
inline std::vector<std::uint8_t> predict_labels(const Eigen::VectorXd& probs) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(probs.size()));
  for (Eigen::Index i = 0; i < probs.size(); ++i) out[static_cast<std::size_t>(i)] = probs(i) >= 0.5 ? 1 : 0;
  return out;
}

inline std::vector<std::uint8_t> predict_labels(const Predictions& pred) { return predict_labels(pred.probs); }

// Full-batch training hyperparameters shared by shard models and baselines.
struct TrainConfig {
  std::size_t hidden_dim = 16;
  std::size_t epochs = 100;
  AdamConfig adam;
  std::uint64_t seed = 0;
};

// One full-batch Adam step on the mean cross-entropy over `mask`.
inline double train_step(ShardModel& m, OptimizerState& opt, const GcnInput& in,
                         std::span<const std::uint8_t> labels, std::span<const NodeId> mask) {
  const Predictions pred = forward(m, in);
  const LossAndGrad loss = utility_loss_with_grad(pred.probs, labels, mask);
  adam_step(m, opt, backward(m, pred, in, loss.grad));
  return loss.value;
}

// ---- checkpoints -----------------------------------------------------------
//
// Little-endian u64 header (magic, version, K, feature_dim, hidden_dim)
// followed by each model's W1 then W2 as row-major f64.

inline constexpr std::uint64_t kModelMagic = 0x4c45444f4d554746ULL;  // "FGUMODEL"
inline constexpr std::uint64_t kCheckpointVersion = 1;

inline void write_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) io::write_f64(out, m(i, j));
  }
}

inline void read_matrix(std::istream& in, Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols) {
  m.resize(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = io::read_f64(in);
  }
}

inline void write_models(std::ostream& out, std::span<const ShardModel> models) {
  if (models.empty()) throw ValidationError("no models to write");
  io::write_u64(out, kModelMagic);
  io::write_u64(out, kCheckpointVersion);
  io::write_u64(out, models.size());
  io::write_u64(out, models.front().feature_dim());
  io::write_u64(out, models.front().hidden_dim());
  for (const auto& m : models) {
    if (m.feature_dim() != models.front().feature_dim() || m.hidden_dim() != models.front().hidden_dim()) {
      throw ValidationError("models in one checkpoint must share dimensions");
    }
    write_matrix(out, m.w1);
    write_matrix(out, m.w2);
  }
}

inline std::vector<ShardModel> read_models(std::istream& in) {
  if (io::read_u64(in) != kModelMagic) throw ParseError("not a model checkpoint");
  if (io::read_u64(in) != kCheckpointVersion) throw ParseError("unsupported checkpoint version");
  const auto k = io::read_u64(in);
  const auto d = static_cast<Eigen::Index>(io::read_u64(in));
  const auto h = static_cast<Eigen::Index>(io::read_u64(in));
  if (k > (1u << 20) || d > (1 << 24) || h > (1 << 24)) throw ParseError("implausible checkpoint header");
  std::vector<ShardModel> models(k);
  for (auto& m : models) {
    read_matrix(in, m.w1, d, h);
    read_matrix(in, m.w2, h, 1);
  }
  return models;
}

inline void save_models(const std::string& path, std::span<const ShardModel> models) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  write_models(out, models);
}

inline std::vector<ShardModel> load_models(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  return read_models(in);
}

}  // namespace fgu
