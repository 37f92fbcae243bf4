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

#include <Eigen/Core>
#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fgu/common.hpp"
#include "fgu/fairness.hpp"
#include "fgu/gcn.hpp"
#include "fgu/graph.hpp"
#include "fgu/mia.hpp"
#include "fgu/partition.hpp"
#include "fgu/request.hpp"
#include "fgu/trainer.hpp"
#include "fgu/unlearn.hpp"

namespace fgu {

inline constexpr const char* kVersion = "0.1.0";

enum class Method : std::uint8_t { kFgu, kRetrain, kFairRetrain };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kFgu: return "fgu";
    case Method::kRetrain: return "retrain";
    case Method::kFairRetrain: return "fair_retrain";
  }
  return "fgu";
}

inline Method parse_method(const std::string& s) {
  if (s == "fgu") return Method::kFgu;
  if (s == "retrain") return Method::kRetrain;
  if (s == "fair_retrain") return Method::kFairRetrain;
  throw ValidationError("unknown method '" + s + "' (expected fgu, retrain or fair_retrain)");
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

struct MiaOptions {
  bool enabled = false;
  std::size_t num_shadows = 20;
};

struct ExperimentConfig {
  // Node and edge files; an SBM draw per seed when both are empty.
  std::string node_file;
  std::string edge_file;
  SbmSpec sbm;
  FguConfig fgu;
  std::vector<double> node_ratios{0.05, 0.1, 0.2};
  std::vector<double> edge_ratios{0.1};
  DeletionStrategy strategy = DeletionStrategy::kUniform;
  std::vector<Method> methods{Method::kFgu, Method::kRetrain, Method::kFairRetrain};
  // Sweep grids; fgu.alpha / fgu.beta when empty.
  std::vector<double> alphas;
  std::vector<double> betas;
  std::vector<std::uint64_t> seeds{0};
  MiaOptions mia;
  std::string output_dir = "results";

  bool uses_files() const { return !node_file.empty() || !edge_file.empty(); }
  std::vector<double> alpha_grid() const { return alphas.empty() ? std::vector<double>{fgu.alpha} : alphas; }
  std::vector<double> beta_grid() const { return betas.empty() ? std::vector<double>{fgu.beta} : betas; }

  void validate() const {
    if (methods.empty()) throw ValidationError("at least one method is required");
    if (seeds.empty()) throw ValidationError("at least one seed is required");
    auto sorted = seeds;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw ValidationError("seeds must be distinct");
    }
    if (node_file.empty() != edge_file.empty()) throw ValidationError("node and edge files must be given together");
    if (!uses_files()) fgu::validate(sbm);
    if (node_ratios.empty() || edge_ratios.empty()) throw ValidationError("ratio lists must be non-empty");
    for (double r : node_ratios) {
      if (!(r >= 0.0 && r < 1.0)) throw ValidationError("r_n must lie in [0, 1)");
    }
    for (double r : edge_ratios) {
      if (!(r >= 0.0 && r < 1.0)) throw ValidationError("r_e must lie in [0, 1)");
    }
    if (strategy == DeletionStrategy::kExplicit) throw ValidationError("grid runs sample requests; use unlearn for explicit ones");
    for (double a : alpha_grid()) {
      if (a < 0) throw ValidationError("alpha values must be non-negative");
    }
    for (double b : beta_grid()) {
      if (b < 0) throw ValidationError("beta values must be non-negative");
    }
    if (mia.enabled && mia.num_shadows < 2) throw ValidationError("at least 2 shadow models are required");
    fgu.validate();
  }

  std::string dataset_canonical() const {
    if (uses_files()) return "nodes=" + node_file + ";edges=" + edge_file;
    return "sbm:n=" + std::to_string(sbm.nodes_per_block) + ";p_in=" + format_double(sbm.intra_edge_prob) +
           ";p_out=" + format_double(sbm.inter_edge_prob) + ";corr=" + format_double(sbm.label_sensitive_correlation) +
           ";d=" + std::to_string(sbm.feature_dim) + ";shift=" + format_double(sbm.feature_shift) +
           ";train=" + format_double(sbm.train_fraction) + ";val=" + format_double(sbm.val_fraction);
  }

  std::string canonical() const {
    std::string s = dataset_canonical() + "|" + fgu.canonical() + "|strategy=" + to_string(strategy) + "|methods=";
    for (Method m : methods) s += to_string(m) + ";";
    auto list = [](const std::vector<double>& v) {
      std::string out;
      for (double x : v) out += format_double(x) + ";";
      return out;
    };
    s += "|r_n=" + list(node_ratios) + "|r_e=" + list(edge_ratios) + "|alphas=" + list(alpha_grid()) +
         "|betas=" + list(beta_grid()) + "|seeds=";
    for (auto seed : seeds) s += std::to_string(seed) + ";";
    s += "|mia=" + std::string(mia.enabled ? "1" : "0") + ";shadows=" + std::to_string(mia.num_shadows);
    return s;
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }
};

namespace detail {

inline std::vector<std::string> parse_list(const std::string& value) {
  std::string body = trim(value);
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  if (trim(body).empty()) return out;
  for (auto& item : split_fields(body, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_value(const std::string& key, const std::string& value) {
  T out{};
  if (!parse_number(trim(value), out)) throw ValidationError("bad value '" + value + "' for " + key);
  return out;
}

template <typename T>
std::vector<T> parse_values(const std::string& key, const std::string& value) {
  std::vector<T> out;
  for (const auto& item : parse_list(value)) out.push_back(parse_value<T>(key, item));
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  const std::string v = trim(value);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ValidationError("bad boolean '" + value + "' for " + key);
}

}  // namespace detail

// Applies one `key=value` setting. Lists use `[a,b,c]`.
inline void apply_setting(ExperimentConfig& c, const std::string& raw_key, const std::string& value) {
  using detail::parse_value;
  using detail::parse_values;
  const std::string key = detail::trim(raw_key);
  const std::string v = detail::trim(value);
  if (key == "nodes") c.node_file = v;
  else if (key == "edges") c.edge_file = v;
  else if (key == "sbm.nodes_per_block") c.sbm.nodes_per_block = parse_value<std::size_t>(key, v);
  else if (key == "sbm.intra") c.sbm.intra_edge_prob = parse_value<double>(key, v);
  else if (key == "sbm.inter") c.sbm.inter_edge_prob = parse_value<double>(key, v);
  else if (key == "sbm.correlation") c.sbm.label_sensitive_correlation = parse_value<double>(key, v);
  else if (key == "sbm.feature_dim") c.sbm.feature_dim = parse_value<std::size_t>(key, v);
  else if (key == "sbm.feature_shift") c.sbm.feature_shift = parse_value<double>(key, v);
  else if (key == "sbm.train_fraction") c.sbm.train_fraction = parse_value<double>(key, v);
  else if (key == "sbm.val_fraction") c.sbm.val_fraction = parse_value<double>(key, v);
  else if (key == "shards") c.fgu.num_shards = parse_value<std::size_t>(key, v);
  else if (key == "alpha") c.fgu.alpha = parse_value<double>(key, v);
  else if (key == "beta") c.fgu.beta = parse_value<double>(key, v);
  else if (key == "shard_alpha") c.fgu.shard_alpha = parse_value<double>(key, v);
  else if (key == "shard_beta") c.fgu.shard_beta = parse_value<double>(key, v);
  else if (key == "t1") c.fgu.t1 = parse_value<std::size_t>(key, v);
  else if (key == "hidden") c.fgu.train.hidden_dim = parse_value<std::size_t>(key, v);
  else if (key == "epochs") c.fgu.train.epochs = parse_value<std::size_t>(key, v);
  else if (key == "lr") c.fgu.train.adam.learning_rate = parse_value<double>(key, v);
  else if (key == "weight_decay") c.fgu.train.adam.weight_decay = parse_value<double>(key, v);
  else if (key == "lambda_lr") c.fgu.lambda_lr = parse_value<double>(key, v);
  else if (key == "aggregation") c.fgu.aggregation = parse_aggregation(v);
  else if (key == "lambda_sample_fraction") c.fgu.lambda_sample_fraction = parse_value<double>(key, v);
  else if (key == "r_n") c.node_ratios = parse_values<double>(key, v);
  else if (key == "r_e") c.edge_ratios = parse_values<double>(key, v);
  else if (key == "strategy") c.strategy = parse_strategy(v);
  else if (key == "methods") {
    c.methods.clear();
    for (const auto& m : detail::parse_list(v)) c.methods.push_back(parse_method(m));
  } else if (key == "alphas") c.alphas = parse_values<double>(key, v);
  else if (key == "betas") c.betas = parse_values<double>(key, v);
  else if (key == "seeds") c.seeds = parse_values<std::uint64_t>(key, v);
  else if (key == "mia") c.mia.enabled = detail::parse_bool(key, v);
  else if (key == "mia.shadows") c.mia.num_shadows = parse_value<std::size_t>(key, v);
  else if (key == "output") c.output_dir = v;
  else throw ValidationError("unknown setting '" + key + "'");
}

// Flat `key=value` lines; `#` starts a comment.
inline ExperimentConfig parse_experiment_config(std::istream& in, const std::string& name = "<config>") {
  ExperimentConfig c;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(name + ":" + std::to_string(lineno) + ": expected key=value");
    try {
      apply_setting(c, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ParseError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  return parse_experiment_config(in, path);
}

struct ResultRow {
  std::string method;
  double r_n = 0.0;
  double r_e = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<FairnessReport> report;
  std::optional<double> attack_accuracy;
  std::uint64_t config_hash = 0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
};

inline constexpr const char* kResultsCsvHeader =
    "method,r_n,r_e,seed,alpha,beta,accuracy,f1,delta_dp,delta_eo,attack_accuracy,config_hash,status";

namespace detail {

inline std::string csv_optional(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch == '\n' ? ' ' : ch;
  }
  return out + "\"";
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, 16);
  return std::string(16 - static_cast<std::size_t>(ptr - buf), '0') + std::string(buf, ptr);
}

}  // namespace detail

inline void write_result_row(std::ostream& out, const ResultRow& r) {
  using detail::csv_optional;
  out << r.method << ',' << format_double(r.r_n) << ',' << format_double(r.r_e) << ',' << r.seed << ','
      << csv_optional(r.alpha) << ',' << csv_optional(r.beta) << ',';
  if (r.report) {
    out << format_double(r.report->accuracy) << ',' << format_double(r.report->f1) << ','
        << format_double(r.report->delta_dp) << ',' << format_double(r.report->delta_eo) << ',';
  } else {
    out << ",,,,";
  }
  out << csv_optional(r.attack_accuracy) << ',' << detail::hex64(r.config_hash) << ','
      << detail::csv_quote(r.status) << '\n';
}

inline constexpr const char* kMiaCsvHeader = "method,r_n,seed,attack_accuracy";

inline void write_mia_row(std::ostream& out, const std::string& method, double r_n, std::uint64_t seed,
                          double attack_accuracy) {
  out << method << ',' << format_double(r_n) << ',' << seed << ',' << format_double(attack_accuracy) << '\n';
}

struct TradeoffPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double accuracy = 0.0;
  double delta_dp = 0.0;
  std::optional<double> attack_accuracy;
  // ΔDP along increasing alpha (same beta) has an interior minimum.
  bool u_shape = false;
};

// Successful rows carrying (alpha, beta) are averaged per (alpha, beta)
// and sorted by (alpha, beta).
inline std::vector<TradeoffPoint> tradeoff_points(std::span<const ResultRow> rows) {
  struct Acc {
    double accuracy = 0, delta_dp = 0, attack = 0;
    std::size_t n = 0, n_attack = 0;
  };
  std::map<std::pair<double, double>, Acc> groups;
  for (const auto& r : rows) {
    if (!r.ok() || !r.alpha || !r.beta || !r.report) continue;
    auto& a = groups[{*r.alpha, *r.beta}];
    a.accuracy += r.report->accuracy;
    a.delta_dp += r.report->delta_dp;
    ++a.n;
    if (r.attack_accuracy) {
      a.attack += *r.attack_accuracy;
      ++a.n_attack;
    }
  }
  if (groups.empty()) throw ValidationError("no successful rows with alpha and beta to summarize");
  std::vector<TradeoffPoint> points;
  for (const auto& [key, a] : groups) {
    TradeoffPoint p;
    p.alpha = key.first;
    p.beta = key.second;
    p.accuracy = a.accuracy / static_cast<double>(a.n);
    p.delta_dp = a.delta_dp / static_cast<double>(a.n);
    if (a.n_attack) p.attack_accuracy = a.attack / static_cast<double>(a.n_attack);
    points.push_back(p);
  }
  std::map<double, std::vector<std::size_t>> by_beta;
  for (std::size_t i = 0; i < points.size(); ++i) by_beta[points[i].beta].push_back(i);
  for (auto& [beta, idx] : by_beta) {
    std::sort(idx.begin(), idx.end(), [&](auto x, auto y) { return points[x].alpha < points[y].alpha; });
    std::size_t best = 0;
    for (std::size_t j = 1; j < idx.size(); ++j) {
      if (points[idx[j]].delta_dp < points[idx[best]].delta_dp) best = j;
    }
    const bool u = idx.size() >= 3 && best > 0 && best + 1 < idx.size();
    for (auto i : idx) points[i].u_shape = u;
  }
  return points;
}

inline constexpr const char* kTradeoffCsvHeader = "alpha,beta,accuracy,delta_dp,attack_accuracy,u_shape";

inline void emit_tradeoff(std::ostream& out, std::span<const ResultRow> rows) {
  out << kTradeoffCsvHeader << '\n';
  for (const auto& p : tradeoff_points(rows)) {
    out << format_double(p.alpha) << ',' << format_double(p.beta) << ',' << format_double(p.accuracy) << ','
        << format_double(p.delta_dp) << ',' << detail::csv_optional(p.attack_accuracy) << ','
        << (p.u_shape ? "true" : "false") << '\n';
  }
}

struct MiaRecord {
  std::string method;
  double r_n = 0.0;
  std::uint64_t seed = 0;
  double attack_accuracy = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<MiaRecord> mia;
  std::size_t failed_cells() const {
    return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.ok(); }));
  }
};

namespace detail {

// A shared pipeline stage computed at most once; a failure is replayed to
// every cell that depends on it.
template <typename T>
class Stage {
 public:
  template <typename F>
  const T& get(F&& compute) {
    if (!done_) {
      done_ = true;
      try {
        value_.emplace(compute());
      } catch (const std::exception& e) {
        error_ = e.what();
      }
    }
    if (!value_) throw std::runtime_error(error_);
    return *value_;
  }

 private:
  bool done_ = false;
  std::optional<T> value_;
  std::string error_;
};

struct Attack {
  AttackModel model;
};

}  // namespace detail

// The grid for one seed: graph, partition, initial shard training and
// (optionally) the shadow attack are shared by every cell of that seed.
inline ExperimentResult run_grid(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  std::optional<Graph> file_graph;
  std::string file_error;
  if (cfg.uses_files()) {
    try {
      file_graph = load_graph(cfg.node_file, cfg.edge_file);
    } catch (const std::exception& e) {
      file_error = e.what();
    }
  }
  const std::string dataset = cfg.dataset_canonical();

  for (std::uint64_t seed : cfg.seeds) {
    FguConfig fcfg = cfg.fgu;
    fcfg.train.seed = seed;

    detail::Stage<Graph> graph_stage;
    auto graph = [&]() -> const Graph& {
      return graph_stage.get([&] {
        if (cfg.uses_files()) {
          if (!file_graph) throw ParseError(file_error);
          return *file_graph;
        }
        SbmSpec spec = cfg.sbm;
        spec.seed = seed;
        return generate_sbm(spec);
      });
    };
    detail::Stage<Partition> partition_stage;
    auto partition = [&]() -> const Partition& {
      return partition_stage.get([&] { return balanced_partition(graph(), fcfg.num_shards, seed); });
    };
    detail::Stage<FguState> shards_stage;
    auto trained = [&]() -> const FguState& {
      return shards_stage.get([&] {
        std::vector<Graph> shard_graphs;
        for (const auto& s : partition().shards) shard_graphs.push_back(s.graph);
        return train_shards(shard_graphs, graph(), fcfg);
      });
    };
    detail::Stage<detail::Attack> attack_stage;
    auto attack = [&]() -> const AttackModel& {
      return attack_stage
          .get([&] {
            const auto shadows = train_shadows(graph(), fcfg.train, cfg.mia.num_shadows);
            const auto ds = build_attack_dataset(shadows, graph(), seed);
            AttackFitConfig fit;
            fit.seed = seed;
            return detail::Attack{fit_attack(ds, fit)};
          })
          .model;
    };
    detail::Stage<ShardModel> original_stage;

    for (double r_n : cfg.node_ratios) {
      for (double r_e : cfg.edge_ratios) {
        detail::Stage<UnlearnRequest> request_stage;
        auto request = [&]() -> const UnlearnRequest& {
          return request_stage.get([&] {
            DeletionSpec spec;
            spec.node_ratio = r_n;
            spec.edge_ratio = r_e;
            spec.strategy = cfg.strategy;
            spec.seed = seed;
            return sample_request(graph(), spec);
          });
        };
        detail::Stage<PartitionedDeletion> deletion_stage;
        auto deletion = [&]() -> const PartitionedDeletion& {
          return deletion_stage.get([&] { return apply_to_partition(graph(), partition(), request()); });
        };

        // Posteriors over the original graph for the deleted-node audit.
        auto audit = [&](const Eigen::VectorXd& probs) -> std::optional<double> {
          if (!cfg.mia.enabled || request().nodes.empty()) return std::nullopt;
          const AuditProbe probe = deletion_probe(graph(), request(), seed);
          return run_attack(attack(), probs, graph(), probe.members, probe.nonmembers, seed);
        };

        if (cfg.mia.enabled) {
          try {
            const ShardModel& original = original_stage.get(
                [&] { return train_gcn(make_input(graph()), graph(), graph().mask(Split::kTrain), fcfg.train); });
            if (auto acc = audit(forward(original, make_input(graph())).probs)) {
              result.mia.push_back({"original", r_n, seed, *acc});
            }
          } catch (const std::exception&) {
            // Reported through the method rows below.
          }
        }

        auto run_cell = [&](Method method, std::optional<double> alpha, std::optional<double> beta) {
          ResultRow row;
          row.method = to_string(method);
          row.r_n = r_n;
          row.r_e = r_e;
          row.seed = seed;
          row.alpha = alpha;
          row.beta = beta;
          FguConfig cell = fcfg;
          if (alpha) cell.alpha = *alpha;
          if (beta) cell.beta = *beta;
          row.config_hash = fnv1a(dataset + "|" + row.method + "|" + cell.canonical() + "|strategy=" +
                                  to_string(cfg.strategy) + "|r_n=" + format_double(r_n) +
                                  "|r_e=" + format_double(r_e) + "|mia=" + (cfg.mia.enabled ? "1" : "0") +
                                  ";shadows=" + std::to_string(cfg.mia.num_shadows));
          try {
            const PartitionedDeletion& del = deletion();
            Eigen::VectorXd probs_prime;
            Eigen::VectorXd probs_original;
            if (method == Method::kFgu) {
              const FguState state = fgu_unlearn_retrain(trained(), del.updated_shards, del.dirty, del.g_prime, cell);
              probs_prime = aggregate(state, del.g_prime, cell.aggregation).probs;
              if (cfg.mia.enabled) probs_original = aggregate(state, graph(), cell.aggregation).probs;
            } else {
              const BaselineResult base = method == Method::kRetrain
                                              ? retrain_baseline(del.g_prime, cell.train)
                                              : fair_retrain_baseline(del.g_prime, cell.train, cell.alpha);
              probs_prime = forward(base.model, make_input(del.g_prime)).probs;
              if (cfg.mia.enabled) probs_original = forward(base.model, make_input(graph())).probs;
            }
            row.report = evaluate_on_test(probs_prime, del.g_prime);
            if (cfg.mia.enabled) {
              row.attack_accuracy = audit(probs_original);
              if (row.attack_accuracy) result.mia.push_back({row.method, r_n, seed, *row.attack_accuracy});
            }
          } catch (const std::exception& e) {
            row.report.reset();
            row.attack_accuracy.reset();
            row.status = std::string("error: ") + e.what();
          }
          result.rows.push_back(std::move(row));
        };

        for (Method method : cfg.methods) {
          switch (method) {
            case Method::kRetrain:
              run_cell(method, std::nullopt, std::nullopt);
              break;
            case Method::kFairRetrain:
              for (double a : cfg.alpha_grid()) run_cell(method, a, std::nullopt);
              break;
            case Method::kFgu:
              for (double b : cfg.beta_grid()) {
                for (double a : cfg.alpha_grid()) run_cell(method, a, b);
              }
              break;
          }
        }
      }
    }
  }
  return result;
}

struct ExperimentOutputs {
  ExperimentResult result;
  std::vector<std::string> files;
};

// Runs the grid and writes results.csv, tradeoff.csv (when FGU rows
// succeeded), mia.csv (when enabled) and manifest.json under output_dir.
inline ExperimentOutputs run_experiment(const ExperimentConfig& cfg) {
  ExperimentOutputs out;
  out.result = run_grid(cfg);
  const std::filesystem::path dir(cfg.output_dir);
  std::filesystem::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw ValidationError("cannot write " + (dir / name).string());
    out.files.push_back(name);
    return f;
  };
  {
    auto f = open("results.csv");
    f << kResultsCsvHeader << '\n';
    for (const auto& r : out.result.rows) write_result_row(f, r);
  }
  const bool has_tradeoff = std::any_of(out.result.rows.begin(), out.result.rows.end(),
                                        [](const auto& r) { return r.ok() && r.alpha && r.beta; });
  if (has_tradeoff) {
    auto f = open("tradeoff.csv");
    emit_tradeoff(f, out.result.rows);
  }
  if (cfg.mia.enabled) {
    auto f = open("mia.csv");
    f << kMiaCsvHeader << '\n';
    for (const auto& m : out.result.mia) write_mia_row(f, m.method, m.r_n, m.seed, m.attack_accuracy);
  }
  nlohmann::ordered_json manifest;
  manifest["version"] = kVersion;
  manifest["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION);
  manifest["config_hash"] = detail::hex64(cfg.hash());
  manifest["config"] = cfg.canonical();
  manifest["seeds"] = cfg.seeds;
  manifest["cells"] = out.result.rows.size();
  manifest["failed_cells"] = out.result.failed_cells();
  manifest["files"] = out.files;
  std::ofstream f(dir / "manifest.json", std::ios::binary);
  if (!f) throw ValidationError("cannot write " + (dir / "manifest.json").string());
  f << manifest.dump(2) << '\n';
  out.files.push_back("manifest.json");
  return out;
}

}  // namespace fgu
