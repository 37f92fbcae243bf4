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

// Command-line front end: synthetic data, partitioning, shard training,
// unlearning, evaluation, membership audits and experiment grids.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "fgu/fgu.hpp"

namespace {

using fgu::ExperimentConfig;

struct Common {
  std::string config_file;
  std::vector<std::string> settings;
  std::optional<double> alpha, beta;
  std::optional<std::size_t> shards, epochs, hidden;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  void add_to(CLI::App* app) {
    app->add_option("--config", config_file, "key=value experiment config file")->check(CLI::ExistingFile);
    app->add_option("--set", settings, "override a config key, e.g. --set alpha=3.0");
    app->add_option("--alpha", alpha, "global fairness weight");
    app->add_option("--beta", beta, "weight of the global objective in shard losses");
    app->add_option("--shards", shards, "number of shards K");
    app->add_option("--epochs", epochs, "training epochs");
    app->add_option("--hidden", hidden, "hidden units");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--seed", seed, "random seed");
  }

  ExperimentConfig resolve() const {
    ExperimentConfig c = config_file.empty() ? ExperimentConfig{} : fgu::load_experiment_config(config_file);
    for (const auto& kv : settings) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw fgu::ValidationError("--set expects key=value, got '" + kv + "'");
      fgu::apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (alpha) c.fgu.alpha = *alpha;
    if (beta) c.fgu.beta = *beta;
    if (shards) c.fgu.num_shards = *shards;
    if (epochs) c.fgu.train.epochs = *epochs;
    if (hidden) c.fgu.train.hidden_dim = *hidden;
    if (lr) c.fgu.train.adam.learning_rate = *lr;
    if (seed) c.seeds = {*seed};
    c.fgu.train.seed = c.seeds.front();
    return c;
  }
};

struct GraphFiles {
  std::string nodes, edges;

  void add_to(CLI::App* app) {
    app->add_option("--nodes", nodes, "node table")->required()->check(CLI::ExistingFile);
    app->add_option("--edges", edges, "edge list")->required()->check(CLI::ExistingFile);
  }
  fgu::Graph load() const { return fgu::load_graph(nodes, edges); }
};

std::vector<fgu::Graph> shard_graphs(const fgu::Partition& p) {
  std::vector<fgu::Graph> out;
  for (const auto& s : p.shards) out.push_back(s.graph);
  return out;
}

void print_report(const std::string& method, const fgu::FairnessReport& r, double r_n, double r_e,
                  std::uint64_t seed) {
  std::cout << fgu::kReportCsvHeader << '\n';
  fgu::write_report_row(std::cout, method, r_n, r_e, seed, r);
  std::cout << '\n';
}

int run_grid_command(const ExperimentConfig& cfg) {
  const auto out = fgu::run_experiment(cfg);
  const std::size_t failed = out.result.failed_cells();
  std::cerr << out.result.rows.size() << " cells, " << failed << " failed; wrote";
  for (const auto& f : out.files) std::cerr << ' ' << cfg.output_dir << '/' << f;
  std::cerr << '\n';
  for (const auto& r : out.result.rows) {
    if (!r.ok()) std::cerr << "  " << r.method << " r_n=" << r.r_n << " seed=" << r.seed << ": " << r.status << '\n';
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair graph unlearning toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "draw a biased two-block SBM graph");
  Common synth_common;
  synth_common.add_to(synth);
  std::string synth_nodes, synth_edges;
  synth->add_option("--out-nodes", synth_nodes, "node table to write")->required();
  synth->add_option("--out-edges", synth_edges, "edge list to write")->required();

  // partition
  auto* part = app.add_subcommand("partition", "balanced label-propagation sharding");
  Common part_common;
  part_common.add_to(part);
  GraphFiles part_graph;
  part_graph.add_to(part);
  std::string part_out;
  part->add_option("--out", part_out, "assignment file to write")->required();

  // train
  auto* train = app.add_subcommand("train", "train shard models and importance weights");
  Common train_common;
  train_common.add_to(train);
  GraphFiles train_graph;
  train_graph.add_to(train);
  std::string train_assignment, train_out;
  train->add_option("--assignment", train_assignment, "assignment file (partitioned on the fly if absent)");
  train->add_option("--out", train_out, "state checkpoint to write")->required();

  // unlearn
  auto* unlearn = app.add_subcommand("unlearn", "apply a deletion request and run the debiasing retrain");
  Common unlearn_common;
  unlearn_common.add_to(unlearn);
  GraphFiles unlearn_graph;
  unlearn_graph.add_to(unlearn);
  std::string unlearn_assignment, unlearn_state, unlearn_request, unlearn_out, unlearn_request_out;
  std::string unlearn_out_nodes, unlearn_out_edges;
  double unlearn_rn = 0.1, unlearn_re = 0.1;
  std::string unlearn_strategy = "uniform";
  unlearn->add_option("--assignment", unlearn_assignment, "assignment file")->required()->check(CLI::ExistingFile);
  unlearn->add_option("--state", unlearn_state, "state checkpoint from train")->required()->check(CLI::ExistingFile);
  unlearn->add_option("--request", unlearn_request, "request file; sampled when absent")->check(CLI::ExistingFile);
  unlearn->add_option("--r-n", unlearn_rn, "node deletion ratio for a sampled request");
  unlearn->add_option("--r-e", unlearn_re, "edge deletion ratio for a sampled request");
  unlearn->add_option("--strategy", unlearn_strategy, "uniform, privileged or unprivileged");
  unlearn->add_option("--request-out", unlearn_request_out, "write the executed request");
  unlearn->add_option("--out-nodes", unlearn_out_nodes, "write the post-deletion node table");
  unlearn->add_option("--out-edges", unlearn_out_edges, "write the post-deletion edge list");
  unlearn->add_option("--out", unlearn_out, "unlearned state checkpoint to write")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "accuracy and fairness of the aggregated model on test nodes");
  Common eval_common;
  eval_common.add_to(eval);
  GraphFiles eval_graph;
  eval_graph.add_to(eval);
  std::string eval_state;
  eval->add_option("--state", eval_state, "state checkpoint")->required()->check(CLI::ExistingFile);

  // mia
  auto* mia = app.add_subcommand("mia", "membership-inference audit of deleted nodes");
  Common mia_common;
  mia_common.add_to(mia);
  GraphFiles mia_graph;
  mia_graph.add_to(mia);
  std::string mia_state, mia_request;
  std::size_t mia_shadows = 20;
  mia->add_option("--state", mia_state, "state checkpoint to audit")->required()->check(CLI::ExistingFile);
  mia->add_option("--request", mia_request, "executed request (members = its nodes)")
      ->required()
      ->check(CLI::ExistingFile);
  mia->add_option("--shadows", mia_shadows, "number of shadow models");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "FGU alpha/beta trade-off sweep");
  Common sweep_common;
  sweep_common.add_to(sweep);
  std::vector<double> sweep_alphas{0.5, 1.5, 3.0, 5.0, 7.0};
  std::vector<double> sweep_betas;
  std::string sweep_out;
  sweep->add_option("--alphas", sweep_alphas, "alpha grid");
  sweep->add_option("--betas", sweep_betas, "beta grid (configured beta when empty)");
  sweep->add_option("--out", sweep_out, "output directory");

  // run
  auto* run = app.add_subcommand("run", "full experiment grid");
  Common run_common;
  run_common.add_to(run);
  std::string run_out;
  run->add_option("--out", run_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      const ExperimentConfig c = synth_common.resolve();
      fgu::SbmSpec spec = c.sbm;
      spec.seed = c.seeds.front();
      const fgu::Graph g = fgu::generate_sbm(spec);
      fgu::save_graph(g, synth_nodes, synth_edges);
      std::cerr << g.num_nodes() << " nodes, " << g.num_edges() << " edges\n";
    } else if (*part) {
      const ExperimentConfig c = part_common.resolve();
      const fgu::Graph g = part_graph.load();
      const fgu::Partition p = fgu::balanced_partition(g, c.fgu.num_shards, c.seeds.front());
      fgu::save_assignment(part_out, p, g);
      for (auto s : p.sizes()) std::cerr << s << ' ';
      std::cerr << '\n';
    } else if (*train) {
      const ExperimentConfig c = train_common.resolve();
      const fgu::Graph g = train_graph.load();
      const fgu::Partition p = train_assignment.empty()
                                   ? fgu::balanced_partition(g, c.fgu.num_shards, c.seeds.front())
                                   : fgu::load_assignment(train_assignment, g);
      const fgu::FguState state = fgu::train_shards(shard_graphs(p), g, c.fgu);
      fgu::save_state(train_out, state, c.fgu.hash());
      for (const auto& e : state.events) std::cerr << e << '\n';
    } else if (*unlearn) {
      const ExperimentConfig c = unlearn_common.resolve();
      const fgu::Graph g = unlearn_graph.load();
      const fgu::Partition p = fgu::load_assignment(unlearn_assignment, g);
      const fgu::LoadedState loaded = fgu::load_state(unlearn_state);
      fgu::UnlearnRequest req;
      if (unlearn_request.empty()) {
        fgu::DeletionSpec spec;
        spec.node_ratio = unlearn_rn;
        spec.edge_ratio = unlearn_re;
        spec.strategy = fgu::parse_strategy(unlearn_strategy);
        spec.seed = c.seeds.front();
        req = fgu::sample_request(g, spec);
        if (!unlearn_request_out.empty()) fgu::save_request(unlearn_request_out, fgu::to_external_ids(req, g), &spec);
      } else {
        req = fgu::to_internal_ids(fgu::load_request(unlearn_request), g);
        if (!unlearn_request_out.empty()) fgu::save_request(unlearn_request_out, fgu::to_external_ids(req, g));
      }
      const fgu::PartitionedDeletion del = fgu::apply_to_partition(g, p, req);
      const fgu::FguState state =
          fgu::fgu_unlearn_retrain(loaded.state, del.updated_shards, del.dirty, del.g_prime, c.fgu);
      fgu::save_state(unlearn_out, state, c.fgu.hash());
      if (!unlearn_out_nodes.empty() || !unlearn_out_edges.empty()) {
        if (unlearn_out_nodes.empty() || unlearn_out_edges.empty()) {
          throw fgu::ValidationError("--out-nodes and --out-edges must be given together");
        }
        fgu::save_graph(del.g_prime, unlearn_out_nodes, unlearn_out_edges);
      }
      std::cerr << req.nodes.size() << " nodes, " << req.edges.size() << " edges deleted; " << del.dirty.size()
                << " of " << p.k << " shards retrained from scratch\n";
      print_report("fgu", fgu::evaluate_on_test(fgu::aggregate(state, del.g_prime, c.fgu.aggregation).probs, del.g_prime),
                   unlearn_rn, unlearn_re, c.seeds.front());
    } else if (*eval) {
      const ExperimentConfig c = eval_common.resolve();
      const fgu::Graph g = eval_graph.load();
      const fgu::LoadedState loaded = fgu::load_state(eval_state);
      const auto probs = fgu::aggregate(loaded.state, g, c.fgu.aggregation).probs;
      print_report("fgu", fgu::evaluate_on_test(probs, g), 0.0, 0.0, c.seeds.front());
    } else if (*mia) {
      const ExperimentConfig c = mia_common.resolve();
      const fgu::Graph g = mia_graph.load();
      const fgu::LoadedState loaded = fgu::load_state(mia_state);
      const fgu::UnlearnRequest req = fgu::to_internal_ids(fgu::load_request(mia_request), g);
      const auto shadows = fgu::train_shadows(g, c.fgu.train, mia_shadows);
      fgu::AttackFitConfig fit;
      fit.seed = c.seeds.front();
      const auto attack = fgu::fit_attack(fgu::build_attack_dataset(shadows, g, c.seeds.front()), fit);
      const auto probe = fgu::deletion_probe(g, req, c.seeds.front());
      const auto probs = fgu::aggregate(loaded.state, g, c.fgu.aggregation).probs;
      const double acc = fgu::run_attack(attack, probs, g, probe.members, probe.nonmembers, c.seeds.front());
      std::cout << fgu::kMiaCsvHeader << '\n';
      fgu::write_mia_row(std::cout, "fgu", static_cast<double>(req.nodes.size()) / g.num_nodes(), c.seeds.front(),
                         acc);
    } else if (*sweep) {
      ExperimentConfig c = sweep_common.resolve();
      if (sweep_common.seed) c.seeds = {*sweep_common.seed};
      c.methods = {fgu::Method::kFgu};
      c.alphas = sweep_alphas;
      c.betas = sweep_betas;
      if (!sweep_out.empty()) c.output_dir = sweep_out;
      return run_grid_command(c);
    } else if (*run) {
      ExperimentConfig c = run_common.resolve();
      if (!run_out.empty()) c.output_dir = run_out;
      return run_grid_command(c);
    }
  } catch (const fgu::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
