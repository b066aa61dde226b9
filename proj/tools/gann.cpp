#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gann/experiment.hpp"
#include "gann/npz.hpp"

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    std::size_t used = 0;
    const std::uint64_t v = std::stoull(tok, &used);
    if (used != tok.size()) throw gann::data_error("bad seed '" + tok + "'");
    seeds.push_back(v);
  }
  if (seeds.empty()) throw gann::data_error("--seeds needs at least one value");
  return seeds;
}

struct CliOverrides {
  std::optional<std::string> dataset, seeds, out, precision;
  std::optional<gann::Index> layers, hidden, topk, patience, per_class, val_size;
  std::optional<double> lr, weight_decay, dropout, eta, lambda, beta, gamma, tem;
  bool store_embeddings = false;

  void apply(gann::ExperimentConfig& cfg) const {
    if (dataset) {
      cfg.dataset_dir = *dataset;
      cfg.sbm.reset();
    }
    if (seeds) cfg.seeds = parse_seed_list(*seeds);
    if (out) cfg.out_dir = *out;
    if (precision) cfg.precision = *precision;
    if (layers) cfg.model.layers = *layers;
    if (hidden) cfg.model.hidden = *hidden;
    if (topk) cfg.model.topk = *topk;
    if (patience) cfg.model.patience = *patience;
    if (per_class) cfg.per_class = *per_class;
    if (val_size) cfg.val_size = *val_size;
    if (lr) cfg.model.lr = *lr;
    if (weight_decay) cfg.model.weight_decay = *weight_decay;
    if (dropout) cfg.model.dropout = *dropout;
    if (eta) cfg.model.eta = *eta;
    if (lambda) cfg.model.lambda = *lambda;
    if (beta) cfg.model.beta = *beta;
    if (gamma) cfg.model.gamma = *gamma;
    if (tem) cfg.model.tem = *tem;
    if (store_embeddings) cfg.store_embeddings = true;
  }
};

void add_override_flags(CLI::App* cmd, CliOverrides& o) {
  cmd->add_option("--dataset", o.dataset, "Dataset directory (overrides the config file)");
  cmd->add_option("--seeds", o.seeds, "Comma-separated seed list, e.g. 0,1,2");
  cmd->add_option("--out", o.out, "Output directory for results and artifacts");
  cmd->add_option("--precision", o.precision, "Training precision")
      ->check(CLI::IsMember({"single", "double"}));
  cmd->add_option("--layers", o.layers, "Number of GANN layers");
  cmd->add_option("--hidden", o.hidden, "Hidden width of each layer MLP");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--weight-decay", o.weight_decay, "Decoupled weight decay");
  cmd->add_option("--dropout", o.dropout, "Input dropout rate in [0,1)");
  cmd->add_option("--topk", o.topk, "Neighbors kept per row of the feature target");
  cmd->add_option("--eta", o.eta, "Similarity threshold for the feature target");
  cmd->add_option("--lambda", o.lambda, "Off-diagonal weight in the center loss");
  cmd->add_option("--beta", o.beta, "Feature alignment coefficient");
  cmd->add_option("--gamma", o.gamma, "Minimum entropy coefficient");
  cmd->add_option("--tem", o.tem, "Sharpening temperature");
  cmd->add_option("--patience", o.patience, "Early stopping patience per layer");
  cmd->add_option("--per-class", o.per_class, "Labeled training nodes per class");
  cmd->add_option("--val-size", o.val_size, "Validation set size");
}

gann::ExperimentConfig load_experiment(const std::string& config_path,
                                       const CliOverrides& overrides) {
  std::ifstream in(config_path);
  if (!in) throw gann::data_error("missing file: " + config_path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw gann::data_error("config: cannot parse " + config_path + ": " + e.what());
  }
  gann::ExperimentConfig cfg = gann::experiment_from_json(j);
  overrides.apply(cfg);
  return cfg;
}

int do_run(const gann::ExperimentConfig& cfg) {
  const gann::RunRecord record = gann::run_experiment(cfg);
  std::size_t failed = 0;
  for (const auto& s : record.seeds)
    if (!s.ok) {
      ++failed;
      std::cerr << "seed " << s.seed << " failed: " << s.error << "\n";
    }
  std::printf("%s: %zu/%zu seeds, val %.4f +/- %.4f, test %.4f +/- %.4f (%.1fs)\n",
              record.dataset.c_str(), record.seeds.size() - failed, record.seeds.size(),
              record.val.mean, record.val.stddev, record.test.mean, record.test.stddev,
              record.wall_seconds);
  if (!cfg.out_dir.empty()) std::printf("results written to %s\n", cfg.out_dir.c_str());
  return 0;
}

template <typename Scalar>
int do_diagnose_typed(gann::ExperimentConfig cfg, const std::string& out_dir,
                      gann::Index max_hop) {
  cfg.seeds.resize(1);  // diagnostics come from a single run
  cfg.out_dir.clear();
  const gann::DatasetBundle<Scalar> bundle = gann::materialize_dataset<Scalar>(cfg);
  gann::SeedArtifacts<Scalar> artifacts;
  gann::run_experiment_typed<Scalar>(cfg, &artifacts);
  gann::export_diagnostics(bundle, artifacts.embeddings, artifacts.ensemble_z, out_dir,
                           max_hop);
  std::printf("diagnostics written to %s\n", out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GANN: layer-wise graph alignment neural network"};
  app.require_subcommand(1);

  std::string run_config;
  CliOverrides run_overrides;
  CLI::App* run_cmd = app.add_subcommand("run", "Train and evaluate over multiple seeds");
  run_cmd->add_option("--config", run_config, "Experiment config JSON")->required();
  add_override_flags(run_cmd, run_overrides);
  run_cmd->add_flag("--store-embeddings", run_overrides.store_embeddings,
                    "Also write final-layer embeddings of the first seed");

  std::string diag_config, diag_out = "diagnostics";
  gann::Index diag_hops = 5;
  CliOverrides diag_overrides;
  CLI::App* diag_cmd =
      app.add_subcommand("diagnose", "Run one seed and export oversmoothing diagnostics");
  diag_cmd->add_option("--config", diag_config, "Experiment config JSON")->required();
  diag_cmd->add_option("--hops", diag_hops, "Highest hop for the density table")
      ->check(CLI::PositiveNumber);
  add_override_flags(diag_cmd, diag_overrides);

  std::string conv_in, conv_out, conv_name;
  bool conv_keep_all = false;
  CLI::App* conv_cmd = app.add_subcommand("convert", "Convert an .npz benchmark dataset");
  conv_cmd->add_option("--input", conv_in, "Input .npz file")->required();
  conv_cmd->add_option("--out", conv_out, "Output dataset directory")->required();
  conv_cmd->add_option("--name", conv_name, "Dataset name (default: input stem)");
  conv_cmd->add_flag("--keep-all", conv_keep_all,
                     "Keep every node instead of the largest connected component");

  std::string sbm_blocks = "100,100", sbm_out;
  double sbm_pin = 0.2, sbm_pout = 0.02, sbm_noise = 1.0;
  gann::Index sbm_dim = 16;
  std::uint64_t sbm_seed = 1;
  CLI::App* sbm_cmd = app.add_subcommand("gen-sbm", "Generate a stochastic block model dataset");
  sbm_cmd->add_option("--blocks", sbm_blocks, "Comma-separated block sizes");
  sbm_cmd->add_option("--p-in", sbm_pin, "Within-block edge probability");
  sbm_cmd->add_option("--p-out", sbm_pout, "Between-block edge probability");
  sbm_cmd->add_option("--feature-dim", sbm_dim, "Feature dimension")->check(CLI::PositiveNumber);
  sbm_cmd->add_option("--noise", sbm_noise, "Additive feature noise scale");
  sbm_cmd->add_option("--seed", sbm_seed, "Generation seed");
  sbm_cmd->add_option("--out", sbm_out, "Output dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (run_cmd->parsed()) return do_run(load_experiment(run_config, run_overrides));
    if (diag_cmd->parsed()) {
      const gann::ExperimentConfig cfg = load_experiment(diag_config, diag_overrides);
      const std::string out = diag_overrides.out.value_or(diag_out);
      return cfg.precision == "single"
                 ? do_diagnose_typed<float>(cfg, out, diag_hops)
                 : do_diagnose_typed<double>(cfg, out, diag_hops);
    }
    if (conv_cmd->parsed()) {
      std::string name = conv_name.empty()
                             ? std::filesystem::path(conv_in).stem().string()
                             : conv_name;
      gann::convert_npz_dataset(conv_in, conv_out, name, !conv_keep_all);
      std::printf("dataset written to %s\n", conv_out.c_str());
      return 0;
    }
    if (sbm_cmd->parsed()) {
      std::vector<gann::Index> blocks;
      for (const auto s : parse_seed_list(sbm_blocks))
        blocks.push_back(static_cast<gann::Index>(s));
      const auto bundle = gann::generate_sbm<double>(blocks, sbm_pin, sbm_pout, sbm_dim,
                                                     sbm_noise, gann::Rng(sbm_seed));
      gann::save_dataset(bundle, sbm_out);
      std::printf("sbm dataset (%lld nodes, %lld edges) written to %s\n",
                  static_cast<long long>(bundle.num_nodes()),
                  static_cast<long long>(bundle.num_edges()), sbm_out.c_str());
      return 0;
    }
  } catch (const gann::numeric_error& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const gann::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
