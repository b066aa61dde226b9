#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "gann/data.hpp"
#include "gann/model.hpp"
#include "gann/results.hpp"

namespace gann {

struct SbmSpec {
  std::vector<Index> block_sizes;
  double p_in = 0.2;
  double p_out = 0.02;
  Index feature_dim = 16;
  double feature_noise = 1.0;
  std::uint64_t seed = 1;  // graph generation seed, independent of run seeds
};

struct ExperimentConfig {
  std::string dataset_dir;       // exactly one of dataset_dir / sbm
  std::optional<SbmSpec> sbm;
  GannConfig model;
  Index per_class = 20;
  Index val_size = 500;
  std::vector<std::uint64_t> seeds = {0};
  std::string out_dir;
  std::string precision = "double";
  bool store_embeddings = false;

  void validate() const {
    if (dataset_dir.empty() == !sbm.has_value())
      throw data_error("experiment: exactly one of 'dataset' and 'sbm' is required");
    if (seeds.empty()) throw data_error("experiment: at least one seed is required");
    if (per_class < 1) throw data_error("experiment: per_class must be >= 1");
    if (val_size < 1) throw data_error("experiment: val_size must be >= 1");
    if (precision != "single" && precision != "double")
      throw data_error("experiment: precision must be 'single' or 'double'");
    model.validate();
  }
};

inline nlohmann::json sbm_to_json(const SbmSpec& s) {
  return {{"block_sizes", s.block_sizes}, {"p_in", s.p_in},
          {"p_out", s.p_out},            {"feature_dim", s.feature_dim},
          {"feature_noise", s.feature_noise}, {"seed", s.seed}};
}

inline SbmSpec sbm_from_json(const nlohmann::json& j) {
  SbmSpec s;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "block_sizes") s.block_sizes = value.get<std::vector<Index>>();
      else if (key == "p_in") s.p_in = value.get<double>();
      else if (key == "p_out") s.p_out = value.get<double>();
      else if (key == "feature_dim") s.feature_dim = value.get<Index>();
      else if (key == "feature_noise") s.feature_noise = value.get<double>();
      else if (key == "seed") s.seed = value.get<std::uint64_t>();
      else throw data_error("sbm: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw data_error("sbm: bad value for '" + key + "': " + e.what());
    }
  }
  if (s.block_sizes.empty()) throw data_error("sbm: block_sizes is required");
  return s;
}

inline nlohmann::json experiment_to_json(const ExperimentConfig& c) {
  nlohmann::json j = {{"model", config_to_json(c.model)},
                      {"per_class", c.per_class},
                      {"val_size", c.val_size},
                      {"seeds", c.seeds},
                      {"out", c.out_dir},
                      {"precision", c.precision},
                      {"store_embeddings", c.store_embeddings}};
  if (!c.dataset_dir.empty()) j["dataset"] = c.dataset_dir;
  if (c.sbm) j["sbm"] = sbm_to_json(*c.sbm);
  return j;
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw data_error("experiment: expected a JSON object");
  ExperimentConfig c;
  c.seeds.clear();
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "dataset") c.dataset_dir = value.get<std::string>();
      else if (key == "sbm") c.sbm = sbm_from_json(value);
      else if (key == "model") c.model = config_from_json(value);
      else if (key == "per_class") c.per_class = value.get<Index>();
      else if (key == "val_size") c.val_size = value.get<Index>();
      else if (key == "seeds") c.seeds = value.get<std::vector<std::uint64_t>>();
      else if (key == "out") c.out_dir = value.get<std::string>();
      else if (key == "precision") c.precision = value.get<std::string>();
      else if (key == "store_embeddings") c.store_embeddings = value.get<bool>();
      else throw data_error("experiment: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw data_error("experiment: bad value for '" + key + "': " + e.what());
    }
  }
  if (c.seeds.empty()) c.seeds = {0};
  return c;
}

/// Worker cap for seed-level parallelism. GANN_THREADS overrides detection;
/// per-seed work is untouched, so the cap never changes results.
inline unsigned thread_budget() {
  if (const char* env = std::getenv("GANN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1)
      throw data_error("GANN_THREADS must be a positive integer, got '" + std::string(env) + "'");
    return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

template <typename Scalar>
DatasetBundle<Scalar> materialize_dataset(const ExperimentConfig& cfg) {
  if (cfg.sbm) {
    const SbmSpec& s = *cfg.sbm;
    return generate_sbm<Scalar>(s.block_sizes, s.p_in, s.p_out, s.feature_dim,
                                s.feature_noise, Rng(s.seed));
  }
  return load_dataset<Scalar>(cfg.dataset_dir);
}

template <typename Scalar>
struct SeedArtifacts {
  Matrix<Scalar> ensemble_z;
  Matrix<Scalar> embeddings;
};

/// Runs every seed (concurrently up to thread_budget()), aggregates mean and
/// sample std over the seeds that finished, and persists the record when
/// out_dir is set. A seed failure is recorded and skipped; if every seed
/// fails the first error is rethrown.
template <typename Scalar>
RunRecord run_experiment_typed(const ExperimentConfig& cfg,
                               SeedArtifacts<Scalar>* first_artifacts = nullptr) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const DatasetBundle<Scalar> bundle = materialize_dataset<Scalar>(cfg);

  const std::size_t n_seeds = cfg.seeds.size();
  std::vector<SeedRecord> records(n_seeds);
  std::vector<SeedArtifacts<Scalar>> artifacts(n_seeds);

  const auto run_one = [&](std::size_t t) {
    SeedRecord rec;
    rec.seed = cfg.seeds[t];
    try {
      const SplitMasks masks =
          make_splits(bundle, cfg.per_class, cfg.val_size, Rng(rec.seed).fork(3));
      GannConfig model_cfg = cfg.model;
      model_cfg.seed = rec.seed;
      auto run = run_gann(bundle, masks, model_cfg);
      rec.val_accuracy = run.val_accuracy;
      rec.test_accuracy = run.test_accuracy;
      for (const auto& l : run.layers)
        rec.layers.push_back({l.layer, l.best_val_acc, l.test_acc_at_best, l.iterations,
                              l.init_digest, l.best_digest});
      rec.curve = std::move(run.curve);
      artifacts[t].ensemble_z = std::move(run.ensemble_z);
      artifacts[t].embeddings = std::move(run.final_embeddings);
    } catch (const std::exception& e) {
      rec.ok = false;
      rec.error = e.what();
    }
    records[t] = std::move(rec);
  };

  const unsigned workers =
      std::min<unsigned>(thread_budget(), static_cast<unsigned>(n_seeds));
  if (workers <= 1) {
    for (std::size_t t = 0; t < n_seeds; ++t) run_one(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (unsigned w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < n_seeds; t = next.fetch_add(1)) run_one(t);
      });
    for (auto& th : pool) th.join();
  }

  RunRecord record;
  record.dataset = cfg.sbm ? "sbm" : bundle.name;
  record.precision = cfg.precision;
  record.config = cfg.model;
  record.per_class = cfg.per_class;
  record.val_size = cfg.val_size;
  record.seeds = std::move(records);

  std::vector<double> vals, tests;
  std::size_t first_ok = n_seeds;
  for (std::size_t t = 0; t < n_seeds; ++t) {
    if (!record.seeds[t].ok) continue;
    if (first_ok == n_seeds) first_ok = t;
    vals.push_back(record.seeds[t].val_accuracy);
    tests.push_back(record.seeds[t].test_accuracy);
  }
  if (vals.empty())
    throw numeric_error("run_experiment: every seed failed; first error: " +
                        record.seeds.front().error);
  record.val = aggregate(vals);
  record.test = aggregate(tests);
  record.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (first_artifacts) *first_artifacts = artifacts[first_ok];
  if (!cfg.out_dir.empty()) {
    save_results(record, cfg.out_dir);
    const std::filesystem::path out(cfg.out_dir);
    const std::string tag = std::to_string(record.seeds[first_ok].seed);
    write_matrix_tsv(out / ("predictions_seed" + tag + ".tsv"), artifacts[first_ok].ensemble_z);
    if (cfg.store_embeddings)
      write_matrix_tsv(out / ("embeddings_seed" + tag + ".tsv"), artifacts[first_ok].embeddings);
  }
  return record;
}

inline RunRecord run_experiment(const ExperimentConfig& cfg) {
  if (cfg.precision == "single") return run_experiment_typed<float>(cfg);
  return run_experiment_typed<double>(cfg);
}

/// Node order for diagnostics exports: by true class, unknown labels last,
/// index within class.
inline std::vector<Index> class_sorted_order(const std::vector<std::int32_t>& labels) {
  std::vector<Index> order(labels.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    const std::int32_t la = labels[static_cast<std::size_t>(a)];
    const std::int32_t lb = labels[static_cast<std::size_t>(b)];
    const std::uint32_t ka = la < 0 ? 0x7fffffffu : static_cast<std::uint32_t>(la);
    const std::uint32_t kb = lb < 0 ? 0x7fffffffu : static_cast<std::uint32_t>(lb);
    return ka < kb;
  });
  return order;
}

namespace detail {

template <typename Scalar>
void write_dense_csv(const std::filesystem::path& path, const Matrix<Scalar>& m) {
  std::string buf;
  buf.reserve(static_cast<std::size_t>(m.rows()) * static_cast<std::size_t>(m.cols()) * 10);
  char cell[40];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(cell, sizeof(cell), "%.6g", static_cast<double>(m(i, j)));
      if (j) buf += ',';
      buf += cell;
    }
    buf += '\n';
  }
  write_file_atomic(path, buf);
}

}  // namespace detail

/// Oversmoothing diagnostics for a finished run: hop densities of the
/// normalized adjacency, the class-sorted embedding Gram matrix, and
/// per-node prediction entropy.
template <typename Scalar>
void export_diagnostics(const DatasetBundle<Scalar>& bundle, const Matrix<Scalar>& embeddings,
                        const Matrix<Scalar>& ensemble_z, const std::filesystem::path& out_dir,
                        Index max_hop = 5) {
  if (embeddings.rows() == 0)
    throw data_error("export_diagnostics: missing embeddings");
  if (embeddings.rows() != bundle.num_nodes() || ensemble_z.rows() != bundle.num_nodes())
    throw data_error("export_diagnostics: matrices do not match the dataset");
  std::filesystem::create_directories(out_dir);

  const SparseGraph<Scalar> a_hat = symmetric_normalize(bundle.graph);
  const std::vector<double> densities = adjacency_density(a_hat, max_hop);
  {
    std::string buf = "hop,density\n";
    char line[64];
    for (std::size_t h = 0; h < densities.size(); ++h) {
      std::snprintf(line, sizeof(line), "%zu,%.17g\n", h + 1, densities[h]);
      buf += line;
    }
    detail::write_file_atomic(out_dir / "hop_density.csv", buf);
  }

  const std::vector<Index> order = class_sorted_order(bundle.labels);
  Matrix<Scalar> sorted(embeddings.rows(), embeddings.cols());
  for (Index i = 0; i < embeddings.rows(); ++i) sorted.row(i) = embeddings.row(order[i]);
  detail::write_dense_csv(out_dir / "similarity_matrix.csv", Matrix<Scalar>(gram(sorted)));

  {
    std::string buf = "node,label,entropy\n";
    char line[96];
    for (Index i = 0; i < ensemble_z.rows(); ++i) {
      double h = 0;
      for (Index j = 0; j < ensemble_z.cols(); ++j) {
        const double logp = static_cast<double>(ensemble_z(i, j));
        h -= std::exp(logp) * logp;
      }
      std::snprintf(line, sizeof(line), "%lld,%d,%.17g\n", static_cast<long long>(i),
                    bundle.labels[static_cast<std::size_t>(i)], h);
      buf += line;
    }
    detail::write_file_atomic(out_dir / "prediction_entropy.csv", buf);
  }
}

}  // namespace gann
