#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gann/model.hpp"
#include "gann/types.hpp"

namespace gann {

inline std::string to_string(FeatureNorm norm) {
  switch (norm) {
    case FeatureNorm::l1: return "l1";
    case FeatureNorm::l2: return "l2";
    case FeatureNorm::none: return "none";
  }
  throw data_error("unknown feature norm");
}

inline FeatureNorm feature_norm_from_string(const std::string& s) {
  if (s == "l1") return FeatureNorm::l1;
  if (s == "l2") return FeatureNorm::l2;
  if (s == "none") return FeatureNorm::none;
  throw data_error("config: unknown feature_norm '" + s + "'");
}

inline nlohmann::json config_to_json(const GannConfig& c) {
  return {{"layers", c.layers},
          {"hidden", c.hidden},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"dropout", c.dropout},
          {"topk", c.topk},
          {"eta", c.eta},
          {"lambda", c.lambda},
          {"beta", c.beta},
          {"gamma", c.gamma},
          {"tem", c.tem},
          {"patience", c.patience},
          {"epsilon", c.epsilon},
          {"max_iters_per_layer", c.max_iters_per_layer},
          {"seed", c.seed},
          {"feature_norm", to_string(c.feature_norm)},
          {"binarize_targets", c.binarize_targets},
          {"mixmatch_sharpen", c.mixmatch_sharpen},
          {"reset_patience", c.reset_patience},
          {"use_center_rule", c.use_center_rule}};
}

/// Reads a config object; unknown keys are rejected so typos in config files
/// fail loudly instead of silently keeping a default.
inline GannConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw data_error("config: expected a JSON object");
  GannConfig c;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "layers") c.layers = value.get<Index>();
      else if (key == "hidden") c.hidden = value.get<Index>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "weight_decay") c.weight_decay = value.get<double>();
      else if (key == "dropout") c.dropout = value.get<double>();
      else if (key == "topk") c.topk = value.get<Index>();
      else if (key == "eta") c.eta = value.get<double>();
      else if (key == "lambda") c.lambda = value.get<double>();
      else if (key == "beta") c.beta = value.get<double>();
      else if (key == "gamma") c.gamma = value.get<double>();
      else if (key == "tem") c.tem = value.get<double>();
      else if (key == "patience") c.patience = value.get<Index>();
      else if (key == "epsilon") c.epsilon = value.get<double>();
      else if (key == "max_iters_per_layer") c.max_iters_per_layer = value.get<Index>();
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "feature_norm") c.feature_norm = feature_norm_from_string(value.get<std::string>());
      else if (key == "binarize_targets") c.binarize_targets = value.get<bool>();
      else if (key == "mixmatch_sharpen") c.mixmatch_sharpen = value.get<bool>();
      else if (key == "reset_patience") c.reset_patience = value.get<bool>();
      else if (key == "use_center_rule") c.use_center_rule = value.get<bool>();
      else throw data_error("config: unknown key '" + key + "'");
    } catch (const nlohmann::json::exception& e) {
      throw data_error("config: bad value for '" + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

struct LayerRecord {
  Index layer = 0;
  double best_val_acc = 0;
  double test_acc_at_best = 0;
  Index iterations = 0;
  std::string init_digest;
  std::string best_digest;
};

struct SeedRecord {
  std::uint64_t seed = 0;
  bool ok = true;
  std::string error;  // diagnostic when ok is false
  double val_accuracy = 0;
  double test_accuracy = 0;
  std::vector<LayerRecord> layers;
  std::vector<IterationRecord> curve;  // written to a CSV beside the record
};

struct Aggregate {
  double mean = 0;
  double stddev = 0;  // sample standard deviation, 0 for a single value
};

inline Aggregate aggregate(const std::vector<double>& xs) {
  if (xs.empty()) throw data_error("aggregate: no values");
  Aggregate a;
  for (const double x : xs) a.mean += x;
  a.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0;
    for (const double x : xs) ss += (x - a.mean) * (x - a.mean);
    a.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return a;
}

struct RunRecord {
  std::string dataset;
  std::string precision = "double";
  GannConfig config;
  Index per_class = 20;
  Index val_size = 500;
  std::vector<SeedRecord> seeds;
  Aggregate val;
  Aggregate test;
  double wall_seconds = 0;  // excluded from the digest
  std::string digest;
};

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& j, const char* key,
                                           const char* where) {
  const auto it = j.find(key);
  if (it == j.end())
    throw data_error(std::string(where) + ": missing field '" + key + "'");
  return *it;
}

}  // namespace detail

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : r.seeds) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : s.layers)
      layers.push_back({{"layer", l.layer},
                        {"best_val_acc", l.best_val_acc},
                        {"test_acc_at_best", l.test_acc_at_best},
                        {"iterations", l.iterations},
                        {"init_digest", l.init_digest},
                        {"best_digest", l.best_digest}});
    seeds.push_back({{"seed", s.seed},
                     {"ok", s.ok},
                     {"error", s.error},
                     {"val_accuracy", s.val_accuracy},
                     {"test_accuracy", s.test_accuracy},
                     {"layers", layers}});
  }
  return {{"dataset", r.dataset},
          {"precision", r.precision},
          {"config", config_to_json(r.config)},
          {"per_class", r.per_class},
          {"val_size", r.val_size},
          {"seeds", seeds},
          {"val_mean", r.val.mean},
          {"val_std", r.val.stddev},
          {"test_mean", r.test.mean},
          {"test_std", r.test.stddev},
          {"timing", {{"wall_seconds", r.wall_seconds}}},
          {"digest", r.digest}};
}

/// Digest over the canonical (key-sorted) dump with the volatile fields
/// removed; equal digests mean equal results.
inline std::string record_digest(nlohmann::json j) {
  j.erase("timing");
  j.erase("digest");
  const std::string dump = j.dump();
  return to_hex(fnv1a64(dump.data(), dump.size()));
}

inline RunRecord run_record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.dataset = detail::require_field(j, "dataset", "results").get<std::string>();
  r.precision = detail::require_field(j, "precision", "results").get<std::string>();
  r.config = config_from_json(detail::require_field(j, "config", "results"));
  r.per_class = detail::require_field(j, "per_class", "results").get<Index>();
  r.val_size = detail::require_field(j, "val_size", "results").get<Index>();
  for (const auto& js : detail::require_field(j, "seeds", "results")) {
    SeedRecord s;
    s.seed = detail::require_field(js, "seed", "results.seeds").get<std::uint64_t>();
    s.ok = detail::require_field(js, "ok", "results.seeds").get<bool>();
    s.error = js.value("error", std::string{});
    s.val_accuracy = detail::require_field(js, "val_accuracy", "results.seeds").get<double>();
    s.test_accuracy = detail::require_field(js, "test_accuracy", "results.seeds").get<double>();
    if (js.contains("layers"))
      for (const auto& jl : js["layers"]) {
        LayerRecord l;
        l.layer = detail::require_field(jl, "layer", "results.layers").get<Index>();
        l.best_val_acc = jl.value("best_val_acc", 0.0);
        l.test_acc_at_best = jl.value("test_acc_at_best", 0.0);
        l.iterations = jl.value("iterations", Index{0});
        l.init_digest = jl.value("init_digest", std::string{});
        l.best_digest = jl.value("best_digest", std::string{});
        s.layers.push_back(std::move(l));
      }
    r.seeds.push_back(std::move(s));
  }
  r.val.mean = detail::require_field(j, "val_mean", "results").get<double>();
  r.val.stddev = detail::require_field(j, "val_std", "results").get<double>();
  r.test.mean = detail::require_field(j, "test_mean", "results").get<double>();
  r.test.stddev = detail::require_field(j, "test_std", "results").get<double>();
  if (j.contains("timing")) r.wall_seconds = j["timing"].value("wall_seconds", 0.0);
  r.digest = j.value("digest", std::string{});
  return r;
}

namespace detail {

/// Writes via a temp file in the same directory, then renames into place, so
/// readers never observe a half-written file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw data_error("cannot write file: " + tmp.string());
    out << contents;
    if (!out.flush()) throw data_error("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace detail

inline void write_curves_csv(const std::filesystem::path& path,
                             const std::vector<IterationRecord>& curve) {
  std::string buf = "layer,iteration,train_loss,val_acc,test_acc\n";
  char line[160];
  for (const auto& r : curve) {
    std::snprintf(line, sizeof(line), "%lld,%lld,%.17g,%.17g,%.17g\n",
                  static_cast<long long>(r.layer), static_cast<long long>(r.iteration),
                  r.train_loss, r.val_acc, r.test_acc);
    buf += line;
  }
  detail::write_file_atomic(path, buf);
}

inline std::vector<IterationRecord> read_curves_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("missing file: " + path.string());
  std::string header;
  std::getline(in, header);
  if (header != "layer,iteration,train_loss,val_acc,test_acc")
    throw data_error("curves: unexpected header in " + path.string());
  std::vector<IterationRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    IterationRecord r;
    long long layer = 0, iter = 0;
    if (std::sscanf(line.c_str(), "%lld,%lld,%lf,%lf,%lf", &layer, &iter, &r.train_loss,
                    &r.val_acc, &r.test_acc) != 5)
      throw data_error("curves: bad row '" + line + "' in " + path.string());
    r.layer = static_cast<Index>(layer);
    r.iteration = static_cast<Index>(iter);
    out.push_back(r);
  }
  return out;
}

/// Finalizes the digest, then writes results.json plus one curves CSV per
/// seed into out_dir.
inline void save_results(RunRecord& record, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json j = to_json(record);
  record.digest = record_digest(j);
  j["digest"] = record.digest;
  detail::write_file_atomic(out_dir / "results.json", j.dump(2) + "\n");
  for (const auto& s : record.seeds)
    if (!s.curve.empty())
      write_curves_csv(out_dir / ("curves_seed" + std::to_string(s.seed) + ".csv"), s.curve);
}

inline RunRecord load_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("missing file: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("results: cannot parse " + path.string() + ": " + e.what());
  }
  return run_record_from_json(j);
}

template <typename Scalar>
void write_matrix_tsv(const std::filesystem::path& path, const Matrix<Scalar>& m) {
  std::string buf;
  buf.reserve(static_cast<std::size_t>(m.rows()) * static_cast<std::size_t>(m.cols()) * 12);
  char cell[40];
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      std::snprintf(cell, sizeof(cell), "%.9g", static_cast<double>(m(i, j)));
      if (j) buf += '\t';
      buf += cell;
    }
    buf += '\n';
  }
  detail::write_file_atomic(path, buf);
}

}  // namespace gann
