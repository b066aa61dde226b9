#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "gann/graph.hpp"
#include "gann/types.hpp"

namespace gann {

/// A loaded dataset: raw symmetric adjacency, features (sparse or dense),
/// labels with -1 for unknown, and the class count.
template <typename Scalar>
struct DatasetBundle {
  SparseGraph<Scalar> graph;
  FeatureMatrix<Scalar> features;
  std::vector<std::int32_t> labels;
  std::int32_t num_classes = 0;
  std::string name;

  Index num_nodes() const { return graph.num_nodes(); }
  Index feature_dim() const { return features.cols(); }
  /// Undirected edge count (adjacency stores both directions).
  Index num_edges() const { return graph.num_entries() / 2; }
};

struct SplitMasks {
  std::vector<Index> train;
  std::vector<Index> val;
  std::vector<Index> test;
  Index per_class = 0;
};

namespace detail {

inline std::ifstream open_or_throw(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw data_error("missing file: " + p.string());
  return in;
}

template <typename Scalar>
void validate_bundle(const DatasetBundle<Scalar>& b) {
  const Index n = b.num_nodes();
  if (static_cast<Index>(b.labels.size()) != n)
    throw data_error("label count " + std::to_string(b.labels.size()) +
                     " != num_nodes " + std::to_string(n));
  if (b.features.rows() != n)
    throw data_error("feature rows " + std::to_string(b.features.rows()) +
                     " != num_nodes " + std::to_string(n));
  std::vector<bool> seen(static_cast<std::size_t>(b.num_classes), false);
  for (std::size_t i = 0; i < b.labels.size(); ++i) {
    const std::int32_t y = b.labels[i];
    if (y < -1 || y >= b.num_classes)
      throw data_error("label out of range at node " + std::to_string(i) + ": " +
                       std::to_string(y) + " (C = " + std::to_string(b.num_classes) + ")");
    if (y >= 0) seen[static_cast<std::size_t>(y)] = true;
  }
  for (std::int32_t c = 0; c < b.num_classes; ++c)
    if (!seen[static_cast<std::size_t>(c)])
      throw data_error("class " + std::to_string(c) + " has no labeled node");
}

}  // namespace detail

/// Loads the documented directory format:
///   meta.json, edges.tsv, features.tsv | features_sparse.tsv, labels.tsv.
/// Edges are symmetrized and duplicates collapsed.
template <typename Scalar>
DatasetBundle<Scalar> load_dataset(const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path dir(path);

  nlohmann::json meta;
  {
    auto in = detail::open_or_throw(dir / "meta.json");
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw data_error("meta.json: " + std::string(e.what()));
    }
  }
  for (const char* key : {"name", "num_nodes", "num_features", "num_classes"})
    if (!meta.contains(key)) throw data_error("meta.json: missing field \"" + std::string(key) + "\"");

  DatasetBundle<Scalar> bundle;
  bundle.name = meta.at("name").get<std::string>();
  const Index n = meta.at("num_nodes").get<Index>();
  const Index d = meta.at("num_features").get<Index>();
  bundle.num_classes = meta.at("num_classes").get<std::int32_t>();
  if (n < 1 || d < 1 || bundle.num_classes < 1)
    throw data_error("meta.json: non-positive dimension");

  {
    auto in = detail::open_or_throw(dir / "edges.tsv");
    std::vector<std::pair<Index, Index>> edges;
    Index i, j;
    while (in >> i >> j) edges.emplace_back(i, j);
    bundle.graph = graph_from_edges<Scalar>(n, edges);
  }

  if (fs::exists(dir / "features_sparse.tsv")) {
    auto in = detail::open_or_throw(dir / "features_sparse.tsv");
    std::vector<Eigen::Triplet<Scalar>> trips;
    Index r, c;
    double v;
    while (in >> r >> c >> v) {
      if (r < 0 || r >= n || c < 0 || c >= d)
        throw data_error("features_sparse.tsv: index out of range (" + std::to_string(r) +
                         ", " + std::to_string(c) + ")");
      trips.emplace_back(r, c, static_cast<Scalar>(v));
    }
    SparseMat<Scalar> feats(n, d);
    feats.setFromTriplets(trips.begin(), trips.end());
    bundle.features = FeatureMatrix<Scalar>(std::move(feats));
  } else {
    auto in = detail::open_or_throw(dir / "features.tsv");
    Matrix<Scalar> feats(n, d);
    for (Index r = 0; r < n; ++r)
      for (Index c = 0; c < d; ++c) {
        double v;
        if (!(in >> v))
          throw data_error("features.tsv: expected " + std::to_string(n * d) +
                           " values, file ended at row " + std::to_string(r));
        feats(r, c) = static_cast<Scalar>(v);
      }
    bundle.features = FeatureMatrix<Scalar>(std::move(feats));
  }

  {
    auto in = detail::open_or_throw(dir / "labels.tsv");
    bundle.labels.reserve(static_cast<std::size_t>(n));
    std::int32_t y;
    while (in >> y) bundle.labels.push_back(y);
  }

  detail::validate_bundle(bundle);
  if (!bundle.features.to_dense().allFinite())
    throw data_error("features contain non-finite values");
  return bundle;
}

/// Writes a bundle in the directory format; features go to the sparse file
/// when density < 10%. Inverse of load_dataset up to edge ordering.
template <typename Scalar>
void save_dataset(const DatasetBundle<Scalar>& bundle, const std::string& path) {
  namespace fs = std::filesystem;
  const fs::path dir(path);
  fs::create_directories(dir);

  nlohmann::json meta{{"name", bundle.name},
                      {"num_nodes", bundle.num_nodes()},
                      {"num_features", bundle.feature_dim()},
                      {"num_classes", bundle.num_classes}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";

  {
    std::ofstream out(dir / "edges.tsv");
    for (Index i = 0; i < bundle.num_nodes(); ++i)
      for (typename SparseMat<Scalar>::InnerIterator it(bundle.graph.adj, i); it; ++it)
        if (it.col() > i) out << i << "\t" << it.col() << "\n";
  }

  if (bundle.features.is_sparse() && bundle.features.density() < 0.10) {
    std::ofstream out(dir / "features_sparse.tsv");
    out.precision(17);
    const auto& f = bundle.features.sparse();
    for (Index i = 0; i < f.rows(); ++i)
      for (typename SparseMat<Scalar>::InnerIterator it(f, i); it; ++it)
        out << i << "\t" << it.col() << "\t" << static_cast<double>(it.value()) << "\n";
  } else {
    std::ofstream out(dir / "features.tsv");
    out.precision(17);
    const Matrix<Scalar> f = bundle.features.to_dense();
    for (Index i = 0; i < f.rows(); ++i) {
      for (Index j = 0; j < f.cols(); ++j) out << (j ? " " : "") << static_cast<double>(f(i, j));
      out << "\n";
    }
  }

  {
    std::ofstream out(dir / "labels.tsv");
    for (const std::int32_t y : bundle.labels) out << y << "\n";
  }
}

/// Uniformly samples `per_class` labeled nodes per class for train, then
/// `val_size` of the remaining labeled nodes for validation; the rest of the
/// labeled nodes form the test set. Deterministic under the given rng.
template <typename Scalar>
SplitMasks make_splits(const DatasetBundle<Scalar>& bundle, Index per_class, Index val_size,
                       Rng rng) {
  std::vector<std::vector<Index>> by_class(static_cast<std::size_t>(bundle.num_classes));
  for (Index i = 0; i < bundle.num_nodes(); ++i) {
    const std::int32_t y = bundle.labels[static_cast<std::size_t>(i)];
    if (y >= 0) by_class[static_cast<std::size_t>(y)].push_back(i);
  }

  SplitMasks masks;
  masks.per_class = per_class;
  std::vector<Index> remainder;
  for (std::int32_t c = 0; c < bundle.num_classes; ++c) {
    auto& pool = by_class[static_cast<std::size_t>(c)];
    if (static_cast<Index>(pool.size()) < per_class)
      throw data_error("class " + std::to_string(c) + " has only " +
                       std::to_string(pool.size()) + " labeled nodes, need " +
                       std::to_string(per_class));
    rng.shuffle(pool);
    masks.train.insert(masks.train.end(), pool.begin(), pool.begin() + per_class);
    remainder.insert(remainder.end(), pool.begin() + per_class, pool.end());
  }
  if (static_cast<Index>(remainder.size()) < val_size)
    throw data_error("not enough labeled nodes left for validation: have " +
                     std::to_string(remainder.size()) + ", need " + std::to_string(val_size));
  std::sort(remainder.begin(), remainder.end());
  rng.shuffle(remainder);
  masks.val.assign(remainder.begin(), remainder.begin() + val_size);
  masks.test.assign(remainder.begin() + val_size, remainder.end());
  std::sort(masks.train.begin(), masks.train.end());
  std::sort(masks.val.begin(), masks.val.end());
  std::sort(masks.test.begin(), masks.test.end());
  return masks;
}

/// Planted-partition random graph with one-hot class features plus Gaussian
/// noise; labels fully known. Serves as the verifiable synthetic benchmark.
template <typename Scalar>
DatasetBundle<Scalar> generate_sbm(const std::vector<Index>& block_sizes, double p_in,
                                   double p_out, Index feature_dim, double feature_noise,
                                   Rng rng) {
  if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1)
    throw data_error("generate_sbm: probabilities must be in [0, 1]");
  if (block_sizes.empty() || feature_dim < 1)
    throw data_error("generate_sbm: need at least one block and feature_dim >= 1");

  DatasetBundle<Scalar> bundle;
  bundle.num_classes = static_cast<std::int32_t>(block_sizes.size());
  Index n = 0;
  for (const Index b : block_sizes) n += b;
  bundle.labels.reserve(static_cast<std::size_t>(n));
  for (std::size_t c = 0; c < block_sizes.size(); ++c)
    bundle.labels.insert(bundle.labels.end(), static_cast<std::size_t>(block_sizes[c]),
                         static_cast<std::int32_t>(c));

  std::vector<std::pair<Index, Index>> edges;
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const double p = bundle.labels[static_cast<std::size_t>(i)] ==
                               bundle.labels[static_cast<std::size_t>(j)]
                           ? p_in
                           : p_out;
      if (rng.uniform() < p) edges.emplace_back(i, j);
    }
  bundle.graph = graph_from_edges<Scalar>(n, edges);

  Matrix<Scalar> feats(n, feature_dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < feature_dim; ++j)
      feats(i, j) = static_cast<Scalar>(feature_noise * rng.normal());
    feats(i, bundle.labels[static_cast<std::size_t>(i)] % feature_dim) += Scalar(1);
  }
  bundle.features = FeatureMatrix<Scalar>(std::move(feats));
  bundle.name = "sbm";
  return bundle;
}

}  // namespace gann
