#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "gann/types.hpp"

namespace gann {

/// Undirected graph in CSR form. `normalized == false` holds the raw 0/1
/// adjacency A; after symmetric_normalize it holds
/// A_hat = D~^{-1/2} (A + I) D~^{-1/2}, which always carries a diagonal.
template <typename Scalar>
struct SparseGraph {
  SparseMat<Scalar> adj;
  bool normalized = false;

  Index num_nodes() const { return adj.rows(); }
  Index num_entries() const { return adj.nonZeros(); }
};

/// Builds a 0/1 symmetric adjacency from undirected edges. Each edge may be
/// listed once or twice; duplicates collapse, self-loops are rejected.
template <typename Scalar>
SparseGraph<Scalar> graph_from_edges(Index num_nodes,
                                     const std::vector<std::pair<Index, Index>>& edges) {
  std::vector<Eigen::Triplet<Scalar>> trips;
  trips.reserve(edges.size() * 2);
  for (const auto& [i, j] : edges) {
    if (i < 0 || j < 0 || i >= num_nodes || j >= num_nodes)
      throw data_error("edge index out of range: (" + std::to_string(i) + ", " +
                       std::to_string(j) + ") with N = " + std::to_string(num_nodes));
    if (i == j)
      throw data_error("self-loop not allowed: node " + std::to_string(i));
    trips.emplace_back(i, j, Scalar(1));
    trips.emplace_back(j, i, Scalar(1));
  }
  SparseMat<Scalar> adj(num_nodes, num_nodes);
  adj.setFromTriplets(trips.begin(), trips.end(),
                      [](const Scalar&, const Scalar&) { return Scalar(1); });
  adj.makeCompressed();
  return SparseGraph<Scalar>{std::move(adj), false};
}

template <typename Scalar>
bool is_structurally_symmetric(const SparseMat<Scalar>& m, Scalar tol = Scalar(0)) {
  if (m.rows() != m.cols()) return false;
  SparseMat<Scalar> t = SparseMat<Scalar>(m.transpose());
  t.makeCompressed();
  if (t.nonZeros() != m.nonZeros()) return false;
  for (Index k = 0; k <= m.rows(); ++k)
    if (m.outerIndexPtr()[k] != t.outerIndexPtr()[k]) return false;
  for (Index k = 0; k < m.nonZeros(); ++k) {
    if (m.innerIndexPtr()[k] != t.innerIndexPtr()[k]) return false;
    if (std::abs(m.valuePtr()[k] - t.valuePtr()[k]) > tol) return false;
  }
  return true;
}

/// A_hat = D~^{-1/2} (A + I) D~^{-1/2} with D~ the degree matrix of A + I.
template <typename Scalar>
SparseGraph<Scalar> symmetric_normalize(const SparseGraph<Scalar>& g) {
  if (g.normalized) throw data_error("symmetric_normalize: input already normalized");
  const Index n = g.num_nodes();
  for (Index k = 0; k < g.adj.nonZeros(); ++k)
    if (g.adj.valuePtr()[k] < Scalar(0))
      throw data_error("symmetric_normalize: negative edge value");
  if (!is_structurally_symmetric(g.adj))
    throw data_error("symmetric_normalize: adjacency is not symmetric");

  SparseMat<Scalar> self_looped = g.adj;
  SparseMat<Scalar> eye(n, n);
  eye.setIdentity();
  self_looped = self_looped + eye;
  self_looped.makeCompressed();

  Vector<Scalar> inv_sqrt_deg(n);
  for (Index i = 0; i < n; ++i) {
    Scalar deg = 0;
    for (typename SparseMat<Scalar>::InnerIterator it(self_looped, i); it; ++it)
      deg += it.value();
    inv_sqrt_deg[i] = Scalar(1) / std::sqrt(deg);
  }
  for (Index i = 0; i < n; ++i)
    for (typename SparseMat<Scalar>::InnerIterator it(self_looped, i); it; ++it)
      it.valueRef() *= inv_sqrt_deg[i] * inv_sqrt_deg[it.col()];

  return SparseGraph<Scalar>{std::move(self_looped), true};
}

enum class FeatureNorm { l1, l2, none };

/// Per-row feature normalization; zero rows pass through unchanged.
template <typename Scalar>
Matrix<Scalar> row_normalize_features(const Matrix<Scalar>& x,
                                      FeatureNorm mode = FeatureNorm::l1) {
  if (mode == FeatureNorm::none) return x;
  Matrix<Scalar> out = x;
  for (Index i = 0; i < out.rows(); ++i) {
    const Scalar norm = mode == FeatureNorm::l1 ? out.row(i).template lpNorm<1>()
                                                : out.row(i).norm();
    if (norm > Scalar(0)) out.row(i) /= norm;
  }
  return out;
}

template <typename Scalar>
SparseMat<Scalar> row_normalize_features(const SparseMat<Scalar>& x,
                                         FeatureNorm mode = FeatureNorm::l1) {
  if (mode == FeatureNorm::none) return x;
  SparseMat<Scalar> out = x;
  for (Index i = 0; i < out.rows(); ++i) {
    Scalar norm = 0;
    for (typename SparseMat<Scalar>::InnerIterator it(out, i); it; ++it)
      norm += mode == FeatureNorm::l1 ? std::abs(it.value()) : it.value() * it.value();
    if (mode == FeatureNorm::l2) norm = std::sqrt(norm);
    if (norm > Scalar(0))
      for (typename SparseMat<Scalar>::InnerIterator it(out, i); it; ++it)
        it.valueRef() /= norm;
  }
  return out;
}

/// Layer-l input A_hat^{l-1} X_hat, built one sparse-dense product per hop;
/// the matrix power is never materialized. hop = 1 is X_hat itself.
template <typename Scalar>
Matrix<Scalar> propagate(const Matrix<Scalar>& x_hat, const SparseGraph<Scalar>& a_hat,
                         Index hop) {
  if (!a_hat.normalized) throw data_error("propagate: graph must be normalized");
  if (hop < 1) throw data_error("propagate: hop must be >= 1");
  if (x_hat.rows() != a_hat.num_nodes())
    throw data_error("propagate: feature rows (" + std::to_string(x_hat.rows()) +
                     ") != num nodes (" + std::to_string(a_hat.num_nodes()) + ")");
  Matrix<Scalar> out = x_hat;
  for (Index h = 1; h < hop; ++h) out = a_hat.adj * out;
  return out;
}

/// Feature carrier that stays sparse while the propagated features are sparse
/// and switches to dense storage once density crosses a threshold. All
/// products reduce in a fixed order, independent of thread count.
template <typename Scalar>
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  explicit FeatureMatrix(Matrix<Scalar> dense) : dense_(std::move(dense)), sparse_(0, 0) {}
  explicit FeatureMatrix(SparseMat<Scalar> sparse) : sparse_(std::move(sparse)), is_sparse_(true) {
    sparse_.makeCompressed();
  }

  bool is_sparse() const { return is_sparse_; }
  Index rows() const { return is_sparse_ ? sparse_.rows() : dense_.rows(); }
  Index cols() const { return is_sparse_ ? sparse_.cols() : dense_.cols(); }

  double density() const {
    const double cells = static_cast<double>(rows()) * static_cast<double>(cols());
    if (cells == 0) return 0.0;
    return is_sparse_ ? static_cast<double>(sparse_.nonZeros()) / cells : 1.0;
  }

  /// X * W
  Matrix<Scalar> multiply(const Matrix<Scalar>& w) const {
    return is_sparse_ ? Matrix<Scalar>(sparse_ * w) : Matrix<Scalar>(dense_ * w);
  }

  /// X^T * G (the gradient-side product)
  Matrix<Scalar> transpose_multiply(const Matrix<Scalar>& g) const {
    return is_sparse_ ? Matrix<Scalar>(sparse_.transpose() * g)
                      : Matrix<Scalar>(dense_.transpose() * g);
  }

  Matrix<Scalar> to_dense() const {
    return is_sparse_ ? Matrix<Scalar>(sparse_) : dense_;
  }

  const SparseMat<Scalar>& sparse() const { return sparse_; }

  /// One multiplication by A_hat, densifying once density > threshold.
  FeatureMatrix propagate_once(const SparseGraph<Scalar>& a_hat,
                               double densify_threshold = 0.25) const {
    if (!a_hat.normalized) throw data_error("propagate_once: graph must be normalized");
    if (rows() != a_hat.num_nodes())
      throw data_error("propagate_once: dimension mismatch");
    if (!is_sparse_) return FeatureMatrix(Matrix<Scalar>(a_hat.adj * dense_));
    SparseMat<Scalar> next = a_hat.adj * sparse_;
    next.makeCompressed();
    const double cells = static_cast<double>(next.rows()) * static_cast<double>(next.cols());
    if (cells > 0 && static_cast<double>(next.nonZeros()) / cells > densify_threshold)
      return FeatureMatrix(Matrix<Scalar>(next));
    return FeatureMatrix(std::move(next));
  }

 private:
  Matrix<Scalar> dense_;
  SparseMat<Scalar> sparse_;
  bool is_sparse_ = false;
};

/// Fraction of structurally nonzero entries of A_hat^h for h = 1..max_hop,
/// computed on structure only (boolean products via per-row bitsets). The
/// self-loops from normalization make the support grow monotonically.
template <typename Scalar>
std::vector<double> adjacency_density(const SparseGraph<Scalar>& a_hat, Index max_hop) {
  if (!a_hat.normalized) throw data_error("adjacency_density: graph must be normalized");
  if (max_hop < 1) throw data_error("adjacency_density: max_hop must be >= 1");
  const Index n = a_hat.num_nodes();
  const Index words = (n + 63) / 64;
  const auto idx = [words](Index row, Index w) {
    return static_cast<std::size_t>(row * words + w);
  };

  std::vector<std::uint64_t> cur(static_cast<std::size_t>(n * words), 0);
  for (Index i = 0; i < n; ++i)
    for (typename SparseMat<Scalar>::InnerIterator it(a_hat.adj, i); it; ++it)
      cur[idx(i, it.col() / 64)] |= std::uint64_t(1) << (it.col() % 64);

  std::vector<double> densities;
  densities.reserve(static_cast<std::size_t>(max_hop));
  const double cells = static_cast<double>(n) * static_cast<double>(n);
  std::vector<std::uint64_t> next(cur.size(), 0);
  for (Index hop = 1; hop <= max_hop; ++hop) {
    if (hop > 1) {
      std::fill(next.begin(), next.end(), 0);
      for (Index i = 0; i < n; ++i)
        for (typename SparseMat<Scalar>::InnerIterator it(a_hat.adj, i); it; ++it)
          for (Index w = 0; w < words; ++w)
            next[idx(i, w)] |= cur[idx(it.col(), w)];
      cur.swap(next);
    }
    std::uint64_t nnz = 0;
    for (const std::uint64_t word : cur) nnz += static_cast<std::uint64_t>(__builtin_popcountll(word));
    densities.push_back(static_cast<double>(nnz) / cells);
  }
  return densities;
}

}  // namespace gann
