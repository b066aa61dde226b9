#pragma once

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "gann/nn.hpp"
#include "gann/types.hpp"

namespace gann {

/// S_ij = (x_i . x_j) / (||x_i|| ||x_j||); zero rows have similarity 0 to
/// everything except S_ii = 1.
template <typename Scalar>
Matrix<Scalar> cosine_similarity_matrix(const Matrix<Scalar>& x) {
  const Index n = x.rows();
  Matrix<Scalar> unit(n, x.cols());
  std::vector<bool> zero_row(static_cast<std::size_t>(n), false);
  for (Index i = 0; i < n; ++i) {
    const Scalar norm = x.row(i).norm();
    if (norm > Scalar(0)) {
      unit.row(i) = x.row(i) / norm;
    } else {
      unit.row(i).setZero();
      zero_row[static_cast<std::size_t>(i)] = true;
    }
  }
  Matrix<Scalar> s = unit * unit.transpose();
  for (Index i = 0; i < n; ++i)
    if (zero_row[static_cast<std::size_t>(i)]) s(i, i) = Scalar(1);
  return s;
}

template <typename Scalar>
SparseMat<Scalar> cosine_similarity_sparse(const SparseMat<Scalar>& x) {
  SparseMat<Scalar> unit = x;
  std::vector<bool> zero_row(static_cast<std::size_t>(x.rows()), true);
  for (Index i = 0; i < unit.rows(); ++i) {
    Scalar sq = 0;
    for (typename SparseMat<Scalar>::InnerIterator it(unit, i); it; ++it)
      sq += it.value() * it.value();
    if (sq > Scalar(0)) {
      zero_row[static_cast<std::size_t>(i)] = false;
      const Scalar inv = Scalar(1) / std::sqrt(sq);
      for (typename SparseMat<Scalar>::InnerIterator it(unit, i); it; ++it)
        it.valueRef() *= inv;
    }
  }
  SparseMat<Scalar> s = unit * SparseMat<Scalar>(unit.transpose());
  for (Index i = 0; i < s.rows(); ++i)
    if (zero_row[static_cast<std::size_t>(i)]) s.coeffRef(i, i) = Scalar(1);
  s.makeCompressed();
  return s;
}

/// Thresholded top-k similarity target F'. Entries strictly below eta are
/// zeroed, then each row keeps its k largest survivors (ties broken toward
/// the smaller column index). Stored sparse; rows hold at most k entries.
template <typename Scalar>
struct FeatureTarget {
  SparseMat<Scalar> f_prime;  // N x N
  Scalar eta = Scalar(0.5);
  Index k = 10;

  Matrix<Scalar> to_dense() const { return Matrix<Scalar>(f_prime); }
};

namespace detail {

template <typename Scalar>
SparseMat<Scalar> row_topk(const std::vector<std::vector<std::pair<Index, Scalar>>>& rows,
                           Index n, Index k) {
  std::vector<Eigen::Triplet<Scalar>> trips;
  std::vector<std::pair<Index, Scalar>> row;
  for (Index i = 0; i < n; ++i) {
    row = rows[static_cast<std::size_t>(i)];
    const auto by_value_then_col = [](const std::pair<Index, Scalar>& a,
                                      const std::pair<Index, Scalar>& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    };
    if (static_cast<Index>(row.size()) > k) {
      std::partial_sort(row.begin(), row.begin() + k, row.end(), by_value_then_col);
      row.resize(static_cast<std::size_t>(k));
    }
    for (const auto& [col, val] : row) trips.emplace_back(i, col, val);
  }
  SparseMat<Scalar> out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  out.makeCompressed();
  return out;
}

}  // namespace detail

template <typename Scalar>
FeatureTarget<Scalar> build_feature_target(const Matrix<Scalar>& s, Scalar eta, Index k,
                                           bool binarize = false) {
  if (k < 1) throw data_error("build_feature_target: k must be >= 1");
  if (s.rows() != s.cols()) throw data_error("build_feature_target: S must be square");
  const Index n = s.rows();
  std::vector<std::vector<std::pair<Index, Scalar>>> rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (s(i, j) >= eta)
        rows[static_cast<std::size_t>(i)].emplace_back(j, binarize ? Scalar(1) : s(i, j));
  return {detail::row_topk<Scalar>(rows, n, k), eta, k};
}

template <typename Scalar>
FeatureTarget<Scalar> build_feature_target(const SparseMat<Scalar>& s, Scalar eta, Index k,
                                           bool binarize = false) {
  if (k < 1) throw data_error("build_feature_target: k must be >= 1");
  if (s.rows() != s.cols()) throw data_error("build_feature_target: S must be square");
  const Index n = s.rows();
  std::vector<std::vector<std::pair<Index, Scalar>>> rows(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    for (typename SparseMat<Scalar>::InnerIterator it(s, i); it; ++it)
      if (it.value() >= eta)
        rows[static_cast<std::size_t>(i)].emplace_back(it.col(),
                                                       binarize ? Scalar(1) : it.value());
  return {detail::row_topk<Scalar>(rows, n, k), eta, k};
}

/// Symmetric Gram matrix E E^T evaluated as a rank update.
template <typename Scalar>
Matrix<Scalar> gram(const Matrix<Scalar>& e) {
  Matrix<Scalar> g = Matrix<Scalar>::Zero(e.rows(), e.rows());
  g.template selfadjointView<Eigen::Lower>().rankUpdate(e);
  g.template triangularView<Eigen::StrictlyUpper>() = g.transpose();
  return g;
}

/// F_hat = sigmoid(E E^T); symmetric, entries in (0, 1).
template <typename Scalar>
Matrix<Scalar> embedding_correlation(const Matrix<Scalar>& e) {
  return sigmoid(Matrix<Scalar>(gram(e)));
}

/// Mean binary cross-entropy with soft targets over all entries; predictions
/// clamped to [1e-7, 1 - 1e-7] before the logs.
template <typename Scalar>
Scalar binary_cross_entropy_mean(const Matrix<Scalar>& f_hat, const Matrix<Scalar>& f_prime) {
  if (f_hat.rows() != f_prime.rows() || f_hat.cols() != f_prime.cols())
    throw data_error("binary_cross_entropy_mean: shape mismatch");
  const Scalar lo = Scalar(1e-7), hi = Scalar(1) - Scalar(1e-7);
  Scalar total = 0;
  for (Index i = 0; i < f_hat.rows(); ++i)
    for (Index j = 0; j < f_hat.cols(); ++j) {
      const Scalar p = std::min(hi, std::max(lo, f_hat(i, j)));
      const Scalar t = f_prime(i, j);
      total -= t * std::log(p) + (Scalar(1) - t) * std::log(Scalar(1) - p);
    }
  return total / static_cast<Scalar>(f_hat.size());
}

template <typename Scalar>
struct FeatureAlignmentResult {
  Scalar loss;
  Matrix<Scalar> grad_e;
};

/// Feature alignment loss: mean BCE between sigmoid(E E^T) and F', with the
/// gradient taken through the sigmoid-Gram composition.
///
/// The loss is evaluated in logit space, softplus(G) - F' * G, which equals
/// the clamped probability form away from saturation and stays finite at it;
/// the gradient is then exactly (sigmoid(G) - F') / N^2 per Gram entry.
template <typename Scalar>
FeatureAlignmentResult<Scalar> feature_alignment_loss(const Matrix<Scalar>& e,
                                                      const FeatureTarget<Scalar>& target) {
  const Index n = e.rows();
  if (target.f_prime.rows() != n)
    throw data_error("feature_alignment_loss: embedding/target size mismatch");
  const Scalar inv_n2 = Scalar(1) / (static_cast<Scalar>(n) * static_cast<Scalar>(n));

  const Matrix<Scalar> g = gram(e);
  // softplus summed over all entries, evaluated stably for either sign
  Scalar loss = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      const Scalar v = g(i, j);
      loss += std::max(v, Scalar(0)) + std::log1p(std::exp(-std::abs(v)));
    }
  for (Index i = 0; i < n; ++i)
    for (typename SparseMat<Scalar>::InnerIterator it(target.f_prime, i); it; ++it)
      loss -= it.value() * g(i, it.col());
  loss *= inv_n2;

  // dL/dG = (sigmoid(G) - F') / N^2; dL/dE = (dL/dG + dL/dG^T) E
  Matrix<Scalar> r = sigmoid(g);
  for (Index i = 0; i < n; ++i)
    for (typename SparseMat<Scalar>::InnerIterator it(target.f_prime, i); it; ++it)
      r(i, it.col()) -= it.value();
  Matrix<Scalar> r_sym = r + r.transpose();
  return {loss, Matrix<Scalar>(inv_n2 * (r_sym * e))};
}

/// Per-class mean embeddings of the labeled training nodes.
template <typename Scalar>
struct ClusterCenters {
  Matrix<Scalar> e_bar;                  // C x h'
  std::vector<Index> counts_per_class;   // m_i, all >= 1
};

template <typename Scalar>
ClusterCenters<Scalar> cluster_centers(const Matrix<Scalar>& e,
                                       const std::vector<std::int32_t>& labels,
                                       const std::vector<Index>& train_idx,
                                       Index num_classes) {
  ClusterCenters<Scalar> centers;
  centers.e_bar = Matrix<Scalar>::Zero(num_classes, e.cols());
  centers.counts_per_class.assign(static_cast<std::size_t>(num_classes), 0);
  for (const Index i : train_idx) {
    const std::int32_t c = labels[static_cast<std::size_t>(i)];
    if (c < 0 || c >= num_classes)
      throw data_error("cluster_centers: training node " + std::to_string(i) +
                       " has no valid label");
    centers.e_bar.row(c) += e.row(i);
    centers.counts_per_class[static_cast<std::size_t>(c)] += 1;
  }
  for (Index c = 0; c < num_classes; ++c) {
    const Index m = centers.counts_per_class[static_cast<std::size_t>(c)];
    if (m == 0)
      throw data_error("cluster_centers: class " + std::to_string(c) +
                       " has no labeled training sample");
    centers.e_bar.row(c) /= static_cast<Scalar>(m);
  }
  return centers;
}

template <typename Scalar>
struct CenterAlignmentResult {
  Scalar loss;
  Matrix<Scalar> grad_e_bar;  // C x h'
};

/// Cluster-center alignment: with E_hat = E_bar E_bar^T (C x C),
///   L_e = (1/C) sum_i (1 - E_hat_ii / C)^2
///       + lambda/(C(C-1)) sum_{i != j} (E_hat_ij / C)^2.
/// Diagonal terms pull each center toward squared norm C; off-diagonal terms
/// push distinct centers toward orthogonality.
template <typename Scalar>
CenterAlignmentResult<Scalar> center_alignment_loss(const ClusterCenters<Scalar>& centers,
                                                    Scalar lambda) {
  const Index c_count = centers.e_bar.rows();
  const Scalar c = static_cast<Scalar>(c_count);
  const Matrix<Scalar> e_hat = gram(centers.e_bar);

  Scalar diag_term = 0, off_term = 0;
  Matrix<Scalar> m = Matrix<Scalar>::Zero(c_count, c_count);
  for (Index i = 0; i < c_count; ++i) {
    const Scalar di = Scalar(1) - e_hat(i, i) / c;
    diag_term += di * di;
    m(i, i) = -Scalar(2) / (c * c) * di;
    for (Index j = 0; j < c_count; ++j) {
      if (j == i) continue;
      const Scalar off = e_hat(i, j) / c;
      off_term += off * off;
      if (c_count > 1)
        m(i, j) = Scalar(2) * lambda / (c * c * c * (c - Scalar(1))) * e_hat(i, j);
    }
  }
  Scalar loss = diag_term / c;
  if (c_count > 1) loss += lambda * off_term / (c * (c - Scalar(1)));

  // dL/dE_bar = (M + M^T) E_bar; M is symmetric here.
  return {loss, Matrix<Scalar>(Scalar(2) * (m * centers.e_bar))};
}

/// Z_hat_ij = exp(Z_ij^{1/tem}) / sum_c exp(Z_ic^{1/tem}) on probability rows.
/// The powered-probability form preserves each row's argmax for any tem > 0.
/// `mixmatch` switches to the conventional z^{1/tem} / sum z^{1/tem}.
template <typename Scalar>
Matrix<Scalar> sharpen(const Matrix<Scalar>& z, Scalar tem, bool mixmatch = false) {
  if (!(tem > Scalar(0))) throw data_error("sharpen: tem must be > 0");
  const Scalar inv_tem = Scalar(1) / tem;
  Matrix<Scalar> out(z.rows(), z.cols());
  for (Index i = 0; i < z.rows(); ++i) {
    for (Index j = 0; j < z.cols(); ++j) {
      const Scalar powered = std::pow(std::max(z(i, j), Scalar(0)), inv_tem);
      out(i, j) = mixmatch ? powered : std::exp(powered);
    }
    const Scalar row_sum = out.row(i).sum();
    if (row_sum > Scalar(0)) out.row(i) /= row_sum;
  }
  return out;
}

template <typename Scalar>
struct MinEntropyResult {
  Scalar loss;
  Matrix<Scalar> grad_z;  // gradient w.r.t. the probabilities z only
};

/// L_me = (1/N) sum_i ||z_i - z_hat_i||_2^2; the sharpened target is a
/// constant in the backward pass.
template <typename Scalar>
MinEntropyResult<Scalar> min_entropy_loss(const Matrix<Scalar>& z,
                                          const Matrix<Scalar>& z_sharp) {
  if (z.rows() != z_sharp.rows() || z.cols() != z_sharp.cols())
    throw data_error("min_entropy_loss: shape mismatch");
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(z.rows());
  const Matrix<Scalar> diff = z - z_sharp;
  return {inv_n * diff.squaredNorm(), Matrix<Scalar>(Scalar(2) * inv_n * diff)};
}

}  // namespace gann
