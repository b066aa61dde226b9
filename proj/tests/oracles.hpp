#pragma once

// Naive reference implementations the tests compare against. Deliberately
// slow and loop-based; they share no code with the library.

#include <algorithm>
#include <cmath>
#include <queue>
#include <utility>
#include <vector>

#include "gann/types.hpp"

namespace oracle {

using gann::Index;

inline gann::Matrix<double> dense_normalized_adjacency(
    Index n, const std::vector<std::pair<Index, Index>>& edges) {
  gann::Matrix<double> a = gann::Matrix<double>::Zero(n, n);
  for (const auto& [i, j] : edges) a(i, j) = a(j, i) = 1.0;
  for (Index i = 0; i < n; ++i) a(i, i) += 1.0;
  std::vector<double> inv_sqrt_deg(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    inv_sqrt_deg[static_cast<std::size_t>(i)] = 1.0 / std::sqrt(a.row(i).sum());
  gann::Matrix<double> out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      out(i, j) = a(i, j) * inv_sqrt_deg[static_cast<std::size_t>(i)] *
                  inv_sqrt_deg[static_cast<std::size_t>(j)];
  return out;
}

inline gann::Matrix<double> naive_matmul(const gann::Matrix<double>& a,
                                         const gann::Matrix<double>& b) {
  gann::Matrix<double> c = gann::Matrix<double>::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index k = 0; k < a.cols(); ++k)
      for (Index j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
  return c;
}

inline gann::Matrix<double> dense_power(const gann::Matrix<double>& a, Index k) {
  gann::Matrix<double> out = gann::Matrix<double>::Identity(a.rows(), a.cols());
  for (Index i = 0; i < k; ++i) out = naive_matmul(out, a);
  return out;
}

/// Hop distances by BFS over an undirected edge list; -1 when unreachable.
inline std::vector<Index> bfs_distances(Index n,
                                        const std::vector<std::pair<Index, Index>>& edges,
                                        Index source) {
  std::vector<std::vector<Index>> adj(static_cast<std::size_t>(n));
  for (const auto& [i, j] : edges) {
    adj[static_cast<std::size_t>(i)].push_back(j);
    adj[static_cast<std::size_t>(j)].push_back(i);
  }
  std::vector<Index> dist(static_cast<std::size_t>(n), -1);
  std::queue<Index> q;
  dist[static_cast<std::size_t>(source)] = 0;
  q.push(source);
  while (!q.empty()) {
    const Index u = q.front();
    q.pop();
    for (const Index v : adj[static_cast<std::size_t>(u)])
      if (dist[static_cast<std::size_t>(v)] < 0) {
        dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
        q.push(v);
      }
  }
  return dist;
}

/// Diameter of a connected graph; -1 if disconnected.
inline Index bfs_diameter(Index n, const std::vector<std::pair<Index, Index>>& edges) {
  Index diameter = 0;
  for (Index s = 0; s < n; ++s) {
    const auto dist = bfs_distances(n, edges, s);
    for (const Index d : dist) {
      if (d < 0) return -1;
      diameter = std::max(diameter, d);
    }
  }
  return diameter;
}

/// Density of the h-hop reachability closure including self-loops, the
/// structural support of the normalized adjacency to the h-th power.
inline double reachability_density(Index n, const std::vector<std::pair<Index, Index>>& edges,
                                   Index hop) {
  std::size_t reachable = 0;
  for (Index s = 0; s < n; ++s)
    for (const Index d : bfs_distances(n, edges, s))
      if (d >= 0 && d <= hop) ++reachable;
  return static_cast<double>(reachable) / (static_cast<double>(n) * static_cast<double>(n));
}

inline gann::Matrix<double> naive_class_means(const gann::Matrix<double>& e,
                                              const std::vector<std::int32_t>& labels,
                                              const std::vector<Index>& idx, Index c) {
  gann::Matrix<double> mean = gann::Matrix<double>::Zero(c, e.cols());
  std::vector<Index> count(static_cast<std::size_t>(c), 0);
  for (const Index i : idx) {
    const auto y = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    mean.row(static_cast<Index>(y)) += e.row(i);
    ++count[y];
  }
  for (Index k = 0; k < c; ++k) mean.row(k) /= static_cast<double>(count[static_cast<std::size_t>(k)]);
  return mean;
}

}  // namespace oracle
