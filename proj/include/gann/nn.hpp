#pragma once

#include <cmath>
#include <utility>

#include "gann/types.hpp"

namespace gann {

template <typename Scalar>
Matrix<Scalar> linear(const Matrix<Scalar>& x, const Matrix<Scalar>& w) {
  if (x.cols() != w.rows())
    throw data_error("linear: inner dimensions differ (" + std::to_string(x.cols()) +
                     " vs " + std::to_string(w.rows()) + ")");
  return x * w;
}

template <typename Scalar>
Matrix<Scalar> relu(const Matrix<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& x) {
  return ((-x.array()).exp() + Scalar(1)).inverse().matrix();
}

/// Row-wise log(softmax(x)) with max subtraction.
template <typename Scalar>
Matrix<Scalar> log_softmax_rows(const Matrix<Scalar>& x) {
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    const auto shifted = x.row(i).array() - m;
    const Scalar log_sum = std::log(shifted.exp().sum());
    out.row(i) = shifted - log_sum;
  }
  return out;
}

template <typename Scalar>
struct DropoutResult {
  Matrix<Scalar> values;
  Matrix<Scalar> mask;  // 0 where dropped, 1/(1-rate) where kept
};

///// Inverted dropout: survivors scaled by 1/(1-rate) so E[output] = input.
/// Eval mode is the identity with an all-ones mask.
template <typename Scalar>
DropoutResult<Scalar> dropout(const Matrix<Scalar>& x, double rate, Rng& rng, bool training) {
  if (rate < 0.0 || rate >= 1.0) throw data_error("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0)
    return {x, Matrix<Scalar>::Ones(x.rows(), x.cols())};
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  Matrix<Scalar> mask(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j)
      mask(i, j) = rng.uniform() < rate ? Scalar(0) : scale;
  return {x.cwiseProduct(mask), std::move(mask)};
}

/// Sparse variant: only stored entries are sampled (dropping a structural
/// zero is a no-op). Mask shares the input's sparsity pattern.
template <typename Scalar>
std::pair<SparseMat<Scalar>, SparseMat<Scalar>> dropout_sparse(const SparseMat<Scalar>& x,
                                                               double rate, Rng& rng,
                                                               bool training) {
  if (rate < 0.0 || rate >= 1.0) throw data_error("dropout: rate must be in [0, 1)");
  SparseMat<Scalar> values = x;
  SparseMat<Scalar> mask = x;
  const Scalar scale = Scalar(1.0 / (1.0 - rate));
  for (Index k = 0; k < values.nonZeros(); ++k) {
    const Scalar m = (!training || rate == 0.0) ? Scalar(1)
                     : (rng.uniform() < rate ? Scalar(0) : scale);
    mask.valuePtr()[k] = m;
    values.valuePtr()[k] *= m;
  }
  return {std::move(values), std::move(mask)};
}

/// e_i = h_i / max(||h_i||_2, epsilon); zero rows map to zero rows.
template <typename Scalar>
Matrix<Scalar> row_unit_normalize(const Matrix<Scalar>& x, Scalar epsilon) {
  if (!(epsilon > Scalar(0))) throw data_error("row_unit_normalize: epsilon must be > 0");
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i)
    out.row(i) = x.row(i) / std::max(x.row(i).norm(), epsilon);
  return out;
}

/// Trainable weights of the shared two-layer MLP; bias-free throughout.
template <typename Scalar>
struct LayerParams {
  Matrix<Scalar> w1;  // d x h'
  Matrix<Scalar> w2;  // h' x C

  std::string digest() const {
    std::uint64_t h = fnv1a64(w1.data(), sizeof(Scalar) * static_cast<std::size_t>(w1.size()));
    h = fnv1a64(w2.data(), sizeof(Scalar) * static_cast<std::size_t>(w2.size()), h);
    return to_hex(h);
  }
};

template <typename Scalar>
struct GradientBuffer {
  Matrix<Scalar> g_w1;
  Matrix<Scalar> g_w2;

  static GradientBuffer zeros_like(const LayerParams<Scalar>& p) {
    return {Matrix<Scalar>::Zero(p.w1.rows(), p.w1.cols()),
            Matrix<Scalar>::Zero(p.w2.rows(), p.w2.cols())};
  }
  bool finite() const { return g_w1.allFinite() && g_w2.allFinite(); }
};

/// Uniform Glorot initialization, U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename Scalar>
Matrix<Scalar> glorot_uniform(Index rows, Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix<Scalar> w(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      w(i, j) = static_cast<Scalar>(a * (2.0 * rng.uniform() - 1.0));
  return w;
}

template <typename Scalar>
LayerParams<Scalar> init_params(Index feature_dim, Index hidden, Index num_classes, Rng& rng) {
  return {glorot_uniform<Scalar>(feature_dim, hidden, rng),
          glorot_uniform<Scalar>(hidden, num_classes, rng)};
}

/// Adam with decoupled weight decay and bias correction.
template <typename Scalar>
struct OptimizerState {
  Matrix<Scalar> m_w1, v_w1, m_w2, v_w2;
  long step = 0;
  double lr = 0.01;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerState init(const LayerParams<Scalar>& p, double lr, double weight_decay) {
    OptimizerState s;
    s.m_w1 = Matrix<Scalar>::Zero(p.w1.rows(), p.w1.cols());
    s.v_w1 = s.m_w1;
    s.m_w2 = Matrix<Scalar>::Zero(p.w2.rows(), p.w2.cols());
    s.v_w2 = s.m_w2;
    s.lr = lr;
    s.weight_decay = weight_decay;
    return s;
  }
};

namespace detail {
template <typename Scalar>
void adam_update_one(Matrix<Scalar>& w, const Matrix<Scalar>& g, Matrix<Scalar>& m,
                     Matrix<Scalar>& v, const OptimizerState<Scalar>& s) {
  const Scalar b1 = static_cast<Scalar>(s.beta1);
  const Scalar b2 = static_cast<Scalar>(s.beta2);
  const Scalar lr = static_cast<Scalar>(s.lr);
  const Scalar eps = static_cast<Scalar>(s.eps);
  const Scalar corr1 = static_cast<Scalar>(1.0 - std::pow(s.beta1, static_cast<double>(s.step)));
  const Scalar corr2 = static_cast<Scalar>(1.0 - std::pow(s.beta2, static_cast<double>(s.step)));
  if (s.weight_decay != 0.0) w -= lr * static_cast<Scalar>(s.weight_decay) * w;
  m = b1 * m + (Scalar(1) - b1) * g;
  v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
  w.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
}
}  // namespace detail

template <typename Scalar>
void adam_step(LayerParams<Scalar>& params, const GradientBuffer<Scalar>& grads,
               OptimizerState<Scalar>& state) {
  if (!grads.finite())
    throw numeric_error("adam_step: non-finite gradient at step " +
                        std::to_string(state.step + 1));
  state.step += 1;
  detail::adam_update_one(params.w1, grads.g_w1, state.m_w1, state.v_w1, state);
  detail::adam_update_one(params.w2, grads.g_w2, state.m_w2, state.v_w2, state);
}

}  // namespace gann
