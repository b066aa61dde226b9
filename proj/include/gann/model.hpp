#pragma once

#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gann/alignment.hpp"
#include "gann/data.hpp"
#include "gann/graph.hpp"
#include "gann/nn.hpp"

namespace gann {

struct GannConfig {
  Index layers = 5;
  Index hidden = 5000;
  double lr = 0.01;
  double weight_decay = 1e-4;
  double dropout = 0.0;
  Index topk = 10;
  double eta = 0.5;
  double lambda = 1.0;
  double beta = 0.5;
  double gamma = 0.5;
  double tem = 0.5;
  Index patience = 20;
  double epsilon = 1e-12;
  Index max_iters_per_layer = 500;
  std::uint64_t seed = 0;

  FeatureNorm feature_norm = FeatureNorm::l1;
  bool binarize_targets = false;
  bool mixmatch_sharpen = false;
  bool reset_patience = false;
  bool use_center_rule = true;

  void validate() const {
    if (layers < 1) throw data_error("config: layers must be >= 1");
    if (hidden < 1) throw data_error("config: hidden must be >= 1");
    if (!(tem > 0)) throw data_error("config: tem must be > 0");
    if (dropout < 0 || dropout >= 1) throw data_error("config: dropout must be in [0, 1)");
    if (patience < 1) throw data_error("config: patience must be >= 1");
    if (topk < 1) throw data_error("config: topk must be >= 1");
    if (!(epsilon > 0)) throw data_error("config: epsilon must be > 0");
    if (max_iters_per_layer < 1) throw data_error("config: max_iters_per_layer must be >= 1");
    if (!(lr > 0)) throw data_error("config: lr must be > 0");
  }
};

/// Per-labeled-node weights w_i over the training nodes, in masks.train
/// order; positive and normalized to sum 1.
struct SampleWeights {
  Eigen::VectorXd w;

  static SampleWeights uniform(Index n) {
    SampleWeights s;
    s.w = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    return s;
  }
};

/// One layer's forward products plus what the backward pass reuses. e feeds
/// the alignment losses only; h2 is computed from h1, not from e.
template <typename Scalar>
struct LayerOutput {
  Matrix<Scalar> h1;  // relu(dropout(P) W1)
  Matrix<Scalar> e;   // row-unit-normalized h1
  Matrix<Scalar> h2;  // relu(h1 W2)
  Matrix<Scalar> z;   // log-softmax rows of h2

  FeatureMatrix<Scalar> dropped_input;
  Vector<Scalar> h1_row_norms;
};

template <typename Scalar>
LayerOutput<Scalar> forward_layer(const FeatureMatrix<Scalar>& p_l,
                                  const LayerParams<Scalar>& params, const GannConfig& cfg,
                                  Rng& rng, bool training) {
  if (p_l.cols() != params.w1.rows())
    throw data_error("forward_layer: feature dim " + std::to_string(p_l.cols()) +
                     " != W1 rows " + std::to_string(params.w1.rows()));
  LayerOutput<Scalar> out;
  if (training && cfg.dropout > 0.0) {
    if (p_l.is_sparse())
      out.dropped_input = FeatureMatrix<Scalar>(
          dropout_sparse(p_l.sparse(), cfg.dropout, rng, true).first);
    else
      out.dropped_input =
          FeatureMatrix<Scalar>(dropout(p_l.to_dense(), cfg.dropout, rng, true).values);
  } else {
    out.dropped_input = p_l;
  }
  out.h1 = relu(Matrix<Scalar>(out.dropped_input.multiply(params.w1)));
  out.h1_row_norms = out.h1.rowwise().norm();
  out.e.resize(out.h1.rows(), out.h1.cols());
  const Scalar eps = static_cast<Scalar>(cfg.epsilon);
  for (Index i = 0; i < out.h1.rows(); ++i)
    out.e.row(i) = out.h1.row(i) / std::max(out.h1_row_norms[i], eps);
  out.h2 = relu(linear(out.h1, params.w2));
  out.z = log_softmax_rows(out.h2);
  return out;
}

/// Prediction-only forward (no dropout, no embedding normalization); used for
/// the per-iteration validation/test curves.
template <typename Scalar>
Matrix<Scalar> eval_logits(const FeatureMatrix<Scalar>& p_l, const LayerParams<Scalar>& params) {
  const Matrix<Scalar> h1 = relu(Matrix<Scalar>(p_l.multiply(params.w1)));
  return log_softmax_rows(Matrix<Scalar>(relu(linear(h1, params.w2))));
}

struct LossBreakdown {
  double total = 0;
  double semi = 0;
  double feature = 0;
  double center = 0;
  double min_entropy = 0;
};

/// Combined objective L = L_semi + L_e + beta * L_f + gamma * L_me and its
/// gradients w.r.t. W1/W2, accumulated through the shared h1 path.
///
/// The sharpened target is a constant: pass `fixed_sharpened` to pin it
/// (finite-difference checks), otherwise it is recomputed from the current
/// probabilities and still treated as constant.
template <typename Scalar>
std::pair<LossBreakdown, GradientBuffer<Scalar>> total_loss(
    const LayerOutput<Scalar>& output, const LayerParams<Scalar>& params,
    const FeatureTarget<Scalar>& target, const std::vector<std::int32_t>& labels,
    const SplitMasks& masks, const SampleWeights& weights, const GannConfig& cfg,
    const Matrix<Scalar>* fixed_sharpened = nullptr) {
  const Index n = output.z.rows();
  const Index c = output.z.cols();
  if (static_cast<Index>(weights.w.size()) != static_cast<Index>(masks.train.size()))
    throw data_error("total_loss: sample weights do not match the train set");

  LossBreakdown breakdown;
  Matrix<Scalar> d_z = Matrix<Scalar>::Zero(n, c);

  // L_semi: weighted negative log-likelihood over labeled train nodes.
  for (std::size_t t = 0; t < masks.train.size(); ++t) {
    const Index i = masks.train[t];
    const std::int32_t y = labels[static_cast<std::size_t>(i)];
    const Scalar w = static_cast<Scalar>(weights.w[static_cast<Index>(t)]);
    breakdown.semi -= static_cast<double>(w * output.z(i, y));
    d_z(i, y) -= w;
  }

  const Matrix<Scalar> probs = output.z.array().exp().matrix();

  // gamma * L_me through z = exp(Z); the sharpened side contributes nothing.
  if (cfg.gamma != 0.0) {
    Matrix<Scalar> sharp;
    if (fixed_sharpened == nullptr)
      sharp = sharpen(probs, static_cast<Scalar>(cfg.tem), cfg.mixmatch_sharpen);
    const auto me = min_entropy_loss(probs, fixed_sharpened ? *fixed_sharpened : sharp);
    breakdown.min_entropy = static_cast<double>(me.loss);
    d_z += static_cast<Scalar>(cfg.gamma) * me.grad_z.cwiseProduct(probs);
  }

  // log-softmax backward: dH2_i = dZ_i - softmax(H2)_i * sum(dZ_i)
  const Vector<Scalar> row_sums = d_z.rowwise().sum();
  Matrix<Scalar> d_h2 = d_z - (probs.array().colwise() * row_sums.array()).matrix();
  d_h2 = (output.h2.array() > Scalar(0)).select(d_h2, Scalar(0));

  GradientBuffer<Scalar> grads;
  grads.g_w2 = output.h1.transpose() * d_h2;
  Matrix<Scalar> d_h1 = d_h2 * params.w2.transpose();

  // Alignment gradients arrive at E and flow back through the row
  // normalization into h1.
  Matrix<Scalar> d_e = Matrix<Scalar>::Zero(n, output.e.cols());
  if (cfg.beta != 0.0) {
    const auto fa = feature_alignment_loss(output.e, target);
    breakdown.feature = static_cast<double>(fa.loss);
    d_e += static_cast<Scalar>(cfg.beta) * fa.grad_e;
  }
  if (cfg.use_center_rule) {
    const auto centers = cluster_centers(output.e, labels, masks.train, c);
    const auto ca = center_alignment_loss(centers, static_cast<Scalar>(cfg.lambda));
    breakdown.center = static_cast<double>(ca.loss);
    for (const Index i : masks.train) {
      const std::int32_t y = labels[static_cast<std::size_t>(i)];
      d_e.row(i) += ca.grad_e_bar.row(y) /
                    static_cast<Scalar>(centers.counts_per_class[static_cast<std::size_t>(y)]);
    }
  }

  // e_i = h_i / max(||h_i||, eps): the normalization backward.
  const Scalar eps = static_cast<Scalar>(cfg.epsilon);
  for (Index i = 0; i < n; ++i) {
    const Scalar norm = output.h1_row_norms[i];
    if (norm > eps) {
      const Scalar inner = d_e.row(i).dot(output.e.row(i));
      d_h1.row(i) += (d_e.row(i) - inner * output.e.row(i)) / norm;
    } else {
      d_h1.row(i) += d_e.row(i) / eps;
    }
  }

  Matrix<Scalar> d_u1 = (output.h1.array() > Scalar(0)).select(d_h1, Scalar(0));
  grads.g_w1 = output.dropped_input.transpose_multiply(d_u1);

  breakdown.total = breakdown.semi + breakdown.center + cfg.beta * breakdown.feature +
                    cfg.gamma * breakdown.min_entropy;
  return {breakdown, std::move(grads)};
}

/// Fraction of mask nodes whose argmax prediction matches the label; argmax
/// ties break toward the smaller class index.
template <typename Scalar>
double evaluate_accuracy(const Matrix<Scalar>& z, const std::vector<std::int32_t>& labels,
                         const std::vector<Index>& mask) {
  if (mask.empty()) throw data_error("evaluate_accuracy: empty mask");
  Index correct = 0;
  for (const Index i : mask) {
    Index best = 0;
    for (Index j = 1; j < z.cols(); ++j)
      if (z(i, j) > z(i, best)) best = j;
    if (best == labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

/// SAMME.R-style reweighting from the layer's log-probabilities:
/// w_i <- w_i * exp(-((C-1)/C) * Z[i, y_i]), renormalized. Computed in log
/// space with max subtraction so badly misclassified nodes cannot overflow.
template <typename Scalar>
SampleWeights update_sample_weights(const SampleWeights& weights, const Matrix<Scalar>& z,
                                    const std::vector<std::int32_t>& labels,
                                    const std::vector<Index>& train_idx, Index num_classes) {
  const double factor = static_cast<double>(num_classes - 1) / static_cast<double>(num_classes);
  Eigen::VectorXd log_w(weights.w.size());
  for (std::size_t t = 0; t < train_idx.size(); ++t) {
    const Index i = train_idx[t];
    const std::int32_t y = labels[static_cast<std::size_t>(i)];
    log_w[static_cast<Index>(t)] =
        std::log(weights.w[static_cast<Index>(t)]) - factor * static_cast<double>(z(i, y));
  }
  const double shift = log_w.maxCoeff();
  SampleWeights out;
  out.w = (log_w.array() - shift).exp();
  out.w /= out.w.sum();
  return out;
}

struct IterationRecord {
  Index layer = 0;
  Index iteration = 0;
  double train_loss = 0;
  double val_acc = 0;
  double test_acc = 0;
};

template <typename Scalar>
struct LayerTrainResult {
  LayerParams<Scalar> best_params;
  LayerOutput<Scalar> best_output;  // eval-mode forward at the best parameters
  std::vector<IterationRecord> curve;
  double best_val_acc = -1.0;
  double test_acc_at_best = 0.0;
  Index iterations_run = 0;
  std::string init_digest;
  std::string best_digest;
};

/// Trains one layer on its propagated input. Patience s counts steps whose
/// total loss failed to improve on the previous step and by default never
/// resets; `reset_patience` switches to conventional best-so-far early
/// stopping. Model selection tracks the validation accuracy of the running
/// ensemble average.
template <typename Scalar>
LayerTrainResult<Scalar> train_layer(const FeatureMatrix<Scalar>& p_l,
                                     LayerParams<Scalar> params,
                                     const FeatureTarget<Scalar>& target,
                                     const std::vector<std::int32_t>& labels,
                                     const SplitMasks& masks, const SampleWeights& weights,
                                     const GannConfig& cfg, Rng& rng,
                                     const Matrix<Scalar>& prev_z_sum, Index layer_index) {
  LayerTrainResult<Scalar> result;
  result.init_digest = params.digest();
  auto opt = OptimizerState<Scalar>::init(params, cfg.lr, cfg.weight_decay);

  const Scalar layer_count = static_cast<Scalar>(layer_index);
  LayerParams<Scalar> best_params = params;
  double prev_loss = std::numeric_limits<double>::infinity();
  double best_loss = std::numeric_limits<double>::infinity();
  Index stall = 0;

  for (Index iter = 1; iter <= cfg.max_iters_per_layer; ++iter) {
    const auto fwd = forward_layer(p_l, params, cfg, rng, true);
    auto [breakdown, grads] = total_loss(fwd, params, target, labels, masks, weights, cfg);
    if (!std::isfinite(breakdown.total))
      throw numeric_error("layer " + std::to_string(layer_index) + " iteration " +
                          std::to_string(iter) + ": non-finite loss " +
                          std::to_string(breakdown.total));

    // With dropout off the training forward is the eval forward.
    const Matrix<Scalar> z_eval = cfg.dropout > 0.0 ? eval_logits(p_l, params) : fwd.z;
    const Matrix<Scalar> ensemble = (prev_z_sum + z_eval) / layer_count;
    const double val_acc = evaluate_accuracy(ensemble, labels, masks.val);
    const double test_acc = evaluate_accuracy(ensemble, labels, masks.test);
    result.curve.push_back({layer_index, iter, breakdown.total, val_acc, test_acc});
    if (val_acc > result.best_val_acc) {
      result.best_val_acc = val_acc;
      result.test_acc_at_best = test_acc;
      best_params = params;
    }

    adam_step(params, grads, opt);
    result.iterations_run = iter;

    if (cfg.reset_patience) {
      if (breakdown.total < best_loss)
        stall = 0;
      else
        ++stall;
    } else if (iter > 1 && breakdown.total >= prev_loss) {
      ++stall;
    }
    best_loss = std::min(best_loss, breakdown.total);
    prev_loss = breakdown.total;
    if (stall >= cfg.patience) break;
  }

  result.best_params = std::move(best_params);
  result.best_digest = result.best_params.digest();
  Rng eval_rng(0);  // unused: evaluation never draws
  result.best_output = forward_layer(p_l, result.best_params, cfg, eval_rng, false);
  return result;
}

template <typename Scalar>
struct LayerSummary {
  Index layer = 0;
  double best_val_acc = 0;
  double test_acc_at_best = 0;
  Index iterations = 0;
  std::string init_digest;
  std::string best_digest;
};

template <typename Scalar>
struct GannRunResult {
  Matrix<Scalar> ensemble_z;               // mean of the per-layer log-probabilities
  std::vector<Matrix<Scalar>> layer_z;     // stored eval-mode Z per layer
  Matrix<Scalar> final_embeddings;         // E of the last layer's best model
  std::vector<IterationRecord> curve;
  std::vector<LayerSummary<Scalar>> layers;
  double val_accuracy = 0;
  double test_accuracy = 0;
};

/// The full layer-wise procedure: propagate the input one extra hop per
/// layer, train with parameter carryover, reweight the labeled samples
/// between layers, and average the per-layer predictions.
template <typename Scalar>
GannRunResult<Scalar> run_gann(const DatasetBundle<Scalar>& bundle, const SplitMasks& masks,
                               const GannConfig& cfg) {
  cfg.validate();
  const Index n = bundle.num_nodes();
  const Index c = bundle.num_classes;

  const SparseGraph<Scalar> a_hat = symmetric_normalize(bundle.graph);
  FeatureMatrix<Scalar> x_hat =
      bundle.features.is_sparse()
          ? FeatureMatrix<Scalar>(row_normalize_features(bundle.features.sparse(), cfg.feature_norm))
          : FeatureMatrix<Scalar>(row_normalize_features(bundle.features.to_dense(), cfg.feature_norm));

  const FeatureTarget<Scalar> target =
      x_hat.is_sparse()
          ? build_feature_target(cosine_similarity_sparse(x_hat.sparse()),
                                 static_cast<Scalar>(cfg.eta), cfg.topk, cfg.binarize_targets)
          : build_feature_target(cosine_similarity_matrix(x_hat.to_dense()),
                                 static_cast<Scalar>(cfg.eta), cfg.topk, cfg.binarize_targets);

  Rng root(cfg.seed);
  Rng init_rng = root.fork(1);
  Rng dropout_rng = root.fork(2);

  LayerParams<Scalar> params = init_params<Scalar>(x_hat.cols(), cfg.hidden, c, init_rng);
  SampleWeights weights = SampleWeights::uniform(static_cast<Index>(masks.train.size()));

  GannRunResult<Scalar> result;
  Matrix<Scalar> z_sum = Matrix<Scalar>::Zero(n, c);
  FeatureMatrix<Scalar> propagated = x_hat;

  for (Index layer = 1; layer <= cfg.layers; ++layer) {
    if (layer > 1) propagated = propagated.propagate_once(a_hat);
    auto layer_result = train_layer(propagated, std::move(params), target, bundle.labels,
                                    masks, weights, cfg, dropout_rng, z_sum, layer);
    params = std::move(layer_result.best_params);
    z_sum += layer_result.best_output.z;
    result.layer_z.push_back(layer_result.best_output.z);
    result.curve.insert(result.curve.end(), layer_result.curve.begin(),
                        layer_result.curve.end());
    result.layers.push_back({layer, layer_result.best_val_acc, layer_result.test_acc_at_best,
                             layer_result.iterations_run, layer_result.init_digest,
                             layer_result.best_digest});
    weights = update_sample_weights(weights, layer_result.best_output.z, bundle.labels,
                                    masks.train, c);
    if (layer == cfg.layers) result.final_embeddings = std::move(layer_result.best_output.e);
  }

  result.ensemble_z = z_sum / static_cast<Scalar>(cfg.layers);
  result.val_accuracy = evaluate_accuracy(result.ensemble_z, bundle.labels, masks.val);
  result.test_accuracy = evaluate_accuracy(result.ensemble_z, bundle.labels, masks.test);
  return result;
}

}  // namespace gann
