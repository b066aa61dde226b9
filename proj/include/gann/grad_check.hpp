#pragma once

#include <functional>
#include <vector>

#include "gann/nn.hpp"
#include "gann/types.hpp"

namespace gann {

struct GradCheckReport {
  double max_rel_error = 0.0;
  Index coords_checked = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool passes(double tolerance) const { return max_rel_error < tolerance; }
};

/// Central-difference check of hand-derived gradients in double precision.
///
/// `loss_fn` maps parameters to (loss, analytic gradients) and must be
/// deterministic (dropout disabled). A seeded random subset of at least
/// `min_coords` coordinates is probed; the relative error uses
/// |fd - analytic| / max(|fd|, |analytic|, floor) so that coordinates where
/// both sides are essentially zero do not dominate the report.
template <typename LossFn>
GradCheckReport finite_difference_check(LossFn&& loss_fn, LayerParams<double> params,
                                        double step = 1e-5, Index min_coords = 200,
                                        std::uint64_t seed = 17,
                                        double denom_floor = 1e-6) {
  const auto [base_loss, analytic] = loss_fn(static_cast<const LayerParams<double>&>(params));
  (void)base_loss;

  const Index n1 = params.w1.size();
  const Index n2 = params.w2.size();
  const Index total = n1 + n2;

  std::vector<Index> coords(static_cast<std::size_t>(total));
  for (Index i = 0; i < total; ++i) coords[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(coords);
  const Index take = std::min(total, std::max<Index>(min_coords, 1));

  const auto flat = [&](LayerParams<double>& p, Index c) -> double& {
    return c < n1 ? p.w1.data()[c] : p.w2.data()[c - n1];
  };
  const auto flat_grad = [&](const GradientBuffer<double>& g, Index c) -> double {
    return c < n1 ? g.g_w1.data()[c] : g.g_w2.data()[c - n1];
  };

  GradCheckReport report;
  report.coords_checked = take;
  for (Index k = 0; k < take; ++k) {
    const Index c = coords[static_cast<std::size_t>(k)];
    double& slot = flat(params, c);
    const double saved = slot;
    slot = saved + step;
    const double plus = loss_fn(static_cast<const LayerParams<double>&>(params)).first;
    slot = saved - step;
    const double minus = loss_fn(static_cast<const LayerParams<double>&>(params)).first;
    slot = saved;

    const double numeric = (plus - minus) / (2.0 * step);
    const double an = flat_grad(analytic, c);
    const double denom = std::max({std::abs(numeric), std::abs(an), denom_floor});
    const double rel = std::abs(numeric - an) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_analytic = an;
      report.worst_numeric = numeric;
    }
  }
  return report;
}

}  // namespace gann
