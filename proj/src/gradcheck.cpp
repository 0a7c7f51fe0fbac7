#include "dhpm/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dhpm {
namespace {

bool crosses_kink(const Eigen::VectorXd& plus, const Eigen::VectorXd& minus,
                  const Eigen::VectorXd& center, double band) {
  if (plus.size() != minus.size() || plus.size() != center.size()) return true;
  for (Eigen::Index i = 0; i < center.size(); ++i) {
    if (std::abs(center(i)) < band || std::abs(plus(i)) < band || std::abs(minus(i)) < band)
      return true;
    if ((plus(i) > 0) != (center(i) > 0) || (minus(i) > 0) != (center(i) > 0)) return true;
  }
  return false;
}

}  // namespace

GradCheckResult finite_diff_check(const ScalarFn& f, const Eigen::VectorXd& analytic_grad,
                                  const Eigen::VectorXd& point, double step, double kink_band,
                                  const KinkFn& kinks) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be > 0");
  if (analytic_grad.size() != point.size())
    throw std::invalid_argument("finite_diff_check: gradient and point sizes differ");

  GradCheckResult out;
  Eigen::VectorXd center_kinks;
  if (kinks) center_kinks = kinks(point);

  Eigen::VectorXd x = point;
  for (Eigen::Index i = 0; i < point.size(); ++i) {
    x(i) = point(i) + step;
    const double f_plus = f(x);
    Eigen::VectorXd k_plus;
    if (kinks) k_plus = kinks(x);
    x(i) = point(i) - step;
    const double f_minus = f(x);
    Eigen::VectorXd k_minus;
    if (kinks) k_minus = kinks(x);
    x(i) = point(i);

    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw EvaluationError("non-finite function value at coordinate " + std::to_string(i), i);
    if (kinks && crosses_kink(k_plus, k_minus, center_kinks, kink_band)) {
      ++out.n_skipped_kinks;
      continue;
    }

    const double numeric = (f_plus - f_minus) / (2.0 * step);
    const double analytic = analytic_grad(i);
    const double abs_err = std::abs(numeric - analytic);
    const double rel_err = abs_err / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    ++out.n_checked;
    out.max_abs_error = std::max(out.max_abs_error, abs_err);
    if (rel_err > out.max_rel_error || out.worst_parameter_index < 0) {
      out.max_rel_error = rel_err;
      out.worst_parameter_index = i;
    }
  }
  return out;
}

Eigen::VectorXd objective_kinks(const Eigen::VectorXd& params, const Scene& scene,
                                const LossWeights& weights, Eigen::Index n_points, int cap,
                                const LossReport& reference) {
  const auto bank = unflatten_bank(params);
  const auto lanes = sample_bank(bank, n_points);
  const auto& gts = scene.ground_truth;
  const auto k_count = bank.size();
  const int cap_used = cap > 0 ? cap : default_cap(static_cast<int>(k_count));

  std::vector<double> args;
  const CostMatrix costs = lane_cost_matrix(gts, lanes);
  const auto positives = hungarian_assign(costs);
  const auto dense = dense_match(costs, cap_used);

  // Matching decisions are piecewise constant; a flip is a discontinuity.
  args.push_back(positives.pairs == reference.positives.pairs ? 1.0 : -1.0);
  args.push_back(dense.target == reference.dense.target && dense.active == reference.dense.active
                     ? 1.0
                     : -1.0);

  for (const auto& [g, p] : positives.pairs) {
    const auto diff = lanes[p] - gts[g];
    for (Eigen::Index i = 0; i < diff.size(); ++i) args.push_back(diff(i));
  }
  std::vector<double> ratios(k_count, 0.0);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double chord = chord_length(lanes[k]);
    args.push_back(chord - kChordEpsilon);
    if (chord > kChordEpsilon) ratios[k] = straightness_ratio(lanes[k]).value;
    for (Eigen::Index i = 0; i + 1 < lanes[k].rows(); ++i)
      args.push_back((lanes[k].row(i + 1) - lanes[k].row(i)).norm());
    if (!dense.active[k] || !dense.target[k]) continue;
    const auto& g = gts[*dense.target[k]];
    const auto last = lanes[k].rows() - 1;
    for (int c = 0; c < 2; ++c) {
      args.push_back(lanes[k](0, c) - g(0, c));
      args.push_back(lanes[k](last, c) - g(last, c));
    }
  }
  if (weights.enable_div) {
    for (const auto& cluster : dense.clusters)
      for (std::size_t a = 0; a < cluster.size(); ++a)
        for (std::size_t b = a + 1; b < cluster.size(); ++b)
          if (dense.active[cluster[a]] && dense.active[cluster[b]])
            args.push_back(ratios[cluster[a]] - ratios[cluster[b]]);
  }
  return Eigen::Map<const Eigen::VectorXd>(args.data(), static_cast<Eigen::Index>(args.size()));
}

}  // namespace dhpm
