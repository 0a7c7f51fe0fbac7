#pragma once

#include "dhpm/assignment.hpp"
#include "dhpm/geometry.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <vector>

namespace dhpm {

inline constexpr double kProbClamp = 1e-7;

/// Term weights and ablation switches for the dense objective
///   reg * J_reg + seg * J_seg + ava * (shape * J_shape + loc * J_loc) + div * J_div + dis * J_dis.
/// With `enable_dis` off and `enable_cls` on, the classification slot uses hard
/// 0/1 labels weighted by `lambda_cls` (the sparse baseline).
struct LossWeights {
  double lambda_reg = 1.0;
  double lambda_seg = 0.1;
  double lambda_ava = 0.0005;
  double lambda_div = 0.0001;
  double lambda_dis = 0.75;
  double lambda_cls = 0.75;
  double lambda_shape = 1.0;
  double lambda_loc = 1.0;
  double w_neg = 1.0;
  double beta = 10.0;
  double gamma = 0.5;

  bool enable_reg = true;
  bool enable_seg = true;
  bool enable_shape = true;
  bool enable_loc = true;
  bool enable_div = true;
  bool enable_dis = true;
  bool enable_cls = true;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool ava_enabled() const { return enable_shape || enable_loc; }

  static LossWeights dense_defaults() { return {}; }
  /// Regression plus hard-label classification only.
  static LossWeights sparse_baseline();
};

template <class Scalar>
struct LogitLoss {
  Scalar value = Scalar(0);
  Scalar grad_logit = Scalar(0);
};

template <class Scalar>
Scalar logistic(Scalar z) {
  return Scalar(1) / (Scalar(1) + std::exp(-z));
}

template <class Scalar>
Scalar clamp_prob(Scalar p) {
  return std::clamp(p, Scalar(kProbClamp), Scalar(1 - kProbClamp));
}

/// Soft-target binary cross entropy -(l log p + w (1 - l) log(1 - p)).
/// `prob` is the logistic of the logit; the gradient is w.r.t. that logit.
template <class Scalar>
LogitLoss<Scalar> discrimination_loss(Scalar prob, Scalar target, Scalar w_neg) {
  const Scalar pc = clamp_prob(prob);
  LogitLoss<Scalar> out;
  out.value = -(target * std::log(pc) + w_neg * (Scalar(1) - target) * std::log(Scalar(1) - pc));
  out.grad_logit = -target * (Scalar(1) - prob) + w_neg * (Scalar(1) - target) * prob;
  return out;
}

/// Hard-label binary cross entropy, label in {0, 1}.
template <class Scalar>
LogitLoss<Scalar> cls_loss(Scalar prob, int label, Scalar w_neg) {
  return discrimination_loss(prob, Scalar(label != 0 ? 1 : 0), w_neg);
}

/// gamma + (1 - gamma) exp(-beta * reg) for positives, 0 otherwise.
/// `reg_value` is a constant: no gradient flows through it.
template <class Scalar>
Scalar soft_label(Scalar reg_value, bool is_positive, Scalar beta, Scalar gamma) {
  if (!is_positive) return Scalar(0);
  return gamma + (Scalar(1) - gamma) * std::exp(-beta * reg_value);
}

/// (1/2N) sum(|dy| + |dx|) with its gradient w.r.t. `p`.
template <class Scalar>
ValueGrad<Scalar> reg_loss(const Polyline<Scalar>& p, const Polyline<Scalar>& g) {
  if (p.rows() != g.rows()) throw std::invalid_argument("reg_loss: point counts differ");
  const Scalar norm = Scalar(2 * p.rows());
  ValueGrad<Scalar> out;
  out.grad.resize(p.rows(), 2);
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    for (int c = 0; c < 2; ++c) {
      const Scalar d = p(i, c) - g(i, c);
      out.value += std::abs(d);
      out.grad(i, c) = sign_or_zero(d) / norm;
    }
  }
  out.value /= norm;
  return out;
}

template <class Scalar>
struct BankTerm {
  Scalar value = Scalar(0);
  std::vector<PointGrad<Scalar>> grads;  // per lane
};

template <class Scalar>
struct ShapeTerm {
  Scalar value = Scalar(0);
  std::vector<Scalar> ratios;            // S_k per lane
  std::vector<PointGrad<Scalar>> grads;  // dS_k / dpoints (unscaled)
};

/// Mean straightness ratio over every lane of the bank. The returned grads
/// are per-lane dS_k; the mean's gradient is grads / K.
template <class Scalar>
ShapeTerm<Scalar> shape_loss(const std::vector<Polyline<Scalar>>& lanes) {
  ShapeTerm<Scalar> out;
  if (lanes.empty()) return out;
  out.ratios.reserve(lanes.size());
  out.grads.reserve(lanes.size());
  for (std::size_t k = 0; k < lanes.size(); ++k) {
    try {
      auto r = straightness_ratio(lanes[k]);
      out.value += r.value;
      out.ratios.push_back(r.value);
      out.grads.push_back(std::move(r.grad));
    } catch (const DegenerateLaneError& e) {
      throw DegenerateLaneError(std::string("proposal ") + std::to_string(k) + ": " + e.what(),
                                static_cast<long>(k));
    }
  }
  out.value /= Scalar(lanes.size());
  return out;
}

/// (1/K) sum of endpoint distances over active proposals. Inactive or
/// target-less proposals contribute zero; a scene without lanes gives zero.
template <class Scalar>
BankTerm<Scalar> location_loss(const std::vector<Polyline<Scalar>>& lanes,
                               const std::vector<Polyline<Scalar>>& ground_truth,
                               const DenseMatch& match) {
  BankTerm<Scalar> out;
  const auto k_count = lanes.size();
  out.grads.reserve(k_count);
  for (const auto& lane : lanes) out.grads.push_back(PointGrad<Scalar>::Zero(lane.rows(), 2));
  if (k_count == 0 || ground_truth.empty()) return out;
  const Scalar inv_k = Scalar(1) / Scalar(k_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    if (!match.active[k] || !match.target[k]) continue;
    const auto d = endpoint_distance(lanes[k], ground_truth[*match.target[k]]);
    out.value += d.value;
    out.grads[k] = d.grad * inv_k;
  }
  out.value *= inv_k;
  return out;
}

template <class Scalar>
struct DiversityTerm {
  Scalar value = Scalar(0);
  std::vector<Scalar> grad_ratio;  // dJ_div / dS_k
  int pair_count = 0;
};

/// Negative mean absolute straightness difference over unordered pairs of
/// active proposals that share a target.
template <class Scalar>
DiversityTerm<Scalar> diversity_loss(const std::vector<Scalar>& ratios, const DenseMatch& match) {
  DiversityTerm<Scalar> out;
  out.grad_ratio.assign(ratios.size(), Scalar(0));
  for (const auto& cluster : match.clusters) {
    for (std::size_t a = 0; a < cluster.size(); ++a) {
      if (!match.active[cluster[a]]) continue;
      for (std::size_t b = a + 1; b < cluster.size(); ++b) {
        if (!match.active[cluster[b]]) continue;
        const Scalar d = ratios[cluster[a]] - ratios[cluster[b]];
        out.value += std::abs(d);
        out.grad_ratio[cluster[a]] += sign_or_zero(d);
        out.grad_ratio[cluster[b]] -= sign_or_zero(d);
        ++out.pair_count;
      }
    }
  }
  if (out.pair_count == 0) return out;
  const Scalar inv = Scalar(1) / Scalar(out.pair_count);
  out.value = -out.value * inv;
  for (auto& g : out.grad_ratio) g = -g * inv;
  return out;
}

/// One evaluation of the objective on a bank.
struct LossReport {
  double j_reg = 0.0;
  double j_seg = 0.0;
  double j_cls = 0.0;  // hard- or soft-label classification slot
  double j_shape = 0.0;
  double j_loc = 0.0;
  double j_ava = 0.0;
  double j_div = 0.0;
  double j_total = 0.0;

  std::vector<double> soft_labels;      // per proposal; hard labels when soft labels are off
  std::vector<double> shape_values;     // S_k, empty when neither shape nor div is enabled
  std::vector<double> reg_values;       // per proposal, 0 for non-positives
  std::vector<ControlPointsd> grad_control;
  Eigen::VectorXd grad_logit;

  PositiveAssignment positives;
  DenseMatch dense;
  int cap = 1;
};

/// Lane L1 distances, rows = ground truth, columns = proposals.
CostMatrix lane_cost_matrix(const std::vector<Polylined>& ground_truth,
                            const std::vector<Polylined>& proposals);

std::vector<Polylined> sample_bank(const ProposalBank& bank, Eigen::Index n_points);

/// Evaluates the weighted objective with gradients in control-point/logit
/// space. `cap` <= 0 selects default_cap(K). `n_points` must match the
/// scene's lanes when the scene has any.
LossReport total_loss(const ProposalBank& bank, const Scene& scene, const LossWeights& weights,
                      Eigen::Index n_points, int cap = 0);

/// The sparse baseline objective reg * J_reg + cls * J_cls + seg * J_seg
/// computed on its own path.
LossReport sparse_loss(const ProposalBank& bank, const Scene& scene, double lambda_reg,
                       double lambda_cls, double lambda_seg, double w_neg, Eigen::Index n_points);

/// Parameter layout: per proposal, 8 control coordinates (row-major x0 y0 x1
/// y1 ...) then the logit.
inline constexpr int kParamsPerProposal = 9;
Eigen::VectorXd flatten_bank(const ProposalBank& bank);
ProposalBank unflatten_bank(const Eigen::VectorXd& params);
Eigen::VectorXd flatten_gradient(const LossReport& report);

}  // namespace dhpm
