#include "dhpm/losses.hpp"

#include <stdexcept>
#include <string>

namespace dhpm {
namespace {

void require_non_negative(double v, const char* name) {
  if (!(v >= 0.0)) throw std::invalid_argument(std::string("weights.") + name + " must be >= 0");
}

void check_inputs(const ProposalBank& bank, const Scene& scene, Eigen::Index n_points) {
  if (bank.empty()) throw std::invalid_argument("proposal bank is empty");
  if (n_points < 2) throw std::invalid_argument("n_points must be >= 2");
  validate_scene(scene);
  if (!scene.ground_truth.empty() && scene.ground_truth.front().rows() != n_points)
    throw std::invalid_argument("n_points does not match the scene's lane point count");
  if (scene.ground_truth.size() > bank.size())
    throw std::invalid_argument("scene has more lanes than the bank has proposals");
}

}  // namespace

void LossWeights::validate() const {
  require_non_negative(lambda_reg, "lambda_reg");
  require_non_negative(lambda_seg, "lambda_seg");
  require_non_negative(lambda_ava, "lambda_ava");
  require_non_negative(lambda_div, "lambda_div");
  require_non_negative(lambda_dis, "lambda_dis");
  require_non_negative(lambda_cls, "lambda_cls");
  require_non_negative(lambda_shape, "lambda_shape");
  require_non_negative(lambda_loc, "lambda_loc");
  require_non_negative(w_neg, "w_neg");
  require_non_negative(beta, "beta");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("weights.gamma must be in [0, 1]");
}

LossWeights LossWeights::sparse_baseline() {
  LossWeights w;
  w.enable_shape = false;
  w.enable_loc = false;
  w.enable_div = false;
  w.enable_dis = false;
  w.enable_cls = true;
  return w;
}

CostMatrix lane_cost_matrix(const std::vector<Polylined>& ground_truth,
                            const std::vector<Polylined>& proposals) {
  CostMatrix costs(static_cast<Eigen::Index>(ground_truth.size()),
                   static_cast<Eigen::Index>(proposals.size()));
  for (std::size_t i = 0; i < ground_truth.size(); ++i)
    for (std::size_t k = 0; k < proposals.size(); ++k)
      costs(i, k) = lane_l1_distance(proposals[k], ground_truth[i]);
  return costs;
}

std::vector<Polylined> sample_bank(const ProposalBank& bank, Eigen::Index n_points) {
  const auto weights = bernstein_weights<double>(n_points);
  std::vector<Polylined> lanes;
  lanes.reserve(bank.size());
  for (const auto& lane : bank) lanes.push_back(weights * lane.control);
  return lanes;
}

LossReport total_loss(const ProposalBank& bank, const Scene& scene, const LossWeights& weights,
                      Eigen::Index n_points, int cap) {
  weights.validate();
  check_inputs(bank, scene, n_points);

  const auto& gts = scene.ground_truth;
  const auto k_count = bank.size();
  const double inv_k = 1.0 / double(k_count);
  const auto basis = bernstein_weights<double>(n_points);
  const auto lanes = sample_bank(bank, n_points);

  LossReport report;
  report.cap = cap > 0 ? cap : default_cap(static_cast<int>(k_count));
  report.reg_values.assign(k_count, 0.0);
  report.soft_labels.assign(k_count, 0.0);
  report.grad_logit = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_count));
  std::vector<PointGrad<double>> point_grads(k_count, PointGrad<double>::Zero(n_points, 2));

  const CostMatrix costs = lane_cost_matrix(gts, lanes);
  report.positives = hungarian_assign(costs);
  std::vector<bool> positive(k_count, false);

  // Regression over the one-to-one positives.
  const auto& pairs = report.positives.pairs;
  if (!pairs.empty()) {
    const double scale = weights.lambda_reg / double(pairs.size());
    for (const auto& [g, p] : pairs) {
      const auto r = reg_loss(lanes[p], gts[g]);
      report.j_reg += r.value;
      report.reg_values[p] = r.value;
      positive[p] = true;
      if (weights.enable_reg) point_grads[p] += r.grad * scale;
    }
    report.j_reg /= double(pairs.size());
  }

  // Classification slot: soft quality-aware labels or hard existence labels.
  const bool soft = weights.enable_dis;
  const bool use_cls = soft || weights.enable_cls;
  const double cls_weight = soft ? weights.lambda_dis : weights.lambda_cls;
  if (use_cls) {
    for (std::size_t k = 0; k < k_count; ++k) {
      const double label = soft ? soft_label(report.reg_values[k], bool(positive[k]), weights.beta,
                                             weights.gamma)
                                : (positive[k] ? 1.0 : 0.0);
      report.soft_labels[k] = label;
      const auto c = discrimination_loss(logistic(bank[k].logit), label, weights.w_neg);
      report.j_cls += c.value;
      report.grad_logit(k) = cls_weight * inv_k * c.grad_logit;
    }
    report.j_cls *= inv_k;
  }

  // The segmentation slot has no backbone features to act on; it stays zero.
  report.j_seg = 0.0;

  report.j_total = (weights.enable_reg ? weights.lambda_reg * report.j_reg : 0.0) +
                   (use_cls ? cls_weight * report.j_cls : 0.0) +
                   (weights.enable_seg ? weights.lambda_seg * report.j_seg : 0.0);

  report.dense = dense_match(costs, report.cap);

  ShapeTerm<double> shape;
  if (weights.enable_shape || weights.enable_div) {
    shape = shape_loss(lanes);
    report.shape_values = shape.ratios;
  }
  if (weights.enable_shape) {
    report.j_shape = shape.value;
    const double scale = weights.lambda_ava * weights.lambda_shape * inv_k;
    for (std::size_t k = 0; k < k_count; ++k) point_grads[k] += shape.grads[k] * scale;
  }
  if (weights.enable_loc) {
    const auto loc = location_loss(lanes, gts, report.dense);
    report.j_loc = loc.value;
    const double scale = weights.lambda_ava * weights.lambda_loc;
    for (std::size_t k = 0; k < k_count; ++k) point_grads[k] += loc.grads[k] * scale;
  }
  if (weights.ava_enabled()) {
    report.j_ava = weights.lambda_shape * report.j_shape + weights.lambda_loc * report.j_loc;
    report.j_total += weights.lambda_ava * report.j_ava;
  }
  if (weights.enable_div) {
    const auto div = diversity_loss(shape.ratios, report.dense);
    report.j_div = div.value;
    for (std::size_t k = 0; k < k_count; ++k)
      if (div.grad_ratio[k] != 0.0)
        point_grads[k] += shape.grads[k] * (weights.lambda_div * div.grad_ratio[k]);
    report.j_total += weights.lambda_div * report.j_div;
  }

  report.grad_control.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    report.grad_control.push_back(pullback_to_control(basis, point_grads[k]));
  return report;
}

LossReport sparse_loss(const ProposalBank& bank, const Scene& scene, double lambda_reg,
                       double lambda_cls, double lambda_seg, double w_neg, Eigen::Index n_points) {
  check_inputs(bank, scene, n_points);
  const auto& gts = scene.ground_truth;
  const auto k_count = bank.size();
  const auto basis = bernstein_weights<double>(n_points);
  const auto lanes = sample_bank(bank, n_points);

  LossReport report;
  report.cap = default_cap(static_cast<int>(k_count));
  report.reg_values.assign(k_count, 0.0);
  report.soft_labels.assign(k_count, 0.0);
  report.grad_logit = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k_count));
  std::vector<PointGrad<double>> point_grads(k_count, PointGrad<double>::Zero(n_points, 2));

  report.positives = hungarian_assign(lane_cost_matrix(gts, lanes));
  const auto& pairs = report.positives.pairs;
  for (const auto& [g, p] : pairs) {
    const auto r = reg_loss(lanes[p], gts[g]);
    report.j_reg += r.value;
    report.reg_values[p] = r.value;
    report.soft_labels[p] = 1.0;
    point_grads[p] += r.grad * (lambda_reg / double(pairs.size()));
  }
  if (!pairs.empty()) report.j_reg /= double(pairs.size());

  for (std::size_t k = 0; k < k_count; ++k) {
    const auto c = cls_loss(logistic(bank[k].logit), report.soft_labels[k] == 1.0 ? 1 : 0, w_neg);
    report.j_cls += c.value;
    report.grad_logit(k) = lambda_cls * (1.0 / double(k_count)) * c.grad_logit;
  }
  report.j_cls *= 1.0 / double(k_count);

  report.j_total = lambda_reg * report.j_reg + lambda_cls * report.j_cls + lambda_seg * report.j_seg;

  report.grad_control.reserve(k_count);
  for (std::size_t k = 0; k < k_count; ++k)
    report.grad_control.push_back(pullback_to_control(basis, point_grads[k]));
  return report;
}

Eigen::VectorXd flatten_bank(const ProposalBank& bank) {
  Eigen::VectorXd params(static_cast<Eigen::Index>(bank.size()) * kParamsPerProposal);
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto base = static_cast<Eigen::Index>(k) * kParamsPerProposal;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 2; ++c) params(base + 2 * r + c) = bank[k].control(r, c);
    params(base + 8) = bank[k].logit;
  }
  return params;
}

ProposalBank unflatten_bank(const Eigen::VectorXd& params) {
  if (params.size() % kParamsPerProposal != 0)
    throw std::invalid_argument("parameter vector length is not a multiple of 9");
  ProposalBank bank(static_cast<std::size_t>(params.size() / kParamsPerProposal));
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const auto base = static_cast<Eigen::Index>(k) * kParamsPerProposal;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 2; ++c) bank[k].control(r, c) = params(base + 2 * r + c);
    bank[k].logit = params(base + 8);
  }
  return bank;
}

Eigen::VectorXd flatten_gradient(const LossReport& report) {
  const auto k_count = report.grad_control.size();
  Eigen::VectorXd g(static_cast<Eigen::Index>(k_count) * kParamsPerProposal);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto base = static_cast<Eigen::Index>(k) * kParamsPerProposal;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 2; ++c) g(base + 2 * r + c) = report.grad_control[k](r, c);
    g(base + 8) = report.grad_logit(static_cast<Eigen::Index>(k));
  }
  return g;
}

}  // namespace dhpm
