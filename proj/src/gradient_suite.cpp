#include "dhpm/gradcheck.hpp"

#include "dhpm/assignment.hpp"
#include "dhpm/trainer.hpp"

#include <algorithm>
#include <random>

namespace dhpm {
namespace {

Eigen::VectorXd to_vector(const Polylined& lane) {
  Eigen::VectorXd v(lane.size());
  for (Eigen::Index i = 0; i < lane.rows(); ++i) {
    v(2 * i) = lane(i, 0);
    v(2 * i + 1) = lane(i, 1);
  }
  return v;
}

Polylined to_lane(const Eigen::VectorXd& v, Eigen::Index offset, Eigen::Index n) {
  Polylined lane(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    lane(i, 0) = v(offset + 2 * i);
    lane(i, 1) = v(offset + 2 * i + 1);
  }
  return lane;
}

Eigen::VectorXd concat(const std::vector<Polylined>& lanes) {
  Eigen::Index total = 0;
  for (const auto& l : lanes) total += l.size();
  Eigen::VectorXd v(total);
  Eigen::Index at = 0;
  for (const auto& l : lanes) {
    v.segment(at, l.size()) = to_vector(l);
    at += l.size();
  }
  return v;
}

std::vector<Polylined> split(const Eigen::VectorXd& v, std::size_t count, Eigen::Index n) {
  std::vector<Polylined> lanes;
  lanes.reserve(count);
  for (std::size_t k = 0; k < count; ++k) lanes.push_back(to_lane(v, Eigen::Index(k) * 2 * n, n));
  return lanes;
}

Eigen::VectorXd concat_grads(const std::vector<PointGrad<double>>& grads) { return concat(grads); }

/// A wavy lane running roughly bottom-to-top with well-separated endpoints.
Polylined random_lane(std::mt19937_64& rng, Eigen::Index n) {
  const Eigen::RowVector2d start(uniform_in(rng, 0.1, 0.9), uniform_in(rng, 0.8, 1.0));
  const Eigen::RowVector2d end(uniform_in(rng, 0.3, 0.7), uniform_in(rng, 0.2, 0.5));
  Polylined lane(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = double(i) / double(n - 1);
    lane.row(i) = start + t * (end - start);
    if (i > 0 && i + 1 < n) {
      const double wobble = 0.25 * (end - start).norm() / double(n - 1);
      lane.row(i) += Eigen::RowVector2d(uniform_in(rng, -wobble, wobble), uniform_in(rng, -wobble, wobble));
    }
  }
  return lane;
}

/// Shifts a lane by up to `amount` per axis plus point noise a tenth that size.
Polylined jitter(std::mt19937_64& rng, const Polylined& lane, double amount) {
  Polylined out = lane;
  const Eigen::RowVector2d shift(uniform_in(rng, -amount, amount), uniform_in(rng, -amount, amount));
  out.rowwise() += shift;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += uniform_in(rng, -0.1 * amount, 0.1 * amount);
  return out;
}

void append(Eigen::VectorXd& v, const Eigen::VectorXd& extra) {
  const auto old = v.size();
  v.conservativeResize(old + extra.size());
  v.tail(extra.size()) = extra;
}

Eigen::VectorXd segment_lengths(const std::vector<Polylined>& lanes) {
  Eigen::VectorXd v(0);
  for (const auto& l : lanes) {
    Eigen::VectorXd s(l.rows());
    for (Eigen::Index i = 0; i + 1 < l.rows(); ++i) s(i) = (l.row(i + 1) - l.row(i)).norm();
    s(l.rows() - 1) = chord_length(l) - kChordEpsilon;
    append(v, s);
  }
  return v;
}

Eigen::VectorXd match_indicators(const DenseMatch& now, const DenseMatch& ref) {
  Eigen::VectorXd v(1);
  v(0) = (now.target == ref.target && now.active == ref.active) ? 1.0 : -1.0;
  return v;
}

void merge(GradCheckResult& worst, const GradCheckResult& r) {
  worst.n_skipped_kinks += r.n_skipped_kinks;
  worst.n_checked += r.n_checked;
  if (r.max_rel_error >= worst.max_rel_error) {
    worst.max_rel_error = r.max_rel_error;
    worst.worst_parameter_index = r.worst_parameter_index;
  }
  worst.max_abs_error = std::max(worst.max_abs_error, r.max_abs_error);
}

GradCheckResult check_reg(std::mt19937_64& rng) {
  const Eigen::Index n = 2 + Eigen::Index(unit_uniform(rng) * 11);
  const Polylined g = random_lane(rng, n);
  const Polylined p = jitter(rng, g, 0.1);
  const auto f = [&](const Eigen::VectorXd& x) { return reg_loss(to_lane(x, 0, n), g).value; };
  const auto kinks = [&](const Eigen::VectorXd& x) { return to_vector(to_lane(x, 0, n) - g); };
  return finite_diff_check(f, to_vector(reg_loss(p, g).grad), to_vector(p), kFdStep, kKinkBand, kinks);
}

GradCheckResult check_cls(std::mt19937_64& rng) {
  const double logit = uniform_in(rng, -6.0, 6.0);
  const int label = unit_uniform(rng) < 0.5 ? 0 : 1;
  const double w = uniform_in(rng, 0.25, 3.0);
  const auto f = [&](const Eigen::VectorXd& x) { return cls_loss(logistic(x(0)), label, w).value; };
  Eigen::VectorXd g(1), x(1);
  g(0) = cls_loss(logistic(logit), label, w).grad_logit;
  x(0) = logit;
  return finite_diff_check(f, g, x);
}

GradCheckResult check_dis(std::mt19937_64& rng) {
  const double logit = uniform_in(rng, -6.0, 6.0);
  const double reg = uniform_in(rng, 0.0, 0.3);
  const double target = soft_label(reg, unit_uniform(rng) < 0.7, 10.0, 0.5);
  const double w = uniform_in(rng, 0.25, 3.0);
  const auto f = [&](const Eigen::VectorXd& x) {
    return discrimination_loss(logistic(x(0)), target, w).value;
  };
  Eigen::VectorXd g(1), x(1);
  g(0) = discrimination_loss(logistic(logit), target, w).grad_logit;
  x(0) = logit;
  return finite_diff_check(f, g, x);
}

GradCheckResult check_shape(std::mt19937_64& rng) {
  const Eigen::Index n = 3 + Eigen::Index(unit_uniform(rng) * 10);
  const Polylined lane = random_lane(rng, n);
  const auto f = [&](const Eigen::VectorXd& x) { return straightness_ratio(to_lane(x, 0, n)).value; };
  const auto kinks = [&](const Eigen::VectorXd& x) {
    return segment_lengths({to_lane(x, 0, n)});
  };
  return finite_diff_check(f, to_vector(straightness_ratio(lane).grad), to_vector(lane), kFdStep,
                           kKinkBand, kinks);
}

GradCheckResult check_loc(std::mt19937_64& rng) {
  const Eigen::Index n = 2 + Eigen::Index(unit_uniform(rng) * 11);
  const Polylined g = random_lane(rng, n);
  const Polylined p = jitter(rng, g, 0.1);
  const auto f = [&](const Eigen::VectorXd& x) { return endpoint_distance(to_lane(x, 0, n), g).value; };
  const auto kinks = [&](const Eigen::VectorXd& x) { return to_vector(to_lane(x, 0, n) - g); };
  return finite_diff_check(f, to_vector(endpoint_distance(p, g).grad), to_vector(p), kFdStep,
                           kKinkBand, kinks);
}

struct BankCase {
  Eigen::Index n = 0;
  std::vector<Polylined> gts;
  std::vector<Polylined> lanes;
  int cap = 1;
};

BankCase random_bank_case(std::mt19937_64& rng) {
  BankCase c;
  c.n = 3 + Eigen::Index(unit_uniform(rng) * 8);
  const int m = 1 + int(unit_uniform(rng) * 3);
  const int k = m + 1 + int(unit_uniform(rng) * 6);
  for (int i = 0; i < m; ++i) c.gts.push_back(random_lane(rng, c.n));
  for (int i = 0; i < k; ++i)
    c.lanes.push_back(jitter(rng, c.gts[std::size_t(unit_uniform(rng) * m)], 0.08));
  c.cap = 1 + int(unit_uniform(rng) * 3);
  return c;
}

GradCheckResult check_ava(std::mt19937_64& rng) {
  const BankCase c = random_bank_case(rng);
  const double w_shape = uniform_in(rng, 0.2, 2.0);
  const double w_loc = uniform_in(rng, 0.2, 2.0);
  const auto k = c.lanes.size();
  const auto ref = dense_match(lane_cost_matrix(c.gts, c.lanes), c.cap);

  const auto f = [&](const Eigen::VectorXd& x) {
    const auto lanes = split(x, k, c.n);
    const auto match = dense_match(lane_cost_matrix(c.gts, lanes), c.cap);
    return w_shape * shape_loss(lanes).value + w_loc * location_loss(lanes, c.gts, match).value;
  };
  const auto shape = shape_loss(c.lanes);
  const auto loc = location_loss(c.lanes, c.gts, ref);
  std::vector<PointGrad<double>> grads;
  for (std::size_t i = 0; i < k; ++i)
    grads.push_back(shape.grads[i] * (w_shape / double(k)) + loc.grads[i] * w_loc);

  const auto kinks = [&](const Eigen::VectorXd& x) {
    const auto lanes = split(x, k, c.n);
    const auto match = dense_match(lane_cost_matrix(c.gts, lanes), c.cap);
    Eigen::VectorXd v = match_indicators(match, ref);
    append(v, segment_lengths(lanes));
    for (std::size_t i = 0; i < k; ++i)
      if (match.active[i]) append(v, to_vector(lanes[i] - c.gts[*match.target[i]]));
    return v;
  };
  return finite_diff_check(f, concat_grads(grads), concat(c.lanes), kFdStep, kKinkBand, kinks);
}

GradCheckResult check_div(std::mt19937_64& rng) {
  const BankCase c = random_bank_case(rng);
  const auto k = c.lanes.size();
  const auto ref = dense_match(lane_cost_matrix(c.gts, c.lanes), c.cap);

  const auto value_at = [&](const std::vector<Polylined>& lanes, const DenseMatch& match) {
    return diversity_loss(shape_loss(lanes).ratios, match);
  };
  const auto f = [&](const Eigen::VectorXd& x) {
    const auto lanes = split(x, k, c.n);
    return value_at(lanes, dense_match(lane_cost_matrix(c.gts, lanes), c.cap)).value;
  };
  const auto shape = shape_loss(c.lanes);
  const auto div = diversity_loss(shape.ratios, ref);
  std::vector<PointGrad<double>> grads;
  for (std::size_t i = 0; i < k; ++i) grads.push_back(shape.grads[i] * div.grad_ratio[i]);

  const auto kinks = [&](const Eigen::VectorXd& x) {
    const auto lanes = split(x, k, c.n);
    const auto match = dense_match(lane_cost_matrix(c.gts, lanes), c.cap);
    Eigen::VectorXd v = match_indicators(match, ref);
    append(v, segment_lengths(lanes));
    const auto ratios = shape_loss(lanes).ratios;
    for (const auto& cluster : match.clusters)
      for (std::size_t a = 0; a < cluster.size(); ++a)
        for (std::size_t b = a + 1; b < cluster.size(); ++b)
          if (match.active[cluster[a]] && match.active[cluster[b]]) {
            Eigen::VectorXd d(1);
            d(0) = ratios[cluster[a]] - ratios[cluster[b]];
            append(v, d);
          }
    return v;
  };
  return finite_diff_check(f, concat_grads(grads), concat(c.lanes), kFdStep, kKinkBand, kinks);
}

GradCheckResult check_total(std::mt19937_64& rng, int trial) {
  SceneSpec spec;
  spec.seed = rng();
  spec.n_points = 6 + int(unit_uniform(rng) * 10);
  spec.family = trial % 2 == 0 ? LaneFamily::cubic : LaneFamily::arc;
  spec.curvature = {1.0, 1.05};
  const Scene scene = generate_scene(spec);

  TrainConfig config;
  config.seed = rng();
  config.k_proposals = 10;
  ProposalBank bank = init_proposals(config, scene.frame);
  for (auto& lane : bank) lane.logit = uniform_in(rng, -3.0, 3.0);

  LossWeights weights;
  for (double* lambda : {&weights.lambda_reg, &weights.lambda_ava, &weights.lambda_div,
                         &weights.lambda_dis, &weights.lambda_cls, &weights.lambda_shape,
                         &weights.lambda_loc, &weights.w_neg})
    *lambda = uniform_in(rng, 0.5, 2.0);
  weights.enable_shape = trial % 4 != 1;
  weights.enable_loc = trial % 4 != 2;
  weights.enable_div = trial % 5 != 3;
  weights.enable_dis = trial % 3 != 2;
  const int cap = 1 + int(unit_uniform(rng) * 4);
  const Eigen::Index n = spec.n_points;

  const auto report = total_loss(bank, scene, weights, n, cap);
  // Soft labels are constants: swap the re-derived ones for the reference labels.
  const auto f = [&](const Eigen::VectorXd& x) {
    const auto probe_bank = unflatten_bank(x);
    const auto probe = total_loss(probe_bank, scene, weights, n, cap);
    if (!weights.enable_dis) return probe.j_total;
    double frozen = 0.0;
    for (std::size_t k = 0; k < probe_bank.size(); ++k)
      frozen += discrimination_loss(logistic(probe_bank[k].logit), report.soft_labels[k],
                                    weights.w_neg)
                    .value;
    frozen /= double(probe_bank.size());
    return probe.j_total + weights.lambda_dis * (frozen - probe.j_cls);
  };
  const auto kinks = [&](const Eigen::VectorXd& x) {
    return objective_kinks(x, scene, weights, n, cap, report);
  };
  return finite_diff_check(f, flatten_gradient(report), flatten_bank(bank), kFdStep, kKinkBand,
                           kinks);
}

}  // namespace

const std::vector<std::string>& gradient_suite_losses() {
  static const std::vector<std::string> names = {"reg", "cls", "shape", "loc",
                                                 "ava", "div", "dis",   "total"};
  return names;
}

std::vector<SuiteRow> run_gradient_suite(std::uint64_t seed, int trials, const std::string& only,
                                         double tolerance) {
  const auto& names = gradient_suite_losses();
  if (!only.empty() && std::find(names.begin(), names.end(), only) == names.end())
    throw std::invalid_argument("unknown loss '" + only + "'");

  std::vector<SuiteRow> rows;
  for (std::size_t li = 0; li < names.size(); ++li) {
    const auto& name = names[li];
    if (!only.empty() && name != only) continue;
    std::mt19937_64 rng(seed * 1000003ULL + li);
    SuiteRow row;
    row.loss = name;
    for (int t = 0; t < trials; ++t) {
      GradCheckResult r;
      if (name == "reg") r = check_reg(rng);
      else if (name == "cls") r = check_cls(rng);
      else if (name == "shape") r = check_shape(rng);
      else if (name == "loc") r = check_loc(rng);
      else if (name == "ava") r = check_ava(rng);
      else if (name == "div") r = check_div(rng);
      else if (name == "dis") r = check_dis(rng);
      else r = check_total(rng, t);
      merge(row.worst, r);
      ++row.trials;
    }
    row.passed = row.worst.max_rel_error < tolerance && row.worst.n_checked > 0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dhpm
