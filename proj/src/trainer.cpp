#include "dhpm/trainer.hpp"

#include "dhpm/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dhpm {
namespace {

constexpr std::uint64_t kRecoverySalt = 0x9e3779b97f4a7c15ULL;

Eigen::RowVector2d lerp(const Eigen::RowVector2d& a, const Eigen::RowVector2d& b, double t) {
  return a + t * (b - a);
}

Eigen::RowVector2d unit_normal(const Eigen::RowVector2d& a, const Eigen::RowVector2d& b) {
  const Eigen::RowVector2d d = (b - a).normalized();
  return {-d.y(), d.x()};
}

ControlPointsd bent_controls(const Eigen::RowVector2d& start, const Eigen::RowVector2d& end,
                             double offset1, double offset2) {
  const Eigen::RowVector2d n = unit_normal(start, end);
  ControlPointsd c;
  c.row(0) = start;
  c.row(1) = lerp(start, end, 1.0 / 3.0) + offset1 * n;
  c.row(2) = lerp(start, end, 2.0 / 3.0) + offset2 * n;
  c.row(3) = end;
  return c;
}

double ratio_of(const ControlPointsd& c, int n_points) {
  return straightness_ratio(sample_bezier(c, n_points)).value;
}

/// Scales the bend so the sampled lane hits `target` straightness.
ControlPointsd fit_bend(const Eigen::RowVector2d& start, const Eigen::RowVector2d& end, double r1,
                        double r2, double target, int n_points) {
  if (target <= 1.0) return bent_controls(start, end, 0.0, 0.0);
  double hi = 0.01;
  while (ratio_of(bent_controls(start, end, hi * r1, hi * r2), n_points) < target) {
    hi *= 2.0;
    if (hi > 4.0) throw std::invalid_argument("scene spec: curvature range is not reachable");
  }
  double lo = 0.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ratio_of(bent_controls(start, end, mid * r1, mid * r2), n_points) < target)
      lo = mid;
    else
      hi = mid;
  }
  return bent_controls(start, end, hi * r1, hi * r2);
}

BezierLaned fan_proposal(std::mt19937_64& rng, int k, int k_count) {
  const double slot = 1.0 / double(k_count);
  const Eigen::RowVector2d start(std::clamp((k + 0.5) * slot + uniform_in(rng, -0.5, 0.5) * slot, 0.0, 1.0),
                                 uniform_in(rng, 0.85, 1.0));
  const Eigen::RowVector2d end(0.5 + uniform_in(rng, -0.25, 0.25), uniform_in(rng, 0.3, 0.6));
  BezierLaned lane;
  lane.control = bent_controls(start, end, uniform_in(rng, -0.06, 0.06), uniform_in(rng, -0.06, 0.06));
  lane.control = lane.control.cwiseMax(0.0).cwiseMin(1.0);
  return lane;
}

BezierLaned uniform_proposal(std::mt19937_64& rng) {
  BezierLaned lane;
  do {
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 2; ++c) lane.control(r, c) = unit_uniform(rng);
  } while ((lane.control.row(3) - lane.control.row(0)).norm() < 1e-3);
  return lane;
}

BezierLaned fresh_proposal(std::mt19937_64& rng, const TrainConfig& config, int k) {
  return config.init == InitKind::random_vertical_fan ? fan_proposal(rng, k, config.k_proposals)
                                                      : uniform_proposal(rng);
}

struct Adam {
  Eigen::VectorXd m, v;
  double eps;
  int t = 0;

  Adam(Eigen::Index n, double epsilon)
      : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)), eps(epsilon) {}

  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999;
    ++t;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  void reset_block(Eigen::Index begin, Eigen::Index len) {
    m.segment(begin, len).setZero();
    v.segment(begin, len).setZero();
  }
};

Eigen::Index scene_points(const Scene& scene, const SceneSpec* spec) {
  if (!scene.ground_truth.empty()) return scene.ground_truth.front().rows();
  return spec ? spec->n_points : 20;
}

TrainReport run_training(const Scene& initial_scene, const SceneSpec* spec,
                         const TrainConfig& config) {
  config.validate();
  validate_scene(initial_scene);
  const Eigen::Index n_points = scene_points(initial_scene, spec);
  const int cap = config.effective_cap();

  TrainReport report;
  report.n_points = static_cast<int>(n_points);
  report.cap = cap;

  Scene scene = initial_scene;
  ProposalBank bank = init_proposals(config, scene.frame);
  std::mt19937_64 recovery_rng(config.seed ^ kRecoverySalt);
  Eigen::VectorXd params = flatten_bank(bank);
  Adam adam(params.size(), config.adam_epsilon);

  report.initial = bank_statistics(bank, scene, n_points, cap);

  for (int step = 0; step < config.steps; ++step) {
    if (spec && config.resample_scene && step > 0) {
      SceneSpec s = *spec;
      s.seed = spec->seed + static_cast<std::uint64_t>(step);
      scene = generate_scene(s);
    }
    LossReport loss;
    for (;;) {
      try {
        loss = total_loss(bank, scene, config.weights, n_points, cap);
        break;
      } catch (const DegenerateLaneError& e) {
        if (e.index() < 0) throw;
        bank[e.index()] = fresh_proposal(recovery_rng, config, static_cast<int>(e.index()));
        adam.reset_block(e.index() * kParamsPerProposal, kParamsPerProposal);
        params = flatten_bank(bank);
        ++report.recoveries;
      }
    }

    const double lr = learning_rate_at(config, step);
    if (step % config.log_every == 0) {
      StepSummary s;
      s.step = step;
      s.learning_rate = lr;
      s.j_reg = loss.j_reg;
      s.j_cls = loss.j_cls;
      s.j_shape = loss.j_shape;
      s.j_loc = loss.j_loc;
      s.j_div = loss.j_div;
      s.j_total = loss.j_total;
      s.active_count = static_cast<int>(loss.dense.active_count());
      for (const auto& cluster : loss.dense.clusters) {
        const int active = static_cast<int>(std::count_if(
            cluster.begin(), cluster.end(), [&](int k) { return bool(loss.dense.active[k]); }));
        s.max_cluster_active = std::max(s.max_cluster_active, active);
      }
      report.series.push_back(s);
      report.snapshots.push_back(bank);
    }

    const Eigen::VectorXd grad = flatten_gradient(loss);
    if (config.optimizer == OptimizerKind::adam)
      adam.step(params, grad, lr);
    else
      params -= lr * grad;
    bank = unflatten_bank(params);
  }

  report.final_bank = bank;
  report.final_scene = scene;
  report.final = bank_statistics(bank, scene, n_points, cap);
  return report;
}

}  // namespace

double unit_uniform(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }

double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(rng);
}

void SceneSpec::validate() const {
  if (min_lanes < 0 || max_lanes < min_lanes)
    throw std::invalid_argument("scene.n_lanes: need 0 <= min <= max");
  if (n_points < 2) throw std::invalid_argument("scene.n_points must be >= 2");
  if (!(curvature.hi >= 1.0) || curvature.lo > curvature.hi)
    throw std::invalid_argument("scene.curvature_range: need lo <= hi and hi >= 1");
  if (family == LaneFamily::straight && curvature.lo > 1.0)
    throw std::invalid_argument("scene.curvature_range: straight lanes have ratio 1");
  for (const auto* band : {&start_band, &end_band})
    if (!(band->lo >= 0.0 && band->hi <= 1.0 && band->lo <= band->hi))
      throw std::invalid_argument("scene bands must satisfy 0 <= lo <= hi <= 1");
  if (end_band.hi >= start_band.lo)
    throw std::invalid_argument("scene.end_band must lie above scene.start_band");
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("train.steps must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train.learning_rate must be > 0");
  if (k_proposals < 1) throw std::invalid_argument("train.k_proposals must be >= 1");
  if (log_every < 1) throw std::invalid_argument("train.log_every must be >= 1");
  if (!(adam_epsilon > 0.0)) throw std::invalid_argument("train.adam_epsilon must be > 0");
  weights.validate();
}

Scene generate_scene(const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  Scene scene;
  scene.frame = spec.frame;
  const int span = spec.max_lanes - spec.min_lanes + 1;
  const int m = spec.min_lanes + std::min(span - 1, int(unit_uniform(rng) * span));

  std::vector<double> start_x(m), end_x(m);
  for (int i = 0; i < m; ++i) {
    const double slot = 0.8 / double(m);
    start_x[i] = 0.1 + (i + 0.5) * slot + uniform_in(rng, -0.25, 0.25) * slot;
    end_x[i] = 0.5 + 0.24 * ((i + 0.5) / double(m) - 0.5) + uniform_in(rng, -0.01, 0.01);
  }

  const double ratio_lo = std::max(1.0, spec.curvature.lo);
  for (int i = 0; i < m; ++i) {
    const Eigen::RowVector2d start(start_x[i], uniform_in(rng, spec.start_band.lo, spec.start_band.hi));
    const Eigen::RowVector2d end(end_x[i], uniform_in(rng, spec.end_band.lo, spec.end_band.hi));
    ControlPointsd control;
    bool placed = false;
    for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
      const double target = spec.family == LaneFamily::straight
                                ? 1.0
                                : uniform_in(rng, ratio_lo, spec.curvature.hi);
      const double sign = unit_uniform(rng) < 0.5 ? -1.0 : 1.0;
      double r1 = sign, r2 = sign;
      if (spec.family == LaneFamily::cubic) {
        r1 = uniform_in(rng, -1.0, 1.0);
        r2 = uniform_in(rng, -1.0, 1.0);
        if (std::abs(r1) + std::abs(r2) < 0.5) continue;
      }
      control = fit_bend(start, end, r1, r2, target, spec.n_points);
      placed = inside_frame(sample_bezier(control, spec.n_points));
    }
    if (!placed) throw std::invalid_argument("scene spec: could not place a lane inside the frame");
    scene.ground_truth.push_back(sample_bezier(control, spec.n_points));
  }
  std::sort(scene.ground_truth.begin(), scene.ground_truth.end(),
            [](const Polylined& a, const Polylined& b) { return a(0, 0) < b(0, 0); });
  return scene;
}

ProposalBank init_proposals(const TrainConfig& config, const Frame& /*frame*/) {
  std::mt19937_64 rng(config.seed);
  ProposalBank bank;
  bank.reserve(config.k_proposals);
  for (int k = 0; k < config.k_proposals; ++k) bank.push_back(fresh_proposal(rng, config, k));
  return bank;
}

TrainReport train(const Scene& scene, const TrainConfig& config) {
  return run_training(scene, nullptr, config);
}

TrainReport train(const SceneSpec& spec, const TrainConfig& config) {
  return run_training(generate_scene(spec), &spec, config);
}

double learning_rate_at(const TrainConfig& config, int step) {
  if (config.lr_schedule == LrSchedule::constant) return config.learning_rate;
  return config.learning_rate * 0.5 *
         (1.0 + std::cos(std::numbers::pi * double(step) / double(config.steps)));
}

double confidence_gap(const ProposalBank& bank, const Scene& scene, Eigen::Index n_points) {
  if (scene.ground_truth.empty()) throw std::domain_error("confidence gap needs at least one lane");
  const auto lanes = sample_bank(bank, n_points);
  const auto positives = hungarian_assign(lane_cost_matrix(scene.ground_truth, lanes));
  std::vector<bool> positive(bank.size(), false);
  for (const auto& pair : positives.pairs) positive[pair.second] = true;

  double min_pos = std::numeric_limits<double>::infinity();
  double max_neg = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < bank.size(); ++k) {
    const double p = logistic(bank[k].logit);
    if (positive[k])
      min_pos = std::min(min_pos, p);
    else
      max_neg = std::max(max_neg, p);
  }
  if (max_neg == -std::numeric_limits<double>::infinity())
    return std::numeric_limits<double>::infinity();
  return min_pos - max_neg;
}

BankStatistics bank_statistics(const ProposalBank& bank, const Scene& scene,
                               Eigen::Index n_points, int cap) {
  BankStatistics stats;
  const auto lanes = sample_bank(bank, n_points);
  std::vector<double> ratios(lanes.size(), std::numeric_limits<double>::quiet_NaN());
  int valid = 0, inside = 0;
  for (std::size_t k = 0; k < lanes.size(); ++k) {
    if (inside_frame(lanes[k])) ++inside;
    if (chord_length(lanes[k]) <= kChordEpsilon) continue;
    ratios[k] = straightness_ratio(lanes[k]).value;
    stats.mean_shape += ratios[k];
    stats.max_shape = std::max(stats.max_shape, ratios[k]);
    ++valid;
  }
  if (valid > 0) stats.mean_shape /= valid;
  stats.inside_fraction = lanes.empty() ? 0.0 : double(inside) / double(lanes.size());

  if (scene.ground_truth.empty()) {
    stats.confidence_gap = std::numeric_limits<double>::quiet_NaN();
    return stats;
  }
  const auto dense = dense_match(lane_cost_matrix(scene.ground_truth, lanes), cap);
  double diff_sum = 0.0;
  int pairs = 0;
  for (std::size_t k = 0; k < lanes.size(); ++k) {
    if (!dense.active[k]) continue;
    stats.mean_endpoint_active += endpoint_distance(lanes[k], scene.ground_truth[*dense.target[k]]).value;
    ++stats.active_count;
  }
  if (stats.active_count > 0) stats.mean_endpoint_active /= stats.active_count;
  for (const auto& cluster : dense.clusters) {
    std::vector<int> members;
    for (int k : cluster)
      if (dense.active[k]) members.push_back(k);
    stats.max_cluster_active = std::max(stats.max_cluster_active, int(members.size()));
    for (std::size_t a = 0; a < members.size(); ++a)
      for (std::size_t b = a + 1; b < members.size(); ++b) {
        diff_sum += std::abs(ratios[members[a]] - ratios[members[b]]);
        ++pairs;
      }
  }
  stats.mean_intra_cluster_diff = pairs > 0 ? diff_sum / pairs : 0.0;
  stats.confidence_gap = scene.ground_truth.size() <= bank.size()
                             ? confidence_gap(bank, scene, n_points)
                             : std::numeric_limits<double>::quiet_NaN();
  return stats;
}

}  // namespace dhpm
