#include "dhpm/evaluation.hpp"

#include "dhpm/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dhpm {
namespace {

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                              const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

void check_row_grid(const std::vector<Polylined>& lanes, const Polylined& reference) {
  for (const auto& lane : lanes) {
    if (lane.rows() != reference.rows())
      throw std::invalid_argument("tusimple_accuracy: lanes do not share a row grid (point count)");
    if (((lane.col(1) - reference.col(1)).cwiseAbs().array() > 1e-9).any())
      throw std::invalid_argument("tusimple_accuracy: lanes do not share a row grid (y values)");
  }
}

}  // namespace

double default_stroke_width(const Frame& frame) {
  return std::max(1.0, kReferenceStroke * double(frame.width) / kReferenceWidth);
}

RasterMask rasterize_lane(const Polylined& lane, const Frame& frame, double stroke_width) {
  if (!(stroke_width >= 1.0)) throw std::invalid_argument("stroke_width must be >= 1");
  validate_polyline(lane);
  RasterMask mask{frame, Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(
                             frame.height, frame.width, false)};
  const double radius = stroke_width / 2.0;
  const Eigen::Vector2d scale(frame.width, frame.height);

  for (Eigen::Index s = 0; s + 1 < lane.rows(); ++s) {
    const Eigen::Vector2d a = lane.row(s).transpose().cwiseProduct(scale);
    const Eigen::Vector2d b = lane.row(s + 1).transpose().cwiseProduct(scale);
    const int c0 = std::max(0, int(std::floor(std::min(a.x(), b.x()) - radius)));
    const int c1 = std::min(frame.width - 1, int(std::ceil(std::max(a.x(), b.x()) + radius)));
    const int r0 = std::max(0, int(std::floor(std::min(a.y(), b.y()) - radius)));
    const int r1 = std::min(frame.height - 1, int(std::ceil(std::max(a.y(), b.y()) + radius)));
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        if (!mask.bitmap(r, c) &&
            point_segment_distance(Eigen::Vector2d(c + 0.5, r + 0.5), a, b) <= radius)
          mask.bitmap(r, c) = true;
  }
  return mask;
}

double lane_iou(const RasterMask& a, const RasterMask& b) {
  if (!(a.frame == b.frame)) throw std::invalid_argument("lane_iou: frame mismatch");
  const auto inter = (a.bitmap && b.bitmap).count();
  const auto uni = (a.bitmap || b.bitmap).count();
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

void finalize_rates(DetectionResult& r) {
  r.precision = (r.tp + r.fp) == 0 ? 0.0 : double(r.tp) / double(r.tp + r.fp);
  r.recall = (r.tp + r.fn) == 0 ? 0.0 : double(r.tp) / double(r.tp + r.fn);
  r.f1 = (r.precision + r.recall) == 0.0
             ? 0.0
             : 2.0 * r.precision * r.recall / (r.precision + r.recall);
}

DetectionResult detect_f1(const std::vector<ScoredLane>& predictions,
                          const std::vector<Polylined>& ground_truth, const Frame& frame,
                          const EvalOptions& options) {
  const double stroke =
      options.stroke_width > 0.0 ? options.stroke_width : default_stroke_width(frame);

  std::vector<RasterMask> kept;
  for (const auto& p : predictions)
    if (p.confidence >= options.threshold_conf) kept.push_back(rasterize_lane(p.points, frame, stroke));
  std::vector<RasterMask> gts;
  gts.reserve(ground_truth.size());
  for (const auto& g : ground_truth) gts.push_back(rasterize_lane(g, frame, stroke));

  DetectionResult out;
  const auto n_pred = static_cast<Eigen::Index>(kept.size());
  const auto n_gt = static_cast<Eigen::Index>(gts.size());
  out.iou = Eigen::MatrixXd::Zero(n_pred, n_gt);
  for (Eigen::Index i = 0; i < n_pred; ++i)
    for (Eigen::Index j = 0; j < n_gt; ++j) out.iou(i, j) = lane_iou(kept[i], gts[j]);

  if (n_pred > 0 && n_gt > 0) {
    // Each above-threshold pair earns a bonus larger than any attainable IoU
    // sum, so the assignment maximizes the true-positive count first.
    const double bonus = double(std::min(n_pred, n_gt)) + 1.0;
    Eigen::MatrixXd cost = -out.iou;
    for (Eigen::Index i = 0; i < n_pred; ++i)
      for (Eigen::Index j = 0; j < n_gt; ++j)
        if (out.iou(i, j) > options.threshold_iou) cost(i, j) -= bonus;
    const bool transpose = n_pred > n_gt;
    const auto assignment = hungarian_assign(transpose ? CostMatrix(cost.transpose()) : cost);
    for (const auto& [row, col] : assignment.pairs) {
      const Eigen::Index pi = transpose ? col : row;
      const Eigen::Index gi = transpose ? row : col;
      if (out.iou(pi, gi) > options.threshold_iou) ++out.tp;
    }
  }
  out.fp = static_cast<int>(n_pred) - out.tp;
  out.fn = static_cast<int>(n_gt) - out.tp;
  finalize_rates(out);
  return out;
}

std::vector<SweepRow> threshold_sweep(const std::vector<ScoredLane>& predictions,
                                      const std::vector<Polylined>& ground_truth,
                                      const Frame& frame, const std::vector<double>& thresholds,
                                      const EvalOptions& options) {
  std::vector<double> grid = thresholds;
  std::sort(grid.begin(), grid.end());
  std::vector<SweepRow> rows;
  rows.reserve(grid.size());
  for (double t : grid) {
    EvalOptions o = options;
    o.threshold_conf = t;
    rows.push_back({t, detect_f1(predictions, ground_truth, frame, o)});
  }
  return rows;
}

Polylined resample_rows(const Polylined& lane, const Eigen::VectorXd& ys) {
  validate_polyline(lane);
  Polylined out(ys.size(), 2);
  out.col(1) = ys;
  for (Eigen::Index r = 0; r < ys.size(); ++r) {
    out(r, 0) = std::numeric_limits<double>::quiet_NaN();
    for (Eigen::Index s = 0; s + 1 < lane.rows(); ++s) {
      const double y0 = lane(s, 1), y1 = lane(s + 1, 1);
      if (ys(r) < std::min(y0, y1) || ys(r) > std::max(y0, y1)) continue;
      const double t = y1 == y0 ? 0.0 : (ys(r) - y0) / (y1 - y0);
      out(r, 0) = lane(s, 0) + t * (lane(s + 1, 0) - lane(s, 0));
      break;
    }
  }
  return out;
}

TuSimpleResult tusimple_accuracy(const std::vector<Polylined>& predictions,
                                 const std::vector<Polylined>& ground_truth, const Frame& frame,
                                 double point_tolerance, double lane_cutoff) {
  TuSimpleResult out;
  if (ground_truth.empty()) {
    out.fp_rate = predictions.empty() ? 0.0 : 1.0;
    return out;
  }
  check_row_grid(ground_truth, ground_truth.front());
  check_row_grid(predictions, ground_truth.front());

  int matched = 0;
  int fn = 0;
  int counted = 0;
  for (const auto& g : ground_truth) {
    const long valid = g.col(0).array().isFinite().count();
    if (valid == 0) continue;
    ++counted;
    long best = 0;
    for (const auto& p : predictions) {
      const auto dx = ((p.col(0) - g.col(0)).cwiseAbs() * double(frame.width)).eval();
      best = std::max<long>(best, (dx.array() <= point_tolerance).count());
    }
    out.correct_points += best;
    out.total_points += valid;
    if (double(best) / double(valid) >= lane_cutoff)
      ++matched;
    else
      ++fn;
  }
  if (counted == 0) {
    out.fp_rate = predictions.empty() ? 0.0 : 1.0;
    return out;
  }
  out.accuracy = double(out.correct_points) / double(out.total_points);
  const int fp = std::max(0, static_cast<int>(predictions.size()) - matched);
  out.fp_rate = predictions.empty() ? 0.0 : double(fp) / double(predictions.size());
  out.fn_rate = double(fn) / double(counted);
  return out;
}

}  // namespace dhpm
