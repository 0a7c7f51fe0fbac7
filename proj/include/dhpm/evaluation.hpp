#pragma once

#include "dhpm/geometry.hpp"

#include <Eigen/Core>

#include <vector>

namespace dhpm {

/// Stroke width at the reference 1640-pixel frame width.
inline constexpr double kReferenceStroke = 30.0;
inline constexpr double kReferenceWidth = 1640.0;

struct RasterMask {
  Frame frame;
  Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic> bitmap;  // height x width

  long area() const { return static_cast<long>(bitmap.count()); }
};

struct ScoredLane {
  Polylined points;
  double confidence = 1.0;
};

struct DetectionResult {
  int tp = 0;
  int fp = 0;
  int fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  Eigen::MatrixXd iou;  // kept predictions x ground truths
};

struct TuSimpleResult {
  double accuracy = 0.0;
  double fp_rate = 0.0;
  double fn_rate = 0.0;
  long correct_points = 0;
  long total_points = 0;
};

struct EvalOptions {
  double threshold_conf = 0.5;
  double threshold_iou = 0.5;
  double stroke_width = 0.0;  // <= 0 selects default_stroke_width(frame)
};

double default_stroke_width(const Frame& frame);

/// Sets every pixel whose center lies within stroke_width / 2 of a segment
/// of the polyline scaled to pixels.
RasterMask rasterize_lane(const Polylined& lane, const Frame& frame, double stroke_width);

/// |a & b| / |a | b|, 0 for an empty union.
double lane_iou(const RasterMask& a, const RasterMask& b);

/// F1 protocol: drop predictions below the confidence threshold, match the
/// rest one-to-one against ground truth, count pairs above the IoU threshold.
/// The matching maximizes the number of such pairs, then their summed IoU.
DetectionResult detect_f1(const std::vector<ScoredLane>& predictions,
                          const std::vector<Polylined>& ground_truth, const Frame& frame,
                          const EvalOptions& options = {});

/// Fills precision/recall/f1 from tp/fp/fn.
void finalize_rates(DetectionResult& result);

struct SweepRow {
  double threshold_conf = 0.0;
  DetectionResult result;
};

/// detect_f1 over an ascending grid of confidence thresholds.
std::vector<SweepRow> threshold_sweep(const std::vector<ScoredLane>& predictions,
                                      const std::vector<Polylined>& ground_truth,
                                      const Frame& frame, const std::vector<double>& thresholds,
                                      const EvalOptions& options = {});

/// Linear interpolation of x at each row in `ys`; rows outside the lane's y
/// span get NaN x, which never counts as a correct point.
Polylined resample_rows(const Polylined& lane, const Eigen::VectorXd& ys);

/// Point accuracy on a shared row grid. A prediction point is correct when it
/// is within `point_tolerance` pixels horizontally of the ground-truth point
/// on the same row; a lane counts as detected at `lane_cutoff` of its points.
/// Ground-truth points with NaN x are absent and excluded from the totals.
TuSimpleResult tusimple_accuracy(const std::vector<Polylined>& predictions,
                                 const std::vector<Polylined>& ground_truth, const Frame& frame,
                                 double point_tolerance = 20.0, double lane_cutoff = 0.85);

}  // namespace dhpm
