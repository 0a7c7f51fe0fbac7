#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dhpm {

/// Ordered lane samples, one (x, y) row per point, coordinates normalized to
/// the frame. Row 0 is the lane start, the last row is the lane end.
template <class Scalar>
using Polyline = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

/// Gradient of a scalar with respect to every coordinate of a polyline.
template <class Scalar>
using PointGrad = Eigen::Matrix<Scalar, Eigen::Dynamic, 2>;

template <class Scalar>
using ControlPoints = Eigen::Matrix<Scalar, 4, 2>;

using Polylined = Polyline<double>;
using ControlPointsd = ControlPoints<double>;

/// Thrown when a lane's start and end coincide, so its straightness ratio is
/// undefined. `index()` is the proposal index when known, -1 otherwise.
class DegenerateLaneError : public std::runtime_error {
 public:
  explicit DegenerateLaneError(const std::string& what, long index = -1)
      : std::runtime_error(what), index_(index) {}
  long index() const { return index_; }

 private:
  long index_;
};

inline constexpr double kChordEpsilon = 1e-6;

struct Frame {
  int height = 1;
  int width = 1;

  Frame() = default;
  Frame(int h, int w) : height(h), width(w) {
    if (h < 1 || w < 1) throw std::invalid_argument("frame dimensions must be >= 1");
  }
  bool operator==(const Frame&) const = default;
};

/// Cubic Bezier lane with a confidence pre-activation.
template <class Scalar>
struct BezierLane {
  ControlPoints<Scalar> control = ControlPoints<Scalar>::Zero();
  Scalar logit = Scalar(0);
};

using BezierLaned = BezierLane<double>;
using ProposalBank = std::vector<BezierLaned>;

struct Scene {
  Frame frame;
  std::vector<Polylined> ground_truth;

  std::size_t lane_count() const { return ground_truth.size(); }
};

/// Throws if the polyline breaks the LanePolyline invariants (N >= 2, finite).
template <class Derived>
void validate_polyline(const Eigen::MatrixBase<Derived>& lane) {
  if (lane.cols() != 2) throw std::invalid_argument("polyline must have two columns");
  if (lane.rows() < 2) throw std::invalid_argument("polyline needs at least two points");
  if (!lane.allFinite()) throw std::invalid_argument("polyline has non-finite coordinates");
}

inline void validate_scene(const Scene& scene) {
  const auto& gts = scene.ground_truth;
  for (const auto& g : gts) {
    validate_polyline(g);
    if (g.rows() != gts.front().rows())
      throw std::invalid_argument("scene lanes must share the same point count");
  }
}

/// Cubic Bernstein weights at t_i = i/(n-1); row i maps the four control
/// points onto sample i.
template <class Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, 4> bernstein_weights(Eigen::Index n_points) {
  if (n_points < 2) throw std::invalid_argument("n_points must be >= 2");
  Eigen::Matrix<Scalar, Eigen::Dynamic, 4> w(n_points, 4);
  for (Eigen::Index i = 0; i < n_points; ++i) {
    const Scalar t = Scalar(i) / Scalar(n_points - 1);
    const Scalar s = Scalar(1) - t;
    w(i, 0) = s * s * s;
    w(i, 1) = Scalar(3) * s * s * t;
    w(i, 2) = Scalar(3) * s * t * t;
    w(i, 3) = t * t * t;
  }
  return w;
}

template <class Scalar>
Polyline<Scalar> sample_bezier(const ControlPoints<Scalar>& control, Eigen::Index n_points) {
  return bernstein_weights<Scalar>(n_points) * control;
}

template <class Scalar>
Polyline<Scalar> sample_bezier(const BezierLane<Scalar>& lane, Eigen::Index n_points) {
  return sample_bezier(lane.control, n_points);
}

/// Pulls a per-point gradient back to control-point space (transpose of the
/// sampling Jacobian).
template <class Scalar>
ControlPoints<Scalar> pullback_to_control(const Eigen::Matrix<Scalar, Eigen::Dynamic, 4>& weights,
                                          const PointGrad<Scalar>& point_grad) {
  return weights.transpose() * point_grad;
}

template <class Scalar>
struct ValueGrad {
  Scalar value = Scalar(0);
  PointGrad<Scalar> grad;
};

template <class Scalar>
Scalar chord_length(const Polyline<Scalar>& lane) {
  return (lane.row(lane.rows() - 1) - lane.row(0)).norm();
}

template <class Scalar>
Scalar curve_length(const Polyline<Scalar>& lane) {
  Scalar total(0);
  for (Eigen::Index i = 0; i + 1 < lane.rows(); ++i) total += (lane.row(i + 1) - lane.row(i)).norm();
  return total;
}

/// Summed segment length over chord length, with the analytic gradient.
/// Throws DegenerateLaneError when the chord is at most kChordEpsilon.
template <class Scalar>
ValueGrad<Scalar> straightness_ratio(const Polyline<Scalar>& lane) {
  validate_polyline(lane);
  const Eigen::Index n = lane.rows();
  const Eigen::Matrix<Scalar, 1, 2> chord = lane.row(n - 1) - lane.row(0);
  const Scalar chord_len = chord.norm();
  if (!(chord_len > Scalar(kChordEpsilon)))
    throw DegenerateLaneError("lane start and end coincide (chord length " +
                              std::to_string(double(chord_len)) + ")");

  ValueGrad<Scalar> out;
  out.grad = PointGrad<Scalar>::Zero(n, 2);
  // d(length)/d(points), accumulated into out.grad first.
  Scalar length(0);
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const Eigen::Matrix<Scalar, 1, 2> seg = lane.row(i + 1) - lane.row(i);
    const Scalar len = seg.norm();
    length += len;
    if (len > Scalar(0)) {
      const Eigen::Matrix<Scalar, 1, 2> unit = seg / len;
      out.grad.row(i + 1) += unit;
      out.grad.row(i) -= unit;
    }
  }
  out.value = length / chord_len;
  // Quotient rule: dS = dL / c - L dc / c^2.
  out.grad /= chord_len;
  const Eigen::Matrix<Scalar, 1, 2> chord_unit = chord / chord_len;
  const Scalar scale = length / (chord_len * chord_len);
  out.grad.row(n - 1) -= scale * chord_unit;
  out.grad.row(0) += scale * chord_unit;
  return out;
}

/// Mean absolute coordinate difference, (1/2N) sum(|dx| + |dy|).
template <class Scalar>
Scalar lane_l1_distance(const Polyline<Scalar>& a, const Polyline<Scalar>& b) {
  if (a.rows() != b.rows()) throw std::invalid_argument("lane_l1_distance: point counts differ");
  return (a - b).cwiseAbs().sum() / Scalar(2 * a.rows());
}

template <class Scalar>
Scalar sign_or_zero(Scalar v) {
  return Scalar((Scalar(0) < v) - (v < Scalar(0)));
}

/// L1 distance of the start points plus L1 distance of the end points.
/// The gradient is taken w.r.t. `p` and is nonzero only on its first and last rows.
template <class Scalar>
ValueGrad<Scalar> endpoint_distance(const Polyline<Scalar>& p, const Polyline<Scalar>& g) {
  if (p.rows() < 1 || g.rows() < 1) throw std::invalid_argument("endpoint_distance: empty lane");
  ValueGrad<Scalar> out;
  out.grad = PointGrad<Scalar>::Zero(p.rows(), 2);
  const Eigen::Index pe = p.rows() - 1;
  const Eigen::Index ge = g.rows() - 1;
  for (int c = 0; c < 2; ++c) {
    const Scalar ds = p(0, c) - g(0, c);
    const Scalar de = p(pe, c) - g(ge, c);
    out.value += std::abs(ds) + std::abs(de);
    out.grad(0, c) += sign_or_zero(ds);
    out.grad(pe, c) += sign_or_zero(de);
  }
  return out;
}

/// True when every coordinate lies in [0, 1]. Proposals may leave the frame
/// during optimization; this only reports it.
template <class Derived>
bool inside_frame(const Eigen::MatrixBase<Derived>& lane) {
  return (lane.array() >= 0).all() && (lane.array() <= 1).all();
}

}  // namespace dhpm
