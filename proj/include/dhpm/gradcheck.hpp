#pragma once

#include "dhpm/geometry.hpp"
#include "dhpm/losses.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dhpm {

inline constexpr double kFdStep = 1e-5;
inline constexpr double kKinkBand = 1e-6;
inline constexpr double kGradTolerance = 1e-4;

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  long worst_parameter_index = -1;
  int n_skipped_kinks = 0;
  int n_checked = 0;
};

/// Raised when the checked function returns a non-finite value.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, long coordinate)
      : std::runtime_error(what), coordinate_(coordinate) {}
  long coordinate() const { return coordinate_; }

 private:
  long coordinate_;
};

using ScalarFn = std::function<double(const Eigen::VectorXd&)>;

/// Returns the arguments of every non-smooth operation (|.| arguments, chord
/// margins, matching indicators) at a point. A coordinate is skipped when
/// any argument is within the kink band of zero, or changes sign between
/// the two perturbed evaluations.
using KinkFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Central-difference comparison of `analytic_grad` against `f` at `point`.
/// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckResult finite_diff_check(const ScalarFn& f, const Eigen::VectorXd& analytic_grad,
                                  const Eigen::VectorXd& point, double step = kFdStep,
                                  double kink_band = kKinkBand, const KinkFn& kinks = {});

/// Non-smooth arguments of the full objective at `params`, with matching
/// decisions compared to `reference` (±1 indicators).
Eigen::VectorXd objective_kinks(const Eigen::VectorXd& params, const Scene& scene,
                                const LossWeights& weights, Eigen::Index n_points, int cap,
                                const LossReport& reference);

struct SuiteRow {
  std::string loss;
  GradCheckResult worst;  // worst trial by relative error, skips summed over trials
  int trials = 0;
  bool passed = false;
};

/// Names accepted by run_gradient_suite's filter.
const std::vector<std::string>& gradient_suite_losses();

/// Checks every loss gradient at `trials` seeded random configurations each.
/// An empty `only` runs every loss; otherwise just the named one.
std::vector<SuiteRow> run_gradient_suite(std::uint64_t seed, int trials,
                                         const std::string& only = "",
                                         double tolerance = kGradTolerance);

}  // namespace dhpm
