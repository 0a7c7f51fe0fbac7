#pragma once

#include "dhpm/geometry.hpp"
#include "dhpm/losses.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

namespace dhpm {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool operator==(const Interval&) const = default;
};

enum class LaneFamily { straight, arc, cubic };
enum class LrSchedule { constant, cosine };
enum class InitKind { random_vertical_fan, uniform_random };
enum class OptimizerKind { gradient_descent, adam };

struct SceneSpec {
  std::uint64_t seed = 0;
  Frame frame{590, 1640};
  int min_lanes = 3;
  int max_lanes = 3;
  LaneFamily family = LaneFamily::cubic;
  Interval curvature{1.0, 1.03};    // allowed straightness ratio of ground truth
  Interval start_band{0.92, 1.0};   // y of lane starts (bottom of the image)
  Interval end_band{0.38, 0.45};    // y of lane ends (toward the horizon)
  int n_points = 20;

  void validate() const;
};

struct TrainConfig {
  std::uint64_t seed = 0;
  int k_proposals = 20;
  int steps = 2000;
  double learning_rate = 2e-2;
  LrSchedule lr_schedule = LrSchedule::cosine;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_epsilon = 1e-3;
  LossWeights weights;
  InitKind init = InitKind::random_vertical_fan;
  int log_every = 100;
  int cap = 0;                  // <= 0 selects default_cap(k_proposals)
  bool resample_scene = false;  // only meaningful when training from a SceneSpec

  void validate() const;
  int effective_cap() const { return cap > 0 ? cap : default_cap(k_proposals); }
};

/// Statistics of a bank against a scene; everything the report summarizes
/// is recomputable from the final bank through this function.
struct BankStatistics {
  double mean_shape = 0.0;
  double max_shape = 0.0;
  double mean_endpoint_active = 0.0;  // mean D_k over active proposals
  double inside_fraction = 0.0;
  double confidence_gap = 0.0;        // +inf when there are no negatives, NaN when M = 0
  double mean_intra_cluster_diff = 0.0;
  int active_count = 0;
  int max_cluster_active = 0;
};

struct StepSummary {
  int step = 0;
  double learning_rate = 0.0;
  double j_reg = 0.0;
  double j_cls = 0.0;
  double j_shape = 0.0;
  double j_loc = 0.0;
  double j_div = 0.0;
  double j_total = 0.0;
  int active_count = 0;
  int max_cluster_active = 0;
};

struct TrainReport {
  std::vector<StepSummary> series;
  ProposalBank final_bank;
  Scene final_scene;
  BankStatistics initial;
  BankStatistics final;
  int recoveries = 0;
  int n_points = 0;
  int cap = 1;
  std::vector<ProposalBank> snapshots;  // bank at each logged step
};

/// Uniform double in [0, 1) from the top 53 bits; independent of the
/// standard library's distribution implementations.
double unit_uniform(std::mt19937_64& rng);
double uniform_in(std::mt19937_64& rng, double lo, double hi);

Scene generate_scene(const SceneSpec& spec);

ProposalBank init_proposals(const TrainConfig& config, const Frame& frame);

TrainReport train(const Scene& scene, const TrainConfig& config);
TrainReport train(const SceneSpec& spec, const TrainConfig& config);

/// Lowest positive probability minus highest probability among the other
/// proposals. Returns +infinity when every proposal is positive and throws
/// std::domain_error for a scene without lanes.
double confidence_gap(const ProposalBank& bank, const Scene& scene, Eigen::Index n_points);

BankStatistics bank_statistics(const ProposalBank& bank, const Scene& scene,
                               Eigen::Index n_points, int cap);

double learning_rate_at(const TrainConfig& config, int step);

}  // namespace dhpm
