#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dhpm/losses.hpp"
#include "dhpm/trainer.hpp"

#include <cmath>
#include <random>

using namespace dhpm;

namespace {

const double kLog2 = std::log(2.0);

Polylined line(double x0, double y0, double x1, double y1, Eigen::Index n) {
  Polylined lane(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = double(i) / double(n - 1);
    lane(i, 0) = x0 + t * (x1 - x0);
    lane(i, 1) = y0 + t * (y1 - y0);
  }
  return lane;
}

Polylined right_angle() {
  Polylined lane(3, 2);
  lane << 0, 0, 1, 0, 1, 1;
  return lane;
}

// One cluster holding every proposal, all active.
DenseMatch single_cluster(int k) {
  DenseMatch m;
  m.target.assign(std::size_t(k), 0);
  m.active.assign(std::size_t(k), true);
  m.clusters.resize(1);
  for (int i = 0; i < k; ++i) m.clusters[0].push_back(i);
  return m;
}

struct RandomCase {
  Scene scene;
  ProposalBank bank;
  Eigen::Index n = 0;
};

RandomCase random_case(std::mt19937_64& rng, int m, int k) {
  RandomCase c;
  SceneSpec spec;
  spec.seed = rng();
  spec.min_lanes = spec.max_lanes = m;
  spec.n_points = 5 + int(rng() % 12);
  c.scene = generate_scene(spec);
  c.n = spec.n_points;
  TrainConfig config;
  config.seed = rng();
  config.k_proposals = k;
  c.bank = init_proposals(config, c.scene.frame);
  for (auto& lane : c.bank) lane.logit = uniform_in(rng, -4.0, 4.0);
  return c;
}

LossWeights only(bool reg, bool cls_slot, bool shape, bool loc, bool div) {
  LossWeights w;
  w.enable_reg = reg;
  w.enable_seg = false;
  w.enable_dis = cls_slot;
  w.enable_cls = false;
  w.enable_shape = shape;
  w.enable_loc = loc;
  w.enable_div = div;
  return w;
}

}  // namespace

TEST_CASE("classification examples") {
  CHECK(cls_loss(0.5, 1, 1.0).value == doctest::Approx(kLog2));
  CHECK(cls_loss(1.0 - 1e-12, 1, 1.0).value == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(cls_loss(0.5, 0, 2.0).value == doctest::Approx(2.0 * kLog2));
  CHECK(discrimination_loss(0.5, 1.0, 1.0).value == doctest::Approx(kLog2));
  CHECK(discrimination_loss(0.5, 0.5, 1.0).value == doctest::Approx(kLog2));
  CHECK(std::isfinite(cls_loss(0.0, 1, 1.0).value));
  CHECK(std::isfinite(cls_loss(1.0, 0, 1.0).value));
}

TEST_CASE("soft label examples") {
  CHECK(soft_label(0.0, true, 10.0, 0.5) == 1.0);
  CHECK(soft_label(0.1, true, 10.0, 0.5) == doctest::Approx(0.683940).epsilon(1e-6));
  CHECK(soft_label(0.1, false, 10.0, 0.5) == 0.0);
  CHECK(std::abs(soft_label(10.0, true, 10.0, 0.5) - 0.5) < 1e-4);
  double prev = 2.0;
  for (int i = 0; i < 100; ++i) {
    const double l = soft_label(i * 0.02, true, 10.0, 0.5);
    CHECK(l < prev);
    CHECK(l >= 0.5);
    prev = l;
  }
}

TEST_CASE("soft-label cross entropy is minimized at the label") {
  // Golden-section search over p for w_neg = 1.
  for (double target : {0.5, 0.6, 0.683940, 0.9, 1.0 - 1e-3}) {
    double lo = 1e-6, hi = 1.0 - 1e-6;
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    for (int it = 0; it < 200; ++it) {
      const double a = hi - ratio * (hi - lo);
      const double b = lo + ratio * (hi - lo);
      if (discrimination_loss(a, target, 1.0).value < discrimination_loss(b, target, 1.0).value)
        hi = b;
      else
        lo = a;
    }
    CHECK(0.5 * (lo + hi) == doctest::Approx(target).epsilon(1e-6));
    CHECK(discrimination_loss(target, target, 1.0).grad_logit == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("regression examples") {
  const auto g = line(0.2, 1.0, 0.5, 0.4, 7);
  CHECK(reg_loss(g, g).value == 0.0);
  Polylined px = g;
  px.col(0).array() += 0.1;
  CHECK(reg_loss(px, g).value == doctest::Approx(0.05));
  CHECK(reg_loss(Polylined(g.array() + 0.1), g).value == doctest::Approx(0.1));
  CHECK_THROWS_AS(reg_loss(line(0, 0, 1, 1, 3), g), std::invalid_argument);
}

TEST_CASE("shape examples") {
  std::vector<Polylined> straight = {line(0, 1, 0.5, 0.3, 9), line(0.9, 1, 0.4, 0.2, 9)};
  CHECK(shape_loss(straight).value == doctest::Approx(1.0));
  std::vector<Polylined> mixed = {line(0, 0, 1, 1, 3), right_angle()};
  CHECK(shape_loss(mixed).value == doctest::Approx((1.0 + std::sqrt(2.0)) / 2.0));
  CHECK(shape_loss(std::vector<Polylined>{right_angle()}).value == doctest::Approx(std::sqrt(2.0)));

  std::vector<Polylined> bad = {line(0, 0, 1, 1, 3), line(0.3, 0.3, 0.3, 0.3, 3)};
  try {
    shape_loss(bad);
    FAIL("expected a degenerate lane");
  } catch (const DegenerateLaneError& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("location examples") {
  const auto g = line(0.15, 1.0, 0.5, 0.25, 5);
  Polylined p = g;
  p(0, 0) = 0.1;
  p(4, 0) = 0.4;
  p(4, 1) = 0.2;
  const auto match = single_cluster(1);
  CHECK(location_loss(std::vector<Polylined>{p}, std::vector<Polylined>{g}, match).value ==
        doctest::Approx(0.2));
  CHECK(location_loss(std::vector<Polylined>{g}, std::vector<Polylined>{g}, match).value == 0.0);

  DenseMatch empty;
  empty.target.assign(1, std::nullopt);
  empty.active.assign(1, false);
  const auto none = location_loss(std::vector<Polylined>{p}, std::vector<Polylined>{}, empty);
  CHECK(none.value == 0.0);
  CHECK(none.grads[0].isZero());
}

TEST_CASE("diversity examples") {
  CHECK(diversity_loss(std::vector<double>{1.2, 1.5}, single_cluster(2)).value ==
        doctest::Approx(-0.3));
  CHECK(diversity_loss(std::vector<double>{1.0, 1.2, 1.5}, single_cluster(3)).value ==
        doctest::Approx(-1.0 / 3.0));

  DenseMatch singletons;
  singletons.target = {0, 1, 2};
  singletons.active = {true, true, true};
  singletons.clusters = {{0}, {1}, {2}};
  const auto d = diversity_loss(std::vector<double>{1.0, 1.3, 1.1}, singletons);
  CHECK(d.value == 0.0);
  CHECK(d.pair_count == 0);

  SUBCASE("inactive members are ignored") {
    auto m = single_cluster(3);
    m.active[2] = false;
    CHECK(diversity_loss(std::vector<double>{1.0, 1.2, 9.0}, m).value == doctest::Approx(-0.2));
  }
}

TEST_CASE("total loss combines terms with their weights") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = random_case(rng, 1 + trial % 3, 8 + trial % 5);
    LossWeights w;
    const auto r = total_loss(c.bank, c.scene, w, c.n);
    const double hand = w.lambda_reg * r.j_reg + w.lambda_dis * r.j_cls + w.lambda_seg * r.j_seg +
                        w.lambda_ava * (w.lambda_shape * r.j_shape + w.lambda_loc * r.j_loc) +
                        w.lambda_div * r.j_div;
    CHECK(r.j_total == doctest::Approx(hand).epsilon(1e-9));
    CHECK(r.j_ava == doctest::Approx(r.j_shape + r.j_loc));
    CHECK(r.cap == default_cap(int(c.bank.size())));
  }
}

TEST_CASE("total loss gradient is the sum of per-term gradients") {
  std::mt19937_64 rng(47);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = random_case(rng, 1 + trial % 3, 10);
    const auto all = flatten_gradient(total_loss(c.bank, c.scene, only(true, true, true, true, true), c.n));
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(all.size());
    for (const auto& w : {only(true, false, false, false, false), only(false, true, false, false, false),
                          only(false, false, true, false, false), only(false, false, false, true, false),
                          only(false, false, false, false, true)})
      sum += flatten_gradient(total_loss(c.bank, c.scene, w, c.n));
    CHECK((all - sum).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("total loss edge cases") {
  std::mt19937_64 rng(5);
  const auto c = random_case(rng, 3, 10);

  SUBCASE("all terms disabled") {
    const auto r = total_loss(c.bank, c.scene, only(false, false, false, false, false), c.n);
    CHECK(r.j_total == 0.0);
    CHECK(flatten_gradient(r).isZero());
  }

  SUBCASE("scene without lanes") {
    Scene empty{c.scene.frame, {}};
    const auto r = total_loss(c.bank, empty, LossWeights{}, c.n);
    CHECK(r.positives.pairs.empty());
    CHECK(r.j_reg == 0.0);
    CHECK(r.j_loc == 0.0);
    CHECK(r.dense.active_count() == 0);
    for (double l : r.soft_labels) CHECK(l == 0.0);
    CHECK(std::isfinite(r.j_total));
  }

  SUBCASE("single proposal exactly on its ground truth") {
    ControlPointsd control;
    control << 0.2, 1.0, 0.3, 0.8, 0.45, 0.6, 0.5, 0.4;
    const Eigen::Index n = 12;
    Scene scene{c.scene.frame, {sample_bezier(control, n)}};
    ProposalBank bank{{control, 40.0}};
    const LossWeights w;
    const auto r = total_loss(bank, scene, w, n);
    const double s = straightness_ratio(scene.ground_truth[0]).value;
    CHECK(r.j_total == doctest::Approx(w.lambda_ava * w.lambda_shape * s).epsilon(1e-6));
    CHECK(r.soft_labels[0] == 1.0);
  }

  SUBCASE("a collapsed proposal is reported by index") {
    ProposalBank bank = c.bank;
    bank[4].control.rowwise() = Eigen::RowVector2d(0.5, 0.5);
    try {
      total_loss(bank, c.scene, LossWeights{}, c.n);
      FAIL("expected a degenerate lane");
    } catch (const DegenerateLaneError& e) {
      CHECK(e.index() == 4);
    }
  }

  SUBCASE("invalid weights") {
    LossWeights w;
    w.lambda_div = -1.0;
    CHECK_THROWS_AS(total_loss(c.bank, c.scene, w, c.n), std::invalid_argument);
  }
}

TEST_CASE("baseline path is bit-identical to the sparse loss") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_case(rng, trial % 4, 4 + trial % 20);
    auto w = LossWeights::sparse_baseline();
    w.w_neg = uniform_in(rng, 0.5, 2.0);
    const auto dense = total_loss(c.bank, c.scene, w, c.n);
    const auto sparse =
        sparse_loss(c.bank, c.scene, w.lambda_reg, w.lambda_cls, w.lambda_seg, w.w_neg, c.n);
    CHECK(dense.j_total == sparse.j_total);
    CHECK(flatten_gradient(dense) == flatten_gradient(sparse));
  }
}

TEST_CASE("bank flattening round trip") {
  std::mt19937_64 rng(8);
  const auto c = random_case(rng, 2, 6);
  const auto params = flatten_bank(c.bank);
  CHECK(params.size() == 6 * kParamsPerProposal);
  const auto back = unflatten_bank(params);
  REQUIRE(back.size() == c.bank.size());
  for (std::size_t k = 0; k < back.size(); ++k) {
    CHECK(back[k].control == c.bank[k].control);
    CHECK(back[k].logit == c.bank[k].logit);
  }
  CHECK_THROWS_AS(unflatten_bank(Eigen::VectorXd::Zero(10)), std::invalid_argument);
}
