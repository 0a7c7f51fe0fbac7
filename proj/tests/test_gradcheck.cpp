#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dhpm/gradcheck.hpp"
#include "dhpm/trainer.hpp"

#include <cmath>
#include <limits>

using namespace dhpm;

TEST_CASE("quadratic is exact under central differences") {
  Eigen::VectorXd x(2);
  x << 1.0, 2.0;
  const auto r = finite_diff_check([](const Eigen::VectorXd& v) { return v.squaredNorm(); }, 2.0 * x, x);
  CHECK(r.max_rel_error < 1e-9);
  CHECK(r.n_checked == 2);
  CHECK(r.n_skipped_kinks == 0);
}

TEST_CASE("a wrong gradient is caught") {
  Eigen::VectorXd x(3);
  x << 0.3, -0.2, 0.9;
  Eigen::VectorXd g = 2.0 * x;
  g(1) *= 1.01;
  const auto r = finite_diff_check([](const Eigen::VectorXd& v) { return v.squaredNorm(); }, g, x);
  CHECK(r.max_rel_error > 1e-3);
  CHECK(r.worst_parameter_index == 1);
}

TEST_CASE("straightness ratio at the right angle") {
  Polylined lane(3, 2);
  lane << 0, 0, 1, 0, 1, 1;
  const auto grad = straightness_ratio(lane).grad;
  const double r = 1.0 / std::sqrt(2.0);
  Polylined expected(3, 2);
  expected << 0, r, r, -r, -r, 0;
  CHECK((grad - expected).cwiseAbs().maxCoeff() < 1e-15);

  // x of the start and y of the end have zero derivative; their central
  // differences are pure round-off and are checked in absolute terms.
  const std::vector<Eigen::Index> moving = {1, 2, 3, 4};
  const auto with = [&](const Eigen::VectorXd& v) {
    Polylined l = lane;
    for (std::size_t i = 0; i < moving.size(); ++i) l(moving[i]) = v(Eigen::Index(i));
    return l;
  };
  Eigen::VectorXd x(4), g(4);
  for (std::size_t i = 0; i < moving.size(); ++i) {
    x(Eigen::Index(i)) = lane(moving[i]);
    g(Eigen::Index(i)) = grad(moving[i]);
  }
  const auto f = [&](const Eigen::VectorXd& v) { return straightness_ratio(with(v)).value; };
  CHECK(finite_diff_check(f, g, x).max_rel_error < 1e-4);

  Eigen::VectorXd all = Eigen::Map<const Eigen::VectorXd>(lane.data(), lane.size());
  const Eigen::VectorXd all_grad = Eigen::Map<const Eigen::VectorXd>(grad.data(), grad.size());
  const auto f_all = [](const Eigen::VectorXd& v) {
    return straightness_ratio(Polylined(Eigen::Map<const Polylined>(v.data(), 3, 2))).value;
  };
  CHECK(finite_diff_check(f_all, all_grad, all).max_abs_error < 1e-10);
}

TEST_CASE("kink coordinates are skipped") {
  Eigen::VectorXd x(2);
  x << 3e-6, 0.5;
  const auto f = [](const Eigen::VectorXd& v) { return std::abs(v(0)) + v(1) * v(1); };
  const auto kinks = [](const Eigen::VectorXd& v) {
    Eigen::VectorXd k(1);
    k << v(0);
    return k;
  };
  Eigen::VectorXd g(2);
  g << 1.0, 1.0;
  const auto r = finite_diff_check(f, g, x, kFdStep, kKinkBand, kinks);
  CHECK(r.n_skipped_kinks == 1);
  CHECK(r.n_checked == 1);
  CHECK(r.max_rel_error < 1e-9);

  x(0) = 0.25;
  const auto r2 = finite_diff_check(f, g, x, kFdStep, kKinkBand, kinks);
  CHECK(r2.n_skipped_kinks == 0);
  CHECK(r2.max_rel_error < 1e-9);
}

TEST_CASE("non-finite values report the coordinate") {
  Eigen::VectorXd x = Eigen::VectorXd::Constant(3, 1.0);
  const auto f = [](const Eigen::VectorXd& v) {
    return v(2) > 1.0 ? std::numeric_limits<double>::quiet_NaN() : v.sum();
  };
  try {
    finite_diff_check(f, Eigen::VectorXd::Ones(3), x);
    FAIL("expected an evaluation error");
  } catch (const EvaluationError& e) {
    CHECK(e.coordinate() == 2);
  }
  CHECK_THROWS_AS(finite_diff_check(f, Eigen::VectorXd::Ones(2), x), std::invalid_argument);
  CHECK_THROWS_AS(finite_diff_check(f, Eigen::VectorXd::Ones(3), x, 0.0), std::invalid_argument);
}

TEST_CASE("total loss at a random three-lane scene, seed 7") {
  SceneSpec spec;
  spec.seed = 7;
  spec.n_points = 12;
  const Scene scene = generate_scene(spec);
  TrainConfig config;
  config.seed = 7;
  config.k_proposals = 10;
  ProposalBank bank = init_proposals(config, scene.frame);
  std::mt19937_64 rng(7);
  for (auto& lane : bank) lane.logit = uniform_in(rng, -2.0, 2.0);

  LossWeights w;
  w.enable_dis = false;  // hard labels keep the objective a plain function of the bank
  const auto report = total_loss(bank, scene, w, spec.n_points);
  const auto f = [&](const Eigen::VectorXd& p) {
    return total_loss(unflatten_bank(p), scene, w, spec.n_points).j_total;
  };
  const auto kinks = [&](const Eigen::VectorXd& p) {
    return objective_kinks(p, scene, w, spec.n_points, report.cap, report);
  };
  const auto r = finite_diff_check(f, flatten_gradient(report), flatten_bank(bank), kFdStep,
                                   kKinkBand, kinks);
  CHECK(r.max_rel_error < 1e-4);
  CHECK(r.n_checked > 60);
}

TEST_CASE("gradient suite") {
  SUBCASE("filter") {
    const auto rows = run_gradient_suite(7, 5, "shape");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].loss == "shape");
    CHECK(rows[0].trials == 5);
  }
  SUBCASE("unknown loss") { CHECK_THROWS_AS(run_gradient_suite(7, 1, "curvature"), std::invalid_argument); }
  SUBCASE("deterministic") {
    const auto a = run_gradient_suite(3, 4);
    const auto b = run_gradient_suite(3, 4);
    REQUIRE(a.size() == gradient_suite_losses().size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].worst.max_rel_error == b[i].worst.max_rel_error);
      CHECK(a[i].worst.n_checked == b[i].worst.n_checked);
    }
  }
}
