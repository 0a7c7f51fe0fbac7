#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "dhpm/io.hpp"

#include <algorithm>
#include <filesystem>
#include <functional>
#include <limits>

using namespace dhpm;
using namespace dhpm::io;

namespace {

std::string path_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.path();
  }
  return "<no error>";
}

std::filesystem::path temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "dhpm_test_io";
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("scene round trip") {
  SceneSpec spec;
  spec.seed = 5;
  const Scene scene = generate_scene(spec);
  const auto j = scene_to_json(scene);
  CHECK(j["version"] == kSchemaVersion);
  CHECK(j["frame"]["h"] == scene.frame.height);
  const Scene back = scene_from_json(json::parse(j.dump()));
  CHECK(back.frame.height == scene.frame.height);
  CHECK(back.frame.width == scene.frame.width);
  REQUIRE(back.ground_truth.size() == scene.ground_truth.size());
  for (std::size_t i = 0; i < back.ground_truth.size(); ++i) CHECK(back.ground_truth[i] == scene.ground_truth[i]);
}

TEST_CASE("scene errors carry field paths") {
  const json good = scene_to_json(generate_scene(SceneSpec{}));

  json j = good;
  j.erase("frame");
  CHECK(path_of([&] { scene_from_json(j); }) == "frame");

  j = good;
  j["version"] = 2;
  CHECK(path_of([&] { scene_from_json(j); }) == "version");

  j = good;
  j["lanes"][1]["points"][2][0] = "x";
  CHECK(path_of([&] { scene_from_json(j); }) == "lanes[1].points[2][0]");

  j = good;
  j["frame"]["w"] = 0;
  CHECK(path_of([&] { scene_from_json(j); }) == "frame");

  j = good;
  j["lanes"][0]["points"] = json::array({{0.5, 0.5}});
  CHECK(path_of([&] { scene_from_json(j); }) == "lanes[0].points");
}

TEST_CASE("predictions round trip") {
  const Frame frame(590, 1640);
  Polylined lane(3, 2);
  lane << 0.1, 0.9, 0.2, 0.5, 0.3, 0.1;
  const std::vector<ScoredLane> lanes = {{lane, 0.25}, {lane, 0.875}};
  const auto [f, back] = predictions_from_json(json::parse(predictions_to_json(frame, lanes).dump()));
  CHECK(f.width == 1640);
  REQUIRE(back.size() == 2);
  CHECK(back[0].confidence == 0.25);
  CHECK(back[1].confidence == 0.875);
  CHECK(back[1].points == lane);

  SUBCASE("ground-truth files read as certain predictions") {
    const auto [_, gt] = predictions_from_json(scene_to_json(Scene{frame, {lane}}));
    REQUIRE(gt.size() == 1);
    CHECK(gt[0].confidence == 1.0);
  }
  SUBCASE("bank confidences are logistic") {
    BezierLaned b;
    b.control << 0.5, 1.0, 0.5, 0.7, 0.5, 0.4, 0.5, 0.1;
    b.logit = 0.0;
    const auto p = bank_to_predictions({b}, 7);
    CHECK(p[0].confidence == 0.5);
    CHECK(p[0].points.rows() == 7);
  }
}

TEST_CASE("run config round trip") {
  RunConfig c;
  c.scene.seed = 11;
  c.scene.family = LaneFamily::arc;
  c.scene.min_lanes = 2;
  c.scene.max_lanes = 4;
  c.train.k_proposals = 30;
  c.train.steps = 123;
  c.train.optimizer = OptimizerKind::gradient_descent;
  c.train.lr_schedule = LrSchedule::constant;
  c.train.weights.enable_div = false;
  c.train.weights.lambda_loc = 0.25;
  c.train.resample_scene = true;

  const auto j = run_config_to_json(c);
  const auto back = run_config_from_json(json::parse(j.dump()));
  CHECK(run_config_to_json(back) == j);
  CHECK(back.scene.family == LaneFamily::arc);
  CHECK(back.train.optimizer == OptimizerKind::gradient_descent);
  CHECK_FALSE(back.train.weights.enable_div);

  SUBCASE("missing fields keep defaults") {
    const auto d = run_config_from_json(json::object());
    CHECK(run_config_to_json(d) == run_config_to_json(RunConfig{}));
  }
}

TEST_CASE("config errors carry field paths") {
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"train":{"steps":"many"}})")); }) == "train.steps");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"train":{"k_proposals":-3}})")); }) == "train.k_proposals");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"train":{"optimizer":"sgd"}})")); }) == "train.optimizer");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"train":{"adam_epsilon":0}})")); }) == "train.adam_epsilon");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"train":{"weights":{"enable":{"div":1}}}})")); }) ==
        "train.weights.enable.div");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"scene":{"n_lanes":[1]}})")); }) == "scene.n_lanes");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"scene":{"seed":-1}})")); }) == "scene.seed");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"scene":{"curvature_range":[1.2,1.1]}})")); }) ==
        "scene.curvature_range");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"train":{"weights":{"gamma":2}}})")); }) ==
        "train.weights.gamma");
  CHECK(path_of([] { run_config_from_json(json::parse(R"({"version":9})")); }) == "version");
  CHECK(path_of([] { run_config_from_json(json::parse("[]")); }) == "");
}

TEST_CASE("reports") {
  BankStatistics s;
  s.confidence_gap = std::numeric_limits<double>::infinity();
  s.mean_shape = std::nan("");
  s.max_shape = 1.5;
  const auto j = statistics_to_json(s);
  CHECK(j["confidence_gap"].is_null());
  CHECK(j["mean_shape"].is_null());
  CHECK(j["max_shape"] == 1.5);

  DetectionResult d;
  d.tp = 1;
  d.fp = 1;
  d.fn = 1;
  d.precision = d.recall = d.f1 = 0.5;
  d.iou = Eigen::MatrixXd::Constant(2, 2, 0.25);
  const auto dj = detection_to_json(d);
  CHECK(dj["iou"].size() == 2);
  CHECK(dj["f1"] == 0.5);
  CHECK(detection_csv_header() == "threshold,tp,fp,fn,precision,recall,f1\n");
  CHECK(detection_csv_row(0.5, d) == "0.5,1,1,1,0.5,0.5,0.5\n");
}

TEST_CASE("training artifacts") {
  SceneSpec spec;
  spec.seed = 2;
  TrainConfig config;
  config.steps = 20;
  config.log_every = 5;
  const auto r = train(spec, config);

  const auto csv = loss_curve_csv(r);
  CHECK(csv.rfind("step,learning_rate,j_reg,j_cls,j_shape,j_loc,j_div,j_total,active_count,max_cluster_active\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == long(r.series.size()) + 1);

  const auto j = train_report_to_json(r);
  CHECK(j["final_bank"].size() == std::size_t(config.k_proposals));
  CHECK(j["series"].size() == r.series.size());
  CHECK(scene_from_json(j["final_scene"]).ground_truth.size() == r.final_scene.ground_truth.size());

  const auto svg = bank_svg(r.final_scene, r.final_bank, r.n_points, "final");
  CHECK(svg.rfind("<svg", 0) == 0);
  const auto count = [&](const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = svg.find(needle); pos != std::string::npos; pos = svg.find(needle, pos + 1)) ++n;
    return n;
  };
  CHECK(count("stroke-dasharray") == r.final_scene.ground_truth.size());
  CHECK(count("<path") == r.final_scene.ground_truth.size() + r.final_bank.size());
}

TEST_CASE("files") {
  const auto dir = temp_dir();
  const auto file = dir / "round.json";
  write_json_file(file, {{"a", 1}});
  CHECK(read_json_file(file)["a"] == 1);

  write_text_file(dir / "broken.json", "{\"a\": ");
  CHECK_THROWS_AS(read_json_file(dir / "broken.json"), InputError);
  CHECK_THROWS_AS(read_json_file(dir / "absent.json"), IoError);
  CHECK_THROWS_AS(write_text_file(dir / "no" / "such" / "dir.txt", "x"), IoError);
  std::filesystem::remove_all(dir);
}
