// Command-line front end: gradcheck, train, eval, scene.
//
// Exit codes: 0 success, 1 check failure, 2 input error, 3 IO error.

#include "dhpm/evaluation.hpp"
#include "dhpm/gradcheck.hpp"
#include "dhpm/io.hpp"
#include "dhpm/trainer.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using dhpm::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitIo = 3;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

/// Applies one ablation switch; "ava" covers both of its inner terms.
void set_term(dhpm::LossWeights& w, const std::string& term, bool on) {
  if (term == "all") {
    for (const char* t : {"reg", "seg", "ava", "div", "dis", "cls"}) set_term(w, t, on);
  } else if (term == "reg") {
    w.enable_reg = on;
  } else if (term == "seg") {
    w.enable_seg = on;
  } else if (term == "ava") {
    w.enable_shape = w.enable_loc = on;
  } else if (term == "shape") {
    w.enable_shape = on;
  } else if (term == "loc") {
    w.enable_loc = on;
  } else if (term == "div") {
    w.enable_div = on;
  } else if (term == "dis") {
    w.enable_dis = on;
  } else if (term == "cls") {
    w.enable_cls = on;
  } else {
    throw dhpm::io::InputError("--enable/--disable", "unknown term '" + term + "'");
  }
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

fs::path resolve_output_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("DHPM_OUTPUT_DIR"); env && *env) return env;
  return "dhpm_out";
}

int run_gradcheck(std::uint64_t seed, int trials, const std::string& loss) {
  std::vector<dhpm::SuiteRow> rows;
  try {
    rows = dhpm::run_gradient_suite(seed, trials, loss);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  std::printf("%-8s %8s %14s %14s %9s %8s  %s\n", "loss", "trials", "max_rel_err", "max_abs_err",
              "checked", "skipped", "status");
  bool ok = true;
  for (const auto& r : rows) {
    std::printf("%-8s %8d %14.3e %14.3e %9d %8d  %s\n", r.loss.c_str(), r.trials,
                r.worst.max_rel_error, r.worst.max_abs_error, r.worst.n_checked,
                r.worst.n_skipped_kinks, r.passed ? "PASS" : "FAIL");
    if (!r.passed) {
      ok = false;
      std::fprintf(stderr, "gradient check failed for loss '%s' (parameter %ld)\n",
                   r.loss.c_str(), r.worst.worst_parameter_index);
    }
  }
  return ok ? kExitOk : kExitCheckFailed;
}

struct TrainFlags {
  std::string config;
  std::string out;
  std::string enable;
  std::string disable;
  long long seed = -1;
  int steps = 0;
  bool resample = false;
};

int run_train(const TrainFlags& flags) {
  dhpm::io::RunConfig config;
  try {
    if (!flags.config.empty()) config = dhpm::io::run_config_from_json(dhpm::io::read_json_file(flags.config));
    for (const auto& t : split_list(flags.enable)) set_term(config.train.weights, t, true);
    for (const auto& t : split_list(flags.disable)) set_term(config.train.weights, t, false);
    if (flags.seed >= 0) config.train.seed = config.scene.seed = static_cast<std::uint64_t>(flags.seed);
    if (flags.steps > 0) config.train.steps = flags.steps;
    if (flags.resample) config.train.resample_scene = true;
    config.train.validate();
    config.scene.validate();
  } catch (const dhpm::io::InputError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInput;
  } catch (const dhpm::io::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInput;
  }

  const fs::path out = resolve_output_dir(flags.out);
  try {
    fs::create_directories(out / "snapshots");
    json manifest = {{"tool", "dhpm"},
                     {"tool_version", dhpm::io::kToolVersion},
                     {"config", dhpm::io::run_config_to_json(config)},
                     {"seeds", {{"scene", config.scene.seed}, {"train", config.train.seed}}},
                     {"started_at", utc_timestamp()},
                     {"outputs",
                      {{"report", "report.json"},
                       {"loss_curve", "loss_curve.csv"},
                       {"predictions", "predictions.json"},
                       {"scene", "scene.json"},
                       {"snapshots", "snapshots/"}}}};
    dhpm::io::write_json_file(out / "manifest.json", manifest);

    const auto report = dhpm::train(config.scene, config.train);

    dhpm::io::write_json_file(out / "report.json", dhpm::io::train_report_to_json(report));
    dhpm::io::write_text_file(out / "loss_curve.csv", dhpm::io::loss_curve_csv(report));
    dhpm::io::write_json_file(out / "scene.json", dhpm::io::scene_to_json(report.final_scene));
    dhpm::io::write_json_file(
        out / "predictions.json",
        dhpm::io::predictions_to_json(report.final_scene.frame,
                                      dhpm::io::bank_to_predictions(report.final_bank, report.n_points)));
    for (std::size_t i = 0; i < report.snapshots.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof name, "step_%06d.svg", report.series[i].step);
      dhpm::io::write_text_file(out / "snapshots" / name,
                                dhpm::io::bank_svg(report.final_scene, report.snapshots[i],
                                                   report.n_points,
                                                   "step " + std::to_string(report.series[i].step)));
    }
    dhpm::io::write_text_file(out / "snapshots" / "final.svg",
                              dhpm::io::bank_svg(report.final_scene, report.final_bank,
                                                 report.n_points, "final"));

    const auto& f = report.final;
    std::printf("trained %d steps: mean S %.6f, mean D(active) %.6f, confidence gap %.6f, "
                "recoveries %d\n",
                config.train.steps, f.mean_shape, f.mean_endpoint_active, f.confidence_gap,
                report.recoveries);
    std::printf("outputs written to %s\n", out.string().c_str());
  } catch (const dhpm::io::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitOk;
}

struct EvalFlags {
  std::string pred;
  std::string gt;
  std::string out;
  double conf = 0.5;
  double iou = 0.5;
  double stroke = 0.0;
  bool sweep = false;
  int sweep_points = 21;
  bool tusimple = false;
  double tolerance = 20.0;
  int row_step = 10;
};

int run_eval(const EvalFlags& flags) {
  std::vector<dhpm::ScoredLane> preds;
  dhpm::Scene gt;
  try {
    auto [pframe, p] = dhpm::io::predictions_from_json(dhpm::io::read_json_file(flags.pred));
    gt = dhpm::io::scene_from_json(dhpm::io::read_json_file(flags.gt));
    if (!(pframe == gt.frame)) throw dhpm::io::InputError("frame", "prediction and ground-truth frames differ");
    preds = std::move(p);
  } catch (const dhpm::io::InputError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitInput;
  } catch (const dhpm::io::IoError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitInput;
  }

  dhpm::EvalOptions options;
  options.threshold_conf = flags.conf;
  options.threshold_iou = flags.iou;
  options.stroke_width = flags.stroke;
  const auto result = dhpm::detect_f1(preds, gt.ground_truth, gt.frame, options);
  json out = dhpm::io::detection_to_json(result);
  if (flags.tusimple) {
    std::vector<dhpm::Polylined> kept;
    try {
      const int n_rows = gt.frame.height / flags.row_step;
      Eigen::VectorXd rows(n_rows);
      for (int r = 0; r < n_rows; ++r)
        rows(r) = (double(gt.frame.height) - 1.0 - r * flags.row_step) / double(gt.frame.height);
      std::vector<dhpm::Polylined> gt_rows;
      for (const auto& g : gt.ground_truth) gt_rows.push_back(dhpm::resample_rows(g, rows));
      for (const auto& p : preds)
        if (p.confidence >= flags.conf) kept.push_back(dhpm::resample_rows(p.points, rows));
      const auto ts = dhpm::tusimple_accuracy(kept, gt_rows, gt.frame, flags.tolerance);
      out["tusimple"] = {{"accuracy", ts.accuracy}, {"fp_rate", ts.fp_rate}, {"fn_rate", ts.fn_rate}};
    } catch (const std::invalid_argument& e) {
      std::cerr << "tusimple: " << e.what() << '\n';
      return kExitInput;
    }
  }
  std::cout << out.dump(2) << '\n';

  std::string sweep_csv;
  if (flags.sweep) {
    std::vector<double> grid;
    for (int i = 0; i < flags.sweep_points; ++i) grid.push_back(double(i) / double(flags.sweep_points - 1));
    sweep_csv = dhpm::io::detection_csv_header();
    for (const auto& row : dhpm::threshold_sweep(preds, gt.ground_truth, gt.frame, grid, options))
      sweep_csv += dhpm::io::detection_csv_row(row.threshold_conf, row.result);
  }
  try {
    if (!flags.out.empty()) {
      fs::create_directories(flags.out);
      dhpm::io::write_json_file(fs::path(flags.out) / "detection.json", out);
      dhpm::io::write_text_file(fs::path(flags.out) / "detection.csv",
                                dhpm::io::detection_csv_header() +
                                    dhpm::io::detection_csv_row(flags.conf, result));
      if (flags.sweep) dhpm::io::write_text_file(fs::path(flags.out) / "sweep.csv", sweep_csv);
    } else if (flags.sweep) {
      std::cout << sweep_csv;
    }
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}

int run_scene(const std::string& config_path, long long seed, const std::string& out) {
  dhpm::SceneSpec spec;
  try {
    if (!config_path.empty()) {
      const auto j = dhpm::io::read_json_file(config_path);
      spec = j.contains("scene") ? dhpm::io::scene_spec_from_json(j["scene"])
                                 : dhpm::io::scene_spec_from_json(j);
    }
    if (seed >= 0) spec.seed = static_cast<std::uint64_t>(seed);
    const auto scene = dhpm::generate_scene(spec);
    const auto text = dhpm::io::scene_to_json(scene).dump(2) + "\n";
    if (out.empty())
      std::cout << text;
    else
      dhpm::io::write_text_file(out, text);
  } catch (const dhpm::io::InputError& e) {
    std::cerr << "invalid scene spec: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid scene spec: " << e.what() << '\n';
    return kExitInput;
  } catch (const dhpm::io::IoError& e) {
    std::cerr << "io error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense proposal modulation losses: gradient checks, desk-scale training, evaluation"};
  app.require_subcommand(1);
  int exit_code = kExitOk;

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
  std::uint64_t gc_seed = 7;
  int gc_trials = 100;
  std::string gc_loss;
  gradcheck->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gradcheck->add_option("--trials", gc_trials, "Random configurations per loss")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  gradcheck->add_option("--loss", gc_loss, "Check only this loss (reg, cls, shape, loc, ava, div, dis, total)");
  gradcheck->callback([&] { exit_code = run_gradcheck(gc_seed, gc_trials, gc_loss); });

  auto* train = app.add_subcommand("train", "Optimize a proposal bank on a synthetic scene");
  TrainFlags tf;
  train->add_option("--config", tf.config, "Run configuration JSON");
  train->add_option("--out", tf.out, "Output directory (default: $DHPM_OUTPUT_DIR or ./dhpm_out)");
  train->add_option("--enable", tf.enable, "Comma-separated terms to enable (reg, seg, ava, shape, loc, div, dis, cls, all)");
  train->add_option("--disable", tf.disable, "Comma-separated terms to disable; applied after --enable");
  train->add_option("--seed", tf.seed, "Override scene and training seeds");
  train->add_option("--steps", tf.steps, "Override the number of steps");
  train->add_flag("--resample", tf.resample, "Draw a new scene every step");
  train->callback([&] { exit_code = run_train(tf); });

  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  EvalFlags ef;
  eval->add_option("--pred", ef.pred, "Prediction JSON")->required();
  eval->add_option("--gt", ef.gt, "Ground-truth scene JSON")->required();
  eval->add_option("--out", ef.out, "Directory for detection.json / detection.csv / sweep.csv");
  eval->add_option("--conf", ef.conf, "Confidence threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval->add_option("--iou", ef.iou, "IoU threshold")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  eval->add_option("--stroke", ef.stroke, "Rasterization stroke width in pixels (default: 30 px at 1640 px width)");
  eval->add_flag("--sweep", ef.sweep, "Emit F1 over a grid of confidence thresholds");
  eval->add_option("--sweep-points", ef.sweep_points, "Grid size for --sweep")
      ->capture_default_str()
      ->check(CLI::Range(2, 10001));
  eval->add_flag("--tusimple", ef.tusimple, "Also report point accuracy on the shared row grid");
  eval->add_option("--tolerance", ef.tolerance, "Point tolerance in pixels for --tusimple")->capture_default_str();
  eval->add_option("--row-step", ef.row_step, "Row spacing in pixels for --tusimple")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  eval->callback([&] { exit_code = run_eval(ef); });

  auto* scene = app.add_subcommand("scene", "Generate a synthetic scene and dump it as JSON");
  std::string sc_config, sc_out;
  long long sc_seed = -1;
  scene->add_option("--config", sc_config, "Scene spec JSON (or a run config with a 'scene' field)");
  scene->add_option("--seed", sc_seed, "Override the scene seed");
  scene->add_option("--out", sc_out, "Output file (default: stdout)");
  scene->callback([&] { exit_code = run_scene(sc_config, sc_seed, sc_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitInput;
  }
  return exit_code;
}
