#include "dhpm/io.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace dhpm::io {
namespace {

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

std::string index_path(const std::string& path, std::size_t i) {
  return path + "[" + std::to_string(i) + "]";
}

const json& require(const json& j, const std::string& key, const std::string& path) {
  if (!j.is_object()) throw InputError(path, "expected an object");
  const auto it = j.find(key);
  if (it == j.end()) throw InputError(join(path, key), "missing field");
  return *it;
}

double as_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw InputError(path, "expected a number");
  return j.get<double>();
}

long long as_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw InputError(path, "expected an integer");
  return j.get<long long>();
}

template <class T, class Convert>
void read_opt(const json& j, const std::string& key, const std::string& path, T& out, Convert conv) {
  if (!j.is_object()) throw InputError(path, "expected an object");
  const auto it = j.find(key);
  if (it != j.end()) out = static_cast<T>(conv(*it, join(path, key)));
}

void read_number(const json& j, const std::string& key, const std::string& path, double& out) {
  read_opt(j, key, path, out, as_number);
}

void read_int(const json& j, const std::string& key, const std::string& path, int& out) {
  read_opt(j, key, path, out, as_integer);
}

void read_bool(const json& j, const std::string& key, const std::string& path, bool& out) {
  read_opt(j, key, path, out, [](const json& v, const std::string& p) {
    if (!v.is_boolean()) throw InputError(p, "expected a boolean");
    return v.get<bool>();
  });
}

void check_version(const json& j, const std::string& path) {
  const auto v = as_integer(require(j, "version", path), join(path, "version"));
  if (v != kSchemaVersion)
    throw InputError(join(path, "version"), "unsupported schema version " + std::to_string(v));
}

/// Validation messages name fields as "prefix.field ..."; rebase them onto `path`.
InputError field_error(const std::string& path, const std::string& prefix, const std::string& msg) {
  if (msg.rfind(prefix + ".", 0) != 0) return InputError(path, msg);
  const auto end = msg.find_first_of(": ");
  if (end == std::string::npos) return InputError(path, msg);
  auto rest = msg.substr(end);
  rest.erase(0, rest.find_first_not_of(": "));
  return InputError(path + msg.substr(prefix.size(), end - prefix.size()), rest);
}

json frame_to_json(const Frame& f) { return {{"h", f.height}, {"w", f.width}}; }

Frame frame_from_json(const json& j, const std::string& path) {
  const auto h = as_integer(require(j, "h", path), join(path, "h"));
  const auto w = as_integer(require(j, "w", path), join(path, "w"));
  if (h < 1 || w < 1) throw InputError(path, "frame dimensions must be >= 1");
  return Frame(static_cast<int>(h), static_cast<int>(w));
}

json points_to_json(const Polylined& lane) {
  json pts = json::array();
  for (Eigen::Index i = 0; i < lane.rows(); ++i) pts.push_back({lane(i, 0), lane(i, 1)});
  return pts;
}

Polylined points_from_json(const json& j, const std::string& path) {
  if (!j.is_array()) throw InputError(path, "expected an array of [x, y] pairs");
  Polylined lane(static_cast<Eigen::Index>(j.size()), 2);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto p = index_path(path, i);
    if (!j[i].is_array() || j[i].size() != 2) throw InputError(p, "expected [x, y]");
    lane(static_cast<Eigen::Index>(i), 0) = as_number(j[i][0], p + "[0]");
    lane(static_cast<Eigen::Index>(i), 1) = as_number(j[i][1], p + "[1]");
  }
  try {
    validate_polyline(lane);
  } catch (const std::invalid_argument& e) {
    throw InputError(path, e.what());
  }
  return lane;
}

json interval_to_json(const Interval& i) { return {i.lo, i.hi}; }

Interval interval_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw InputError(path, "expected [lo, hi]");
  return {as_number(j[0], path + "[0]"), as_number(j[1], path + "[1]")};
}

template <class E>
struct EnumName {
  E value;
  const char* name;
};

constexpr EnumName<LaneFamily> kFamilies[] = {
    {LaneFamily::straight, "straight"}, {LaneFamily::arc, "arc"}, {LaneFamily::cubic, "cubic"}};
constexpr EnumName<LrSchedule> kSchedules[] = {{LrSchedule::constant, "constant"},
                                               {LrSchedule::cosine, "cosine"}};
constexpr EnumName<InitKind> kInits[] = {{InitKind::random_vertical_fan, "random_vertical_fan"},
                                         {InitKind::uniform_random, "uniform_random"}};
constexpr EnumName<OptimizerKind> kOptimizers[] = {
    {OptimizerKind::gradient_descent, "gradient_descent"}, {OptimizerKind::adam, "adam"}};

template <class E, std::size_t N>
std::string enum_name(const EnumName<E> (&table)[N], E value) {
  for (const auto& e : table)
    if (e.value == value) return e.name;
  return "unknown";
}

template <class E, std::size_t N>
E enum_from(const EnumName<E> (&table)[N], const json& j, const std::string& path) {
  if (!j.is_string()) throw InputError(path, "expected a string");
  const auto s = j.get<std::string>();
  for (const auto& e : table)
    if (s == e.name) return e.value;
  throw InputError(path, "unknown value '" + s + "'");
}

/// nlohmann writes NaN/inf as null; keep that explicit.
json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json scene_to_json(const Scene& scene) {
  json lanes = json::array();
  for (const auto& g : scene.ground_truth) lanes.push_back({{"points", points_to_json(g)}});
  return {{"version", kSchemaVersion}, {"frame", frame_to_json(scene.frame)}, {"lanes", lanes}};
}

Scene scene_from_json(const json& j) {
  check_version(j, "");
  Scene scene;
  scene.frame = frame_from_json(require(j, "frame", ""), "frame");
  const auto& lanes = require(j, "lanes", "");
  if (!lanes.is_array()) throw InputError("lanes", "expected an array");
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const auto p = index_path("lanes", i);
    scene.ground_truth.push_back(points_from_json(require(lanes[i], "points", p), p + ".points"));
  }
  try {
    validate_scene(scene);
  } catch (const std::invalid_argument& e) {
    throw InputError("lanes", e.what());
  }
  return scene;
}

json predictions_to_json(const Frame& frame, const std::vector<ScoredLane>& lanes) {
  json out = json::array();
  for (const auto& l : lanes)
    out.push_back({{"points", points_to_json(l.points)}, {"confidence", l.confidence}});
  return {{"version", kSchemaVersion}, {"frame", frame_to_json(frame)}, {"lanes", out}};
}

std::pair<Frame, std::vector<ScoredLane>> predictions_from_json(const json& j) {
  check_version(j, "");
  const Frame frame = frame_from_json(require(j, "frame", ""), "frame");
  const auto& lanes = require(j, "lanes", "");
  if (!lanes.is_array()) throw InputError("lanes", "expected an array");
  std::vector<ScoredLane> out;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const auto p = index_path("lanes", i);
    ScoredLane lane;
    lane.points = points_from_json(require(lanes[i], "points", p), p + ".points");
    // Ground-truth files carry no confidence; treat their lanes as certain.
    lane.confidence = 1.0;
    read_number(lanes[i], "confidence", p, lane.confidence);
    out.push_back(std::move(lane));
  }
  return {frame, std::move(out)};
}

std::vector<ScoredLane> bank_to_predictions(const ProposalBank& bank, Eigen::Index n_points) {
  std::vector<ScoredLane> out;
  out.reserve(bank.size());
  const auto lanes = sample_bank(bank, n_points);
  for (std::size_t k = 0; k < bank.size(); ++k) out.push_back({lanes[k], logistic(bank[k].logit)});
  return out;
}

json weights_to_json(const LossWeights& w) {
  return {{"lambda_reg", w.lambda_reg},
          {"lambda_seg", w.lambda_seg},
          {"lambda_ava", w.lambda_ava},
          {"lambda_div", w.lambda_div},
          {"lambda_dis", w.lambda_dis},
          {"lambda_cls", w.lambda_cls},
          {"lambda_shape", w.lambda_shape},
          {"lambda_loc", w.lambda_loc},
          {"w_neg", w.w_neg},
          {"beta", w.beta},
          {"gamma", w.gamma},
          {"enable",
           {{"reg", w.enable_reg},
            {"seg", w.enable_seg},
            {"shape", w.enable_shape},
            {"loc", w.enable_loc},
            {"div", w.enable_div},
            {"dis", w.enable_dis},
            {"cls", w.enable_cls}}}};
}

LossWeights weights_from_json(const json& j, const std::string& path) {
  LossWeights w;
  read_number(j, "lambda_reg", path, w.lambda_reg);
  read_number(j, "lambda_seg", path, w.lambda_seg);
  read_number(j, "lambda_ava", path, w.lambda_ava);
  read_number(j, "lambda_div", path, w.lambda_div);
  read_number(j, "lambda_dis", path, w.lambda_dis);
  read_number(j, "lambda_cls", path, w.lambda_cls);
  read_number(j, "lambda_shape", path, w.lambda_shape);
  read_number(j, "lambda_loc", path, w.lambda_loc);
  read_number(j, "w_neg", path, w.w_neg);
  read_number(j, "beta", path, w.beta);
  read_number(j, "gamma", path, w.gamma);
  if (j.contains("enable")) {
    const auto& e = j["enable"];
    const auto p = join(path, "enable");
    read_bool(e, "reg", p, w.enable_reg);
    read_bool(e, "seg", p, w.enable_seg);
    read_bool(e, "shape", p, w.enable_shape);
    read_bool(e, "loc", p, w.enable_loc);
    read_bool(e, "div", p, w.enable_div);
    read_bool(e, "dis", p, w.enable_dis);
    read_bool(e, "cls", p, w.enable_cls);
  }
  try {
    w.validate();
  } catch (const std::invalid_argument& e) {
    throw field_error(path, "weights", e.what());
  }
  return w;
}

json scene_spec_to_json(const SceneSpec& s) {
  return {{"seed", s.seed},
          {"frame", frame_to_json(s.frame)},
          {"n_lanes", {s.min_lanes, s.max_lanes}},
          {"lane_family", enum_name(kFamilies, s.family)},
          {"curvature_range", interval_to_json(s.curvature)},
          {"start_band", interval_to_json(s.start_band)},
          {"end_band", interval_to_json(s.end_band)},
          {"n_points", s.n_points}};
}

SceneSpec scene_spec_from_json(const json& j, const std::string& path) {
  SceneSpec s;
  if (!j.is_object()) throw InputError(path, "expected an object");
  if (j.contains("seed")) {
    const auto v = as_integer(j["seed"], join(path, "seed"));
    if (v < 0) throw InputError(join(path, "seed"), "must be >= 0");
    s.seed = static_cast<std::uint64_t>(v);
  }
  if (j.contains("frame")) s.frame = frame_from_json(j["frame"], join(path, "frame"));
  if (j.contains("n_lanes")) {
    const auto p = join(path, "n_lanes");
    const auto& v = j["n_lanes"];
    if (!v.is_array() || v.size() != 2) throw InputError(p, "expected [min, max]");
    s.min_lanes = static_cast<int>(as_integer(v[0], p + "[0]"));
    s.max_lanes = static_cast<int>(as_integer(v[1], p + "[1]"));
  }
  if (j.contains("lane_family")) s.family = enum_from(kFamilies, j["lane_family"], join(path, "lane_family"));
  if (j.contains("curvature_range"))
    s.curvature = interval_from_json(j["curvature_range"], join(path, "curvature_range"));
  if (j.contains("start_band")) s.start_band = interval_from_json(j["start_band"], join(path, "start_band"));
  if (j.contains("end_band")) s.end_band = interval_from_json(j["end_band"], join(path, "end_band"));
  read_int(j, "n_points", path, s.n_points);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw field_error(path, "scene", e.what());
  }
  return s;
}

json train_config_to_json(const TrainConfig& c) {
  return {{"seed", c.seed},
          {"k_proposals", c.k_proposals},
          {"steps", c.steps},
          {"learning_rate", c.learning_rate},
          {"lr_schedule", enum_name(kSchedules, c.lr_schedule)},
          {"optimizer", enum_name(kOptimizers, c.optimizer)},
          {"adam_epsilon", c.adam_epsilon},
          {"weights", weights_to_json(c.weights)},
          {"init", enum_name(kInits, c.init)},
          {"log_every", c.log_every},
          {"cap", c.cap},
          {"resample_scene", c.resample_scene}};
}

TrainConfig train_config_from_json(const json& j, const std::string& path) {
  TrainConfig c;
  if (!j.is_object()) throw InputError(path, "expected an object");
  if (j.contains("seed")) {
    const auto v = as_integer(j["seed"], join(path, "seed"));
    if (v < 0) throw InputError(join(path, "seed"), "must be >= 0");
    c.seed = static_cast<std::uint64_t>(v);
  }
  read_int(j, "k_proposals", path, c.k_proposals);
  read_int(j, "steps", path, c.steps);
  read_number(j, "learning_rate", path, c.learning_rate);
  if (j.contains("lr_schedule")) c.lr_schedule = enum_from(kSchedules, j["lr_schedule"], join(path, "lr_schedule"));
  if (j.contains("optimizer")) c.optimizer = enum_from(kOptimizers, j["optimizer"], join(path, "optimizer"));
  read_number(j, "adam_epsilon", path, c.adam_epsilon);
  if (j.contains("weights")) c.weights = weights_from_json(j["weights"], join(path, "weights"));
  if (j.contains("init")) c.init = enum_from(kInits, j["init"], join(path, "init"));
  read_int(j, "log_every", path, c.log_every);
  read_int(j, "cap", path, c.cap);
  read_bool(j, "resample_scene", path, c.resample_scene);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw field_error(path, "train", e.what());
  }
  return c;
}

json run_config_to_json(const RunConfig& c) {
  return {{"version", kSchemaVersion},
          {"scene", scene_spec_to_json(c.scene)},
          {"train", train_config_to_json(c.train)}};
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw InputError("", "expected an object");
  if (j.contains("version")) check_version(j, "");
  RunConfig c;
  if (j.contains("scene")) c.scene = scene_spec_from_json(j["scene"], "scene");
  if (j.contains("train")) c.train = train_config_from_json(j["train"], "train");
  return c;
}

json bank_to_json(const ProposalBank& bank) {
  json out = json::array();
  for (const auto& lane : bank) {
    json ctrl = json::array();
    for (int r = 0; r < 4; ++r) ctrl.push_back({lane.control(r, 0), lane.control(r, 1)});
    out.push_back({{"control", ctrl}, {"logit", lane.logit}});
  }
  return out;
}

json statistics_to_json(const BankStatistics& s) {
  return {{"mean_shape", finite_or_null(s.mean_shape)},
          {"max_shape", finite_or_null(s.max_shape)},
          {"mean_endpoint_active", finite_or_null(s.mean_endpoint_active)},
          {"inside_fraction", finite_or_null(s.inside_fraction)},
          {"confidence_gap", finite_or_null(s.confidence_gap)},
          {"mean_intra_cluster_diff", finite_or_null(s.mean_intra_cluster_diff)},
          {"active_count", s.active_count},
          {"max_cluster_active", s.max_cluster_active}};
}

json train_report_to_json(const TrainReport& r) {
  json series = json::array();
  for (const auto& s : r.series)
    series.push_back({{"step", s.step},
                      {"learning_rate", s.learning_rate},
                      {"j_reg", s.j_reg},
                      {"j_cls", s.j_cls},
                      {"j_shape", s.j_shape},
                      {"j_loc", s.j_loc},
                      {"j_div", s.j_div},
                      {"j_total", s.j_total},
                      {"active_count", s.active_count},
                      {"max_cluster_active", s.max_cluster_active}});
  return {{"version", kSchemaVersion},
          {"n_points", r.n_points},
          {"cap", r.cap},
          {"recoveries", r.recoveries},
          {"series", series},
          {"initial", statistics_to_json(r.initial)},
          {"final", statistics_to_json(r.final)},
          {"final_bank", bank_to_json(r.final_bank)},
          {"final_scene", scene_to_json(r.final_scene)}};
}

json detection_to_json(const DetectionResult& r) {
  json iou = json::array();
  for (Eigen::Index i = 0; i < r.iou.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < r.iou.cols(); ++j) row.push_back(r.iou(i, j));
    iou.push_back(row);
  }
  return {{"version", kSchemaVersion}, {"tp", r.tp},           {"fp", r.fp},
          {"fn", r.fn},                {"precision", r.precision}, {"recall", r.recall},
          {"f1", r.f1},                {"iou", iou}};
}

std::string detection_csv_header() { return "threshold,tp,fp,fn,precision,recall,f1\n"; }

std::string detection_csv_row(double threshold, const DetectionResult& r) {
  std::ostringstream os;
  os << std::setprecision(10) << threshold << ',' << r.tp << ',' << r.fp << ',' << r.fn << ','
     << r.precision << ',' << r.recall << ',' << r.f1 << '\n';
  return os.str();
}

std::string loss_curve_csv(const TrainReport& r) {
  std::ostringstream os;
  os << "step,learning_rate,j_reg,j_cls,j_shape,j_loc,j_div,j_total,active_count,max_cluster_active\n";
  os << std::setprecision(17);
  for (const auto& s : r.series)
    os << s.step << ',' << s.learning_rate << ',' << s.j_reg << ',' << s.j_cls << ',' << s.j_shape
       << ',' << s.j_loc << ',' << s.j_div << ',' << s.j_total << ',' << s.active_count << ','
       << s.max_cluster_active << '\n';
  return os.str();
}

std::string bank_svg(const Scene& scene, const ProposalBank& bank, Eigen::Index n_points,
                     const std::string& title) {
  const double w = scene.frame.width;
  const double h = scene.frame.height;
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<title>" << title << "</title>\n";
  const auto path = [&](const Polylined& lane) {
    std::ostringstream p;
    p << std::fixed << std::setprecision(2);
    for (Eigen::Index i = 0; i < lane.rows(); ++i)
      p << (i == 0 ? "M" : " L") << lane(i, 0) * w << ',' << lane(i, 1) * h;
    return p.str();
  };
  const auto lanes = sample_bank(bank, n_points);
  for (std::size_t k = 0; k < lanes.size(); ++k) {
    const double p = logistic(bank[k].logit);
    const int red = static_cast<int>(std::lround(255.0 * p));
    const int blue = 255 - red;
    os << "<path d=\"" << path(lanes[k]) << "\" fill=\"none\" stroke=\"rgb(" << red << ",0,"
       << blue << ")\" stroke-width=\"2\" stroke-opacity=\"" << std::setprecision(3)
       << 0.25 + 0.75 * p << std::setprecision(2) << "\"/>\n";
  }
  for (const auto& g : scene.ground_truth)
    os << "<path d=\"" << path(g)
       << "\" fill=\"none\" stroke=\"black\" stroke-width=\"4\" stroke-dasharray=\"12,8\"/>\n";
  os << "</svg>\n";
  return os.str();
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw InputError(path.string(), std::string("JSON parse error: ") + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

}  // namespace dhpm::io
