#pragma once

#include "dhpm/evaluation.hpp"
#include "dhpm/geometry.hpp"
#include "dhpm/losses.hpp"
#include "dhpm/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace dhpm::io {

using nlohmann::json;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

/// Malformed or invalid input; `path()` is the JSON field path at fault.
class InputError : public std::runtime_error {
 public:
  InputError(const std::string& path, const std::string& what)
      : std::runtime_error(path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Failure to read or write a file.
class IoError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

json scene_to_json(const Scene& scene);
Scene scene_from_json(const json& j);

json predictions_to_json(const Frame& frame, const std::vector<ScoredLane>& lanes);
/// Returns the frame and scored lanes of a prediction file.
std::pair<Frame, std::vector<ScoredLane>> predictions_from_json(const json& j);

/// Samples a bank into scored lanes (confidence = logistic(logit)).
std::vector<ScoredLane> bank_to_predictions(const ProposalBank& bank, Eigen::Index n_points);

json weights_to_json(const LossWeights& w);
LossWeights weights_from_json(const json& j, const std::string& path = "weights");

json scene_spec_to_json(const SceneSpec& s);
SceneSpec scene_spec_from_json(const json& j, const std::string& path = "scene");

json train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const json& j, const std::string& path = "train");

struct RunConfig {
  SceneSpec scene;
  TrainConfig train;
};

json run_config_to_json(const RunConfig& c);
/// Parses and validates a run configuration; missing fields keep defaults.
RunConfig run_config_from_json(const json& j);

json bank_to_json(const ProposalBank& bank);
json statistics_to_json(const BankStatistics& s);
json train_report_to_json(const TrainReport& r);
json detection_to_json(const DetectionResult& r);

std::string detection_csv_header();
std::string detection_csv_row(double threshold, const DetectionResult& r);
std::string loss_curve_csv(const TrainReport& r);

/// GT lanes dashed in black, proposals colored from blue (low confidence)
/// to red (high confidence).
std::string bank_svg(const Scene& scene, const ProposalBank& bank, Eigen::Index n_points,
                     const std::string& title);

json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);
void write_json_file(const std::filesystem::path& path, const json& j);

}  // namespace dhpm::io
