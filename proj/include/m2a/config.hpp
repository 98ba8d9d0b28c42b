#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2a/data.hpp"
#include "m2a/masking.hpp"
#include "m2a/model.hpp"
#include "m2a/objectives.hpp"

namespace m2a::harness {

enum class Method { source_frozen, spatial_patch, spatial_pixel, freq_all, freq_low, freq_high };

std::string to_string(Method m);
Method parse_method(const std::string& s);
/// Masking policy of an M2A method; throws for source-frozen.
masking::MaskPolicy policy_for(Method m, std::size_t patch_side, bool symmetric_closure);

/// Which prediction is scored online.
enum class ScoreView { anchor, mean_of_views };
std::string to_string(ScoreView v);
ScoreView parse_score_view(const std::string& s);

/// Clean source task and the pretraining recipe of the source model.
struct SourceConfig {
  std::uint64_t seed = 2024;
  std::size_t train_size = 5000;
  std::size_t pool_size = 1000;
  std::size_t epochs = 12;
  std::size_t batch = 50;
  double lr = 1e-3;
  double min_accuracy = 0.95;
  double occlusion = 0.5;  // max level of the random occlusion augmentation
  model::Architecture architecture;

  bool operator==(const SourceConfig&) const = default;
};

struct ExperimentConfig {
  Method method = Method::spatial_patch;
  objectives::LossMode loss_mode = objectives::LossMode::mcl_eml;
  objectives::CeOrientation orientation = objectives::CeOrientation::target_weighted;
  std::size_t views = 3;
  double alpha = 0.1;
  double lr = 1e-3;
  double weight_decay = 0.0;
  std::size_t steps_per_batch = 1;
  std::size_t batch = 20;
  std::uint64_t seed = 0;
  std::size_t patch_side = 0;  // 0: ceil(min(H,W)/8)
  bool symmetric_closure = false;
  ScoreView score_view = ScoreView::anchor;

  std::vector<data::CorruptionKind> order = data::default_order();
  int severity = 5;
  std::size_t samples_per_domain = 1000;

  std::string output_dir;
  SourceConfig source;

  bool operator==(const ExperimentConfig&) const = default;

  data::StreamSpec stream_spec() const { return {order, severity, samples_per_domain, batch}; }

  /// Schedule validity and, for quadrant frequency policies, the budget of the
  /// most-masked view against the quadrant size. Throws ParameterError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

nlohmann::json to_json(const SourceConfig& cfg);
SourceConfig source_from_json(const nlohmann::json& j);

/// Output root: the config's output_dir, else $M2A_OUTPUT_ROOT, else ./m2a_out.
std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg);

}  // namespace m2a::harness
