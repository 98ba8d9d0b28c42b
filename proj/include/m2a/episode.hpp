#pragma once

// Source preparation and the online continual adaptation episode.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "m2a/archive.hpp"
#include "m2a/config.hpp"
#include "m2a/data.hpp"
#include "m2a/masking.hpp"
#include "m2a/model.hpp"
#include "m2a/optim.hpp"
#include "m2a/pretrain.hpp"

namespace m2a::harness {

struct SourceBundle {
  SourceConfig config;
  data::SyntheticDataset dataset;
  model::ParameterArchive source;
  model::PretrainReport pretrain;
};

/// Generates the clean task and trains the source model. With a cache
/// directory, a previously saved model for the same SourceConfig is reused and
/// a freshly trained one is saved there.
SourceBundle prepare_source(const SourceConfig& cfg, const std::optional<std::filesystem::path>& cache_dir = {});

/// Online learner: sees unlabeled batches only, predicts, then adapts.
class OnlineAdapter {
 public:
  OnlineAdapter(model::Classifier model, const ExperimentConfig& cfg);

  struct Step {
    std::vector<int> predictions;
    double mcl = 0.0;  // loss values of the first step on this batch
    double eml = 0.0;
    double max_imag_residue = 0.0;
  };
  Step process(const data::UnlabeledBatch& batch);

  const model::Classifier& model() const { return model_; }
  std::size_t optimizer_steps() const { return adam_.step; }

 private:
  model::Classifier model_;
  ExperimentConfig cfg_;
  bool adapts_;
  masking::MaskSchedule schedule_;
  masking::MaskPolicy policy_;
  std::vector<ad::Tensor> params_;
  optim::AdamState adam_;
};

struct BatchLog {
  std::size_t domain = 0;
  std::size_t samples = 0;
  std::size_t errors = 0;
  std::size_t source_errors = 0;
  double mcl = 0.0;
  double eml = 0.0;
  std::uint64_t param_hash = 0;  // adaptable parameters after this batch's updates
  double max_imag_residue = 0.0;
  bool operator==(const BatchLog&) const = default;
};

struct DomainResult {
  std::string name;  // short column label
  data::CorruptionKind kind = data::CorruptionKind::gaussian_noise;
  std::size_t samples = 0;
  double error_pct = 0.0;
  double source_error_pct = 0.0;
  double mean_mcl = 0.0;
  double mean_eml = 0.0;
  bool operator==(const DomainResult&) const = default;
};

struct EpisodeReport {
  ExperimentConfig config;
  std::vector<DomainResult> domains;
  double mean_error = 0.0;
  double source_mean_error = 0.0;
  double gain = 0.0;  // source_mean_error - mean_error, percentage points
  std::uint64_t final_param_hash = 0;
  std::vector<BatchLog> batches;
  double wall_seconds = 0.0;  // never serialized into report files

  /// Equality of everything that is serialized (wall-clock excluded).
  bool same_results(const EpisodeReport& o) const {
    return config == o.config && domains == o.domains && mean_error == o.mean_error &&
           source_mean_error == o.source_mean_error && gain == o.gain && final_param_hash == o.final_param_hash &&
           batches == o.batches;
  }
};

struct EpisodeOptions {
  /// Replace every hidden label with this value before scoring.
  std::optional<int> sentinel_label;
};

/// Validates the config, builds the stream from the source pool and runs
/// predict-then-adapt over every batch without resets between domains. The
/// source-frozen error of each batch is scored in the same pass.
EpisodeReport run_episode(const ExperimentConfig& cfg, const SourceBundle& source, const EpisodeOptions& options = {});

struct SweepAxis {
  std::string field;                // top-level config field name
  std::vector<nlohmann::json> values;
};

struct SweepArm {
  ExperimentConfig config;
  std::optional<EpisodeReport> report;
  std::string error;  // set when the arm failed
};

/// Cartesian grid in axis order (last axis fastest). Every arm starts from
/// the source snapshot and keeps the base seed unless `seed` is an axis.
std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& base, const std::vector<SweepAxis>& axes);
std::vector<SweepArm> run_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes,
                                const SourceBundle& source);

}  // namespace m2a::harness
