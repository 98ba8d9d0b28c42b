#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "m2a/images.hpp"
#include "m2a/model.hpp"

namespace m2a::model {

struct PretrainOptions {
  std::size_t epochs = 6;
  std::size_t batch = 50;
  double lr = 1e-3;
  double min_accuracy = 0.95;  // on the held-out split, or train when none is given
  std::uint64_t seed = 0;      // minibatch order and augmentation draws
  // Occlusion augmentation: each training image is, with probability 1/2,
  // zeroed under a random patch or pixel mask of level U(0, occlusion).
  double occlusion = 0.0;
};

struct PretrainReport {
  std::vector<double> epoch_loss;  // mean cross-entropy per epoch
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
};

class TrainingFailure : public std::runtime_error {
 public:
  TrainingFailure(const std::string& what, PretrainReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const PretrainReport& report() const { return report_; }

 private:
  PretrainReport report_;
};

/// Supervised training of every parameter with Adam and cross-entropy.
/// Throws TrainingFailure (carrying the loss curve) below min_accuracy.
PretrainReport pretrain_source(Classifier& model, const LabeledImages& train, const LabeledImages* heldout,
                               const PretrainOptions& options);

/// Batch-mean cross-entropy of logits [B, K] against integer labels.
ad::Tensor labeled_cross_entropy(const ad::Tensor& logits, std::span<const int> labels);

}  // namespace m2a::model
