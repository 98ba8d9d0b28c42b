#pragma once

// Desk-scale stand-in for the ViT backbone: an MLP whose hidden blocks are
// linear -> layer norm -> relu, followed by a linear head. Only the layer-norm
// scale and shift are adaptable at test time.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "m2a/images.hpp"
#include "m2a/rng.hpp"
#include "m2a/tensor.hpp"

namespace m2a::model {

enum class Role : std::uint8_t { frozen = 0, adaptable = 1 };

struct Parameter {
  std::string name;
  Role role = Role::frozen;
  ad::Tensor value;
};

struct Architecture {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t hidden = 128;
  std::size_t blocks = 3;
  std::size_t classes = 10;
  // Small enough that normalized rows have unit variance to ~1e-10.
  double norm_eps = 1e-12;

  std::size_t input_dim() const { return channels * height * width; }
  bool operator==(const Architecture&) const = default;
};

struct InitOptions {
  bool zero_head = false;  // zero-initialize the final linear layer
};

/// Which parameters carry gradients during the next forward passes.
enum class TrainScope { none, adaptable, all };

class Classifier {
 public:
  Classifier(const Architecture& arch, Rng& rng, InitOptions init = {});

  // Copies are deep: each copy owns its parameter buffers.
  Classifier(const Classifier& other);
  Classifier& operator=(const Classifier& other);
  Classifier(Classifier&&) noexcept = default;
  Classifier& operator=(Classifier&&) noexcept = default;

  const Architecture& architecture() const { return arch_; }

  /// images: [B, C, H, W] or [B, D] -> logits [B, K].
  ad::Tensor forward(const ad::Tensor& images) const;

  /// Same as forward but also returns the pre-affine layer-norm outputs.
  ad::Tensor forward(const ad::Tensor& images, std::vector<ad::Tensor>* normalized) const;

  std::span<Parameter> parameters() { return params_; }
  std::span<const Parameter> parameters() const { return params_; }
  /// Handles to parameters with the given role, in registry order.
  std::vector<ad::Tensor> parameters_with(Role role) const;
  std::vector<ad::Tensor> all_tensors() const;

  std::size_t parameter_count() const;
  std::size_t parameter_count(Role role) const;

  void set_train_scope(TrainScope scope);
  void clear_grads();

 private:
  Architecture arch_;
  std::vector<Parameter> params_;
};

/// argmax per row of a [B, K] tensor (lowest index on ties).
std::vector<int> argmax_rows(const ad::Tensor& scores);

std::vector<int> predict(const Classifier& model, const ad::Tensor& images);

/// Fraction of correctly classified images, evaluated in batches.
double accuracy(const Classifier& model, const LabeledImages& data, std::size_t batch = 100);

}  // namespace m2a::model
