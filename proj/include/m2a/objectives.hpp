#pragma once

// Mask consistency (MCL) and entropy minimization (EML) objectives over the
// per-view probability batches p^(0..n-1).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "m2a/tensor.hpp"

namespace m2a::objectives {

/// Probabilities are floored at this value inside every logarithm.
inline constexpr double kProbFloor = 1e-12;

/// Which distribution weights the logarithm in a consistency term H(p^(t), sg(p^(r))).
enum class CeOrientation {
  target_weighted,   // -sum_k sg(p^(r))_k log p^(t)_k  (distillation form, default)
  student_weighted,  // -sum_k p^(t)_k log sg(p^(r))_k
};

enum class LossMode { mcl_eml, mcl, eml };

std::string to_string(LossMode mode);
std::string to_string(CeOrientation o);
LossMode parse_loss_mode(const std::string& s);
CeOrientation parse_orientation(const std::string& s);

/// Shannon entropy with 0 log 0 = 0. Throws DomainError off the simplex (1e-6).
double entropy(std::span<const double> p);

/// H(p, q) = -sum_k p_k log max(q_k, floor).
double cross_entropy(std::span<const double> p, std::span<const double> q);

/// n probability batches [B, K] produced by one model on the n views.
struct ViewPredictions {
  std::vector<ad::Tensor> probs;

  std::size_t views() const { return probs.size(); }
  std::size_t batch() const { return probs.empty() ? 0 : probs.front().dim(0); }
  std::size_t classes() const { return probs.empty() ? 0 : probs.front().dim(1); }

  /// Shapes agree and every row is on the simplex within 1e-9.
  void validate() const;
};

/// softmax of each logits batch, kept on the active trace.
ViewPredictions predictions_from_logits(std::span<const ad::Tensor> logits);

/// One consistency term: `student` view aligned to detached `target` view.
struct ConsistencyTerm {
  std::size_t target;
  std::size_t student;
};

/// Anchor terms (0, t) for t = 1..n-1, then (r, t) for 1 <= r < t <= n-1.
std::vector<ConsistencyTerm> mcl_terms(std::size_t views);

/// Batch mean of row entropies of a [B, K] probability tensor.
ad::Tensor batch_entropy(const ad::Tensor& probs);

/// Batch mean of the consistency cross-entropy; `target` is detached here.
ad::Tensor batch_consistency(const ad::Tensor& student, const ad::Tensor& target, CeOrientation orientation);

ad::Tensor mcl_loss(const ViewPredictions& views, CeOrientation orientation = CeOrientation::target_weighted);
ad::Tensor eml_loss(const ViewPredictions& views);

struct LossOptions {
  LossMode mode = LossMode::mcl_eml;
  CeOrientation orientation = CeOrientation::target_weighted;
};

struct LossBreakdown {
  ad::Tensor total;  // the objective selected by the loss mode
  double mcl = 0.0;  // both components are always reported for loss traces
  double eml = 0.0;
};

LossBreakdown total_loss(const ViewPredictions& views, const LossOptions& options = {});

}  // namespace m2a::objectives
