#include "m2a/objectives.hpp"

#include <cmath>

#include "m2a/errors.hpp"

namespace m2a::objectives {

namespace {

void check_simplex(std::span<const double> p, double tol, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < -tol) throw DomainError(std::string(what) + ": invalid probability");
    total += v;
  }
  if (std::abs(total - 1.0) > tol) {
    throw DomainError(std::string(what) + ": probabilities sum to " + std::to_string(total));
  }
}

}  // namespace

std::string to_string(LossMode mode) {
  switch (mode) {
    case LossMode::mcl_eml: return "mcl+eml";
    case LossMode::mcl: return "mcl";
    case LossMode::eml: return "eml";
  }
  return "?";
}

std::string to_string(CeOrientation o) {
  return o == CeOrientation::target_weighted ? "target-weighted" : "student-weighted";
}

LossMode parse_loss_mode(const std::string& s) {
  if (s == "mcl+eml") return LossMode::mcl_eml;
  if (s == "mcl") return LossMode::mcl;
  if (s == "eml") return LossMode::eml;
  throw ParameterError("unknown loss mode '" + s + "'");
}

CeOrientation parse_orientation(const std::string& s) {
  if (s == "target-weighted") return CeOrientation::target_weighted;
  if (s == "student-weighted") return CeOrientation::student_weighted;
  throw ParameterError("unknown cross-entropy orientation '" + s + "'");
}

double entropy(std::span<const double> p) {
  check_simplex(p, 1e-6, "entropy");
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ShapeError("cross_entropy: length mismatch");
  check_simplex(p, 1e-6, "cross_entropy");
  check_simplex(q, 1e-6, "cross_entropy");
  double h = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k)
    if (p[k] > 0.0) h -= p[k] * std::log(std::max(q[k], kProbFloor));
  return h;
}

void ViewPredictions::validate() const {
  if (probs.empty()) throw ShapeError("view predictions: no views");
  const auto& shape = probs.front().shape();
  if (shape.size() != 2) throw ShapeError("view predictions: expected [B,K], got " + ad::to_string(shape));
  for (const auto& p : probs) {
    if (p.shape() != shape) {
      throw ShapeError("view predictions: shape mismatch " + ad::to_string(shape) + " vs " +
                       ad::to_string(p.shape()));
    }
    const std::size_t k = shape[1];
    for (std::size_t b = 0; b < shape[0]; ++b) check_simplex(p.data().subspan(b * k, k), 1e-9, "view predictions");
  }
}

ViewPredictions predictions_from_logits(std::span<const ad::Tensor> logits) {
  ViewPredictions out;
  for (const auto& z : logits) out.probs.push_back(ad::softmax(z));
  return out;
}

std::vector<ConsistencyTerm> mcl_terms(std::size_t views) {
  std::vector<ConsistencyTerm> terms;
  for (std::size_t t = 1; t < views; ++t) terms.push_back({0, t});
  for (std::size_t t = 2; t < views; ++t)
    for (std::size_t r = 1; r < t; ++r) terms.push_back({r, t});
  return terms;
}

ad::Tensor batch_entropy(const ad::Tensor& probs) {
  const auto logp = ad::log(ad::clamp_min(probs, kProbFloor));
  return ad::scale(ad::mean(ad::sum_last(ad::mul(probs, logp))), -1.0);
}

ad::Tensor batch_consistency(const ad::Tensor& student, const ad::Tensor& target, CeOrientation orientation) {
  if (student.shape() != target.shape()) {
    throw ShapeError("consistency: shape mismatch " + ad::to_string(student.shape()) + " vs " +
                     ad::to_string(target.shape()));
  }
  const auto fixed = ad::stop_gradient(target);
  const auto cross = orientation == CeOrientation::target_weighted
                         ? ad::mul(fixed, ad::log(ad::clamp_min(student, kProbFloor)))
                         : ad::mul(student, ad::log(ad::clamp_min(fixed, kProbFloor)));
  return ad::scale(ad::mean(ad::sum_last(cross)), -1.0);
}

ad::Tensor mcl_loss(const ViewPredictions& views, CeOrientation orientation) {
  if (views.views() < 2) {
    throw ParameterError("mcl_loss needs at least 2 views, got " + std::to_string(views.views()));
  }
  views.validate();
  ad::Tensor total;
  bool first = true;
  for (const auto& term : mcl_terms(views.views())) {
    auto ce = batch_consistency(views.probs[term.student], views.probs[term.target], orientation);
    total = first ? ce : ad::add(total, ce);
    first = false;
  }
  return total;
}

ad::Tensor eml_loss(const ViewPredictions& views) {
  views.validate();
  ad::Tensor total = batch_entropy(views.probs.front());
  for (std::size_t t = 1; t < views.views(); ++t) total = ad::add(total, batch_entropy(views.probs[t]));
  return ad::scale(total, 1.0 / static_cast<double>(views.views()));
}

LossBreakdown total_loss(const ViewPredictions& views, const LossOptions& options) {
  const bool has_pairs = views.views() >= 2;
  if (!has_pairs && options.mode != LossMode::eml) {
    throw ParameterError("loss mode " + to_string(options.mode) + " needs at least 2 views");
  }
  const ad::Tensor eml = eml_loss(views);
  LossBreakdown out;
  out.eml = eml.item();
  if (has_pairs) {
    const ad::Tensor mcl = mcl_loss(views, options.orientation);
    out.mcl = mcl.item();
    switch (options.mode) {
      case LossMode::mcl_eml: out.total = ad::add(mcl, eml); break;
      case LossMode::mcl: out.total = mcl; break;
      case LossMode::eml: out.total = eml; break;
    }
  } else {
    out.mcl = std::nan("");
    out.total = eml;
  }
  return out;
}

}  // namespace m2a::objectives
