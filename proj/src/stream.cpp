#include <algorithm>
#include <numeric>

#include "m2a/data.hpp"
#include "m2a/errors.hpp"

namespace m2a::data {

DomainStream::DomainStream(std::vector<CorruptionOp> domains, std::size_t channels, std::size_t height,
                           std::size_t width, std::vector<double> pool_pixels, std::vector<BatchSlot> slots,
                           std::uint64_t seed)
    : domains_(std::move(domains)),
      channels_(channels),
      height_(height),
      width_(width),
      pool_(std::move(pool_pixels)),
      slots_(std::move(slots)),
      seed_(seed) {}

UnlabeledBatch DomainStream::batch(std::size_t index) const {
  const BatchSlot& slot = slots_.at(index);
  const std::size_t image_size = channels_ * height_ * width_;
  std::vector<double> pixels;
  pixels.reserve(slot.pool_indices.size() * image_size);
  for (std::size_t i : slot.pool_indices) {
    pixels.insert(pixels.end(), pool_.begin() + static_cast<std::ptrdiff_t>(i * image_size),
                  pool_.begin() + static_cast<std::ptrdiff_t>((i + 1) * image_size));
  }
  ad::Tensor clean({slot.pool_indices.size(), channels_, height_, width_}, std::move(pixels));
  Rng rng = Rng(seed_).derive(mix_seed(slot.domain, slot.batch_in_domain));
  return {corrupt(clean, domains_[slot.domain], rng), slot.domain, index};
}

std::size_t StreamEvaluator::count_errors(std::size_t batch, std::span<const int> predictions) const {
  const auto& truth = labels_.at(batch);
  if (truth.size() != predictions.size()) {
    throw ShapeError("evaluator: " + std::to_string(predictions.size()) + " predictions for batch of " +
                     std::to_string(truth.size()));
  }
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) wrong += truth[i] != predictions[i];
  return wrong;
}

StreamEvaluator StreamEvaluator::with_sentinel(int sentinel) const {
  auto copy = labels_;
  for (auto& batch : copy) std::fill(batch.begin(), batch.end(), sentinel);
  return StreamEvaluator(std::move(copy));
}

StreamBundle build_stream(const LabeledImages& pool, const StreamSpec& spec, std::uint64_t seed) {
  if (spec.order.empty()) throw ParameterError("build_stream: empty domain order");
  if (spec.batch == 0) throw ParameterError("build_stream: batch size must be positive");
  if (spec.samples_per_domain == 0) throw ParameterError("build_stream: samples per domain must be positive");
  if (pool.count() == 0) throw ParameterError("build_stream: empty image pool");
  if (spec.severity < 0 || spec.severity > kMaxSeverity) {
    throw ParameterError("build_stream: severity " + std::to_string(spec.severity) + " outside 0..5");
  }

  std::vector<CorruptionOp> domains;
  std::vector<BatchSlot> slots;
  std::vector<std::vector<int>> labels;
  const Rng root(seed);
  for (std::size_t d = 0; d < spec.order.size(); ++d) {
    domains.push_back({spec.order[d], spec.severity});
    Rng order_rng = root.derive(mix_seed(0x5EED, d));
    std::vector<std::size_t> picks;
    while (picks.size() < spec.samples_per_domain) {
      std::vector<std::size_t> perm(pool.count());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), order_rng.engine());
      const std::size_t take = std::min(perm.size(), spec.samples_per_domain - picks.size());
      picks.insert(picks.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::size_t in_domain = 0;
    for (std::size_t start = 0; start < picks.size(); start += spec.batch, ++in_domain) {
      const std::size_t end = std::min(start + spec.batch, picks.size());
      BatchSlot slot{d, in_domain, {picks.begin() + static_cast<std::ptrdiff_t>(start),
                                    picks.begin() + static_cast<std::ptrdiff_t>(end)}};
      labels.push_back(pool.gather_labels(slot.pool_indices));
      slots.push_back(std::move(slot));
    }
  }
  return {DomainStream(std::move(domains), pool.channels, pool.height, pool.width, pool.pixels, std::move(slots), seed),
          StreamEvaluator(std::move(labels))};
}

}  // namespace m2a::data
