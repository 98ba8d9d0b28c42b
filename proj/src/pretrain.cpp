#include "m2a/pretrain.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "m2a/errors.hpp"
#include "m2a/masking.hpp"
#include "m2a/objectives.hpp"
#include "m2a/optim.hpp"
#include "m2a/rng.hpp"

namespace m2a::model {

ad::Tensor labeled_cross_entropy(const ad::Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw ShapeError("labeled_cross_entropy: logits " + ad::to_string(logits.shape()) + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t k = logits.dim(1);
  std::vector<double> onehot(logits.numel(), 0.0);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= k) throw ParameterError("label out of range");
    onehot[r * k + static_cast<std::size_t>(labels[r])] = 1.0;
  }
  const auto logp = ad::log(ad::clamp_min(ad::softmax(logits), objectives::kProbFloor));
  const auto picked = ad::sum_last(ad::mul(ad::Tensor(logits.shape(), std::move(onehot)), logp));
  return ad::scale(ad::mean(picked), -1.0);
}

namespace {

void occlude(ad::Tensor& batch, double max_level, Rng& rng) {
  const std::size_t b = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  const std::size_t side = masking::MaskPolicy{}.side_for(h, w);
  auto px = batch.mutable_data();
  for (std::size_t n = 0; n < b; ++n) {
    if (rng.uniform() >= 0.5) continue;
    const double level = rng.uniform(0.0, max_level);
    const auto mask = rng.uniform() < 0.5 ? masking::sample_patch_mask(h, w, level, side, rng)
                                          : masking::sample_pixel_mask(h, w, level, rng);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
          if (mask.at(i, j)) px[((n * c + ch) * h + i) * w + j] = 0.0;
  }
}

}  // namespace

PretrainReport pretrain_source(Classifier& model, const LabeledImages& train, const LabeledImages* heldout,
                               const PretrainOptions& options) {
  if (train.count() == 0 || options.batch == 0) throw ParameterError("pretrain_source: empty training set");
  model.set_train_scope(TrainScope::all);
  auto params = model.all_tensors();
  auto adam = optim::make_adam(params, {.lr = options.lr});
  Rng rng(options.seed);

  PretrainReport report;
  std::vector<std::size_t> order(train.count());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += options.batch) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(options.batch, order.size() - start));
      model.clear_grads();
      ad::Trace trace;
      auto images = train.gather(idx);
      if (options.occlusion > 0.0) occlude(images, options.occlusion, rng);
      const auto loss = labeled_cross_entropy(model.forward(images), train.gather_labels(idx));
      trace.backward(loss);
      optim::adam_step(adam, params);
      loss_sum += loss.item();
      ++batches;
    }
    report.epoch_loss.push_back(loss_sum / static_cast<double>(batches));
  }
  model.set_train_scope(TrainScope::none);
  model.clear_grads();

  report.train_accuracy = accuracy(model, train);
  report.heldout_accuracy = heldout != nullptr && heldout->count() > 0 ? accuracy(model, *heldout) : report.train_accuracy;
  if (report.heldout_accuracy < options.min_accuracy) {
    std::ostringstream msg;
    msg << "source training reached accuracy " << report.heldout_accuracy << " < " << options.min_accuracy
        << "; epoch losses:";
    for (double l : report.epoch_loss) msg << ' ' << l;
    throw TrainingFailure(msg.str(), report);
  }
  return report;
}

}  // namespace m2a::model
