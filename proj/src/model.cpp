#include "m2a/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "m2a/errors.hpp"

namespace m2a {

ad::Tensor LabeledImages::gather(std::span<const std::size_t> indices) const {
  std::vector<double> out;
  out.reserve(indices.size() * image_size());
  for (std::size_t i : indices) {
    const auto img = image(i);
    out.insert(out.end(), img.begin(), img.end());
  }
  return ad::Tensor({indices.size(), channels, height, width}, std::move(out));
}

std::vector<int> LabeledImages::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<int> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels[i]);
  return out;
}

}  // namespace m2a

namespace m2a::model {

namespace {

constexpr std::size_t kPerBlock = 4;  // weight, bias, scale, shift

ad::Tensor gaussian(ad::Shape shape, double stddev, Rng& rng) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return ad::Tensor(std::move(shape), std::move(v));
}

}  // namespace

Classifier::Classifier(const Architecture& arch, Rng& rng, InitOptions init) : arch_(arch) {
  if (arch.blocks == 0 || arch.hidden == 0 || arch.classes < 2 || arch.input_dim() == 0) {
    throw ParameterError("classifier: degenerate architecture");
  }
  std::size_t fan_in = arch.input_dim();
  for (std::size_t b = 0; b < arch.blocks; ++b) {
    const std::string prefix = "block" + std::to_string(b);
    params_.push_back({prefix + ".linear.weight", Role::frozen,
                       gaussian({fan_in, arch.hidden}, std::sqrt(2.0 / static_cast<double>(fan_in)), rng)});
    params_.push_back({prefix + ".linear.bias", Role::frozen, ad::Tensor::zeros({arch.hidden})});
    params_.push_back({prefix + ".norm.scale", Role::adaptable, ad::Tensor::full({arch.hidden}, 1.0)});
    params_.push_back({prefix + ".norm.shift", Role::adaptable, ad::Tensor::zeros({arch.hidden})});
    fan_in = arch.hidden;
  }
  params_.push_back({"head.weight", Role::frozen,
                     init.zero_head ? ad::Tensor::zeros({arch.hidden, arch.classes})
                                    : gaussian({arch.hidden, arch.classes},
                                               std::sqrt(1.0 / static_cast<double>(arch.hidden)), rng)});
  params_.push_back({"head.bias", Role::frozen, ad::Tensor::zeros({arch.classes})});
}

Classifier::Classifier(const Classifier& other) : arch_(other.arch_) {
  params_.reserve(other.params_.size());
  for (const auto& p : other.params_) {
    auto copy = p.value.clone();
    copy.set_requires_grad(p.value.requires_grad());
    params_.push_back({p.name, p.role, std::move(copy)});
  }
}

Classifier& Classifier::operator=(const Classifier& other) {
  if (this != &other) *this = Classifier(other);
  return *this;
}

ad::Tensor Classifier::forward(const ad::Tensor& images) const { return forward(images, nullptr); }

ad::Tensor Classifier::forward(const ad::Tensor& images, std::vector<ad::Tensor>* normalized) const {
  if (images.rank() < 2 || images.numel() / images.dim(0) != arch_.input_dim()) {
    throw ShapeError("classifier: input " + ad::to_string(images.shape()) + " does not flatten to [B," +
                     std::to_string(arch_.input_dim()) + "]");
  }
  ad::Tensor h = images.rank() == 2 ? images : ad::reshape(images, {images.dim(0), arch_.input_dim()});
  for (std::size_t b = 0; b < arch_.blocks; ++b) {
    const Parameter* p = params_.data() + b * kPerBlock;
    auto pre = ad::add(ad::matmul(h, p[0].value), p[1].value);
    auto norm = ad::layer_norm(pre, arch_.norm_eps);
    if (normalized != nullptr) normalized->push_back(norm);
    h = ad::relu(ad::add(ad::mul(norm, p[2].value), p[3].value));
  }
  const Parameter* head = params_.data() + arch_.blocks * kPerBlock;
  return ad::add(ad::matmul(h, head[0].value), head[1].value);
}

std::vector<ad::Tensor> Classifier::parameters_with(Role role) const {
  std::vector<ad::Tensor> out;
  for (const auto& p : params_)
    if (p.role == role) out.push_back(p.value);
  return out;
}

std::vector<ad::Tensor> Classifier::all_tensors() const {
  std::vector<ad::Tensor> out;
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

std::size_t Classifier::parameter_count() const {
  return std::accumulate(params_.begin(), params_.end(), std::size_t{0},
                         [](std::size_t acc, const Parameter& p) { return acc + p.value.numel(); });
}

std::size_t Classifier::parameter_count(Role role) const {
  std::size_t n = 0;
  for (const auto& p : params_)
    if (p.role == role) n += p.value.numel();
  return n;
}

void Classifier::set_train_scope(TrainScope scope) {
  for (auto& p : params_) {
    const bool on = scope == TrainScope::all || (scope == TrainScope::adaptable && p.role == Role::adaptable);
    p.value.set_requires_grad(on);
  }
}

void Classifier::clear_grads() {
  for (auto& p : params_) p.value.clear_grad();
}

std::vector<int> argmax_rows(const ad::Tensor& scores) {
  if (scores.rank() != 2) throw ShapeError("argmax_rows: expected [B,K], got " + ad::to_string(scores.shape()));
  const std::size_t k = scores.dim(1);
  std::vector<int> out(scores.dim(0));
  const auto v = scores.data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    const auto row = v.subspan(r * k, k);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<int> predict(const Classifier& model, const ad::Tensor& images) {
  return argmax_rows(model.forward(images));
}

double accuracy(const Classifier& model, const LabeledImages& data, std::size_t batch) {
  if (data.count() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.count(); start += batch) {
    idx.clear();
    for (std::size_t i = start; i < std::min(start + batch, data.count()); ++i) idx.push_back(i);
    const auto pred = predict(model, data.gather(idx));
    for (std::size_t j = 0; j < idx.size(); ++j) correct += pred[j] == data.labels[idx[j]];
  }
  return static_cast<double>(correct) / static_cast<double>(data.count());
}

}  // namespace m2a::model
