#include <doctest.h>

#include <cmath>
#include <sstream>

#include "../support/gradcheck.hpp"
#include "../support/oracles.hpp"
#include "m2a/archive.hpp"
#include "m2a/errors.hpp"
#include "m2a/model.hpp"
#include "m2a/objectives.hpp"
#include "m2a/optim.hpp"
#include "m2a/pretrain.hpp"

using namespace m2a;
using namespace m2a::model;
using ad::Tensor;

namespace {

const Architecture kTiny{2, 3, 3, 6, 2, 4, 1e-12};

LabeledImages blobs(std::size_t count, Rng& rng) {
  LabeledImages out{1, 2, 2, {}, {}};
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % 2);
    const double centre = label ? 0.8 : 0.2;
    for (int p = 0; p < 4; ++p) out.pixels.push_back(centre + rng.uniform(-0.05, 0.05));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace

TEST_CASE("parameter registry and adaptable share") {
  Rng rng(1);
  const Classifier net(Architecture{}, rng);
  const auto adaptable = net.parameter_count(Role::adaptable);
  CHECK(adaptable == 3 * 2 * 128);
  CHECK(static_cast<double>(adaptable) / static_cast<double>(net.parameter_count()) < 0.01);
  for (const auto& p : net.parameters()) {
    const bool is_norm = p.name.find(".norm.") != std::string::npos;
    CHECK((p.role == Role::adaptable) == is_norm);
  }
  CHECK_THROWS_AS(Classifier(Architecture{3, 32, 32, 0, 3, 10, 1e-12}, rng), ParameterError);
}

TEST_CASE("forward: zero head, determinism and normalized rows") {
  Rng rng(2);
  const Classifier zero(kTiny, rng, {.zero_head = true});
  const auto logits = zero.forward(Tensor::zeros({2, 2, 3, 3}));
  for (double v : logits.data()) CHECK(v == 0.0);

  Rng a(3), b(3), data(4);
  const Classifier n1(kTiny, a), n2(kTiny, b);
  const auto x = testing::random_tensor({5, 2, 3, 3}, data, 0.0, 1.0);
  const auto y1 = n1.forward(x), y2 = n2.forward(x);
  CHECK(std::equal(y1.data().begin(), y1.data().end(), y2.data().begin()));
  CHECK(y1.shape() == ad::Shape{5, 4});

  std::vector<Tensor> normalized;
  n1.forward(x, &normalized);
  REQUIRE(normalized.size() == kTiny.blocks);
  for (const auto& z : normalized) {
    for (std::size_t r = 0; r < 5; ++r) {
      double mean = 0.0, var = 0.0;
      for (std::size_t c = 0; c < 6; ++c) mean += z[r * 6 + c] / 6.0;
      for (std::size_t c = 0; c < 6; ++c) var += (z[r * 6 + c] - mean) * (z[r * 6 + c] - mean) / 6.0;
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(var - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("adaptable-parameter gradients of the full objective match finite differences") {
  Rng rng(5), data(6);
  Classifier net(kTiny, rng);
  // Perturb the norm parameters away from their identity initialization.
  for (auto& p : net.parameters())
    if (p.role == Role::adaptable)
      for (double& v : p.value.mutable_data()) v += rng.uniform(-0.3, 0.3);
  std::vector<Tensor> views;
  for (int t = 0; t < 3; ++t) views.push_back(testing::random_tensor({4, 2, 3, 3}, data, 0.0, 1.0));
  // Targets frozen at the current parameters, as stop-gradient prescribes.
  std::vector<Tensor> frozen;
  for (const auto& v : views) frozen.push_back(ad::softmax(net.forward(v)));
  auto objective = [&]() {
    Tensor total = Tensor::scalar(0.0);
    std::vector<Tensor> probs;
    for (const auto& v : views) probs.push_back(ad::softmax(net.forward(v)));
    for (const auto& term : objectives::mcl_terms(3))
      total = ad::add(total, objectives::batch_consistency(probs[term.student], frozen[term.target],
                                                           objectives::CeOrientation::target_weighted));
    return ad::add(total, objectives::eml_loss(objectives::ViewPredictions{probs}));
  };

  net.set_train_scope(TrainScope::adaptable);
  {
    ad::Trace trace;
    trace.backward(objective());
  }
  // The objective is O(5) and some units are nearly inactive, so round-off
  // at h = 1e-6 (~eps * |f| / h = 1e-9) swamps their ~1e-7 gradients; 1e-5 is
  // the usual cube-root-of-eps step for central differences.
  const double h = 1e-5;
  double worst = 0.0;
  std::size_t checked = 0;
  for (auto& p : net.parameters()) {
    if (p.role != Role::adaptable) {
      CHECK_FALSE(p.value.has_grad());
      continue;
    }
    const std::vector<double> analytic(p.value.grad().begin(), p.value.grad().end());
    auto values = p.value.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = objective().item();
      values[i] = saved - h;
      const double down = objective().item();
      values[i] = saved;
      worst = std::max(worst, testing::rel_error(analytic[i], (up - down) / (2.0 * h)));
      ++checked;
    }
  }
  CHECK(checked == 2 * 2 * 6);
  CHECK(worst < 1e-4);
}

TEST_CASE("adam matches the hand-expanded first step") {
  Tensor theta({1}, {0.5});
  theta.set_requires_grad(true);
  std::vector<Tensor> params{theta};
  auto state = optim::make_adam(params, {.lr = 1e-3});
  {
    ad::Trace trace;
    trace.backward(ad::sum(ad::scale(theta, 2.5)));
  }
  optim::adam_step(state, params);
  CHECK(std::abs(theta[0] - oracle::adam_first_step(0.5, 2.5, 1e-3, 0.9, 0.999, 1e-8)) < 1e-15);
  CHECK(state.step == 1);

  Tensor still({3}, {1, 2, 3});
  still.set_requires_grad(true);
  std::vector<Tensor> ps{still};
  auto s2 = optim::make_adam(ps, {});
  {
    ad::Trace trace;
    trace.backward(ad::sum(ad::scale(still, 0.0)));
  }
  optim::adam_step(s2, ps);
  CHECK(still[0] == 1.0);
  CHECK(still[2] == 3.0);

  Tensor decayed({1}, {2.0});
  decayed.set_requires_grad(true);
  std::vector<Tensor> pd{decayed};
  auto s3 = optim::make_adam(pd, {.lr = 0.1, .weight_decay = 0.5});
  {
    ad::Trace trace;
    trace.backward(ad::sum(ad::scale(decayed, 0.0)));
  }
  optim::adam_step(s3, pd);
  // The L2 term alone (0.5 * 2.0) drives the step.
  CHECK(std::abs(decayed[0] - oracle::adam_first_step(2.0, 1.0, 0.1, 0.9, 0.999, 1e-8)) < 1e-15);

  Tensor no_grad({1}, {1.0});
  std::vector<Tensor> pn{no_grad};
  auto s4 = optim::make_adam(pn, {});
  CHECK_THROWS_AS(optim::adam_step(s4, pn), ContractError);
}

TEST_CASE("pretraining separable blobs") {
  Rng data(7);
  const auto train = blobs(40, data);
  auto run = [&]() {
    Rng init(8);
    Classifier net(Architecture{1, 2, 2, 8, 1, 2, 1e-12}, init);
    const auto report = pretrain_source(net, train, nullptr, {.epochs = 30, .batch = 8, .lr = 1e-2, .min_accuracy = 1.0, .seed = 3});
    CHECK(report.train_accuracy == 1.0);
    CHECK(report.epoch_loss.size() == 30);
    return snapshot(net);
  };
  CHECK(run() == run());

  Rng init(9);
  Classifier net(Architecture{1, 2, 2, 8, 1, 2, 1e-12}, init);
  try {
    pretrain_source(net, train, nullptr, {.epochs = 1, .batch = 8, .lr = 0.0, .min_accuracy = 1.01, .seed = 3});
    FAIL("expected a training failure");
  } catch (const TrainingFailure& e) {
    CHECK(e.report().epoch_loss.size() == 1);
  }
  const int bad[] = {0, 7};
  CHECK_THROWS_AS(labeled_cross_entropy(Tensor::zeros({2, 2}), bad), ParameterError);
}

TEST_CASE("archive roundtrip, restore and hashing") {
  Rng rng(10), data(11);
  Classifier net(kTiny, rng);
  const auto x = testing::random_tensor({3, 2, 3, 3}, data, 0.0, 1.0);
  const auto before = net.forward(x);
  const auto archive = snapshot(net);

  std::stringstream buffer;
  write_archive(buffer, archive);
  const auto loaded = read_archive(buffer);
  CHECK(loaded == archive);
  const auto rebuilt = from_archive(loaded);
  const auto after = rebuilt.forward(x);
  CHECK(std::equal(before.data().begin(), before.data().end(), after.data().begin()));
  CHECK(parameter_hash(rebuilt) == parameter_hash(net));

  const auto hash = parameter_hash(net, true);
  net.parameters()[2].value.mutable_data()[0] += 1.0;
  CHECK(parameter_hash(net, true) != hash);
  restore(net, archive);
  CHECK(parameter_hash(net, true) == hash);

  auto wrong = archive;
  wrong.version = 99;
  CHECK_THROWS_AS(restore(net, wrong), ContractError);
  wrong = archive;
  wrong.blocks.pop_back();
  CHECK_THROWS_AS(restore(net, wrong), ContractError);
  std::stringstream garbage("not an archive");
  CHECK_THROWS(read_archive(garbage));
}
