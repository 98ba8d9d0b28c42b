#include "m2a/episode.hpp"

#include <chrono>
#include <fstream>

#include "m2a/errors.hpp"
#include "m2a/objectives.hpp"

namespace m2a::harness {

namespace {

constexpr std::uint64_t kMaskSalt = 0x4D41534B;
constexpr std::uint64_t kInitSalt = 0x494E4954;
constexpr std::uint64_t kOrderSalt = 0x4F524452;

nlohmann::json pretrain_json(const model::PretrainReport& r) {
  return {{"epoch_loss", r.epoch_loss}, {"train_accuracy", r.train_accuracy}, {"heldout_accuracy", r.heldout_accuracy}};
}

std::optional<SourceBundle> load_cached(const SourceConfig& cfg, const std::filesystem::path& dir) {
  const auto meta_path = dir / "source.json";
  const auto model_path = dir / "model.m2ap";
  if (!std::filesystem::exists(meta_path) || !std::filesystem::exists(model_path)) return std::nullopt;
  std::ifstream is(meta_path);
  const auto meta = nlohmann::json::parse(is, nullptr, false);
  if (meta.is_discarded() || !meta.contains("config") || !meta.contains("pretrain")) return std::nullopt;
  if (meta.value("generator", 0) != data::kGeneratorVersion) return std::nullopt;
  if (source_from_json(meta.at("config")) != cfg) return std::nullopt;
  SourceBundle bundle;
  bundle.config = cfg;
  bundle.source = model::load_archive(model_path);
  if (bundle.source.architecture != cfg.architecture) return std::nullopt;
  const auto& p = meta.at("pretrain");
  bundle.pretrain.epoch_loss = p.at("epoch_loss").get<std::vector<double>>();
  bundle.pretrain.train_accuracy = p.at("train_accuracy").get<double>();
  bundle.pretrain.heldout_accuracy = p.at("heldout_accuracy").get<double>();
  return bundle;
}

std::vector<int> score(const std::vector<ad::Tensor>& probs, ScoreView view) {
  if (view == ScoreView::anchor) return model::argmax_rows(probs.front());
  std::vector<double> acc(probs.front().numel(), 0.0);
  for (const auto& p : probs) {
    const auto v = p.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += v[i];
  }
  return model::argmax_rows(ad::Tensor(probs.front().shape(), std::move(acc)));
}

}  // namespace

SourceBundle prepare_source(const SourceConfig& cfg, const std::optional<std::filesystem::path>& cache_dir) {
  const auto& a = cfg.architecture;
  const data::TaskShape shape{a.classes, a.channels, a.height, a.width};

  std::optional<SourceBundle> cached;
  if (cache_dir) cached = load_cached(cfg, *cache_dir);
  if (cached) {
    cached->dataset = data::generate_source(cfg.seed, cfg.train_size, cfg.pool_size, shape);
    return std::move(*cached);
  }

  SourceBundle bundle;
  bundle.config = cfg;
  bundle.dataset = data::generate_source(cfg.seed, cfg.train_size, cfg.pool_size, shape);
  Rng init = Rng(cfg.seed).derive(kInitSalt);
  model::Classifier net(a, init);
  const model::PretrainOptions options{cfg.epochs, cfg.batch, cfg.lr, cfg.min_accuracy, mix_seed(cfg.seed, kOrderSalt),
                                      cfg.occlusion};
  bundle.pretrain = model::pretrain_source(net, bundle.dataset.train, &bundle.dataset.stream, options);
  bundle.source = model::snapshot(net);

  if (cache_dir) {
    std::filesystem::create_directories(*cache_dir);
    model::save_archive(*cache_dir / "model.m2ap", bundle.source);
    std::ofstream os(*cache_dir / "source.json");
    if (!os) throw IoError("cannot write " + (*cache_dir / "source.json").string());
    os << nlohmann::json{{"generator", data::kGeneratorVersion}, {"config", to_json(cfg)}, {"pretrain", pretrain_json(bundle.pretrain)}}.dump(2) << '\n';
  }
  return bundle;
}

OnlineAdapter::OnlineAdapter(model::Classifier model, const ExperimentConfig& cfg)
    : model_(std::move(model)), cfg_(cfg), adapts_(cfg.method != Method::source_frozen) {
  model_.set_train_scope(model::TrainScope::none);
  if (!adapts_) return;
  schedule_ = masking::make_schedule(cfg.views, cfg.alpha);
  policy_ = policy_for(cfg.method, cfg.patch_side, cfg.symmetric_closure);
  model_.set_train_scope(model::TrainScope::adaptable);
  params_ = model_.parameters_with(model::Role::adaptable);
  adam_ = optim::make_adam(params_, {.lr = cfg.lr, .weight_decay = cfg.weight_decay});
}

OnlineAdapter::Step OnlineAdapter::process(const data::UnlabeledBatch& batch) {
  Step out;
  if (!adapts_) {
    out.predictions = model::predict(model_, batch.images);
    return out;
  }
  Rng rng = Rng(cfg_.seed).derive(mix_seed(kMaskSalt, batch.index));
  const objectives::LossOptions loss_options{cfg_.loss_mode, cfg_.orientation};
  for (std::size_t step = 0; step < cfg_.steps_per_batch; ++step) {
    model_.clear_grads();
    ad::Trace trace;
    const auto views = masking::make_views(batch.images, schedule_, policy_, rng);
    std::vector<ad::Tensor> logits;
    logits.reserve(views.views.size());
    for (const auto& v : views.views) logits.push_back(model_.forward(v));
    const auto preds = objectives::predictions_from_logits(logits);
    const auto loss = objectives::total_loss(preds, loss_options);
    if (step == 0) {
      out.predictions = score(preds.probs, cfg_.score_view);
      out.mcl = loss.mcl;
      out.eml = loss.eml;
    }
    out.max_imag_residue = std::max(out.max_imag_residue, views.max_imag_residue);
    trace.backward(loss.total);
    optim::adam_step(adam_, params_);
  }
  model_.clear_grads();
  return out;
}

EpisodeReport run_episode(const ExperimentConfig& cfg, const SourceBundle& source, const EpisodeOptions& options) {
  cfg.validate();
  if (cfg.source.architecture != source.source.architecture) {
    throw ContractError("run_episode: config architecture differs from the source snapshot");
  }
  const auto started = std::chrono::steady_clock::now();

  auto bundle = data::build_stream(source.dataset.stream, cfg.stream_spec(), cfg.seed);
  const data::StreamEvaluator evaluator =
      options.sentinel_label ? bundle.evaluator.with_sentinel(*options.sentinel_label) : bundle.evaluator;
  const auto& stream = bundle.stream;

  OnlineAdapter adapter(model::from_archive(source.source), cfg);
  const model::Classifier frozen = model::from_archive(source.source);

  EpisodeReport report;
  report.config = cfg;
  const auto domains = stream.domains();
  report.domains.resize(domains.size());
  std::vector<std::size_t> errors(domains.size(), 0), source_errors(domains.size(), 0), batches(domains.size(), 0);
  for (std::size_t d = 0; d < domains.size(); ++d) {
    report.domains[d].kind = domains[d].kind;
    report.domains[d].name = data::short_name(domains[d].kind);
  }

  for (std::size_t i = 0; i < stream.batch_count(); ++i) {
    const auto batch = stream.batch(i);
    const auto step = adapter.process(batch);
    BatchLog log;
    log.domain = batch.domain;
    log.samples = stream.batch_size(i);
    log.errors = evaluator.count_errors(i, step.predictions);
    log.source_errors = evaluator.count_errors(i, model::predict(frozen, batch.images));
    log.mcl = step.mcl;
    log.eml = step.eml;
    log.param_hash = model::parameter_hash(adapter.model(), true);
    log.max_imag_residue = step.max_imag_residue;

    auto& dom = report.domains[batch.domain];
    dom.samples += log.samples;
    errors[batch.domain] += log.errors;
    source_errors[batch.domain] += log.source_errors;
    // Running means over the domain's batches.
    const double k = static_cast<double>(++batches[batch.domain]);
    dom.mean_mcl += (log.mcl - dom.mean_mcl) / k;
    dom.mean_eml += (log.eml - dom.mean_eml) / k;
    report.batches.push_back(log);
  }

  for (std::size_t d = 0; d < domains.size(); ++d) {
    auto& dom = report.domains[d];
    dom.error_pct = 100.0 * static_cast<double>(errors[d]) / static_cast<double>(dom.samples);
    dom.source_error_pct = 100.0 * static_cast<double>(source_errors[d]) / static_cast<double>(dom.samples);
    report.mean_error += dom.error_pct;
    report.source_mean_error += dom.source_error_pct;
  }
  report.mean_error /= static_cast<double>(domains.size());
  report.source_mean_error /= static_cast<double>(domains.size());
  report.gain = report.source_mean_error - report.mean_error;
  report.final_param_hash = model::parameter_hash(adapter.model(), true);
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

namespace {

std::vector<nlohmann::json> expand_json(const ExperimentConfig& base, const std::vector<SweepAxis>& axes) {
  std::vector<nlohmann::json> grid{to_json(base)};
  for (const auto& axis : axes) {
    if (axis.values.empty()) throw ParameterError("sweep axis '" + axis.field + "' has no values");
    if (!grid.front().contains(axis.field)) throw ParameterError("sweep axis '" + axis.field + "' is not a config field");
    std::vector<nlohmann::json> next;
    for (const auto& point : grid) {
      for (const auto& v : axis.values) {
        auto arm = point;
        arm[axis.field] = v;
        next.push_back(std::move(arm));
      }
    }
    grid = std::move(next);
  }
  return grid;
}

}  // namespace

std::vector<ExperimentConfig> expand_grid(const ExperimentConfig& base, const std::vector<SweepAxis>& axes) {
  std::vector<ExperimentConfig> out;
  for (const auto& j : expand_json(base, axes)) out.push_back(config_from_json(j));
  return out;
}

std::vector<SweepArm> run_sweep(const ExperimentConfig& base, const std::vector<SweepAxis>& axes,
                                const SourceBundle& source) {
  std::vector<SweepArm> arms;
  for (const auto& point : expand_json(base, axes)) {
    SweepArm arm{base, std::nullopt, {}};
    try {
      arm.config = config_from_json(point);
      arm.report = run_episode(arm.config, source);
    } catch (const std::exception& e) {
      arm.error = e.what();
    }
    arms.push_back(std::move(arm));
  }
  return arms;
}

}  // namespace m2a::harness
