#include "m2a/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "m2a/errors.hpp"

namespace m2a::harness {

using nlohmann::json;

namespace {

struct MethodName {
  Method method;
  const char* name;
};

constexpr MethodName kMethods[] = {
    {Method::source_frozen, "source-frozen"},   {Method::spatial_patch, "m2a-spatial-patch"},
    {Method::spatial_pixel, "m2a-spatial-pixel"}, {Method::freq_all, "m2a-freq-all"},
    {Method::freq_low, "m2a-freq-low"},           {Method::freq_high, "m2a-freq-high"},
};

void reject_unknown(const json& j, const std::set<std::string>& known, const char* where) {
  if (!j.is_object()) throw ParameterError(std::string(where) + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ParameterError(std::string(where) + ": unknown field '" + key + "'");
  }
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParameterError(std::string("config field '") + key + "': " + e.what());
  }
}

}  // namespace

std::string to_string(Method m) {
  for (const auto& entry : kMethods)
    if (entry.method == m) return entry.name;
  return "?";
}

Method parse_method(const std::string& s) {
  for (const auto& entry : kMethods)
    if (s == entry.name) return entry.method;
  throw ParameterError("unknown method '" + s + "'");
}

masking::MaskPolicy policy_for(Method m, std::size_t patch_side, bool symmetric_closure) {
  using masking::Family;
  using masking::Subtype;
  switch (m) {
    case Method::spatial_patch: return {Family::spatial, Subtype::patch, patch_side, false};
    case Method::spatial_pixel: return {Family::spatial, Subtype::pixel, patch_side, false};
    case Method::freq_all: return {Family::frequency, Subtype::all, 0, symmetric_closure};
    case Method::freq_low: return {Family::frequency, Subtype::low, 0, symmetric_closure};
    case Method::freq_high: return {Family::frequency, Subtype::high, 0, symmetric_closure};
    case Method::source_frozen: break;
  }
  throw ParameterError("method '" + to_string(m) + "' has no masking policy");
}

std::string to_string(ScoreView v) { return v == ScoreView::anchor ? "anchor" : "mean-of-views"; }

ScoreView parse_score_view(const std::string& s) {
  if (s == "anchor") return ScoreView::anchor;
  if (s == "mean-of-views") return ScoreView::mean_of_views;
  throw ParameterError("unknown score view '" + s + "'");
}

void ExperimentConfig::validate() const {
  const auto schedule = masking::make_schedule(views, alpha);
  if (batch == 0) throw ParameterError("batch must be positive");
  if (steps_per_batch == 0) throw ParameterError("steps_per_batch must be positive");
  if (!(lr >= 0.0)) throw ParameterError("lr must be non-negative");
  if (order.empty()) throw ParameterError("stream order is empty");
  if (severity < 0 || severity > data::kMaxSeverity) throw ParameterError("severity outside 0..5");
  if (samples_per_domain == 0) throw ParameterError("samples_per_domain must be positive");
  const auto& a = source.architecture;
  if (method == Method::source_frozen) return;
  const auto policy = policy_for(method, patch_side, symmetric_closure);
  if (policy.family == masking::Family::spatial) {
    const std::size_t side = policy.side_for(a.height, a.width);
    if (side < 1 || side > std::min(a.height, a.width)) throw ParameterError("patch side out of range");
  } else {
    const auto region = masking::frequency_region(a.height, a.width, policy.subtype);
    const std::size_t k = masking::frequency_budget(a.height, a.width, schedule.levels.back());
    if (k > region.size()) throw BudgetError(k, region.size());
  }
}

json to_json(const SourceConfig& cfg) {
  const auto& a = cfg.architecture;
  return {{"seed", cfg.seed},
          {"train_size", cfg.train_size},
          {"pool_size", cfg.pool_size},
          {"epochs", cfg.epochs},
          {"batch", cfg.batch},
          {"lr", cfg.lr},
          {"min_accuracy", cfg.min_accuracy},
          {"occlusion", cfg.occlusion},
          {"architecture",
           {{"channels", a.channels},
            {"height", a.height},
            {"width", a.width},
            {"hidden", a.hidden},
            {"blocks", a.blocks},
            {"classes", a.classes},
            {"norm_eps", a.norm_eps}}}};
}

SourceConfig source_from_json(const json& j) {
  reject_unknown(j, {"seed", "train_size", "pool_size", "epochs", "batch", "lr", "min_accuracy", "occlusion",
                     "architecture"},
                 "source");
  SourceConfig cfg;
  read_field(j, "seed", cfg.seed);
  read_field(j, "train_size", cfg.train_size);
  read_field(j, "pool_size", cfg.pool_size);
  read_field(j, "epochs", cfg.epochs);
  read_field(j, "batch", cfg.batch);
  read_field(j, "lr", cfg.lr);
  read_field(j, "min_accuracy", cfg.min_accuracy);
  read_field(j, "occlusion", cfg.occlusion);
  if (j.contains("architecture")) {
    const auto& aj = j.at("architecture");
    reject_unknown(aj, {"channels", "height", "width", "hidden", "blocks", "classes", "norm_eps"}, "architecture");
    auto& a = cfg.architecture;
    read_field(aj, "channels", a.channels);
    read_field(aj, "height", a.height);
    read_field(aj, "width", a.width);
    read_field(aj, "hidden", a.hidden);
    read_field(aj, "blocks", a.blocks);
    read_field(aj, "classes", a.classes);
    read_field(aj, "norm_eps", a.norm_eps);
  }
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json order = json::array();
  for (auto k : cfg.order) order.push_back(data::to_string(k));
  return {{"method", to_string(cfg.method)},
          {"loss_mode", objectives::to_string(cfg.loss_mode)},
          {"orientation", objectives::to_string(cfg.orientation)},
          {"views", cfg.views},
          {"alpha", cfg.alpha},
          {"lr", cfg.lr},
          {"weight_decay", cfg.weight_decay},
          {"steps_per_batch", cfg.steps_per_batch},
          {"batch", cfg.batch},
          {"seed", cfg.seed},
          {"patch_side", cfg.patch_side},
          {"symmetric_closure", cfg.symmetric_closure},
          {"score_view", to_string(cfg.score_view)},
          {"order", order},
          {"severity", cfg.severity},
          {"samples_per_domain", cfg.samples_per_domain},
          {"output_dir", cfg.output_dir},
          {"source", to_json(cfg.source)}};
}

ExperimentConfig config_from_json(const json& j) {
  reject_unknown(j,
                 {"method", "loss_mode", "orientation", "views", "alpha", "lr", "weight_decay", "steps_per_batch",
                  "batch", "seed", "patch_side", "symmetric_closure", "score_view", "order", "severity",
                  "samples_per_domain", "output_dir", "source"},
                 "config");
  ExperimentConfig cfg;
  std::string text;
  if (j.contains("method")) cfg.method = parse_method(j.at("method").get<std::string>());
  if (j.contains("loss_mode")) cfg.loss_mode = objectives::parse_loss_mode(j.at("loss_mode").get<std::string>());
  if (j.contains("orientation")) cfg.orientation = objectives::parse_orientation(j.at("orientation").get<std::string>());
  if (j.contains("score_view")) cfg.score_view = parse_score_view(j.at("score_view").get<std::string>());
  read_field(j, "views", cfg.views);
  read_field(j, "alpha", cfg.alpha);
  read_field(j, "lr", cfg.lr);
  read_field(j, "weight_decay", cfg.weight_decay);
  read_field(j, "steps_per_batch", cfg.steps_per_batch);
  read_field(j, "batch", cfg.batch);
  read_field(j, "seed", cfg.seed);
  read_field(j, "patch_side", cfg.patch_side);
  read_field(j, "symmetric_closure", cfg.symmetric_closure);
  read_field(j, "severity", cfg.severity);
  read_field(j, "samples_per_domain", cfg.samples_per_domain);
  read_field(j, "output_dir", cfg.output_dir);
  if (j.contains("order")) {
    cfg.order.clear();
    for (const auto& k : j.at("order")) cfg.order.push_back(data::parse_corruption(k.get<std::string>()));
  }
  if (j.contains("source")) cfg.source = source_from_json(j.at("source"));
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ParameterError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (!cfg.output_dir.empty()) return cfg.output_dir;
  if (const char* root = std::getenv("M2A_OUTPUT_ROOT"); root != nullptr && *root != '\0') return root;
  return "m2a_out";
}

}  // namespace m2a::harness
