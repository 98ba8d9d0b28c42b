#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "m2a/config.hpp"
#include "m2a/episode.hpp"
#include "m2a/errors.hpp"
#include "m2a/report.hpp"

using namespace m2a;
using namespace m2a::harness;

namespace {

std::filesystem::path scratch_dir(const std::string& leaf) {
  const char* root = std::getenv("M2A_TEST_TMP");
  auto dir = std::filesystem::path(root ? root : "m2a_test_tmp") / leaf;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

SourceConfig small_source() {
  SourceConfig s;
  s.seed = 11;
  s.train_size = 400;
  s.pool_size = 120;
  s.epochs = 2;
  s.min_accuracy = 0.0;
  s.architecture = model::Architecture{3, 16, 16, 32, 2, 10, 1e-12};
  return s;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.source = small_source();
  cfg.order = {data::CorruptionKind::gaussian_noise, data::CorruptionKind::contrast, data::CorruptionKind::pixelate};
  cfg.samples_per_domain = 60;
  cfg.batch = 20;
  cfg.seed = 3;
  return cfg;
}

const SourceBundle& shared_source() {
  static const SourceBundle bundle = prepare_source(small_source());
  return bundle;
}

}  // namespace

TEST_CASE("config json roundtrip and strict parsing") {
  auto cfg = small_config();
  cfg.method = Method::freq_high;
  cfg.loss_mode = objectives::LossMode::eml;
  cfg.score_view = ScoreView::mean_of_views;
  cfg.alpha = 0.05;
  const auto j = to_json(cfg);
  CHECK(config_from_json(j) == cfg);
  CHECK(config_from_json(nlohmann::json::parse(j.dump())) == cfg);
  CHECK(config_from_json(nlohmann::json::object()) == ExperimentConfig{});

  auto unknown = j;
  unknown["learning_rate"] = 0.1;
  CHECK_THROWS_AS(config_from_json(unknown), ParameterError);
  auto bad_method = j;
  bad_method["method"] = "tent";
  CHECK_THROWS_AS(config_from_json(bad_method), ParameterError);
  CHECK(parse_method(to_string(Method::spatial_pixel)) == Method::spatial_pixel);
  CHECK_THROWS_AS(policy_for(Method::source_frozen, 0, false), ParameterError);

  const auto path = scratch_dir("config") / "c.json";
  std::ofstream(path) << j.dump(2);
  CHECK(load_config(path) == cfg);
  CHECK_THROWS(load_config(path.parent_path() / "missing.json"));
}

TEST_CASE("config validation") {
  auto cfg = small_config();
  CHECK_NOTHROW(cfg.validate());
  cfg.views = 1;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = small_config();
  cfg.lr = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = small_config();
  cfg.order.clear();
  CHECK_THROWS_AS(cfg.validate(), ParameterError);
  cfg = small_config();
  cfg.patch_side = 17;
  CHECK_THROWS_AS(cfg.validate(), ParameterError);

  // 16x16 quadrants hold 64 bins; the third view masks ceil(0.4 * 256) = 103.
  cfg = small_config();
  cfg.method = Method::freq_low;
  cfg.alpha = 0.2;
  CHECK_THROWS_AS(cfg.validate(), BudgetError);
  cfg.method = Method::freq_all;
  CHECK_NOTHROW(cfg.validate());
  cfg.method = Method::freq_high;
  cfg.alpha = 0.125;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("output directory resolution") {
  ExperimentConfig cfg;
  cfg.output_dir = "explicit";
  CHECK(resolve_output_dir(cfg) == std::filesystem::path("explicit"));
  cfg.output_dir.clear();
  const char* saved = std::getenv("M2A_OUTPUT_ROOT");
  const std::string restore = saved ? saved : "";
  setenv("M2A_OUTPUT_ROOT", "from_env", 1);
  CHECK(resolve_output_dir(cfg) == std::filesystem::path("from_env"));
  unsetenv("M2A_OUTPUT_ROOT");
  CHECK(resolve_output_dir(cfg) == std::filesystem::path("m2a_out"));
  if (saved) setenv("M2A_OUTPUT_ROOT", restore.c_str(), 1);
}

TEST_CASE("source-frozen leaves parameters unchanged and lr 0 matches it") {
  const auto& source = shared_source();
  auto cfg = small_config();
  cfg.method = Method::source_frozen;
  const auto frozen = run_episode(cfg, source);
  const auto initial = model::parameter_hash(model::from_archive(source.source), true);
  REQUIRE(frozen.batches.size() == 9);
  for (const auto& b : frozen.batches) {
    CHECK(b.param_hash == initial);
    CHECK(b.errors == b.source_errors);
  }
  CHECK(frozen.final_param_hash == initial);
  CHECK(frozen.gain == 0.0);

  cfg.method = Method::spatial_patch;
  cfg.lr = 0.0;
  const auto still = run_episode(cfg, source);
  CHECK(still.final_param_hash == initial);
  CHECK(still.mean_error == frozen.mean_error);
  for (std::size_t d = 0; d < 3; ++d) CHECK(still.domains[d].error_pct == frozen.domains[d].error_pct);
}

TEST_CASE("a clean stream scores the source model as direct evaluation does") {
  const auto& source = shared_source();
  auto cfg = small_config();
  cfg.severity = 0;
  cfg.order = {data::CorruptionKind::brightness};
  cfg.samples_per_domain = source.dataset.stream.count();
  const auto report = run_episode(cfg, source);
  const auto net = model::from_archive(source.source);
  const auto& pool = source.dataset.stream;
  const ad::Tensor x({pool.count(), pool.channels, pool.height, pool.width}, pool.pixels);
  const auto guesses = model::predict(net, x);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < guesses.size(); ++i) wrong += guesses[i] != pool.labels[i];
  CHECK(report.source_mean_error == 100.0 * static_cast<double>(wrong) / static_cast<double>(pool.count()));
}

TEST_CASE("adaptation is deterministic and blind to labels") {
  const auto& source = shared_source();
  const auto cfg = small_config();
  const auto a = run_episode(cfg, source);
  const auto b = run_episode(cfg, source);
  CHECK(a.same_results(b));
  CHECK(a.final_param_hash != model::parameter_hash(model::from_archive(source.source), true));

  const auto blind = run_episode(cfg, source, {.sentinel_label = -1});
  REQUIRE(blind.batches.size() == a.batches.size());
  for (std::size_t i = 0; i < a.batches.size(); ++i) {
    CHECK(blind.batches[i].param_hash == a.batches[i].param_hash);
    CHECK(blind.batches[i].mcl == a.batches[i].mcl);
    CHECK(blind.batches[i].errors == blind.batches[i].samples);
  }
  CHECK(blind.final_param_hash == a.final_param_hash);

  auto other = cfg;
  other.seed = 4;
  CHECK(run_episode(other, source).final_param_hash != a.final_param_hash);

  auto wrong = cfg;
  wrong.source.architecture.hidden = 16;
  CHECK_THROWS_AS(run_episode(wrong, source), ContractError);
}

TEST_CASE("domain loss means equal the running means of the batch log") {
  const auto report = run_episode(small_config(), shared_source());
  REQUIRE(report.domains.size() == 3);
  for (std::size_t d = 0; d < 3; ++d) {
    double mcl = 0.0, eml = 0.0, n = 0.0;
    for (const auto& b : report.batches) {
      if (b.domain != d) continue;
      mcl += b.mcl;
      eml += b.eml;
      n += 1.0;
    }
    CHECK(n == 3.0);
    CHECK(std::abs(report.domains[d].mean_mcl - mcl / n) < 1e-9);
    CHECK(std::abs(report.domains[d].mean_eml - eml / n) < 1e-9);
    CHECK(report.domains[d].samples == 60);
  }
  CHECK(report.domains[1].name == "C");
}

TEST_CASE("sweep grid: order, singleton equivalence and failed arms") {
  const auto base = small_config();
  const auto grid = expand_grid(base, {{"views", {2, 3}}, {"method", {"m2a-spatial-pixel", "m2a-freq-all"}}});
  REQUIRE(grid.size() == 4);
  CHECK(grid[0].views == 2);
  CHECK(grid[0].method == Method::spatial_pixel);
  CHECK(grid[1].method == Method::freq_all);
  CHECK(grid[2].views == 3);
  for (const auto& g : grid) CHECK(g.seed == base.seed);
  CHECK_THROWS_AS(expand_grid(base, {{"views", {}}}), ParameterError);
  CHECK_THROWS_AS(expand_grid(base, {{"no_such_field", {1}}}), ParameterError);

  const auto& source = shared_source();
  const auto single = run_sweep(base, {{"seed", {base.seed}}}, source);
  REQUIRE(single.size() == 1);
  REQUIRE(single[0].report);
  CHECK(single[0].report->same_results(run_episode(base, source)));

  auto freq = base;
  freq.method = Method::freq_low;
  const auto arms = run_sweep(freq, {{"alpha", {0.1, 0.2}}}, source);
  REQUIRE(arms.size() == 2);
  CHECK(arms[0].report.has_value());
  CHECK_FALSE(arms[1].report.has_value());
  CHECK(arms[1].error.find("budget") != std::string::npos);
  CHECK(arms[1].config.alpha == 0.2);
}

TEST_CASE("export formats roundtrip") {
  const auto& source = shared_source();
  auto freq = small_config();
  freq.method = Method::freq_low;
  const auto arms = run_sweep(freq, {{"alpha", {0.1, 0.2}}}, source);

  std::stringstream jsonl;
  write_jsonl(jsonl, arms);
  const auto back = read_jsonl(jsonl);
  REQUIRE(back.size() == 2);
  CHECK(back[0].config == arms[0].config);
  CHECK(back[0].report->same_results(*arms[0].report));
  CHECK(back[1].error == arms[1].error);
  CHECK_FALSE(back[1].report.has_value());

  std::stringstream csv;
  write_csv(csv, arms);
  const auto table = read_csv(csv);
  REQUIRE(table.rows.size() == 2);
  const auto& row = table.rows[0];
  CHECK(std::stod(row.at("mean_error")) == arms[0].report->mean_error);
  CHECK(std::stod(row.at("err_GN")) == arms[0].report->domains[0].error_pct);
  CHECK(std::stod(row.at("mcl_P")) == arms[0].report->domains[2].mean_mcl);
  CHECK(row.at("final_param_hash") == std::to_string(arms[0].report->final_param_hash));
  CHECK(table.rows[1].at("error") == arms[1].error);

  std::stringstream empty;
  write_csv(empty, {});
  const auto header_only = read_csv(empty);
  CHECK(header_only.rows.empty());
  const std::vector<std::string> names{"GN", "SN", "IN", "DB", "MB", "B", "C", "ET", "P", "JC"};
  CHECK(header_only.header == csv_header(names));

  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12.5, -0.0}) CHECK(std::stod(format_number(v)) == v);
  CHECK(parse_format("json-lines") == ExportFormat::json_lines);
  CHECK_THROWS_AS(parse_format("xml"), ParameterError);
}

TEST_CASE("export files and unwritable targets") {
  const auto dir = scratch_dir("export");
  const auto report = run_episode(small_config(), shared_source());
  const std::vector<SweepArm> arms{{report.config, report, {}}};
  const auto csv = export_arms(dir, "r", arms, ExportFormat::csv);
  const auto jl = export_arms(dir, "r", arms, ExportFormat::json_lines);
  CHECK(csv == dir / "r.csv");
  CHECK(std::filesystem::file_size(jl) > 0);

  std::ofstream(dir / "plain") << "x";
  CHECK_THROWS_AS(export_arms(dir / "plain" / "sub", "r", arms, ExportFormat::csv), IoError);
}

TEST_CASE("source cache reuse") {
  const auto dir = scratch_dir("source_cache");
  const auto first = prepare_source(small_source(), dir);
  CHECK(std::filesystem::exists(dir / "model.m2ap"));
  const auto stamp = std::filesystem::last_write_time(dir / "model.m2ap");
  const auto second = prepare_source(small_source(), dir);
  CHECK(std::filesystem::last_write_time(dir / "model.m2ap") == stamp);
  CHECK(second.source == first.source);
  CHECK(second.pretrain.heldout_accuracy == first.pretrain.heldout_accuracy);
  CHECK(second.dataset.stream.pixels == first.dataset.stream.pixels);

  auto changed = small_source();
  changed.epochs = 1;
  const auto third = prepare_source(changed, dir);
  CHECK_FALSE(third.source == first.source);
}
