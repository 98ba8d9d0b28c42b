// m2a: seeded continual test-time adaptation experiments.
//
//   m2a pretrain [--config FILE] [overrides]
//   m2a run      [--config FILE] [overrides]
//   m2a sweep    [--config FILE] [overrides] --axis FIELD=V1,V2 ...
//   m2a export   --input FILE.jsonl --format csv|json-lines [--out DIR]

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "m2a/config.hpp"
#include "m2a/episode.hpp"
#include "m2a/errors.hpp"
#include "m2a/report.hpp"

namespace {

using namespace m2a;
using namespace m2a::harness;
using nlohmann::json;

// Every ExperimentConfig field as an optional flag; unset flags keep the
// config-file (or default) value.
struct Overrides {
  std::string config_file;
  std::optional<std::string> method, loss_mode, orientation, score_view, order, output_dir;
  std::optional<std::size_t> views, steps, batch, patch_side, samples_per_domain;
  std::optional<double> alpha, lr, weight_decay;
  std::optional<std::uint64_t> seed;
  std::optional<int> severity;
  std::optional<bool> symmetric_closure;
  std::optional<std::uint64_t> source_seed;
  std::optional<std::size_t> train_size, pool_size, epochs;
  std::optional<double> occlusion, min_accuracy;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "JSON experiment config");
    app->add_option("--method", method, "source-frozen | m2a-spatial-patch | m2a-spatial-pixel | m2a-freq-all | "
                                        "m2a-freq-low | m2a-freq-high");
    app->add_option("--loss-mode", loss_mode, "mcl+eml | mcl | eml");
    app->add_option("--orientation", orientation, "target-weighted | student-weighted");
    app->add_option("--views", views, "number of views n");
    app->add_option("--alpha", alpha, "mask step");
    app->add_option("--lr", lr, "Adam learning rate");
    app->add_option("--weight-decay", weight_decay, "L2 weight decay");
    app->add_option("--steps-per-batch", steps, "optimizer steps per batch");
    app->add_option("--batch", batch, "stream batch size");
    app->add_option("--seed", seed, "episode seed (stream order, corruption noise, masks)");
    app->add_option("--patch-side", patch_side, "patch side in pixels; 0 = ceil(min(H,W)/8)");
    app->add_option("--symmetric-closure", symmetric_closure, "add conjugate mirrors to frequency masks");
    app->add_option("--score-view", score_view, "anchor | mean-of-views");
    app->add_option("--order", order, "comma-separated corruption kinds");
    app->add_option("--severity", severity, "corruption severity 0..5");
    app->add_option("--samples-per-domain", samples_per_domain, "stream samples per domain");
    app->add_option("--output-dir", output_dir, "output root (else $M2A_OUTPUT_ROOT, else ./m2a_out)");
    app->add_option("--source-seed", source_seed, "source task and model seed");
    app->add_option("--train-size", train_size, "source training images");
    app->add_option("--pool-size", pool_size, "clean pool the stream is drawn from");
    app->add_option("--epochs", epochs, "source training epochs");
    app->add_option("--occlusion", occlusion, "max level of the source occlusion augmentation");
    app->add_option("--min-accuracy", min_accuracy, "required held-out accuracy of the source model");
  }

  ExperimentConfig resolve() const {
    json j = config_file.empty() ? to_json(ExperimentConfig{}) : to_json(load_config(config_file));
    auto set = [&](const char* key, const auto& v) {
      if (v) j[key] = *v;
    };
    set("method", method);
    set("loss_mode", loss_mode);
    set("orientation", orientation);
    set("score_view", score_view);
    set("output_dir", output_dir);
    set("views", views);
    set("steps_per_batch", steps);
    set("batch", batch);
    set("patch_side", patch_side);
    set("samples_per_domain", samples_per_domain);
    set("alpha", alpha);
    set("lr", lr);
    set("weight_decay", weight_decay);
    set("seed", seed);
    set("severity", severity);
    set("symmetric_closure", symmetric_closure);
    if (order) {
      json kinds = json::array();
      std::stringstream ss(*order);
      for (std::string k; std::getline(ss, k, ',');) kinds.push_back(k);
      j["order"] = kinds;
    }
    auto& src = j["source"];
    if (source_seed) src["seed"] = *source_seed;
    if (train_size) src["train_size"] = *train_size;
    if (pool_size) src["pool_size"] = *pool_size;
    if (epochs) src["epochs"] = *epochs;
    if (occlusion) src["occlusion"] = *occlusion;
    if (min_accuracy) src["min_accuracy"] = *min_accuracy;
    return config_from_json(j);
  }
};

SweepAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw ParameterError("--axis expects FIELD=V1,V2,..., got '" + spec + "'");
  SweepAxis axis{spec.substr(0, eq), {}};
  std::stringstream ss(spec.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) {
    auto parsed = json::parse(v, nullptr, false);
    axis.values.push_back(parsed.is_discarded() ? json(v) : parsed);
  }
  return axis;
}

SourceBundle load_source(const ExperimentConfig& cfg) {
  const auto cache = resolve_output_dir(cfg) / "source";
  std::cerr << "source: " << cache.string() << '\n';
  auto bundle = prepare_source(cfg.source, cache);
  std::cerr << "source accuracy: train " << bundle.pretrain.train_accuracy << ", held-out "
            << bundle.pretrain.heldout_accuracy << '\n';
  return bundle;
}

void print_summary(const EpisodeReport& r) {
  std::printf("%-18s", to_string(r.config.method).c_str());
  for (const auto& d : r.domains) std::printf(" %5s", d.name.c_str());
  std::printf("  mean  gain\n%-18s", "error %");
  for (const auto& d : r.domains) std::printf(" %5.1f", d.error_pct);
  std::printf(" %5.2f %+5.2f\n%-18s", r.mean_error, r.gain, "source error %");
  for (const auto& d : r.domains) std::printf(" %5.1f", d.source_error_pct);
  std::printf(" %5.2f\n", r.source_mean_error);
}

void write_timing(const std::filesystem::path& dir, const std::string& stem, const std::vector<double>& seconds) {
  std::ofstream os(dir / (stem + ".timing.json"));
  if (!os) throw IoError("cannot write timing sidecar in " + dir.string());
  os << json{{"wall_seconds", seconds}}.dump() << '\n';
}

int cmd_pretrain(const Overrides& o) {
  load_source(o.resolve());
  return 0;
}

int cmd_run(const Overrides& o) {
  const auto cfg = o.resolve();
  cfg.validate();
  const auto source = load_source(cfg);
  const std::vector<SweepArm> arms{{cfg, run_episode(cfg, source), {}}};
  const auto dir = resolve_output_dir(cfg);
  export_arms(dir, "report", arms, ExportFormat::json_lines);
  export_arms(dir, "report", arms, ExportFormat::csv);
  write_timing(dir, "report", {arms.front().report->wall_seconds});
  print_summary(*arms.front().report);
  std::cerr << "wrote " << (dir / "report.jsonl").string() << " and report.csv\n";
  return 0;
}

int cmd_sweep(const Overrides& o, const std::vector<std::string>& axis_specs) {
  const auto cfg = o.resolve();
  std::vector<SweepAxis> axes;
  for (const auto& s : axis_specs) axes.push_back(parse_axis(s));
  const auto source = load_source(cfg);
  const auto arms = run_sweep(cfg, axes, source);
  const auto dir = resolve_output_dir(cfg);
  export_arms(dir, "sweep", arms, ExportFormat::json_lines);
  export_arms(dir, "sweep", arms, ExportFormat::csv);
  std::vector<double> seconds;
  int status = 0;
  for (const auto& arm : arms) {
    if (arm.report) {
      seconds.push_back(arm.report->wall_seconds);
      print_summary(*arm.report);
    } else {
      seconds.push_back(0.0);
      std::cerr << "arm failed: " << arm.error << '\n';
      status = 1;
    }
  }
  write_timing(dir, "sweep", seconds);
  std::cerr << "wrote " << arms.size() << " arms to " << (dir / "sweep.csv").string() << '\n';
  return status;
}

int cmd_export(const std::string& input, const std::string& format, const std::string& out_dir,
               const std::string& stem) {
  std::ifstream is(input);
  if (!is) throw IoError("cannot open " + input);
  const auto arms = read_jsonl(is);
  const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(input).parent_path() : std::filesystem::path(out_dir);
  const auto path = export_arms(dir.empty() ? "." : dir, stem, arms, parse_format(format));
  std::cerr << "wrote " << path.string() << '\n';
  int status = 0;
  for (const auto& arm : arms) status |= arm.report ? 0 : 1;
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mask-to-Adapt continual test-time adaptation laboratory"};
  app.require_subcommand(1);

  Overrides pre_o, run_o, sweep_o;
  auto* pre = app.add_subcommand("pretrain", "train (or reuse) the cached source model");
  pre_o.attach(pre);
  auto* run = app.add_subcommand("run", "run one adaptation episode and export its report");
  run_o.attach(run);
  auto* sweep = app.add_subcommand("sweep", "run a grid of episodes");
  sweep_o.attach(sweep);
  std::vector<std::string> axes;
  sweep->add_option("--axis", axes, "FIELD=V1,V2,... (repeatable; Cartesian grid)")->required();

  auto* exp = app.add_subcommand("export", "re-export a JSON-lines report");
  std::string input, format = "csv", out_dir, stem = "export";
  exp->add_option("--input", input, "JSON-lines report")->required();
  exp->add_option("--format", format, "csv | json-lines");
  exp->add_option("--out", out_dir, "output directory (default: next to the input)");
  exp->add_option("--stem", stem, "output file stem");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*pre) return cmd_pretrain(pre_o);
    if (*run) return cmd_run(run_o);
    if (*sweep) return cmd_sweep(sweep_o, axes);
    if (*exp) return cmd_export(input, format, out_dir, stem);
  } catch (const model::TrainingFailure& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
