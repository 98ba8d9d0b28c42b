#include "m2a/report.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

#include "m2a/errors.hpp"

namespace m2a::harness {

using nlohmann::json;

std::string to_string(ExportFormat f) { return f == ExportFormat::csv ? "csv" : "json-lines"; }

ExportFormat parse_format(const std::string& s) {
  if (s == "csv") return ExportFormat::csv;
  if (s == "json-lines" || s == "jsonl") return ExportFormat::json_lines;
  throw ParameterError("unknown export format '" + s + "'");
}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

json to_json(const EpisodeReport& r) {
  json domains = json::array();
  for (const auto& d : r.domains) {
    domains.push_back({{"name", d.name},
                       {"kind", data::to_string(d.kind)},
                       {"samples", d.samples},
                       {"error_pct", d.error_pct},
                       {"source_error_pct", d.source_error_pct},
                       {"mean_mcl", d.mean_mcl},
                       {"mean_eml", d.mean_eml}});
  }
  // Per-batch log as compact tuples:
  // [domain, samples, errors, source_errors, mcl, eml, param_hash, imag_residue]
  json batches = json::array();
  for (const auto& b : r.batches) {
    batches.push_back(json::array(
        {b.domain, b.samples, b.errors, b.source_errors, b.mcl, b.eml, b.param_hash, b.max_imag_residue}));
  }
  return {{"config", to_json(r.config)},
          {"seed", r.config.seed},
          {"domains", domains},
          {"mean_error", r.mean_error},
          {"source_mean_error", r.source_mean_error},
          {"gain", r.gain},
          {"final_param_hash", r.final_param_hash},
          {"batches", batches}};
}

EpisodeReport report_from_json(const json& j) {
  EpisodeReport r;
  r.config = config_from_json(j.at("config"));
  for (const auto& d : j.at("domains")) {
    DomainResult dr;
    dr.name = d.at("name").get<std::string>();
    dr.kind = data::parse_corruption(d.at("kind").get<std::string>());
    dr.samples = d.at("samples").get<std::size_t>();
    dr.error_pct = d.at("error_pct").get<double>();
    dr.source_error_pct = d.at("source_error_pct").get<double>();
    dr.mean_mcl = d.at("mean_mcl").get<double>();
    dr.mean_eml = d.at("mean_eml").get<double>();
    r.domains.push_back(std::move(dr));
  }
  r.mean_error = j.at("mean_error").get<double>();
  r.source_mean_error = j.at("source_mean_error").get<double>();
  r.gain = j.at("gain").get<double>();
  r.final_param_hash = j.at("final_param_hash").get<std::uint64_t>();
  for (const auto& b : j.at("batches")) {
    BatchLog log;
    log.domain = b.at(0).get<std::size_t>();
    log.samples = b.at(1).get<std::size_t>();
    log.errors = b.at(2).get<std::size_t>();
    log.source_errors = b.at(3).get<std::size_t>();
    log.mcl = b.at(4).get<double>();
    log.eml = b.at(5).get<double>();
    log.param_hash = b.at(6).get<std::uint64_t>();
    log.max_imag_residue = b.at(7).get<double>();
    r.batches.push_back(log);
  }
  return r;
}

json to_json(const SweepArm& arm) {
  if (arm.report) return to_json(*arm.report);
  return {{"config", to_json(arm.config)}, {"error", arm.error}};
}

SweepArm arm_from_json(const json& j) {
  if (j.contains("error")) return {config_from_json(j.at("config")), std::nullopt, j.at("error").get<std::string>()};
  auto report = report_from_json(j);
  return {report.config, std::move(report), {}};
}

namespace {

// Config fields echoed as leading CSV columns.
const char* const kConfigColumns[] = {"method",          "loss_mode",  "orientation", "views",
                                      "alpha",           "lr",         "weight_decay", "steps_per_batch",
                                      "batch",           "seed",       "patch_side",  "symmetric_closure",
                                      "score_view",      "severity",   "samples_per_domain"};

std::string json_cell(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) return format_number(v.get<double>());
  return v.dump();
}

std::string quote(const std::string& cell) {
  if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

void write_row(std::ostream& os, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << quote(cells[i]);
  os << '\n';
}

}  // namespace

std::vector<std::string> csv_header(std::span<const std::string> domain_names) {
  std::vector<std::string> h(std::begin(kConfigColumns), std::end(kConfigColumns));
  for (const auto& d : domain_names) h.push_back("err_" + d);
  h.insert(h.end(), {"mean_error", "source_mean_error", "gain"});
  for (const auto& d : domain_names) h.push_back("mcl_" + d);
  for (const auto& d : domain_names) h.push_back("eml_" + d);
  h.insert(h.end(), {"final_param_hash", "error"});
  return h;
}

void write_csv(std::ostream& os, std::span<const SweepArm> arms, const std::vector<data::CorruptionKind>& fallback_order) {
  std::vector<std::string> names;
  const SweepArm* first = nullptr;
  for (const auto& a : arms) {
    if (a.report) {
      first = &a;
      break;
    }
  }
  if (first != nullptr) {
    for (const auto& d : first->report->domains) names.push_back(d.name);
  } else {
    for (auto k : arms.empty() ? fallback_order : arms.front().config.order) names.push_back(data::short_name(k));
  }
  const auto header = csv_header(names);
  write_row(os, header);

  for (const auto& arm : arms) {
    const auto cfg = to_json(arm.config);
    std::vector<std::string> cells;
    for (const char* c : kConfigColumns) cells.push_back(json_cell(cfg.at(c)));
    const std::size_t metric_cells = 3 * names.size() + 4;
    if (!arm.report) {
      cells.resize(cells.size() + metric_cells);
    } else {
      const auto& r = *arm.report;
      if (r.domains.size() != names.size()) throw ShapeError("write_csv: arms disagree on the domain list");
      for (std::size_t d = 0; d < names.size(); ++d) {
        if (r.domains[d].name != names[d]) throw ShapeError("write_csv: arms disagree on the domain order");
        cells.push_back(format_number(r.domains[d].error_pct));
      }
      cells.push_back(format_number(r.mean_error));
      cells.push_back(format_number(r.source_mean_error));
      cells.push_back(format_number(r.gain));
      for (const auto& d : r.domains) cells.push_back(format_number(d.mean_mcl));
      for (const auto& d : r.domains) cells.push_back(format_number(d.mean_eml));
      cells.push_back(std::to_string(r.final_param_hash));
    }
    cells.push_back(arm.error);
    write_row(os, cells);
  }
}

void write_jsonl(std::ostream& os, std::span<const SweepArm> arms) {
  for (const auto& arm : arms) os << to_json(arm).dump() << '\n';
}

std::vector<SweepArm> read_jsonl(std::istream& is) {
  std::vector<SweepArm> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(arm_from_json(json::parse(line)));
  }
  return out;
}

namespace {

bool read_record(std::istream& is, std::vector<std::string>& cells) {
  cells.clear();
  std::string cell;
  bool quoted = false, any = false;
  for (int ch; (ch = is.get()) != EOF;) {
    any = true;
    const char c = static_cast<char>(ch);
    if (quoted) {
      if (c == '"') {
        if (is.peek() == '"') {
          cell += '"';
          is.get();
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cell));
      cell.clear();
    } else if (c == '\n') {
      cells.push_back(std::move(cell));
      return true;
    } else if (c != '\r') {
      cell += c;
    }
  }
  if (any) cells.push_back(std::move(cell));
  return any;
}

}  // namespace

CsvTable read_csv(std::istream& is) {
  CsvTable t;
  std::vector<std::string> cells;
  if (!read_record(is, t.header)) return t;
  while (read_record(is, cells)) {
    if (cells.size() != t.header.size()) throw IoError("read_csv: row width differs from header");
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < cells.size(); ++i) row[t.header[i]] = cells[i];
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::filesystem::path export_arms(const std::filesystem::path& dir, const std::string& stem,
                                  std::span<const SweepArm> arms, ExportFormat format) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto path = dir / (stem + (format == ExportFormat::csv ? ".csv" : ".jsonl"));
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  if (format == ExportFormat::csv) {
    write_csv(os, arms);
  } else {
    write_jsonl(os, arms);
  }
  os.flush();
  if (!os) throw IoError("write failed for " + path.string());
  return path;
}

}  // namespace m2a::harness
