#pragma once

// Report serialization. Both formats exclude wall-clock time so that equal
// runs export byte-identical files; timing goes to a separate sidecar.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "m2a/episode.hpp"

namespace m2a::harness {

enum class ExportFormat { csv, json_lines };
std::string to_string(ExportFormat f);
ExportFormat parse_format(const std::string& s);

/// Shortest decimal form that parses back to the same double.
std::string format_number(double value);

nlohmann::json to_json(const EpisodeReport& report);
EpisodeReport report_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SweepArm& arm);
SweepArm arm_from_json(const nlohmann::json& j);

/// Config columns, err_<D> per domain in stream order, mean_error,
/// source_mean_error, gain, mcl_<D>, eml_<D>, final_param_hash, error.
std::vector<std::string> csv_header(std::span<const std::string> domain_names);
/// Domain columns follow the first successful arm, else the base order.
void write_csv(std::ostream& os, std::span<const SweepArm> arms,
               const std::vector<data::CorruptionKind>& fallback_order = data::default_order());
void write_jsonl(std::ostream& os, std::span<const SweepArm> arms);
std::vector<SweepArm> read_jsonl(std::istream& is);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;
};
CsvTable read_csv(std::istream& is);

/// Writes <dir>/<stem>.csv or <dir>/<stem>.jsonl. Throws IoError when the
/// directory cannot be created or the file cannot be written.
std::filesystem::path export_arms(const std::filesystem::path& dir, const std::string& stem,
                                  std::span<const SweepArm> arms, ExportFormat format);

}  // namespace m2a::harness
