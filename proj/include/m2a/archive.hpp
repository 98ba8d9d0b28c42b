#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "m2a/model.hpp"

namespace m2a::model {

inline constexpr std::uint32_t kArchiveVersion = 1;

struct ParameterBlock {
  std::string name;
  Role role = Role::frozen;
  ad::Shape shape;
  std::vector<double> values;

  bool operator==(const ParameterBlock&) const = default;
};

/// Named, role-tagged parameter blocks plus the architecture that owns them.
struct ParameterArchive {
  std::uint32_t version = kArchiveVersion;
  Architecture architecture;
  std::vector<ParameterBlock> blocks;

  std::size_t value_count() const;
  bool operator==(const ParameterArchive&) const = default;
};

ParameterArchive snapshot(const Classifier& model);

/// Overwrites every parameter value in place. Names, roles and shapes must
/// match the model's registry.
void restore(Classifier& model, const ParameterArchive& archive);

/// Builds a classifier from the archive alone.
Classifier from_archive(const ParameterArchive& archive);

// Binary layout: "M2AP", u32 version, architecture (6 x u64, f64 eps),
// u64 block count, then per block: name, u8 role, u32 rank, u64 dims, f64 values.
void write_archive(std::ostream& os, const ParameterArchive& archive);
ParameterArchive read_archive(std::istream& is);
void save_archive(const std::filesystem::path& path, const ParameterArchive& archive);
ParameterArchive load_archive(const std::filesystem::path& path);

/// FNV-1a over the raw bytes of every parameter value, in registry order.
std::uint64_t parameter_hash(const Classifier& model, bool adaptable_only = false);

}  // namespace m2a::model
