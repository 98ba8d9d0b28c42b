#include "m2a/archive.hpp"

#include <bit>
#include <fstream>

#include "binary_io.hpp"
#include "m2a/errors.hpp"

namespace m2a::model {

std::size_t ParameterArchive::value_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.values.size();
  return n;
}

ParameterArchive snapshot(const Classifier& model) {
  ParameterArchive out;
  out.architecture = model.architecture();
  for (const auto& p : model.parameters()) {
    out.blocks.push_back({p.name, p.role, p.value.shape(), {p.value.data().begin(), p.value.data().end()}});
  }
  return out;
}

void restore(Classifier& model, const ParameterArchive& archive) {
  if (archive.version != kArchiveVersion) {
    throw ContractError("archive version " + std::to_string(archive.version) + " does not match " +
                        std::to_string(kArchiveVersion));
  }
  if (!(archive.architecture == model.architecture())) throw ContractError("archive architecture mismatch");
  auto params = model.parameters();
  if (params.size() != archive.blocks.size()) throw ContractError("archive block count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& block = archive.blocks[i];
    if (block.name != params[i].name || block.role != params[i].role || block.shape != params[i].value.shape()) {
      throw ContractError("archive block '" + block.name + "' does not match parameter '" + params[i].name + "'");
    }
    auto dst = params[i].value.mutable_data();
    std::copy(block.values.begin(), block.values.end(), dst.begin());
    params[i].value.clear_grad();
  }
}

Classifier from_archive(const ParameterArchive& archive) {
  Rng unused(0);
  Classifier model(archive.architecture, unused);
  restore(model, archive);
  return model;
}

void write_archive(std::ostream& os, const ParameterArchive& archive) {
  io::write_magic(os, "M2AP");
  io::write_u32(os, archive.version);
  const auto& a = archive.architecture;
  for (std::size_t v : {a.channels, a.height, a.width, a.hidden, a.blocks, a.classes}) io::write_u64(os, v);
  io::write_f64(os, a.norm_eps);
  io::write_u64(os, archive.blocks.size());
  for (const auto& b : archive.blocks) {
    io::write_string(os, b.name);
    os.put(static_cast<char>(b.role));
    io::write_u32(os, static_cast<std::uint32_t>(b.shape.size()));
    for (std::size_t d : b.shape) io::write_u64(os, d);
    for (double v : b.values) io::write_f64(os, v);
  }
  if (!os) throw IoError("write_archive: stream failure");
}

ParameterArchive read_archive(std::istream& is) {
  io::expect_magic(is, "M2AP", "archive");
  ParameterArchive out;
  out.version = io::read_u32(is);
  if (out.version != kArchiveVersion) {
    throw ContractError("archive version " + std::to_string(out.version) + " is not supported (expected " +
                        std::to_string(kArchiveVersion) + ")");
  }
  auto& a = out.architecture;
  for (std::size_t* f : {&a.channels, &a.height, &a.width, &a.hidden, &a.blocks, &a.classes}) *f = io::read_u64(is);
  a.norm_eps = io::read_f64(is);
  const std::uint64_t count = io::read_u64(is);
  if (count > 4096) throw IoError("archive: implausible block count");
  for (std::uint64_t i = 0; i < count; ++i) {
    ParameterBlock b;
    b.name = io::read_string(is);
    char role = 0;
    io::read_exact(is, &role, 1);
    if (role != 0 && role != 1) throw IoError("archive: bad role tag");
    b.role = static_cast<Role>(role);
    const std::uint32_t rank = io::read_u32(is);
    if (rank > 8) throw IoError("archive: implausible rank");
    for (std::uint32_t d = 0; d < rank; ++d) b.shape.push_back(io::read_u64(is));
    const std::size_t n = ad::numel(b.shape);
    if (n > (std::size_t{1} << 28)) throw IoError("archive: implausible block size");
    b.values.resize(n);
    for (double& v : b.values) v = io::read_f64(is);
    out.blocks.push_back(std::move(b));
  }
  return out;
}

void save_archive(const std::filesystem::path& path, const ParameterArchive& archive) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  write_archive(os, archive);
}

ParameterArchive load_archive(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return read_archive(is);
}

std::uint64_t parameter_hash(const Classifier& model, bool adaptable_only) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : model.parameters()) {
    if (adaptable_only && p.role != Role::adaptable) continue;
    for (double v : p.value.data()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) {
        h ^= (bits >> (8 * i)) & 0xFF;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace m2a::model
