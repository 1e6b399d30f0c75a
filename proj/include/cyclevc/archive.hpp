#pragma once

// Versioned container of named float32 arrays plus a JSON metadata block.
//
//   "CVARCHV1" | u32 version | str kind | str metadata (JSON)
//   | u32 count | count × { str name | u32 rank | u64 dims[rank] | f32 data[] }
//   | u64 FNV-1a of every preceding byte
//
// str is u32 length + bytes; all integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cyclevc/binary_io.hpp"
#include "cyclevc/error.hpp"
#include "cyclevc/model.hpp"
#include "cyclevc/tensor.hpp"

namespace cyclevc {

inline constexpr std::string_view kArchiveMagic = "CVARCHV1";
inline constexpr std::uint32_t kArchiveVersion = 1;

struct Archive {
  std::string kind;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::pair<std::string, Tensor<float>>> arrays;

  const Tensor<float>& array(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return t;
    throw FormatError("archive has no array named " + name);
  }
};

inline Bytes encode_archive(const Archive& a) {
  ByteWriter w;
  w.raw(kArchiveMagic);
  w.u32(kArchiveVersion);
  w.str(a.kind);
  w.str(a.metadata.dump());
  w.u32(static_cast<std::uint32_t>(a.arrays.size()));
  for (const auto& [name, t] : a.arrays) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) w.u64(d);
    for (float v : t.values()) w.f32(v);
  }
  const std::uint64_t sum = fnv1a64(w.bytes().data(), w.bytes().size());
  w.u64(sum);
  return w.take();
}

inline Archive decode_archive(const Bytes& bytes, const std::string& context = "archive") {
  if (bytes.size() < kArchiveMagic.size() + 12) throw FormatError(context + ": truncated");
  ByteReader tail(bytes.data() + bytes.size() - 8, 8, context);
  const std::uint64_t stored = tail.u64();
  const std::size_t body = bytes.size() - 8;
  ByteReader r(bytes.data(), body, context);
  if (r.raw(kArchiveMagic.size()) != kArchiveMagic) throw FormatError(context + ": bad magic");
  const std::uint32_t version = r.u32();
  if (version != kArchiveVersion) throw FormatError(context + ": unsupported archive version " + std::to_string(version));
  if (fnv1a64(bytes.data(), body) != stored) throw FormatError(context + ": checksum mismatch (truncated or corrupted)");
  Archive a;
  a.kind = r.str();
  try {
    a.metadata = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(context + ": bad metadata: " + e.what());
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError(context + ": implausible rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) d = r.u64();
    const std::size_t n = shape_size(shape);
    r.need(n * 4);
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    a.arrays.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw FormatError(context + ": trailing bytes");
  return a;
}

inline void save_archive(const std::filesystem::path& path, const Archive& a) { write_file(path, encode_archive(a)); }
inline Archive load_archive(const std::filesystem::path& path) { return decode_archive(read_file(path), path.string()); }

/// Appends every parameter of a set under "<prefix><name>".
inline void append_params(Archive& a, const std::string& prefix, const ParamSet<float>& set) {
  for (std::size_t i = 0; i < set.size(); ++i) a.arrays.emplace_back(prefix + set.name(i), set.value(i));
}

/// Rebuilds a parameter set in layout order from "<prefix><name>" arrays,
/// validating every shape against the layout.
inline ParamSet<float> extract_params(const Archive& a, const std::string& prefix, const Layout& layout) {
  ParamSet<float> set;
  for (const auto& spec : layout) {
    const Tensor<float>& t = a.array(prefix + spec.name);
    if (t.shape() != spec.shape)
      throw FormatError("array " + prefix + spec.name + " has shape " + shape_str(t.shape()) + ", expected " +
                        shape_str(spec.shape));
    set.add(spec.name, t);
  }
  return set;
}

// Stand-alone generator files used by conversion.

inline Archive generator_archive(const GeneratorParams<float>& g) {
  Archive a;
  a.kind = "generator";
  a.metadata = {{"arch", g.arch}};
  append_params(a, "", g.params);
  return a;
}

inline GeneratorParams<float> generator_from_archive(const Archive& a) {
  if (a.kind != "generator") throw FormatError("expected a generator archive, found '" + a.kind + "'");
  GeneratorParams<float> g;
  try {
    g.arch = a.metadata.at("arch").get<GeneratorArch>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("generator architecture: ") + e.what());
  }
  g.params = extract_params(a, "", generator_layout(g.arch));
  return g;
}

inline void save_generator(const std::filesystem::path& path, const GeneratorParams<float>& g) {
  save_archive(path, generator_archive(g));
}
inline GeneratorParams<float> load_generator(const std::filesystem::path& path) {
  return generator_from_archive(load_archive(path));
}

}  // namespace cyclevc
