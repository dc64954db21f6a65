#pragma once

#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "csnicp/error.hpp"

namespace csnicp {

enum class Modality { CT, MR };

inline std::string to_string(Modality m) { return m == Modality::CT ? "CT" : "MR"; }

inline Modality modality_from_string(const std::string& s) {
  if (s == "CT") return Modality::CT;
  if (s == "MR") return Modality::MR;
  throw InvalidInputError("unknown modality '" + s + "' (expected CT or MR)");
}

struct StackManifest {
  Modality modality = Modality::CT;
  double pixel_spacing_mm = 1.0;
  double slice_spacing_mm = 1.0;
  std::vector<std::string> slice_files;

  void validate() const {
    if (!(pixel_spacing_mm > 0.0)) throw InvalidInputError("manifest: pixel_spacing_mm must be positive");
    if (!(slice_spacing_mm > 0.0)) throw InvalidInputError("manifest: slice_spacing_mm must be positive");
    if (slice_files.empty()) throw InvalidInputError("manifest: zero slices");
    std::set<std::string> seen;
    for (const auto& f : slice_files)
      if (!seen.insert(f).second) throw InvalidInputError("manifest: duplicate slice file '" + f + "'");
  }

  friend bool operator==(const StackManifest&, const StackManifest&) = default;
};

/// One binary slice, row-major; bits[y * width + x] is 1 for bone.
struct SliceMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;
  int z_index = 0;

  SliceMask() = default;
  SliceMask(int w, int h, int z = 0) : width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0), z_index(z) {}

  [[nodiscard]] std::uint8_t at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x]; }
  void set(int x, int y, std::uint8_t v = 1) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  [[nodiscard]] bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  [[nodiscard]] std::size_t area() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }

  friend bool operator==(const SliceMask&, const SliceMask&) = default;
};

struct SliceStack {
  StackManifest manifest;
  std::vector<SliceMask> slices;

  void validate() const {
    manifest.validate();
    if (slices.size() != manifest.slice_files.size())
      throw InvalidInputError("stack: slice count does not match manifest");
    for (std::size_t i = 0; i < slices.size(); ++i) {
      const auto& s = slices[i];
      if (s.width != slices.front().width || s.height != slices.front().height)
        throw InvalidInputError("stack: slice dimension mismatch at slice " + std::to_string(i));
      if (s.bits.size() != static_cast<std::size_t>(s.width) * s.height)
        throw InvalidInputError("stack: slice buffer size mismatch");
      if (i > 0 && s.z_index <= slices[i - 1].z_index)
        throw InvalidInputError("stack: z_index must increase strictly");
      for (auto b : s.bits)
        if (b > 1) throw InvalidInputError("stack: mask bits must be 0 or 1");
    }
  }

  friend bool operator==(const SliceStack&, const SliceStack&) = default;
};

namespace detail {

inline void skip_pgm_space(std::istream& is) {
  while (is) {
    int c = is.peek();
    if (c == '#') {
      std::string comment;
      std::getline(is, comment);
    } else if (std::isspace(c)) {
      is.get();
    } else {
      break;
    }
  }
}

}  // namespace detail

/// Reads an 8-bit binary PGM (P5); any nonzero pixel becomes 1.
inline SliceMask read_pgm_mask(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open mask file: " + path.string());
  std::string magic;
  is >> magic;
  if (magic != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  int w = 0, h = 0, maxval = 0;
  detail::skip_pgm_space(is);
  is >> w;
  detail::skip_pgm_space(is);
  is >> h;
  detail::skip_pgm_space(is);
  is >> maxval;
  if (!is || w <= 0 || h <= 0) throw IoError(path.string() + ": malformed PGM header");
  if (maxval <= 0 || maxval > 255) throw IoError(path.string() + ": only 8-bit PGM is supported");
  is.get();  // single whitespace before the raster
  SliceMask m(w, h);
  std::vector<char> raw(m.bits.size());
  is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) throw IoError(path.string() + ": truncated PGM raster");
  for (std::size_t i = 0; i < raw.size(); ++i) m.bits[i] = raw[i] != 0 ? 1 : 0;
  return m;
}

inline void write_pgm_mask(const std::filesystem::path& path, const SliceMask& mask) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "P5\n" << mask.width << ' ' << mask.height << "\n255\n";
  std::string raster(mask.bits.size(), '\0');
  for (std::size_t i = 0; i < mask.bits.size(); ++i) raster[i] = mask.bits[i] ? static_cast<char>(255) : '\0';
  os.write(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

inline nlohmann::json manifest_to_json(const StackManifest& m) {
  return {{"modality", to_string(m.modality)},
          {"pixel_spacing_mm", m.pixel_spacing_mm},
          {"slice_spacing_mm", m.slice_spacing_mm},
          {"slices", m.slice_files}};
}

inline StackManifest manifest_from_json(const nlohmann::json& j) {
  StackManifest m;
  try {
    m.modality = modality_from_string(j.at("modality").get<std::string>());
    m.pixel_spacing_mm = j.at("pixel_spacing_mm").get<double>();
    m.slice_spacing_mm = j.at("slice_spacing_mm").get<double>();
    m.slice_files = j.at("slices").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

/// Loads a manifest and its slices; slice paths are relative to the manifest.
inline SliceStack load_stack(const std::filesystem::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw IoError("cannot open manifest: " + manifest_path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("cannot parse manifest " + manifest_path.string() + ": " + e.what());
  }
  SliceStack stack;
  stack.manifest = manifest_from_json(j);
  const auto base = manifest_path.parent_path();
  for (std::size_t i = 0; i < stack.manifest.slice_files.size(); ++i) {
    auto mask = read_pgm_mask(base / stack.manifest.slice_files[i]);
    mask.z_index = static_cast<int>(i);
    stack.slices.push_back(std::move(mask));
  }
  stack.validate();
  return stack;
}

/// Writes slices and manifest.json into `dir` (created if absent). Returns the
/// manifest path.
inline std::filesystem::path write_stack(const SliceStack& stack, const std::filesystem::path& dir) {
  stack.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create directory: " + dir.string());
  for (std::size_t i = 0; i < stack.slices.size(); ++i) write_pgm_mask(dir / stack.manifest.slice_files[i], stack.slices[i]);
  const auto manifest_path = dir / "manifest.json";
  std::ofstream os(manifest_path);
  if (!os) throw IoError("cannot open for writing: " + manifest_path.string());
  os << manifest_to_json(stack.manifest).dump(2) << '\n';
  if (!os) throw IoError("write failed: " + manifest_path.string());
  return manifest_path;
}

}  // namespace csnicp
