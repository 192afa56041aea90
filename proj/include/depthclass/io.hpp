#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "depthclass/depth_map.hpp"
#include "depthclass/errors.hpp"
#include "depthclass/image.hpp"
#include "depthclass/score_volume.hpp"

// File formats.
//
//   DMAP: ASCII line "DMAP <width> <height>\n" followed by width*height
//         32-bit IEEE-754 little-endian floats, row-major. NaN marks an
//         invalid pixel.
//   SVOL: "SVOL <width> <height> <bins> <kind>\n" (kind is "logits" or
//         "probs") then width*height*bins little-endian 32-bit floats,
//         pixel-major with bins contiguous.
//   PPM:  binary P6, maxval 255.
//   TNET: "TNET <version>\n" then "meta <key> <value>" lines, then
//         "tensor <name> <rank> <dims...>\n" each followed by its raw
//         64-bit little-endian floats.

namespace depthclass {

namespace detail {

inline void put_f32_le(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

inline void put_f64_le(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline float get_f32_le(const unsigned char* p) {
  const std::uint32_t bits = static_cast<std::uint32_t>(p[0]) |
                             (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) |
                             (static_cast<std::uint32_t>(p[3]) << 24);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

inline double get_f64_le(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i)
    bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (!in.good() && !in.eof()) throw io_error("read failure on " + path);
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out.good()) throw io_error("write failure on " + path);
}

// Consumes the header line up to and including '\n'; returns the payload
// start offset.
inline std::size_t header_line(const std::string& bytes,
                               const std::string& path, std::string& line) {
  const std::size_t nl = bytes.find('\n');
  if (nl == std::string::npos)
    throw io_error(path + ": missing header newline (byte 0)");
  line = bytes.substr(0, nl);
  return nl + 1;
}

inline void need_payload(const std::string& bytes, std::size_t offset,
                         std::size_t need, const std::string& path) {
  if (bytes.size() - offset < need) {
    throw io_error(path + ": truncated payload at byte " +
                   std::to_string(bytes.size()) + ", expected " +
                   std::to_string(offset + need) + " bytes");
  }
}

}  // namespace detail

inline void write_dmap(const std::string& path, const DepthMap& map) {
  std::string out =
      "DMAP " + std::to_string(map.width) + " " + std::to_string(map.height) +
      "\n";
  out.reserve(out.size() + map.size() * 4);
  for (std::size_t i = 0; i < map.size(); ++i) {
    const float v = map.is_valid(i)
                        ? static_cast<float>(map.values[i])
                        : std::numeric_limits<float>::quiet_NaN();
    detail::put_f32_le(out, v);
  }
  detail::write_file(path, out);
}

inline DepthMap read_dmap(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  std::string header;
  const std::size_t offset = detail::header_line(bytes, path, header);
  std::istringstream hs(header);
  std::string magic;
  int w = 0, h = 0;
  if (!(hs >> magic >> w >> h) || magic != "DMAP" || w <= 0 || h <= 0)
    throw io_error(path + ": bad DMAP header");
  const std::size_t count = static_cast<std::size_t>(w) * h;
  detail::need_payload(bytes, offset, count * 4, path);
  DepthMap map(w, h);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (std::size_t i = 0; i < count; ++i, p += 4) {
    const float v = detail::get_f32_le(p);
    if (std::isnan(v)) {
      map.valid[i] = 0;
      map.values[i] = std::numeric_limits<double>::quiet_NaN();
    } else {
      map.valid[i] = 1;
      map.values[i] = static_cast<double>(v);
    }
  }
  return map;
}

inline void write_svol(const std::string& path, const ScoreVolume& vol) {
  const char* kind = vol.kind == VolumeKind::Logits ? "logits" : "probs";
  std::string out = "SVOL " + std::to_string(vol.width) + " " +
                    std::to_string(vol.height) + " " +
                    std::to_string(vol.bin_count) + " " + kind + "\n";
  out.reserve(out.size() + vol.data.size() * 4);
  for (double v : vol.data) detail::put_f32_le(out, static_cast<float>(v));
  detail::write_file(path, out);
}

inline ScoreVolume read_svol(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  std::string header;
  const std::size_t offset = detail::header_line(bytes, path, header);
  std::istringstream hs(header);
  std::string magic, kind;
  int w = 0, h = 0, b = 0;
  if (!(hs >> magic >> w >> h >> b >> kind) || magic != "SVOL" || w <= 0 ||
      h <= 0 || b <= 0)
    throw io_error(path + ": bad SVOL header");
  VolumeKind k;
  if (kind == "logits") {
    k = VolumeKind::Logits;
  } else if (kind == "probs") {
    k = VolumeKind::Probabilities;
  } else {
    throw io_error(path + ": unknown SVOL kind '" + kind + "'");
  }
  const std::size_t count = static_cast<std::size_t>(w) * h * b;
  detail::need_payload(bytes, offset, count * 4, path);
  ScoreVolume vol(w, h, b, k);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
  for (std::size_t i = 0; i < count; ++i, p += 4)
    vol.data[i] = static_cast<double>(detail::get_f32_le(p));
  return vol;
}

inline void write_ppm(const std::string& path, const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " +
                    std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + img.pixel_count() * 3);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      out.push_back(static_cast<char>(img.at(0, x, y)));
      out.push_back(static_cast<char>(img.at(1, x, y)));
      out.push_back(static_cast<char>(img.at(2, x, y)));
    }
  }
  detail::write_file(path, out);
}

inline Image read_ppm(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  std::size_t pos = 0;
  // Header tokens may be separated by whitespace or '#' comments.
  auto next_token = [&]() -> std::string {
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() &&
           !std::isspace(static_cast<unsigned char>(bytes[pos])))
      ++pos;
    if (start == pos)
      throw io_error(path + ": truncated PPM header at byte " +
                     std::to_string(start));
    return bytes.substr(start, pos - start);
  };
  if (next_token() != "P6") throw io_error(path + ": not a binary PPM");
  const int w = std::stoi(next_token());
  const int h = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (w <= 0 || h <= 0 || maxval != 255)
    throw io_error(path + ": unsupported PPM header");
  ++pos;  // single whitespace after maxval
  detail::need_payload(bytes, pos, 3u * static_cast<std::size_t>(w) * h, path);
  Image img(w, h);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(0, x, y) = *p++;
      img.at(1, x, y) = *p++;
      img.at(2, x, y) = *p++;
    }
  }
  return img;
}

/// A named parameter tensor for weight serialization.
struct NamedTensor {
  std::string name;
  std::vector<int> dims;
  std::vector<double> data;
};

inline void write_tnet(
    const std::string& path, const std::vector<NamedTensor>& tensors,
    const std::vector<std::pair<std::string, std::string>>& meta = {}) {
  std::string out = "TNET 1\n";
  for (const auto& [key, value] : meta)
    out += "meta " + key + " " + value + "\n";
  for (const auto& t : tensors) {
    out += "tensor " + t.name + " " + std::to_string(t.dims.size());
    for (int d : t.dims) out += " " + std::to_string(d);
    out += "\n";
    for (double v : t.data) detail::put_f64_le(out, v);
  }
  detail::write_file(path, out);
}

struct TnetFile {
  std::vector<NamedTensor> tensors;
  std::vector<std::pair<std::string, std::string>> meta;

  std::string meta_value(const std::string& key) const {
    for (const auto& [k, v] : meta)
      if (k == key) return v;
    throw io_error("TNET: missing meta key '" + key + "'");
  }
};

inline TnetFile read_tnet(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  std::string header;
  std::size_t pos = detail::header_line(bytes, path, header);
  if (header != "TNET 1") throw io_error(path + ": bad TNET header");
  TnetFile file;
  while (pos < bytes.size()) {
    const std::size_t nl = bytes.find('\n', pos);
    if (nl == std::string::npos)
      throw io_error(path + ": unterminated record at byte " +
                     std::to_string(pos));
    std::istringstream ls(bytes.substr(pos, nl - pos));
    pos = nl + 1;
    std::string tag;
    ls >> tag;
    if (tag == "meta") {
      std::string key, value;
      if (!(ls >> key >> value)) throw io_error(path + ": bad meta line");
      file.meta.emplace_back(key, value);
    } else if (tag == "tensor") {
      NamedTensor t;
      std::size_t rank = 0;
      if (!(ls >> t.name >> rank)) throw io_error(path + ": bad tensor line");
      std::size_t count = 1;
      for (std::size_t i = 0; i < rank; ++i) {
        int d = 0;
        if (!(ls >> d) || d <= 0) throw io_error(path + ": bad tensor dim");
        t.dims.push_back(d);
        count *= static_cast<std::size_t>(d);
      }
      detail::need_payload(bytes, pos, count * 8, path);
      t.data.resize(count);
      const auto* p =
          reinterpret_cast<const unsigned char*>(bytes.data()) + pos;
      for (std::size_t i = 0; i < count; ++i, p += 8)
        t.data[i] = detail::get_f64_le(p);
      pos += count * 8;
      file.tensors.push_back(std::move(t));
    } else {
      throw io_error(path + ": unknown record '" + tag + "'");
    }
  }
  return file;
}

/// Dataset manifest: one "rgb_path depth_path" pair per line.
inline std::vector<std::pair<std::string, std::string>> read_manifest(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string rgb, depth;
    if (!(ls >> rgb >> depth))
      throw io_error(path + ": malformed manifest line '" + line + "'");
    out.emplace_back(rgb, depth);
  }
  return out;
}

inline void write_manifest(
    const std::string& path,
    const std::vector<std::pair<std::string, std::string>>& entries) {
  std::string out;
  for (const auto& [rgb, depth] : entries) out += rgb + " " + depth + "\n";
  detail::write_file(path, out);
}

}  // namespace depthclass
