#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string>
#include <type_traits>
#include <vector>

#include "mppf/error.hpp"
#include "mppf/grid.hpp"
#include "mppf/observation.hpp"
#include "mppf/signal.hpp"

namespace mppf {

/// Binary frame stream. Layout, all little-endian:
///   magic[4] | version u16 | width u16 | height u16 | frame_count u32 | dt f64 | payload
/// Payload is frame_count row-major frames of u32 counts ("MPPF") or f64 values ("MPPE").
template <class T>
struct BasicFrameFile {
  static_assert(std::is_same_v<T, std::uint32_t> || std::is_same_v<T, double>);
  static constexpr std::uint16_t kVersion = 1;
  static constexpr std::array<char, 4> kMagic =
      std::is_same_v<T, std::uint32_t> ? std::array<char, 4>{'M', 'P', 'P', 'F'} : std::array<char, 4>{'M', 'P', 'P', 'E'};

  std::uint16_t version = kVersion;
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint32_t frame_count = 0;
  double dt = 1.0;
  std::vector<T> payload;

  std::size_t frame_size() const { return static_cast<std::size_t>(width) * height; }

  friend bool operator==(const BasicFrameFile&, const BasicFrameFile&) = default;
};

using FrameFile = BasicFrameFile<std::uint32_t>;
using EstimateFile = BasicFrameFile<double>;

namespace detail {
template <class U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b;
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b.data(), b.size());
}

template <class U>
U get_le(std::istream& is) {
  std::array<unsigned char, sizeof(U)> b;
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) throw FormatError("truncated frame file");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b[i]) << (8 * i);
  return v;
}
}  // namespace detail

template <class T>
void write_frames(std::ostream& os, const BasicFrameFile<T>& f) {
  if (f.payload.size() != f.frame_size() * f.frame_count) throw FormatError("payload length does not match header");
  os.write(BasicFrameFile<T>::kMagic.data(), 4);
  detail::put_le<std::uint16_t>(os, f.version);
  detail::put_le<std::uint16_t>(os, f.width);
  detail::put_le<std::uint16_t>(os, f.height);
  detail::put_le<std::uint32_t>(os, f.frame_count);
  detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(f.dt));
  for (T v : f.payload) {
    if constexpr (std::is_same_v<T, double>) {
      detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
    } else {
      detail::put_le<std::uint32_t>(os, v);
    }
  }
  if (!os) throw FormatError("failed writing frame file");
}

template <class T>
BasicFrameFile<T> read_frames(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), 4)) throw FormatError("truncated frame file header");
  if (magic != BasicFrameFile<T>::kMagic)
    throw FormatError("bad magic '" + std::string(magic.data(), 4) + "', expected '" +
                      std::string(BasicFrameFile<T>::kMagic.data(), 4) + "'");
  BasicFrameFile<T> f;
  f.version = detail::get_le<std::uint16_t>(is);
  if (f.version != BasicFrameFile<T>::kVersion) throw FormatError("unsupported frame file version " + std::to_string(f.version));
  f.width = detail::get_le<std::uint16_t>(is);
  f.height = detail::get_le<std::uint16_t>(is);
  f.frame_count = detail::get_le<std::uint32_t>(is);
  f.dt = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
  const std::size_t n = f.frame_size() * f.frame_count;
  // Grow as bytes arrive so a corrupt header cannot force a huge allocation.
  f.payload.reserve(std::min<std::size_t>(n, std::size_t{1} << 20));
  for (std::size_t i = 0; i < n; ++i) {
    if constexpr (std::is_same_v<T, double>) {
      f.payload.push_back(std::bit_cast<double>(detail::get_le<std::uint64_t>(is)));
    } else {
      f.payload.push_back(detail::get_le<std::uint32_t>(is));
    }
  }
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after frame payload");
  return f;
}

template <class T>
void write_frames(const std::string& path, const BasicFrameFile<T>& f) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  write_frames(os, f);
}

template <class T>
BasicFrameFile<T> read_frames(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_frames<T>(is);
}

/// Dense frames; cells missing from a masked series are written as zero.
inline FrameFile to_frame_file(const CountFrameSeries& s) {
  const int n = s.partition.cells_per_side();
  if (n > std::numeric_limits<std::uint16_t>::max()) throw FormatError("grid too large for frame file");
  FrameFile f;
  f.width = f.height = static_cast<std::uint16_t>(n);
  f.frame_count = static_cast<std::uint32_t>(s.frame_count());
  f.dt = s.dt;
  f.payload.assign(f.frame_size() * f.frame_count, 0);
  for (std::size_t j = 0; j < s.frame_count(); ++j)
    for (std::size_t k = 0; k < s.cell_count(); ++k)
      f.payload[j * f.frame_size() + s.cells[k]] = s.counts[j * s.cell_count() + k];
  return f;
}

inline CountFrameSeries from_frame_file(const FrameFile& f, double physical_side = 1.0) {
  if (f.width != f.height) throw FormatError("frame file grid must be square");
  CountFrameSeries s = CountFrameSeries::empty(PartitionLevel(f.width, physical_side), f.dt);
  s.counts = f.payload;
  return s;
}

inline EstimateFile to_estimate_file(const std::vector<FieldState>& states, double dt) {
  EstimateFile f;
  if (states.empty()) return f;
  f.width = static_cast<std::uint16_t>(states.front().width);
  f.height = static_cast<std::uint16_t>(states.front().height);
  f.frame_count = static_cast<std::uint32_t>(states.size());
  f.dt = dt;
  for (const FieldState& s : states) f.payload.insert(f.payload.end(), s.u.begin(), s.u.end());
  return f;
}

}  // namespace mppf
