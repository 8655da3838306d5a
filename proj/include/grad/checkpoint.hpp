#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "grad/error.hpp"
#include "grad/matrix.hpp"

namespace grad {

// Layout: "GRAD", u32 version, u32 array count, then per array
// u64 rows, u64 cols, rows*cols f64. All little-endian.
inline constexpr char kCheckpointMagic[4] = {'G', 'R', 'A', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace detail {
template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError("checkpoint: truncated stream");
  return v;
}
}  // namespace detail

inline void write_checkpoint(std::ostream& os, const std::vector<Matrix>& arrays) {
  os.write(kCheckpointMagic, 4);
  detail::write_pod<std::uint32_t>(os, kCheckpointVersion);
  detail::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    detail::write_pod<std::uint64_t>(os, a.rows());
    detail::write_pod<std::uint64_t>(os, a.cols());
    os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  }
  if (!os) throw DataError("checkpoint: write failed");
}

inline std::vector<Matrix> read_checkpoint(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0) throw DataError("checkpoint: bad magic");
  const auto version = detail::read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const auto count = detail::read_pod<std::uint32_t>(is);
  std::vector<Matrix> arrays;
  arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = detail::read_pod<std::uint64_t>(is);
    const auto cols = detail::read_pod<std::uint64_t>(is);
    if (cols != 0 && rows > (std::uint64_t{1} << 40) / cols) throw DataError("checkpoint: implausible array shape");
    Matrix m(rows, cols);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!is) throw DataError("checkpoint: truncated array " + std::to_string(i));
    arrays.push_back(std::move(m));
  }
  return arrays;
}

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<Matrix>& arrays) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, arrays);
}

inline std::vector<Matrix> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_checkpoint(is);
}

/// Packs scalars into a 1×n array for storage alongside weights.
inline Matrix pack_scalars(const std::vector<double>& values) { return Matrix(1, values.size(), values); }

}  // namespace grad
