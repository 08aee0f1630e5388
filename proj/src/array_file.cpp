#include "vidtrack/array_file.hpp"

#include <array>
#include <bit>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace vidtrack {

namespace le {

namespace {

template <typename U>
void put(std::ostream& os, U v) {
  std::array<char, sizeof(U)> buf{};
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf.data(), buf.size());
}

template <typename U>
U get(std::istream& is) {
  std::array<unsigned char, sizeof(U)> buf{};
  if (!is.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
    throw std::runtime_error("unexpected end of data");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void put_u32(std::ostream& os, std::uint32_t v) { put(os, v); }
void put_i64(std::ostream& os, std::int64_t v) { put(os, static_cast<std::uint64_t>(v)); }
void put_f64(std::ostream& os, double v) { put(os, std::bit_cast<std::uint64_t>(v)); }
void put_f32(std::ostream& os, float v) { put(os, std::bit_cast<std::uint32_t>(v)); }
std::uint32_t get_u32(std::istream& is) { return get<std::uint32_t>(is); }
std::int64_t get_i64(std::istream& is) { return static_cast<std::int64_t>(get<std::uint64_t>(is)); }
double get_f64(std::istream& is) { return std::bit_cast<double>(get<std::uint64_t>(is)); }
float get_f32(std::istream& is) { return std::bit_cast<float>(get<std::uint32_t>(is)); }

}  // namespace le

namespace {

constexpr char kMagic[4] = {'V', 'T', 'A', 'R'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void write_arrays(std::ostream& os, const std::vector<NamedArray>& arrays) {
  os.write(kMagic, 4);
  le::put_u32(os, kVersion);
  le::put_u32(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    std::int64_t n = 1;
    for (auto d : a.shape) n *= d;
    if (n != static_cast<std::int64_t>(a.data.size())) {
      throw std::invalid_argument("array '" + a.name + "' shape does not match its data length");
    }
    le::put_u32(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    le::put_u32(os, static_cast<std::uint32_t>(a.shape.size()));
    for (auto d : a.shape) le::put_i64(os, d);
    for (double v : a.data) le::put_f64(os, v);
  }
}

std::vector<NamedArray> read_arrays(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw std::runtime_error("not an array container (bad magic)");
  }
  if (le::get_u32(is) != kVersion) throw std::runtime_error("unsupported array container version");
  const std::uint32_t count = le::get_u32(is);
  std::vector<NamedArray> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const std::uint32_t len = le::get_u32(is);
    if (len > (1u << 16)) throw std::runtime_error("array name too long");
    a.name.resize(len);
    if (!is.read(a.name.data(), len)) throw std::runtime_error("unexpected end of data");
    const std::uint32_t ndim = le::get_u32(is);
    if (ndim > 8) throw std::runtime_error("array '" + a.name + "' has too many dimensions");
    std::int64_t n = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      const std::int64_t dim = le::get_i64(is);
      if (dim < 0 || dim > (std::int64_t{1} << 32)) {
        throw std::runtime_error("array '" + a.name + "' has an invalid dimension");
      }
      a.shape.push_back(dim);
      n *= dim;
    }
    a.data.resize(static_cast<std::size_t>(n));
    for (auto& v : a.data) v = le::get_f64(is);
    out.push_back(std::move(a));
  }
  return out;
}

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_arrays(os, arrays);
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<NamedArray> load_arrays(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_arrays(is);
}

}  // namespace vidtrack
