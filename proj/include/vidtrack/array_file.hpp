#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace vidtrack {

/// A named float64 array with an explicit shape.
struct NamedArray {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<double> data;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

// Container layout (all integers and reals little-endian):
//   "VTAR" | u32 version=1 | u32 count
//   count x { u32 name_len | name | u32 ndim | i64 dims[ndim] | f64 data[prod(dims)] }
void write_arrays(std::ostream& os, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> read_arrays(std::istream& is);

void save_arrays(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_arrays(const std::filesystem::path& path);

namespace le {
void put_u32(std::ostream& os, std::uint32_t v);
void put_i64(std::ostream& os, std::int64_t v);
void put_f64(std::ostream& os, double v);
void put_f32(std::ostream& os, float v);
std::uint32_t get_u32(std::istream& is);
std::int64_t get_i64(std::istream& is);
double get_f64(std::istream& is);
float get_f32(std::istream& is);
}  // namespace le

}  // namespace vidtrack
