#include "reswm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace reswm {
namespace {

constexpr char kMagic[8] = {'R', 'E', 'S', 'W', 'M', 'C', 'K', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& os, double v) {
  std::uint64_t bits;
  static_assert(sizeof(bits) == sizeof(v));
  std::memcpy(&bits, &v, 8);
  put_u64(os, bits);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw std::runtime_error("checkpoint: truncated file (u32)");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8))
    throw std::runtime_error("checkpoint: truncated file (u64)");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  std::uint64_t bits = get_u64(is);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

void write_array_section(std::ostream& os, const std::vector<NamedArray>& arrays) {
  put_u32(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    put_u32(os, static_cast<std::uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    os.put(static_cast<char>(0));  // dtype tag: f64
    put_u32(os, static_cast<std::uint32_t>(a.extents.size()));
    std::uint64_t numel = 1;
    for (std::uint64_t e : a.extents) {
      put_u64(os, e);
      numel *= e;
    }
    if (numel != a.values.size())
      throw std::runtime_error("checkpoint: extents do not match value count for '" + a.name + "'");
    for (double v : a.values) put_f64(os, v);
  }
}

std::vector<NamedArray> read_array_section(std::istream& is) {
  const std::uint32_t count = get_u32(is);
  std::vector<NamedArray> arrays;
  arrays.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    const std::uint32_t name_len = get_u32(is);
    a.name.resize(name_len);
    if (!is.read(a.name.data(), name_len))
      throw std::runtime_error("checkpoint: truncated file (array name)");
    const int dtype = is.get();
    if (dtype == std::char_traits<char>::eof())
      throw std::runtime_error("checkpoint: truncated file (dtype)");
    if (dtype != 0 && dtype != 1)
      throw std::runtime_error("checkpoint: unknown dtype tag for '" + a.name + "'");
    const std::uint32_t rank = get_u32(is);
    a.extents.resize(rank);
    std::uint64_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      a.extents[r] = get_u64(is);
      numel *= a.extents[r];
    }
    a.values.resize(numel);
    if (dtype == 0) {
      for (std::uint64_t k = 0; k < numel; ++k) a.values[k] = get_f64(is);
    } else {
      for (std::uint64_t k = 0; k < numel; ++k) {
        const std::uint32_t bits = get_u32(is);
        float f;
        std::memcpy(&f, &bits, 4);
        a.values[k] = static_cast<double>(f);
      }
    }
    arrays.push_back(std::move(a));
  }
  return arrays;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(data.config_text.size()));
  os.write(data.config_text.data(), static_cast<std::streamsize>(data.config_text.size()));
  write_array_section(os, data.params);
  write_array_section(os, data.optimizer);
  put_u64(os, data.rng_seed);
  put_u64(os, data.rng_counter);
  put_u64(os, data.env_steps);
  if (!os) throw std::runtime_error("checkpoint: write failed for '" + path + "'");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[8];
  if (!is.read(magic, 8)) throw std::runtime_error("checkpoint: truncated file (magic)");
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
  const std::uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  CheckpointData data;
  const std::uint32_t cfg_len = get_u32(is);
  data.config_text.resize(cfg_len);
  if (!is.read(data.config_text.data(), cfg_len))
    throw std::runtime_error("checkpoint: truncated file (config)");
  data.params = read_array_section(is);
  data.optimizer = read_array_section(is);
  data.rng_seed = get_u64(is);
  data.rng_counter = get_u64(is);
  data.env_steps = get_u64(is);
  return data;
}

}  // namespace reswm
