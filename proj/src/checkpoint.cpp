#include "scd/checkpoint.hpp"

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace scd {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'D', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(buf[i]) << (8 * i);
  return v;
}

void write_doubles(std::ostream& os, const double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, &data[i], 8);
    unsigned char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = (bits >> (8 * b)) & 0xff;
    os.write(reinterpret_cast<const char*>(buf), 8);
  }
}

void read_doubles(std::istream& is, double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    unsigned char buf[8];
    is.read(reinterpret_cast<char*>(buf), 8);
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= std::uint64_t(buf[b]) << (8 * b);
    std::memcpy(&data[i], &bits, 8);
  }
}

struct Entry {
  std::array<std::uint32_t, 4> dims;
  double* data;
  std::size_t count;
};

std::map<std::string, Entry> collect_entries(SiameseModel& model) {
  std::map<std::string, Entry> entries;
  for (auto& p : model.parameters()) {
    const Shape& s = p.tensor->shape();
    entries[p.name] = Entry{{std::uint32_t(s.n), std::uint32_t(s.c),
                             std::uint32_t(s.h), std::uint32_t(s.w)},
                            p.tensor->data().data(),
                            std::size_t(p.tensor->size())};
  }
  for (auto& st : model.state()) {
    entries[st.name] = Entry{{1, std::uint32_t(st.values->size()), 1, 1},
                             st.values->data(), st.values->size()};
  }
  return entries;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, SiameseModel& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw std::runtime_error("cannot open checkpoint for writing: " +
                             path.string());
  }
  auto entries = collect_entries(model);
  os.write(kMagic, sizeof(kMagic));
  write_u32(os, std::uint32_t(entries.size()));
  for (const auto& [name, e] : entries) {
    write_u32(os, std::uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    for (std::uint32_t d : e.dims) write_u32(os, d);
    write_doubles(os, e.data, e.count);
  }
  if (!os) {
    throw std::runtime_error("checkpoint write failed: " + path.string());
  }
}

void load_checkpoint(const std::filesystem::path& path, SiameseModel& model) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("cannot open checkpoint: " + path.string());
  }
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  auto entries = collect_entries(model);
  const std::uint32_t count = read_u32(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    std::array<std::uint32_t, 4> dims;
    for (auto& d : dims) d = read_u32(is);
    auto it = entries.find(name);
    if (it == entries.end()) {
      throw std::runtime_error("checkpoint entry '" + name +
                               "' has no matching tensor in the model");
    }
    if (dims != it->second.dims) {
      throw std::runtime_error("checkpoint entry '" + name + "' shape mismatch");
    }
    read_doubles(is, it->second.data, it->second.count);
    if (!is) {
      throw std::runtime_error("checkpoint truncated at entry '" + name + "'");
    }
  }
}

}  // namespace scd
