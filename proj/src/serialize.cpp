#include "sr4ir/serialize.hpp"

#include <cstring>
#include <fstream>

namespace sr4ir {

namespace {

constexpr char kTensorMagic[4] = {'S', 'R', '4', 'T'};
constexpr char kContainerMagic[4] = {'S', 'R', '4', 'C'};

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(in.gcount() == sizeof(T), std::string("read: truncated ") + what);
  return v;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  check(t.defined(), "write_tensor: undefined tensor");
  out.write(kTensorMagic, 4);
  write_pod<uint32_t>(out, uint32_t(t.ndim()));
  for (int i = 0; i < t.ndim(); ++i) write_pod<uint32_t>(out, uint32_t(t.dim(i)));
  out.write(reinterpret_cast<const char*>(t.data()),
            std::streamsize(size_t(t.numel()) * sizeof(float)));
}

Tensor<float> read_tensor(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  check(in.gcount() == 4 && std::memcmp(magic, kTensorMagic, 4) == 0,
        "read_tensor: bad magic (want SR4T)");
  const uint32_t rank = read_pod<uint32_t>(in, "tensor rank");
  check(rank <= 8, "read_tensor: implausible rank " + std::to_string(rank));
  Shape shape(rank);
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = int(read_pod<uint32_t>(in, "tensor extent"));
    check(shape[i] >= 1, "read_tensor: bad extent");
  }
  Tensor<float> t(shape);
  in.read(reinterpret_cast<char*>(t.data()), std::streamsize(size_t(t.numel()) * sizeof(float)));
  check(in.gcount() == std::streamsize(size_t(t.numel()) * sizeof(float)),
        "read_tensor: truncated payload");
  return t;
}

void save_tensor(const std::string& path, const Tensor<float>& t) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "save_tensor: cannot open " + path);
  write_tensor(f, t);
  check(f.good(), "save_tensor: write failed for " + path);
}

Tensor<float> load_tensor(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load_tensor: cannot open " + path);
  return read_tensor(f);
}

void write_entries(std::ostream& out, const NamedTensors& entries) {
  out.write(kContainerMagic, 4);
  write_pod<uint32_t>(out, uint32_t(entries.size()));
  for (const auto& [name, t] : entries) {
    check(name.size() <= 0xffff, "write_entries: name too long");
    write_pod<uint16_t>(out, uint16_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_tensor(out, t);
  }
}

NamedTensors read_entries(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  check(in.gcount() == 4 && std::memcmp(magic, kContainerMagic, 4) == 0,
        "read_entries: bad magic (want SR4C)");
  const uint32_t count = read_pod<uint32_t>(in, "entry count");
  check(count <= 1u << 20, "read_entries: implausible entry count");
  NamedTensors out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t len = read_pod<uint16_t>(in, "name length");
    std::string name(len, '\0');
    in.read(name.data(), len);
    check(in.gcount() == std::streamsize(len), "read_entries: truncated name");
    out.emplace_back(std::move(name), read_tensor(in));
  }
  return out;
}

void save_params(const std::string& path, const ParamSet<float>& params) {
  std::ofstream f(path, std::ios::binary);
  check(f.good(), "save_params: cannot open " + path);
  NamedTensors entries;
  for (const auto& [n, t] : params.entries) entries.emplace_back(n, t);
  write_entries(f, entries);
  check(f.good(), "save_params: write failed for " + path);
}

ParamSet<float> load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(f.good(), "load_params: cannot open " + path);
  ParamSet<float> ps;
  for (auto& [n, t] : read_entries(f)) ps.add(n, std::move(t));
  return ps;
}

}  // namespace sr4ir
