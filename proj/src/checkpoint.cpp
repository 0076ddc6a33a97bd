#include "cpmf/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <vector>

#include "cpmf/digest.hpp"
#include "cpmf/errors.hpp"

namespace cpmf {

namespace {

constexpr char kMagic[] = "CPM1\n";

std::string shape_string(const Tensor& t) {
  std::string s;
  for (std::size_t i = 0; i < t.shape().size(); ++i) {
    if (i) s.push_back('x');
    s += std::to_string(t.shape()[i]);
  }
  return s;
}

void write_f64_le(std::ostream& out, const double* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, data + i, 8);
    for (int b = 0; b < 8; ++b)
      buf[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
}

void read_f64_le(std::istream& in, double* data, std::size_t n) {
  std::vector<unsigned char> buf(n * 8);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size()));
  if (static_cast<std::size_t>(in.gcount()) != buf.size())
    throw FormatError("checkpoint payload truncated");
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b)
      bits |= static_cast<std::uint64_t>(buf[i * 8 + b]) << (8 * b);
    std::memcpy(data + i, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Parameters& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out << kMagic;
  std::size_t offset = 0;
  params.for_each_tensor([&](const std::string& name, const Tensor& t) {
    out << name << ' ' << shape_string(t) << ' ' << t.size() << ' ' << offset
        << '\n';
    offset += t.size() * 8;
  });
  out << '\n';
  params.for_each_tensor([&](const std::string&, const Tensor& t) {
    write_f64_le(out, t.data(), t.size());
  });
  if (!out) throw IoError("failed writing checkpoint: " + path);
}

Parameters load_checkpoint(const std::string& path, const ModelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[5];
  in.read(magic, 5);
  if (in.gcount() != 5 || std::memcmp(magic, kMagic, 5) != 0)
    throw FormatError("not a CPM1 checkpoint: " + path);

  struct Entry {
    std::string shape;
    std::size_t count;
    std::size_t offset;
  };
  std::unordered_map<std::string, Entry> manifest;
  std::string line;
  while (std::getline(in, line) && !line.empty()) {
    std::istringstream ls(line);
    std::string name;
    Entry e;
    if (!(ls >> name >> e.shape >> e.count >> e.offset))
      throw FormatError("bad manifest line: " + line);
    if (!manifest.emplace(name, e).second)
      throw FormatError("duplicate tensor in manifest: " + name);
  }

  Parameters params = Parameters::zeros(config);
  const std::streampos payload_start = in.tellg();
  params.for_each_tensor([&](const std::string& name, Tensor& t) {
    auto it = manifest.find(name);
    if (it == manifest.end())
      throw FormatError("checkpoint is missing tensor: " + name);
    const Entry& e = it->second;
    if (e.count != t.size() || e.shape != shape_string(t))
      throw ShapeError("tensor " + name + " has shape " + e.shape +
                       ", expected " + shape_string(t));
    in.seekg(payload_start + static_cast<std::streamoff>(e.offset));
    read_f64_le(in, t.data(), t.size());
    manifest.erase(it);
  });
  if (!manifest.empty())
    throw FormatError("checkpoint holds unknown tensor: " +
                      manifest.begin()->first);
  return params;
}

std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file for digest: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a(buf.str());
}

std::string digest_hex(std::uint64_t digest) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(digest));
  return buf;
}

}  // namespace cpmf
