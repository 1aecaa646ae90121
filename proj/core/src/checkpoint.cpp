#include "moma/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace moma {

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

void write_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

std::uint32_t read_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw FormatError("checkpoint: truncated file");
  }
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
    throw FormatError("checkpoint: truncated file");
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_u64(in));
}

std::string read_string(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  std::string s(len, '\0');
  if (len && !in.read(s.data(), len)) {
    throw FormatError("checkpoint: truncated file");
  }
  return s;
}

}  // namespace

bool Checkpoint::has(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : entries) {
    if (n == name) return t;
  }
  throw SchemaError("checkpoint: missing tensor '" + name + "'");
}

void Checkpoint::put(const std::string& name, Tensor tensor) {
  entries.emplace_back(name, std::move(tensor));
}

std::vector<std::pair<std::string, Tensor>> Checkpoint::with_prefix(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, tensor] : entries) {
    if (name.rfind(prefix, 0) == 0) {
      out.emplace_back(name.substr(prefix.size()), tensor);
    }
  }
  return out;
}

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open " + path.string());
  out.write(Checkpoint::kMagic, sizeof(Checkpoint::kMagic));
  write_u32(out, Checkpoint::kVersion);
  write_u32(out, static_cast<std::uint32_t>(checkpoint.config_text.size()));
  out.write(checkpoint.config_text.data(),
            static_cast<std::streamsize>(checkpoint.config_text.size()));
  write_u32(out, static_cast<std::uint32_t>(checkpoint.entries.size()));
  for (const auto& [name, tensor] : checkpoint.entries) {
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (std::size_t extent : tensor.shape()) write_u64(out, extent);
    for (double v : tensor.values()) write_f64(out, v);
  }
  if (!out) throw FormatError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  char magic[sizeof(Checkpoint::kMagic)];
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, Checkpoint::kMagic, sizeof(magic)) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  const std::uint32_t version = read_u32(in);
  if (version != Checkpoint::kVersion) {
    throw FormatError("checkpoint: unsupported version " +
                      std::to_string(version));
  }
  Checkpoint checkpoint;
  checkpoint.config_text = read_string(in);
  const std::uint32_t count = read_u32(in);
  checkpoint.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(in);
    const std::uint32_t rank = read_u32(in);
    Shape shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<std::size_t>(read_u64(in));
      numel *= shape[d];
    }
    std::vector<double> values(numel);
    for (double& v : values) v = read_f64(in);
    checkpoint.entries.emplace_back(
        name, Tensor::from_values(std::move(shape), std::move(values)));
  }
  // Anything after the declared entries means the writer and reader disagree.
  char extra;
  if (in.read(&extra, 1)) {
    throw FormatError("checkpoint: trailing bytes in " + path.string());
  }
  return checkpoint;
}

Tensor pack_u64(const std::vector<std::uint64_t>& words) {
  const std::size_t count = words.size();
  std::vector<double> values(count);
  for (std::size_t i = 0; i < count; ++i) {
    values[i] = std::bit_cast<double>(words[i]);
  }
  return Tensor::from_values({count}, std::move(values));
}

std::vector<std::uint64_t> unpack_u64(const Tensor& tensor) {
  std::vector<std::uint64_t> words(tensor.numel());
  auto values = tensor.values();
  for (std::size_t i = 0; i < words.size(); ++i) {
    words[i] = std::bit_cast<std::uint64_t>(values[i]);
  }
  return words;
}

}  // namespace moma
