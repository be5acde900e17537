#include "spg/spgt.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "spg/error.hpp"

namespace spg {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

bool get_u32(std::istream& is, std::uint32_t& v) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
  v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
      (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
  return true;
}

std::uint32_t get_u32_or_throw(std::istream& is, const char* what) {
  std::uint32_t v = 0;
  if (!get_u32(is, v)) throw IoError(std::string("SPGT: truncated while reading ") + what);
  return v;
}

template <typename T>
std::vector<std::uint32_t> dims_of(const Tensor<T>& t) {
  const Shape& s = t.shape();
  return {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
          static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
}

template <typename T>
Tensor<T> to_tensor(const RawTensor& raw) {
  if (raw.dims.size() > 4) throw IoError("SPGT: rank " + std::to_string(raw.dims.size()) + " > 4");
  int d[4] = {1, 1, 1, 1};
  const std::size_t pad = 4 - raw.dims.size();
  for (std::size_t i = 0; i < raw.dims.size(); ++i) d[pad + i] = static_cast<int>(raw.dims[i]);
  std::vector<T> values(raw.values.begin(), raw.values.end());
  return Tensor<T>(Shape{d[0], d[1], d[2], d[3]}, std::move(values));
}

template <typename T>
std::vector<float> to_floats(const Tensor<T>& t) {
  return std::vector<float>(t.storage().begin(), t.storage().end());
}

}  // namespace

void write_spgt(std::ostream& os, const std::vector<std::uint32_t>& dims, const std::vector<float>& values) {
  os.write("SPGT", 4);
  put_u32(os, kSpgtVersion);
  put_u32(os, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u32(os, d);
  for (float v : values) put_u32(os, std::bit_cast<std::uint32_t>(v));
}

RawTensor read_spgt(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4)) throw IoError("SPGT: truncated header");
  if (std::memcmp(magic, "SPGT", 4) != 0) throw IoError("SPGT: bad magic");
  const std::uint32_t version = get_u32_or_throw(is, "version");
  if (version != kSpgtVersion) throw IoError("SPGT: unsupported version " + std::to_string(version));
  const std::uint32_t rank = get_u32_or_throw(is, "rank");
  if (rank > 8) throw IoError("SPGT: implausible rank " + std::to_string(rank));
  RawTensor raw;
  std::size_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    raw.dims.push_back(get_u32_or_throw(is, "dims"));
    count *= raw.dims.back();
  }
  if (count > (std::size_t{1} << 32)) throw IoError("SPGT: implausible element count");
  raw.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) raw.values[i] = std::bit_cast<float>(get_u32_or_throw(is, "values"));
  return raw;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp.string() + " for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t) {
  std::ostringstream os(std::ios::binary);
  write_spgt(os, dims_of(t), to_floats(t));
  write_file_atomic(path, os.str());
}

template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return to_tensor<T>(read_spgt(is));
}

template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path) {
  std::ostringstream os(std::ios::binary);
  for (const auto& [name, entry] : store.entries()) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_spgt(os, dims_of(entry.var.value()), to_floats(entry.var.value()));
  }
  write_file_atomic(path, os.str());
}

template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  std::set<std::string> seen;
  std::vector<std::pair<std::string, Tensor<T>>> loaded;
  while (true) {
    std::uint32_t len = 0;
    if (!get_u32(is, len)) {
      if (is.gcount() != 0) throw IoError("checkpoint truncated inside a name length");
      break;
    }
    if (len > 4096) throw IoError("checkpoint: implausible name length " + std::to_string(len));
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw IoError("checkpoint truncated inside a tensor name");
    RawTensor raw;
    try {
      raw = read_spgt(is);
    } catch (const IoError& e) {
      throw IoError("checkpoint tensor '" + name + "': " + e.what());
    }
    if (!store.contains(name)) throw IoError("checkpoint has unexpected tensor '" + name + "'");
    if (!seen.insert(name).second) throw IoError("checkpoint repeats tensor '" + name + "'");
    Tensor<T> t = to_tensor<T>(raw);
    const Shape want = store.get(name).shape();
    if (raw.dims.size() != 4 || !(t.shape() == want))
      throw IoError("checkpoint tensor '" + name + "' has dims " + t.shape().str() + ", expected " +
                    want.str());
    loaded.emplace_back(name, std::move(t));
  }
  for (const auto& [name, entry] : store.entries())
    if (!seen.count(name)) throw IoError("checkpoint is missing tensor '" + name + "'");
  for (auto& [name, t] : loaded) store.get(name).mutable_value() = std::move(t);
}

template void save_tensor(const std::filesystem::path&, const Tensor<float>&);
template void save_tensor(const std::filesystem::path&, const Tensor<double>&);
template Tensor<float> load_tensor(const std::filesystem::path&);
template Tensor<double> load_tensor(const std::filesystem::path&);
template void save_checkpoint(const ParamStore<float>&, const std::filesystem::path&);
template void save_checkpoint(const ParamStore<double>&, const std::filesystem::path&);
template void load_checkpoint(ParamStore<float>&, const std::filesystem::path&);
template void load_checkpoint(ParamStore<double>&, const std::filesystem::path&);

}  // namespace spg
