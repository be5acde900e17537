#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "spg/autograd.hpp"

namespace spg {

// "SPGT" tensor files: magic, u32 version (1), u32 rank, rank x u32 dims,
// then little-endian float32 values in row-major order.
inline constexpr std::uint32_t kSpgtVersion = 1;

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

void write_spgt(std::ostream& os, const std::vector<std::uint32_t>& dims, const std::vector<float>& values);
RawTensor read_spgt(std::istream& is);

template <typename T>
void save_tensor(const std::filesystem::path& path, const Tensor<T>& t);
/// Loads a rank <= 4 tensor; lower ranks are left-padded with ones.
template <typename T>
Tensor<T> load_tensor(const std::filesystem::path& path);

/// Checkpoint = sequence of (u32 name length, name bytes, SPGT record) in
/// name order. Written to a temporary file and renamed into place.
template <typename T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path);

/// Loads into an already-constructed store; every expected name must be
/// present with matching dims and no extra names may appear.
template <typename T>
void load_checkpoint(ParamStore<T>& store, const std::filesystem::path& path);

/// Writes `bytes` to `path` via write-temp-then-rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

}  // namespace spg
