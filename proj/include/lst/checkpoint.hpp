#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lst/matrix.hpp"
#include "lst/network.hpp"

namespace lst {

/// Versioned binary container of named tensors and scalars, stamped with the
/// network config digest. Layout (native little-endian):
///   "LSTCKPT\0" | u32 version | u64 digest
///   u32 n_scalars  { u32 len | name | f64 }
///   u32 n_tensors  { u32 len | name | u64 rows | u64 cols | f64[rows*cols] }
struct Checkpoint {
  std::uint64_t digest = 0;
  std::map<std::string, double> scalars;
  std::vector<std::pair<std::string, Matrix>> tensors;

  const Matrix* find(const std::string& name) const;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws DataError on a bad magic, version, or truncated file.
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Appends every parameter tensor under `prefix`.
void store_params(Checkpoint& ckpt, const net::WNetParams& params, const std::string& prefix = "param/");

/// Fills `params` (already shaped by init_params) from the checkpoint. Throws
/// ConfigError on a digest mismatch and DataError on a missing tensor or a
/// shape mismatch.
void restore_params(const Checkpoint& ckpt, const net::NetConfig& config, net::WNetParams& params,
                    const std::string& prefix = "param/");

}  // namespace lst
