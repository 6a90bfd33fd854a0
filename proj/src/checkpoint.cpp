#include "lst/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include "lst/errors.hpp"

namespace lst {
namespace {

constexpr std::array<char, 8> kMagic = {'L', 'S', 'T', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
  put(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw DataError(path + ": truncated checkpoint");
  return v;
}

std::string get_string(std::istream& is, const std::string& path) {
  const auto len = get<std::uint32_t>(is, path);
  if (len > (1u << 16)) throw DataError(path + ": corrupt name length");
  std::string s(len, '\0');
  if (!is.read(s.data(), len)) throw DataError(path + ": truncated checkpoint");
  return s;
}

}  // namespace

const Matrix* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kMagic.data(), kMagic.size());
  put(os, kCheckpointVersion);
  put(os, ckpt.digest);
  put(os, static_cast<std::uint32_t>(ckpt.scalars.size()));
  for (const auto& [name, v] : ckpt.scalars) {
    put_string(os, name);
    put(os, v);
  }
  put(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, m] : ckpt.tensors) {
    put_string(os, name);
    put(os, static_cast<std::uint64_t>(m.rows()));
    put(os, static_cast<std::uint64_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw DataError("write to " + path.string() + " failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint " + p);
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) throw DataError(p + ": not a checkpoint file");
  const auto version = get<std::uint32_t>(is, p);
  if (version != kCheckpointVersion) {
    throw DataError(p + ": checkpoint version " + std::to_string(version) + ", expected " +
                    std::to_string(kCheckpointVersion));
  }
  Checkpoint ckpt;
  ckpt.digest = get<std::uint64_t>(is, p);
  const auto n_scalars = get<std::uint32_t>(is, p);
  for (std::uint32_t i = 0; i < n_scalars; ++i) {
    std::string name = get_string(is, p);
    ckpt.scalars[name] = get<double>(is, p);
  }
  const auto n_tensors = get<std::uint32_t>(is, p);
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = get_string(is, p);
    const auto rows = get<std::uint64_t>(is, p);
    const auto cols = get<std::uint64_t>(is, p);
    if (rows * cols > (1ull << 28)) throw DataError(p + ": tensor " + name + " is implausibly large");
    Matrix m(rows, cols);
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw DataError(p + ": truncated tensor " + name);
    }
    ckpt.tensors.emplace_back(std::move(name), std::move(m));
  }
  return ckpt;
}

void store_params(Checkpoint& ckpt, const net::WNetParams& params, const std::string& prefix) {
  net::for_each_tensor(params, [&](const std::string& name, const Matrix& m) {
    ckpt.tensors.emplace_back(prefix + name, m);
  });
}

void restore_params(const Checkpoint& ckpt, const net::NetConfig& config, net::WNetParams& params,
                    const std::string& prefix) {
  if (ckpt.digest != config.digest()) {
    throw ConfigError("checkpoint config digest " + std::to_string(ckpt.digest) +
                      " does not match the configured network (" + std::to_string(config.digest()) + ")");
  }
  net::for_each_tensor(params, [&](const std::string& name, Matrix& m) {
    const Matrix* src = ckpt.find(prefix + name);
    if (src == nullptr) throw DataError("checkpoint lacks tensor " + prefix + name);
    if (!src->same_shape(m)) {
      throw DataError("checkpoint tensor " + prefix + name + " is " + src->shape_string() + ", expected " +
                      m.shape_string());
    }
    m = *src;
  });
}

}  // namespace lst
