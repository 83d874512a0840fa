// SPDX-License-Identifier: Apache-2.0
//
// Binary snapshot layout (host byte order, little-endian on supported targets):
//   "FWFMSNAP" | u32 version | config (u64 x8, f64 x2) | u64 count |
//   count x { u64 name_len | name | u64 rank | u64 dims[rank] | f64 values[] }
#include <cstdint>
#include <cstring>
#include <fstream>

#include "fedwing/error.hpp"
#include "fedwing/fm.hpp"
#include "fedwing/rng.hpp"

namespace fedwing {
namespace {

constexpr char kMagic[8] = {'F', 'W', 'F', 'M', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t kVersion = 1;
const char* kModule = "transformer-fm";

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) fail(kModule, "truncated snapshot");
  return value;
}

}  // namespace

void FoundationModel::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(kModule, "cannot open snapshot for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kVersion);
  for (std::uint64_t v : {config_.feature_dim, config_.embed_dim, config_.heads, config_.ffn_dim,
                          config_.layers, config_.max_length, config_.norm_groups,
                          std::size_t{0}}) {
    put<std::uint64_t>(os, v);
  }
  put<double>(os, config_.dropout);
  put<double>(os, config_.norm_eps);
  put<std::uint64_t>(os, params_.size());
  for (const auto& [name, t] : params_) {
    put<std::uint64_t>(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint64_t>(os, t.rank());
    for (std::size_t d : t.shape()) put<std::uint64_t>(os, d);
    const auto v = t.values();
    os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
  }
  if (!os) fail(kModule, "failed writing snapshot: " + path);
}

FoundationModel FoundationModel::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(kModule, "cannot open snapshot: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) fail(kModule, "not an FM snapshot: " + path);
  const auto version = get<std::uint32_t>(is);
  if (version != kVersion) fail(kModule, "unsupported snapshot version " + std::to_string(version));
  FoundationModel m;
  m.config_.feature_dim = get<std::uint64_t>(is);
  m.config_.embed_dim = get<std::uint64_t>(is);
  m.config_.heads = get<std::uint64_t>(is);
  m.config_.ffn_dim = get<std::uint64_t>(is);
  m.config_.layers = get<std::uint64_t>(is);
  m.config_.max_length = get<std::uint64_t>(is);
  m.config_.norm_groups = get<std::uint64_t>(is);
  (void)get<std::uint64_t>(is);  // reserved
  m.config_.dropout = get<double>(is);
  m.config_.norm_eps = get<double>(is);
  m.config_.validate();
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = get<std::uint64_t>(is);
    if (len > 4096) fail(kModule, "corrupt parameter name in snapshot");
    std::string name(len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(len));
    const auto rank = get<std::uint64_t>(is);
    if (rank > 8) fail(kModule, "corrupt parameter rank in snapshot");
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(is);
    std::vector<double> values(shape_numel(shape));
    is.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!is) fail(kModule, "truncated snapshot data for " + name);
    m.add_parameter(std::move(name), Tensor::from(std::move(shape), std::move(values)));
  }
  // The architecture is fixed by the config; reject snapshots that disagree.
  Rng rng(0);
  const FoundationModel reference = initialize(m.config_, rng);
  if (reference.params_.size() != m.params_.size()) fail(kModule, "snapshot parameter set mismatch");
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    if (reference.params_[i].first != m.params_[i].first ||
        reference.params_[i].second.shape() != m.params_[i].second.shape()) {
      fail(kModule, "snapshot parameter '" + m.params_[i].first + "' does not match its config");
    }
  }
  return m;
}

}  // namespace fedwing
