#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <utility>

#include "mmkd/errors.hpp"
#include "mmkd/model.hpp"

namespace mmkd {

/// Binary parameter container: "MMKDCKP1", u32 entry count, then per entry
/// u32-length-prefixed role and name strings, u64 rows, u64 cols, and the raw
/// doubles in Eigen's column-major storage order. Little-endian throughout;
/// round-trips bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'K', 'D', 'C', 'K', 'P', '1'};

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }

inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in) {
  const std::uint32_t len = read_u32(in);
  std::string s(len, '\0');
  in.read(s.data(), len);
  return s;
}

struct StoredBlock {
  Eigen::Index rows = 0, cols = 0;
  Eigen::MatrixXd values;
};

}  // namespace detail

template <class Net>
void save_checkpoint(const std::string& path, const Net& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("save_checkpoint: cannot open " + path);
  out.write(kCheckpointMagic, 8);
  std::uint32_t count = 0;
  visit_params(net, [&](const char*, const std::string&, const auto&) { ++count; });
  detail::write_u32(out, count);
  visit_params(net, [&](const char* role, const std::string& name, const auto& block) {
    detail::write_string(out, role);
    detail::write_string(out, name);
    detail::write_u64(out, static_cast<std::uint64_t>(block.rows()));
    detail::write_u64(out, static_cast<std::uint64_t>(block.cols()));
    out.write(reinterpret_cast<const char*>(block.data()),
              static_cast<std::streamsize>(block.size() * sizeof(double)));
  });
  if (!out) throw ConfigError("save_checkpoint: write failed for " + path);
}

/// Loads into an already-shaped net; every stored entry must match a
/// parameter block by (role, name) with identical shape, with none left over
/// on either side.
template <class Net>
void load_checkpoint(const std::string& path, Net* net) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("load_checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || !std::equal(magic, magic + 8, kCheckpointMagic)) {
    throw ConfigError("load_checkpoint: " + path + " is not a checkpoint file");
  }
  const std::uint32_t count = detail::read_u32(in);
  std::map<std::pair<std::string, std::string>, detail::StoredBlock> stored;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::string role = detail::read_string(in);
    const std::string name = detail::read_string(in);
    detail::StoredBlock block;
    block.rows = static_cast<Eigen::Index>(detail::read_u64(in));
    block.cols = static_cast<Eigen::Index>(detail::read_u64(in));
    block.values.resize(block.rows, block.cols);
    in.read(reinterpret_cast<char*>(block.values.data()),
            static_cast<std::streamsize>(block.values.size() * sizeof(double)));
    if (!in) throw ConfigError("load_checkpoint: truncated file " + path);
    stored[{role, name}] = std::move(block);
  }
  visit_params(*net, [&](const char* role, const std::string& name, auto& block) {
    const auto it = stored.find({role, name});
    if (it == stored.end()) throw ConfigError("load_checkpoint: missing entry " + std::string(role) + "/" + name);
    if (it->second.rows != block.rows() || it->second.cols != block.cols()) {
      throw ConfigError("load_checkpoint: shape mismatch for " + std::string(role) + "/" + name +
                        " (checkpoint does not match the configured model sizes)");
    }
    block = it->second.values;
    stored.erase(it);
  });
  if (!stored.empty()) {
    throw ConfigError("load_checkpoint: checkpoint holds extra entry " + stored.begin()->first.first + "/" +
                      stored.begin()->first.second);
  }
}

}  // namespace mmkd
