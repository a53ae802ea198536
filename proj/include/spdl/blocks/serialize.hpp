#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "spdl/blocks/network.hpp"

namespace spdl::blocks {

// Binary network container, version 1, all integers and reals little-endian:
//
//   "SPDLNET1"                      8-byte magic
//   u32 version                     (= 1)
//   u32 block_count
//   per block:
//     u8  kind tag                  (BlockKind value)
//     u8  activation tag            (Activation value)
//     f64 step size h
//     u32 in_dim, u32 out_dim, u32 width
//     u64 param_count
//     f64 params[param_count]
inline constexpr std::uint32_t kNetworkFormatVersion = 1;

void write_network(std::ostream& os, const Network& net);
Network read_network(std::istream& is);

void save_network(const std::filesystem::path& path, const Network& net);
Network load_network(const std::filesystem::path& path);

}  // namespace spdl::blocks
