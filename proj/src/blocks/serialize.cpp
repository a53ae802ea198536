#include "spdl/blocks/serialize.hpp"

#include <fstream>

#include "spdl/numcore/binary_io.hpp"

namespace spdl::blocks {

void write_network(std::ostream& os, const Network& net) {
  io::write_magic(os, "SPDLNET1");
  io::write_u32(os, kNetworkFormatVersion);
  io::write_u32(os, static_cast<std::uint32_t>(net.size()));
  for (const auto& b : net.blocks()) {
    io::write_u8(os, static_cast<std::uint8_t>(b.kind()));
    io::write_u8(os, static_cast<std::uint8_t>(b.activation()));
    io::write_f64(os, b.step());
    io::write_u32(os, static_cast<std::uint32_t>(b.in_dim()));
    io::write_u32(os, static_cast<std::uint32_t>(b.out_dim()));
    io::write_u32(os, static_cast<std::uint32_t>(b.width()));
    io::write_u64(os, b.num_params());
    for (double v : b.params()) io::write_f64(os, v);
  }
}

Network read_network(std::istream& is) {
  io::expect_magic(is, "SPDLNET1");
  const auto version = io::read_u32(is);
  if (version != kNetworkFormatVersion) {
    throw io::FormatError("network container: unsupported version " + std::to_string(version));
  }
  const auto count = io::read_u32(is);
  Network net;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto kind = io::read_u8(is);
    const auto act = io::read_u8(is);
    if (kind > 5 || act > 2) throw io::FormatError("network container: invalid block tag");
    const double h = io::read_f64(is);
    const auto in = io::read_u32(is);
    const auto out = io::read_u32(is);
    const auto width = io::read_u32(is);
    const auto n = io::read_u64(is);
    if (n > (std::uint64_t{1} << 32)) throw io::FormatError("network container: implausible size");
    std::vector<double> params(n);
    for (auto& v : params) v = io::read_f64(is);
    net.add(Block::make(static_cast<BlockKind>(kind), static_cast<Activation>(act), h, in, out,
                        width, std::move(params)));
  }
  return net;
}

void save_network(const std::filesystem::path& path, const Network& net) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_network(os, net);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_network(is);
}

}  // namespace spdl::blocks
