#pragma once

#include <filesystem>
#include <iosfwd>

#include "reefgrad/network.hpp"

namespace reefgrad {

// Weight file format (little-endian throughout):
//   magic "RNWT", u32 version = 1, u32 record count, then per record:
//   u32 name length, UTF-8 name, u8 dtype (0 = 32-bit float), u32 ndim,
//   ndim x u32 dims, raw little-endian element data in row-major order.
// Records cover every parameter and every batchnorm running statistic.

void save_weights(const Network& network, std::ostream& out);
void save_weights_file(const Network& network, const std::filesystem::path& path);

/// Fully validates the stream against the target network (names, shapes,
/// dtypes, record set) before committing; a failed load leaves the network
/// untouched.
void load_weights(Network& network, std::istream& in);
void load_weights_file(Network& network, const std::filesystem::path& path);

} // namespace reefgrad
