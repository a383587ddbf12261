#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "attnforge/encoder.hpp"

namespace attnforge {

/// Binary checkpoint layout (all integers little-endian):
///
///   "ATNF"                      4 bytes magic
///   version                     u32 (currently 1)
///   header_len, header          u32 + UTF-8 JSON {"config": ..., "trained_steps": ...}
///   repeated until EOF, in ModelParams::for_each_param order:
///     name_len, name            u32 + UTF-8
///     count                     u64 element count
///     values                    count × f64
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(std::ostream& out, const ModelParams<double>& params);
void save_checkpoint(const std::filesystem::path& path, const ModelParams<double>& params);

/// Throws InputError on a malformed or truncated stream and ConfigError on an
/// invalid embedded config.
ModelParams<double> load_checkpoint(std::istream& in);
ModelParams<double> load_checkpoint(const std::filesystem::path& path);

}  // namespace attnforge
