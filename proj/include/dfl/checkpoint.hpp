#pragma once

#include <cstdint>
#include <string>

#include "dfl/params.hpp"

namespace dfl {

/// Flat binary parameter container, magic "DFL1". Per-parameter record:
/// u64-LE name length, UTF-8 name bytes, u64-LE rank, u64-LE dims,
/// f64-LE data. Records run to end of file. Round-trips bit-exactly.
void save_checkpoint(const ParameterSet& params, const std::string& path);

/// Reads a DFL1 container. Entries come back trainable and unfrozen;
/// callers re-apply freezing as needed.
ParameterSet load_checkpoint(const std::string& path);

std::string encode_checkpoint(const ParameterSet& params);
ParameterSet decode_checkpoint(const std::string& bytes);

}  // namespace dfl
