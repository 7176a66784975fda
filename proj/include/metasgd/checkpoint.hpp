#pragma once

#include <string>

#include "metasgd/models.hpp"

namespace metasgd {

/// Binary format: magic "MSGDCKPT", u32 LE version (1), u32 LE array count;
/// per array: u16 LE name length, UTF-8 name, u8 rank, rank u64 LE dims,
/// then the f64 LE values. Written to a temp file and renamed into place.
void save_checkpoint(const std::string& path, const ParamSet& arrays);

/// Bit-exact inverse of save_checkpoint. Throws IoError on a missing file,
/// bad magic or version, truncation, or implausible dims.
ParamSet load_checkpoint(const std::string& path);

}  // namespace metasgd
