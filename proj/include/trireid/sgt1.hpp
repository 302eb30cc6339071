#pragma once

#include <string>

#include "trireid/tensor.hpp"

namespace trireid {

/// Binary tensor file: magic "SGT1", u8 rank, rank x u32 little-endian dims,
/// then row-major f32 little-endian payload. Values pass through f32, so a
/// write/read roundtrip is lossy beyond single precision.
void write_sgt1(const std::string& path, const Tensor& t);

/// Rejects bad magic, absurd ranks or dims, truncated payloads, and trailing
/// bytes, naming the file and byte offset.
Tensor read_sgt1(const std::string& path);

}  // namespace trireid
