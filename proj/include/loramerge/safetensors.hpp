// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace loramerge {

// Container layout: 8-byte little-endian header length H, then H bytes of
// UTF-8 JSON mapping tensor key -> {"dtype", "shape", "data_offsets"} plus an
// optional "__metadata__" string map, then the raw tensor buffer addressed by
// the offsets. Payloads are row-major little-endian. The writer emits keys in
// sorted order with no padding between tensors and always stores F32.

struct TensorEntry {
    std::string dtype;
    std::vector<std::int64_t> shape;
    std::vector<std::uint8_t> raw;  // payload bytes, little-endian
};

struct SafetensorsDoc {
    std::map<std::string, TensorEntry> tensors;
    std::map<std::string, std::string> metadata;
};

SafetensorsDoc read_safetensors(const std::filesystem::path& path);

/// All tensors must be F32 with raw sized 4*numel. Writes to a temporary
/// file and renames on success, so failed runs leave no partial output.
void write_safetensors(const std::filesystem::path& path, const SafetensorsDoc& doc);

// Exact IEEE-754 widenings (every half/bfloat16 value is representable in
// single precision).
float f16_to_f32(std::uint16_t bits);
float bf16_to_f32(std::uint16_t bits);

}  // namespace loramerge
