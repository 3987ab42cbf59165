// SPDX-License-Identifier: Apache-2.0
#include "loramerge/safetensors.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "loramerge/errors.hpp"

namespace loramerge {

namespace {

using nlohmann::json;

std::size_t dtype_size(const std::string& dtype) {
    if (dtype == "F32") return 4;
    if (dtype == "F16" || dtype == "BF16") return 2;
    return 0;  // unknown: length left unchecked, adapter layer decides
}

std::uint64_t read_u64_le(const std::uint8_t* p) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return v;
}

}  // namespace

float f16_to_f32(std::uint16_t bits) {
    const std::uint32_t sign = (bits >> 15) & 0x1u;
    const std::uint32_t exp = (bits >> 10) & 0x1fu;
    const std::uint32_t mant = bits & 0x3ffu;
    float out;
    if (exp == 0) {
        // subnormal or zero: value = mant * 2^-24, exact in f32
        out = static_cast<float>(mant) * 0x1.0p-24f;
        return sign ? -out : out;
    }
    if (exp == 31) {
        if (mant == 0) {
            return sign ? -std::numeric_limits<float>::infinity()
                        : std::numeric_limits<float>::infinity();
        }
        return std::numeric_limits<float>::quiet_NaN();
    }
    const std::uint32_t u = (sign << 31) | ((exp - 15 + 127) << 23) | (mant << 13);
    std::memcpy(&out, &u, 4);
    return out;
}

float bf16_to_f32(std::uint16_t bits) {
    const std::uint32_t u = static_cast<std::uint32_t>(bits) << 16;
    float out;
    std::memcpy(&out, &u, 4);
    return out;
}

SafetensorsDoc read_safetensors(const std::filesystem::path& path) {
    std::ifstream file(path, std::ios::binary);
    if (!file) {
        throw IoError("cannot open " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(file)),
                                    std::istreambuf_iterator<char>());
    if (file.bad()) {
        throw IoError("read failure on " + path.string());
    }

    if (bytes.size() < 8) {
        throw FormatError(path.string() + ": header length field truncated", 0);
    }
    const std::uint64_t header_len = read_u64_le(bytes.data());
    if (header_len > bytes.size() - 8) {
        throw FormatError(path.string() + ": header length " + std::to_string(header_len) +
                              " exceeds file size " + std::to_string(bytes.size()),
                          8);
    }

    json header;
    try {
        header = json::parse(bytes.begin() + 8,
                             bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": header JSON parse error: " + e.what(),
                          8 + (e.byte > 0 ? e.byte - 1 : 0));
    }
    if (!header.is_object()) {
        throw FormatError(path.string() + ": header JSON is not an object", 8);
    }

    const std::size_t buffer_begin = 8 + header_len;
    const std::size_t buffer_size = bytes.size() - buffer_begin;

    SafetensorsDoc doc;
    for (const auto& [key, info] : header.items()) {
        if (key == "__metadata__") {
            if (!info.is_object()) {
                throw FormatError(path.string() + ": __metadata__ is not an object", 8);
            }
            for (const auto& [mk, mv] : info.items()) {
                if (!mv.is_string()) {
                    throw FormatError(path.string() + ": __metadata__ value for '" + mk +
                                          "' is not a string",
                                      8);
                }
                doc.metadata[mk] = mv.get<std::string>();
            }
            continue;
        }
        if (!info.is_object() || !info.contains("dtype") || !info.contains("shape") ||
            !info.contains("data_offsets")) {
            throw FormatError(path.string() + ": tensor '" + key +
                                  "' is missing dtype/shape/data_offsets",
                              8);
        }
        TensorEntry entry;
        entry.dtype = info["dtype"].get<std::string>();
        std::uint64_t numel = 1;
        for (const auto& d : info["shape"]) {
            const auto dim = d.get<std::int64_t>();
            if (dim < 0) {
                throw FormatError(path.string() + ": tensor '" + key + "' has negative dimension",
                                  8);
            }
            entry.shape.push_back(dim);
            numel *= static_cast<std::uint64_t>(dim);
        }
        const auto& offsets = info["data_offsets"];
        if (!offsets.is_array() || offsets.size() != 2) {
            throw FormatError(path.string() + ": tensor '" + key + "' has malformed data_offsets",
                              8);
        }
        const auto begin = offsets[0].get<std::uint64_t>();
        const auto end = offsets[1].get<std::uint64_t>();
        if (begin > end || end > buffer_size) {
            throw FormatError(path.string() + ": tensor '" + key + "' offsets [" +
                                  std::to_string(begin) + ", " + std::to_string(end) +
                                  ") fall outside the data buffer",
                              buffer_begin + static_cast<std::size_t>(begin));
        }
        const std::size_t expect = dtype_size(entry.dtype) * numel;
        if (dtype_size(entry.dtype) != 0 && expect != end - begin) {
            throw FormatError(path.string() + ": tensor '" + key + "' declares " +
                                  std::to_string(expect) + " bytes but offsets span " +
                                  std::to_string(end - begin),
                              buffer_begin + static_cast<std::size_t>(begin));
        }
        entry.raw.assign(bytes.begin() + static_cast<std::ptrdiff_t>(buffer_begin + begin),
                         bytes.begin() + static_cast<std::ptrdiff_t>(buffer_begin + end));
        doc.tensors.emplace(key, std::move(entry));
    }
    return doc;
}

void write_safetensors(const std::filesystem::path& path, const SafetensorsDoc& doc) {
    json header = json::object();
    std::uint64_t offset = 0;
    for (const auto& [key, entry] : doc.tensors) {
        if (entry.dtype != "F32") {
            throw ValidationError("write_safetensors: tensor '" + key +
                                  "' is not F32; the writer stores F32 only");
        }
        std::uint64_t numel = 1;
        for (auto d : entry.shape) numel *= static_cast<std::uint64_t>(d);
        if (entry.raw.size() != numel * 4) {
            throw ValidationError("write_safetensors: tensor '" + key + "' payload size " +
                                  std::to_string(entry.raw.size()) + " does not match shape");
        }
        header[key] = {{"dtype", "F32"},
                       {"shape", entry.shape},
                       {"data_offsets", {offset, offset + entry.raw.size()}}};
        offset += entry.raw.size();
    }
    if (!doc.metadata.empty()) {
        header["__metadata__"] = doc.metadata;
    }
    const std::string header_str = header.dump();

    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        const std::uint64_t header_len = header_str.size();
        std::uint8_t len_bytes[8];
        for (int i = 0; i < 8; ++i) {
            len_bytes[i] = static_cast<std::uint8_t>(header_len >> (8 * i));
        }
        out.write(reinterpret_cast<const char*>(len_bytes), 8);
        out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
        for (const auto& [key, entry] : doc.tensors) {
            (void)key;
            out.write(reinterpret_cast<const char*>(entry.raw.data()),
                      static_cast<std::streamsize>(entry.raw.size()));
        }
        out.flush();
        if (!out) {
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError("write failure on " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError("cannot move " + tmp.string() + " to " + path.string());
    }
}

}  // namespace loramerge
