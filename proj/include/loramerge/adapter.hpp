// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "loramerge/matrix.hpp"

namespace loramerge {

/// One module's low-rank adapter: the update is B * A.
struct LoraPair {
    std::string module_name;
    Matrix a;  // rank x d_in
    Matrix b;  // d_out x rank
    int rank = 0;
    std::optional<float> alpha;  // carried metadata, never applied
};

/// One task's checkpoint. std::map keeps module iteration lexicographic,
/// which is the canonical order all downstream merging relies on.
struct AdapterSet {
    std::string task_name;
    std::map<std::string, LoraPair> modules;
    std::map<std::string, std::string> metadata;  // passthrough keys
    int ignored_tensors = 0;                      // non-LoRA tensors seen at load
};

struct ModuleShape {
    int d_out = 0;
    int d_in = 0;
    int rank = 0;
};

/// Shared layout of a group of compatible adapters.
struct CompatibilityLayout {
    int task_count = 0;
    std::map<std::string, ModuleShape> modules;
    std::optional<float> alpha;
};

/// Reads a checkpoint: tensors named <module>.lora_A.weight / .lora_B.weight
/// become LoraPairs; F16/BF16 payloads are widened to F32; anything else is
/// ignored but counted. The task name comes from the file metadata, falling
/// back to the filename stem.
AdapterSet load_adapter(const std::filesystem::path& path);

/// Inverse of load_adapter for F32 payloads: the written file round-trips
/// bit-exactly. Refuses an empty module map.
void save_adapter(const AdapterSet& set, const std::filesystem::path& path);

/// Checks that every task exposes the same modules with identical shapes,
/// ranks and (when present) alpha. strict=false relaxes the module check to
/// the common intersection instead of failing on asymmetric layouts.
CompatibilityLayout validate_compatibility(const std::vector<AdapterSet>& sets,
                                           bool strict = true);

}  // namespace loramerge
