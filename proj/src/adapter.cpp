// SPDX-License-Identifier: Apache-2.0
#include "loramerge/adapter.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "loramerge/errors.hpp"
#include "loramerge/safetensors.hpp"

namespace loramerge {

namespace {

constexpr const char* kSuffixA = ".lora_A.weight";
constexpr const char* kSuffixB = ".lora_B.weight";

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<float> widen_payload(const std::string& key, const TensorEntry& entry) {
    std::vector<float> values;
    if (entry.dtype == "F32") {
        values.resize(entry.raw.size() / 4);
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::uint32_t u = 0;
            for (int b = 3; b >= 0; --b) u = (u << 8) | entry.raw[i * 4 + static_cast<std::size_t>(b)];
            std::memcpy(&values[i], &u, 4);
        }
    } else if (entry.dtype == "F16" || entry.dtype == "BF16") {
        values.resize(entry.raw.size() / 2);
        for (std::size_t i = 0; i < values.size(); ++i) {
            const auto bits = static_cast<std::uint16_t>(entry.raw[i * 2] |
                                                         (entry.raw[i * 2 + 1] << 8));
            values[i] = entry.dtype == "F16" ? f16_to_f32(bits) : bf16_to_f32(bits);
        }
    } else {
        throw ValidationError("tensor '" + key + "' has unsupported dtype '" + entry.dtype +
                              "' (expected F32, F16 or BF16)");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw ValidationError("tensor '" + key + "' contains a non-finite value at index " +
                                  std::to_string(i));
        }
    }
    return values;
}

Matrix tensor_to_matrix(const std::string& key, const TensorEntry& entry) {
    if (entry.shape.size() != 2) {
        throw ValidationError("tensor '" + key + "' must be 2-D, got " +
                              std::to_string(entry.shape.size()) + " dimensions");
    }
    const auto rows = static_cast<int>(entry.shape[0]);
    const auto cols = static_cast<int>(entry.shape[1]);
    if (rows <= 0 || cols <= 0) {
        throw ValidationError("tensor '" + key + "' has an empty dimension");
    }
    Matrix m;
    m.rows = rows;
    m.cols = cols;
    m.data = widen_payload(key, entry);
    if (m.data.size() != m.numel()) {
        throw ValidationError("tensor '" + key + "' payload does not match its shape");
    }
    return m;
}

std::string format_alpha(float alpha) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(alpha));
    return buf;
}

float parse_alpha(const std::string& text) {
    char* end = nullptr;
    const float v = std::strtof(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0' || !std::isfinite(v) || v < 0.0f) {
        throw ValidationError("metadata lora_alpha '" + text + "' is not a non-negative number");
    }
    return v;
}

}  // namespace

AdapterSet load_adapter(const std::filesystem::path& path) {
    const SafetensorsDoc doc = read_safetensors(path);

    AdapterSet set;
    if (auto it = doc.metadata.find("task_name"); it != doc.metadata.end()) {
        set.task_name = it->second;
    } else {
        set.task_name = path.stem().string();
    }
    std::optional<float> alpha;
    if (auto it = doc.metadata.find("lora_alpha"); it != doc.metadata.end()) {
        alpha = parse_alpha(it->second);
    }
    for (const auto& [k, v] : doc.metadata) {
        if (k != "task_name" && k != "lora_alpha") set.metadata[k] = v;
    }

    for (const auto& [key, entry] : doc.tensors) {
        if (ends_with(key, kSuffixB)) {
            const std::string prefix = key.substr(0, key.size() - std::strlen(kSuffixB));
            if (doc.tensors.find(prefix + kSuffixA) == doc.tensors.end()) {
                throw ValidationError("module '" + prefix + "' has " + kSuffixB + " but no " +
                                      kSuffixA);
            }
            continue;  // consumed when its lora_A partner is processed
        }
        if (!ends_with(key, kSuffixA)) {
            ++set.ignored_tensors;
            continue;
        }
        const std::string prefix = key.substr(0, key.size() - std::strlen(kSuffixA));
        const auto b_it = doc.tensors.find(prefix + kSuffixB);
        if (b_it == doc.tensors.end()) {
            throw ValidationError("module '" + prefix + "' has " + kSuffixA + " but no " +
                                  kSuffixB);
        }
        LoraPair pair;
        pair.module_name = prefix;
        pair.a = tensor_to_matrix(key, entry);
        pair.b = tensor_to_matrix(b_it->first, b_it->second);
        if (pair.a.rows != pair.b.cols) {
            throw ValidationError("module '" + prefix + "': lora_A has " +
                                  std::to_string(pair.a.rows) + " rows but lora_B has " +
                                  std::to_string(pair.b.cols) + " columns");
        }
        pair.rank = pair.a.rows;
        if (pair.rank > std::min(pair.a.cols, pair.b.rows)) {
            throw ValidationError("module '" + prefix + "': rank " + std::to_string(pair.rank) +
                                  " exceeds min(d_in, d_out) = " +
                                  std::to_string(std::min(pair.a.cols, pair.b.rows)));
        }
        pair.alpha = alpha;
        set.modules.emplace(prefix, std::move(pair));
    }
    return set;
}

void save_adapter(const AdapterSet& set, const std::filesystem::path& path) {
    if (set.modules.empty()) {
        throw ValidationError("refusing to save adapter '" + set.task_name +
                              "': it has no modules");
    }

    SafetensorsDoc doc;
    std::optional<float> alpha;
    for (const auto& [name, pair] : set.modules) {
        if (pair.a.rows != pair.b.cols || pair.rank != pair.a.rows) {
            throw ValidationError("module '" + name + "' is inconsistent: rank " +
                                  std::to_string(pair.rank) + ", lora_A rows " +
                                  std::to_string(pair.a.rows) + ", lora_B cols " +
                                  std::to_string(pair.b.cols));
        }
        if (pair.alpha.has_value()) {
            if (alpha.has_value() && *alpha != *pair.alpha) {
                throw ValidationError("module '" + name +
                                      "' carries a different lora_alpha than its siblings");
            }
            alpha = pair.alpha;
        }
        auto to_entry = [](const Matrix& m) {
            TensorEntry e;
            e.dtype = "F32";
            e.shape = {m.rows, m.cols};
            e.raw.resize(m.numel() * 4);
            for (std::size_t i = 0; i < m.numel(); ++i) {
                std::uint32_t u;
                std::memcpy(&u, &m.data[i], 4);
                for (int b = 0; b < 4; ++b) {
                    e.raw[i * 4 + static_cast<std::size_t>(b)] =
                        static_cast<std::uint8_t>(u >> (8 * b));
                }
            }
            return e;
        };
        doc.tensors.emplace(name + kSuffixA, to_entry(pair.a));
        doc.tensors.emplace(name + kSuffixB, to_entry(pair.b));
    }
    doc.metadata = set.metadata;
    doc.metadata["task_name"] = set.task_name;
    if (alpha.has_value()) {
        doc.metadata["lora_alpha"] = format_alpha(*alpha);
    }
    write_safetensors(path, doc);
}

CompatibilityLayout validate_compatibility(const std::vector<AdapterSet>& sets, bool strict) {
    if (sets.empty()) {
        throw ValidationError("validate_compatibility: need at least one adapter set");
    }
    for (std::size_t i = 0; i < sets.size(); ++i) {
        for (std::size_t j = i + 1; j < sets.size(); ++j) {
            if (sets[i].task_name == sets[j].task_name) {
                throw ValidationError("duplicate task name '" + sets[i].task_name +
                                      "'; task names order the merge and must be unique");
            }
        }
    }

    // candidate module names: intersection, or exact equality when strict
    std::vector<std::string> common;
    for (const auto& [name, pair] : sets.front().modules) {
        (void)pair;
        bool everywhere = true;
        for (const auto& set : sets) {
            if (set.modules.find(name) == set.modules.end()) {
                if (strict) {
                    throw ValidationError("task '" + set.task_name + "' is missing module '" +
                                          name + "' present in task '" +
                                          sets.front().task_name + "'");
                }
                everywhere = false;
                break;
            }
        }
        if (everywhere) common.push_back(name);
    }
    if (strict) {
        for (const auto& set : sets) {
            for (const auto& [name, pair] : set.modules) {
                (void)pair;
                if (sets.front().modules.find(name) == sets.front().modules.end()) {
                    throw ValidationError("task '" + sets.front().task_name +
                                          "' is missing module '" + name +
                                          "' present in task '" + set.task_name + "'");
                }
            }
        }
    }
    if (common.empty()) {
        throw ValidationError("no module is common to all adapter sets");
    }

    CompatibilityLayout layout;
    layout.task_count = static_cast<int>(sets.size());
    for (const auto& name : common) {
        const LoraPair& ref = sets.front().modules.at(name);
        for (const auto& set : sets) {
            const LoraPair& pair = set.modules.at(name);
            if (pair.b.rows != ref.b.rows || pair.a.cols != ref.a.cols) {
                throw ValidationError("module '" + name + "': shape " +
                                      std::to_string(pair.b.rows) + "x" +
                                      std::to_string(pair.a.cols) + " in task '" +
                                      set.task_name + "' but " + std::to_string(ref.b.rows) +
                                      "x" + std::to_string(ref.a.cols) + " in task '" +
                                      sets.front().task_name + "'");
            }
            if (pair.rank != ref.rank) {
                throw ValidationError("module '" + name + "': rank " +
                                      std::to_string(pair.rank) + " in task '" + set.task_name +
                                      "' but " + std::to_string(ref.rank) + " in task '" +
                                      sets.front().task_name + "'");
            }
            if (pair.alpha.has_value() != ref.alpha.has_value() ||
                (pair.alpha.has_value() && *pair.alpha != *ref.alpha)) {
                throw ValidationError("module '" + name + "': lora_alpha metadata conflicts "
                                      "between task '" + set.task_name + "' and task '" +
                                      sets.front().task_name + "'");
            }
        }
        layout.modules[name] = ModuleShape{ref.b.rows, ref.a.cols, ref.rank};
        if (ref.alpha.has_value()) layout.alpha = ref.alpha;
    }
    return layout;
}

}  // namespace loramerge
