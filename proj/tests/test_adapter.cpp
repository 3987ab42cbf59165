#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "loramerge/adapter.hpp"
#include "loramerge/errors.hpp"
#include "loramerge/rng.hpp"
#include "loramerge/safetensors.hpp"

using namespace loramerge;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
    const fs::path d = fs::temp_directory_path() / "loramerge_adapter_tests";
    fs::create_directories(d);
    return d;
}

Matrix random_matrix(Rng& rng, int rows, int cols) {
    Matrix m(rows, cols);
    for (float& v : m.data) v = rng.gaussian();
    return m;
}

AdapterSet make_set(const std::string& task, std::uint64_t seed, int rank = 4, int d_out = 8,
                    int d_in = 6, int n_modules = 2) {
    Rng rng(seed);
    AdapterSet set;
    set.task_name = task;
    for (int i = 0; i < n_modules; ++i) {
        LoraPair pair;
        pair.module_name = "layers." + std::to_string(i) + ".proj";
        pair.a = random_matrix(rng, rank, d_in);
        pair.b = random_matrix(rng, d_out, rank);
        pair.rank = rank;
        set.modules.emplace(pair.module_name, std::move(pair));
    }
    return set;
}

std::vector<std::uint8_t> f32_bytes(const std::vector<float>& values) {
    std::vector<std::uint8_t> out(values.size() * 4);
    std::memcpy(out.data(), values.data(), out.size());
    return out;
}

TensorEntry f32_entry(std::vector<std::int64_t> shape, const std::vector<float>& values) {
    TensorEntry e;
    e.dtype = "F32";
    e.shape = std::move(shape);
    e.raw = f32_bytes(values);
    return e;
}

}  // namespace

TEST_CASE("minimal well-formed adapter loads with one module") {
    const fs::path path = temp_dir() / "minimal.st";
    SafetensorsDoc doc;
    doc.tensors["p.lora_A.weight"] = f32_entry({16, 64}, std::vector<float>(16 * 64, 0.5f));
    doc.tensors["p.lora_B.weight"] = f32_entry({64, 16}, std::vector<float>(64 * 16, 0.25f));
    write_safetensors(path, doc);

    const AdapterSet set = load_adapter(path);
    CHECK(set.modules.size() == 1);
    CHECK(set.modules.count("p") == 1);
    CHECK(set.modules.at("p").rank == 16);
    CHECK(set.modules.at("p").a.rows == 16);
    CHECK(set.modules.at("p").a.cols == 64);
    CHECK(set.modules.at("p").b.rows == 64);
    CHECK(set.task_name == "minimal");  // filename stem fallback
    CHECK(set.ignored_tensors == 0);
}

TEST_CASE("orphan lora_A is rejected naming the module") {
    const fs::path path = temp_dir() / "orphan.st";
    SafetensorsDoc doc;
    doc.tensors["p.lora_A.weight"] = f32_entry({4, 8}, std::vector<float>(32, 1.0f));
    write_safetensors(path, doc);
    CHECK_THROWS_WITH_AS(load_adapter(path),
                         "module 'p' has .lora_A.weight but no .lora_B.weight",
                         ValidationError);

    const fs::path path_b = temp_dir() / "orphan_b.st";
    SafetensorsDoc doc_b;
    doc_b.tensors["q.lora_B.weight"] = f32_entry({8, 4}, std::vector<float>(32, 1.0f));
    write_safetensors(path_b, doc_b);
    CHECK_THROWS_AS(load_adapter(path_b), ValidationError);
}

TEST_CASE("rank mismatch between A and B is rejected") {
    const fs::path path = temp_dir() / "rankmismatch.st";
    SafetensorsDoc doc;
    doc.tensors["p.lora_A.weight"] = f32_entry({16, 64}, std::vector<float>(16 * 64, 1.0f));
    doc.tensors["p.lora_B.weight"] = f32_entry({64, 8}, std::vector<float>(64 * 8, 1.0f));
    write_safetensors(path, doc);
    CHECK_THROWS_WITH_AS(load_adapter(path),
                         "module 'p': lora_A has 16 rows but lora_B has 8 columns",
                         ValidationError);
}

TEST_CASE("non-lora tensors are ignored but counted") {
    const fs::path path = temp_dir() / "extras.st";
    SafetensorsDoc doc;
    doc.tensors["p.lora_A.weight"] = f32_entry({2, 4}, std::vector<float>(8, 1.0f));
    doc.tensors["p.lora_B.weight"] = f32_entry({4, 2}, std::vector<float>(8, 1.0f));
    doc.tensors["base.weight"] = f32_entry({2, 2}, {1, 2, 3, 4});
    doc.tensors["other.bias"] = f32_entry({1, 2}, {0, 0});
    write_safetensors(path, doc);

    const AdapterSet set = load_adapter(path);
    CHECK(set.modules.size() == 1);
    CHECK(set.ignored_tensors == 2);
}

TEST_CASE("f16 payloads widen to f32") {
    const fs::path path = temp_dir() / "half.st";
    SafetensorsDoc doc;
    // 1.0 = 0x3c00, -2.0 = 0xc000 in binary16
    TensorEntry a;
    a.dtype = "F16";
    a.shape = {1, 2};
    a.raw = {0x00, 0x3c, 0x00, 0xc0};
    doc.tensors["p.lora_A.weight"] = a;
    TensorEntry b;
    b.dtype = "F16";
    b.shape = {2, 1};
    b.raw = {0x00, 0x3c, 0x00, 0x3c};
    doc.tensors["p.lora_B.weight"] = b;
    write_safetensors(path, SafetensorsDoc{});  // placeholder, replaced below

    // the strict F32 writer refuses halves, so craft the file manually
    {
        nlohmann::json header;
        header["p.lora_A.weight"] = {{"dtype", "F16"}, {"shape", {1, 2}}, {"data_offsets", {0, 4}}};
        header["p.lora_B.weight"] = {{"dtype", "F16"}, {"shape", {2, 1}}, {"data_offsets", {4, 8}}};
        const std::string hs = header.dump();
        std::ofstream f(path, std::ios::binary | std::ios::trunc);
        const std::uint64_t len = hs.size();
        for (int i = 0; i < 8; ++i) {
            const char c = static_cast<char>(len >> (8 * i));
            f.write(&c, 1);
        }
        f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        const std::uint8_t payload[] = {0x00, 0x3c, 0x00, 0xc0, 0x00, 0x3c, 0x00, 0x3c};
        f.write(reinterpret_cast<const char*>(payload), 8);
    }

    const AdapterSet set = load_adapter(path);
    CHECK(set.modules.at("p").a.at(0, 0) == 1.0f);
    CHECK(set.modules.at("p").a.at(0, 1) == -2.0f);
    CHECK(set.modules.at("p").b.at(0, 0) == 1.0f);
}

TEST_CASE("non-finite payloads are rejected naming the tensor") {
    const fs::path path = temp_dir() / "nan.st";
    SafetensorsDoc doc;
    doc.tensors["p.lora_A.weight"] =
        f32_entry({1, 2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
    doc.tensors["p.lora_B.weight"] = f32_entry({2, 1}, {1.0f, 1.0f});
    write_safetensors(path, doc);
    CHECK_THROWS_AS(load_adapter(path), ValidationError);
}

TEST_CASE("save/load round-trips bit-exactly") {
    const fs::path path = temp_dir() / "roundtrip.st";
    AdapterSet set = make_set("mytask", 99);
    set.metadata["origin"] = "unit-test";
    save_adapter(set, path);

    const AdapterSet back = load_adapter(path);
    CHECK(back.task_name == "mytask");
    CHECK(back.metadata.at("origin") == "unit-test");
    REQUIRE(back.modules.size() == set.modules.size());
    for (const auto& [name, pair] : set.modules) {
        const LoraPair& got = back.modules.at(name);
        CHECK(bit_equal(got.a, pair.a));
        CHECK(bit_equal(got.b, pair.b));
        CHECK(got.rank == pair.rank);
    }

    // byte-level: saving the loaded set reproduces the identical file
    const fs::path path2 = temp_dir() / "roundtrip2.st";
    save_adapter(back, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);
}

TEST_CASE("alpha is recorded as lora_alpha in the header metadata") {
    const fs::path path = temp_dir() / "alpha.st";
    AdapterSet set = make_set("alpha_task", 7);
    for (auto& [name, pair] : set.modules) pair.alpha = 32.0f;
    save_adapter(set, path);

    // independent header inspection
    std::ifstream f(path, std::ios::binary);
    std::uint64_t len = 0;
    for (int i = 0; i < 8; ++i) {
        unsigned char b;
        f.read(reinterpret_cast<char*>(&b), 1);
        len |= static_cast<std::uint64_t>(b) << (8 * i);
    }
    std::string header(len, '\0');
    f.read(header.data(), static_cast<std::streamsize>(len));
    const auto j = nlohmann::json::parse(header);
    CHECK(j["__metadata__"]["lora_alpha"] == "32");

    const AdapterSet back = load_adapter(path);
    CHECK(back.modules.begin()->second.alpha == 32.0f);
}

TEST_CASE("empty adapter set is refused") {
    AdapterSet set;
    set.task_name = "empty";
    CHECK_THROWS_AS(save_adapter(set, temp_dir() / "empty.st"), ValidationError);
}

TEST_CASE("validate_compatibility accepts identical layouts") {
    const std::vector<AdapterSet> sets = {make_set("a", 1), make_set("b", 2)};
    const CompatibilityLayout layout = validate_compatibility(sets);
    CHECK(layout.task_count == 2);
    CHECK(layout.modules.size() == 2);
    CHECK(layout.modules.begin()->second.rank == 4);
}

TEST_CASE("validate_compatibility rejects rank and shape mismatches") {
    SUBCASE("rank") {
        const std::vector<AdapterSet> sets = {make_set("a", 1, 16, 64, 64),
                                              make_set("b", 2, 8, 64, 64)};
        CHECK_THROWS_AS(validate_compatibility(sets), ValidationError);
    }
    SUBCASE("d_out") {
        const std::vector<AdapterSet> sets = {make_set("a", 1, 4, 8, 6),
                                              make_set("b", 2, 4, 10, 6)};
        CHECK_THROWS_AS(validate_compatibility(sets), ValidationError);
    }
}

TEST_CASE("validate_compatibility rejects alpha conflicts") {
    AdapterSet a = make_set("a", 1);
    AdapterSet b = make_set("b", 2);
    for (auto& [name, pair] : a.modules) pair.alpha = 16.0f;
    for (auto& [name, pair] : b.modules) pair.alpha = 32.0f;
    CHECK_THROWS_AS(validate_compatibility({a, b}), ValidationError);
}

TEST_CASE("validate_compatibility strict vs intersection") {
    AdapterSet a = make_set("a", 1, 4, 8, 6, 3);
    AdapterSet b = make_set("b", 2, 4, 8, 6, 2);  // missing module 2

    CHECK_THROWS_AS(validate_compatibility({a, b}, true), ValidationError);

    const CompatibilityLayout layout = validate_compatibility({a, b}, false);
    CHECK(layout.modules.size() == 2);
}

TEST_CASE("validate_compatibility rejects duplicate task names") {
    CHECK_THROWS_AS(validate_compatibility({make_set("a", 1), make_set("a", 2)}),
                    ValidationError);
}

TEST_CASE("validate_compatibility needs at least one set") {
    CHECK_THROWS_AS(validate_compatibility({}), ValidationError);
}
