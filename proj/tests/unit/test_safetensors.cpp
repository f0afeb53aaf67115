#include <doctest.h>

#include <cstring>

#include "memrecall/errors.hpp"
#include "memrecall/safetensors.hpp"
#include "test_support.hpp"

using namespace memrecall;

TEST_CASE("f16 and bf16 tensors widen to the reference values") {
    SafetensorsReader r(testing::fixture("dtypes.safetensors"));
    const auto ref = testing::load_json(testing::fixture("dtypes_reference.json"));
    CHECK(r.info("f16").dtype == DType::F16);
    CHECK(r.info("bf16").dtype == DType::BF16);
    CHECK(r.info("f16").shape == std::vector<std::size_t>{2, 3});
    CHECK(r.read_f32("f16") == testing::to_floats(ref["f16"]));
    CHECK(r.read_f32("bf16") == testing::to_floats(ref["bf16"]));
    CHECK(r.read_f32("f32").size() == 6);
}

TEST_CASE("half conversion covers subnormals, infinities and NaN") {
    CHECK(half_to_float(0x3c00) == 1.0f);
    CHECK(half_to_float(0xc000) == -2.0f);
    CHECK(half_to_float(0x0001) == doctest::Approx(5.960464477539063e-08));
    CHECK(std::isinf(half_to_float(0x7c00)));
    CHECK(std::isnan(half_to_float(0x7e00)));
    CHECK(bfloat16_to_float(0x3f80) == 1.0f);
}

TEST_CASE("write then read round-trips bitwise with metadata") {
    testing::TempDir dir("st");
    std::vector<NamedTensor> ts{{"b", {2, 2}, {1.5f, -0.0f, 3e-38f, 1e30f}}, {"a", {3}, {0.1f, 0.2f, 0.3f}}};
    write_safetensors(dir / "x.safetensors", ts, {{"note", "hello"}});
    SafetensorsReader r(dir / "x.safetensors");
    CHECK(r.tensors().size() == 2);
    CHECK(r.metadata().at("note") == "hello");
    for (const auto& t : ts) {
        const auto back = r.read_f32(t.name);
        REQUIRE(back.size() == t.values.size());
        CHECK(std::memcmp(back.data(), t.values.data(), back.size() * sizeof(float)) == 0);
        CHECK(r.info(t.name).shape == t.shape);
    }
    // header padded to a multiple of 8
    const auto bytes = testing::read_file(dir / "x.safetensors");
    std::uint64_t n = 0;
    std::memcpy(&n, bytes.data(), 8);
    CHECK(n % 8 == 0);
}

TEST_CASE("malformed containers are rejected") {
    testing::TempDir dir("st-bad");
    SUBCASE("truncated header length") {
        testing::write_file(dir / "t", "abc");
        CHECK_THROWS_AS(SafetensorsReader(dir / "t"), DataError);
    }
    SUBCASE("header longer than file") {
        std::string s(8, '\0');
        s[0] = 100;
        testing::write_file(dir / "t", s + "{}");
        CHECK_THROWS_AS(SafetensorsReader(dir / "t"), DataError);
    }
    SUBCASE("offsets past the data section name the tensor") {
        std::string header = R"({"w":{"dtype":"F32","shape":[4],"data_offsets":[0,16]}})";
        std::string s(8, '\0');
        const std::uint64_t n = header.size();
        std::memcpy(s.data(), &n, 8);
        testing::write_file(dir / "t", s + header + std::string(8, '\0'));
        try {
            SafetensorsReader r(dir / "t");
            r.read_f32("w");
            FAIL("expected an error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("'w'") != std::string::npos);
        }
    }
    SUBCASE("unknown tensor") {
        SafetensorsReader r(testing::fixture("dtypes.safetensors"));
        CHECK_THROWS(r.read_f32("missing"));
    }
}
