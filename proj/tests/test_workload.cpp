#include <gtest/gtest.h>

#include <filesystem>

#include "support.hpp"

using namespace headwise;

TEST(Units, ParseTokensSuffixes) {
    EXPECT_EQ(parse_tokens("512"), 512u);
    EXPECT_EQ(parse_tokens("10K"), 10240u);
    EXPECT_EQ(parse_tokens("10k"), 10240u);
    EXPECT_EQ(parse_tokens("1M"), 1048576u);
    EXPECT_EQ(parse_tokens("4000K"), 4096000u);
    for (const char* bad : {"", "K", "1.5K", "-3", "12G", "1 K", "abc"}) {
        EXPECT_THROW(parse_tokens(bad), Error) << bad;
    }
}

TEST(Units, ParseGibRequiresSuffix) {
    EXPECT_EQ(parse_gib("24GiB"), 24 * kGiB);
    EXPECT_EQ(parse_gib("0GiB"), 0u);
    EXPECT_EQ(parse_gib("4.7GiB"), gib(4.7));
    for (const char* bad : {"24", "24GB", "24G", "GiB", "x GiB", "-1GiB"}) {
        EXPECT_THROW(parse_gib(bad), Error) << bad;
    }
}

TEST(Workload, ShippedModelsValidate) {
    for (const char* name : {"toy", "llama3-8b", "llama2-7b", "mistral-7b", "qwen2-7b", "gemma2-9b", "llama3-70b"}) {
        const ModelSpec m = test::model(name);
        EXPECT_NO_THROW(validate(m)) << name;
        EXPECT_EQ(m.hidden_dim, m.num_q_heads * m.head_dim) << name;
    }
    const ModelSpec m = test::llama3_8b();
    EXPECT_EQ(m.kv_dim(), 1024u);
    EXPECT_EQ(m.q_per_kv(), 4u);
}

TEST(Workload, RejectsBadShapes) {
    ModelSpec m = test::llama3_8b();
    m.num_kv_heads = 5;
    EXPECT_THROW(validate(m), Error);
    m = test::llama3_8b();
    m.hidden_dim = 4000;
    EXPECT_THROW(validate(m), Error);
    m = test::llama3_8b();
    m.num_layers = 0;
    EXPECT_THROW(validate(m), Error);
    m = test::llama3_8b();
    m.dtype_bytes = 3;
    EXPECT_THROW(validate(m), Error);
}

TEST(Workload, ParseErrorsCarryKind) {
    try {
        parse_model_spec("{\"name\": \"x\"}");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    }
    try {
        parse_model_spec("not json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ParseError);
    }
    EXPECT_THROW(load_model_spec("/nonexistent/model.json"), Error);
}

TEST(Workload, JsonRoundTrip) {
    const auto dir = std::filesystem::temp_directory_path() / "headwise_roundtrip";
    std::filesystem::create_directories(dir);
    const ModelSpec m = test::llama3_70b();
    save_model_spec(m, dir / "m.json");
    EXPECT_EQ(load_model_spec(dir / "m.json"), m);
    const HardwareSpec hw = test::profile_b();
    save_hardware_spec(hw, dir / "hw.json");
    EXPECT_EQ(load_hardware_spec(dir / "hw.json"), hw);
    std::filesystem::remove_all(dir);
}

TEST(Workload, PolicyValidation) {
    const ModelSpec m = test::llama3_8b();
    EXPECT_NO_THROW(validate(Policy::head_offload(1), m));
    EXPECT_NO_THROW(validate(Policy::head_offload(8), m));
    EXPECT_THROW(validate(Policy::head_offload(3), m), Error);
    EXPECT_THROW(validate(Policy::head_offload(0), m), Error);
    EXPECT_THROW(validate(Policy::head_offload(16), m), Error);
}

TEST(Workload, BuiltinProfiles) {
    const HardwareSpec a = test::profile_a();
    EXPECT_EQ(a.device_capacity, 24 * kGiB);
    EXPECT_DOUBLE_EQ(a.peak_flops, 165e12);
    EXPECT_THROW(builtin_profile("nope"), Error);
    // Shipped JSON profiles agree with the built-ins.
    EXPECT_EQ(load_hardware_spec(std::string(HEADWISE_TEST_CONFIG_DIR) + "/hardware/profile-A.json"), a);
    EXPECT_EQ(load_hardware_spec(std::string(HEADWISE_TEST_CONFIG_DIR) + "/hardware/profile-B.json"), test::profile_b());
}
