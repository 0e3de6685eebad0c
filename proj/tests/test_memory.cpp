#include <gtest/gtest.h>

#include "support.hpp"

using namespace headwise;

namespace {

// Independent parameter count: every weight matrix listed explicitly.
std::uint64_t enumerate_parameters(const ModelSpec& m) {
    const std::uint64_t d = m.hidden_dim;
    const std::uint64_t kv = m.num_kv_heads * m.head_dim;
    const std::uint64_t i = m.intermediate_dim;
    std::vector<std::pair<std::uint64_t, std::uint64_t>> shapes{{m.vocab_size, d}, {d, m.vocab_size}};
    for (std::uint64_t l = 0; l < m.num_layers; ++l) {
        shapes.insert(shapes.end(), {{d, d}, {d, kv}, {d, kv}, {d, d}, {d, i}, {d, i}, {i, d}});
    }
    std::uint64_t n = 0;
    for (auto [r, c] : shapes) {
        n += r * c;
    }
    return n;
}

// Bisection over the fits predicate, plus the host bound for offloading.
Tokens bisect_max_context(const ModelSpec& m, const HardwareSpec& hw, const Policy& p, Tokens chunk, Bytes reserve) {
    auto ok = [&](Tokens s) {
        const MemoryReport r = footprint(m, hw, p, s, chunk);
        return r.total_on_device + reserve <= hw.device_capacity && (!p.offloads() || r.kv_total <= hw.host_capacity);
    };
    Tokens lo = 0;
    Tokens hi = Tokens{1} << 40;
    while (hi - lo > 1) {
        const Tokens mid = lo + (hi - lo) / 2;
        (ok(mid) ? lo : hi) = mid;
    }
    return lo;
}

} // namespace

TEST(Memory, ParameterCountMatchesEnumeration) {
    for (const char* name : {"toy", "llama3-8b", "llama2-7b", "qwen2-7b", "gemma2-9b", "llama3-70b"}) {
        const ModelSpec m = test::model(name);
        EXPECT_EQ(parameter_count(m), enumerate_parameters(m)) << name;
    }
    EXPECT_EQ(parameter_count(test::llama3_8b()), 8'029'995'008ull);
    EXPECT_EQ(parameter_count(test::llama3_70b()), 70'552'387'584ull);
}

TEST(Memory, KvCacheClosedForm) {
    const ModelSpec m = test::llama3_8b();
    EXPECT_EQ(kv_cache_bytes(m, 1), 131072u);
    EXPECT_EQ(kv_cache_bytes(m, Tokens{1} << 20), 128 * kGiB);
    EXPECT_EQ(kv_cache_bytes(m, 0), 0u);
    EXPECT_EQ(activation_bytes(m, 1), 65536u);
    EXPECT_EQ(activation_bytes(m, Tokens{1} << 20), 64 * kGiB);
}

TEST(Memory, PublishedOneMillionTable) {
    const auto cells = test::check_memory_rows(test::llama3_8b(), test::profile_a(), test::published_memory_1m(), 0.02);
    for (const auto& c : cells) {
        EXPECT_TRUE(c.ok) << c.where;
    }
}

TEST(Memory, PublishedMeasuredContextTable) {
    const auto cells =
        test::check_memory_rows(test::llama3_8b(), test::profile_a(), test::published_memory_measured(), 0.02);
    for (const auto& c : cells) {
        EXPECT_TRUE(c.ok) << c.where;
    }
}

TEST(Memory, HeadOffloadAllHeadsEqualsLayerOffloadKv) {
    const ModelSpec m = test::llama3_8b();
    for (Tokens s : {Tokens{1}, Tokens{4096}, Tokens{1} << 20}) {
        EXPECT_EQ(kv_on_device_bytes(m, Policy::head_offload(m.num_kv_heads), s),
                  kv_on_device_bytes(m, Policy::layer_offload(), s));
    }
}

TEST(Memory, ChunkLargerThanContextIsClamped) {
    const ModelSpec m = test::llama3_8b();
    const MemoryReport r = footprint(m, test::profile_a(), Policy::chunked_prefill(), 512, 10240);
    EXPECT_EQ(r.chunk, 512u);
    EXPECT_EQ(r.activation, activation_bytes(m, 512));
}

TEST(Memory, ZeroContext) {
    const ModelSpec m = test::llama3_8b();
    const MemoryReport r = footprint(m, test::profile_a(), Policy::head_offload(1), 0, 10240);
    EXPECT_EQ(r.kv_on_device, 0u);
    EXPECT_EQ(r.activation, 0u);
    EXPECT_EQ(r.total_on_device, weight_bytes(m));
}

TEST(Memory, AdaptiveMustBeResolved) {
    try {
        footprint(test::llama3_8b(), test::profile_a(), Policy::adaptive(), 1024, 1024);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnresolvedPolicy);
    }
}

TEST(Memory, ChunkZeroRejectedForChunkingPolicies) {
    EXPECT_THROW(footprint(test::llama3_8b(), test::profile_a(), Policy::chunked_prefill(), 1024, 0), Error);
}

TEST(Memory, PipelineStagesSplitWeights) {
    const ModelSpec m = test::llama3_70b();
    HardwareSpec hw = test::profile_a();
    hw.device_count = 4;
    const MemoryReport r = footprint(m, hw, Policy::standard(), 1024, 1024);
    EXPECT_EQ(r.weights, weight_bytes(m) / 4);
    EXPECT_EQ(r.kv_on_device, kv_cache_bytes(m, 1024) / 4);
    hw.device_count = 3;
    EXPECT_THROW(footprint(m, hw, Policy::standard(), 1024, 1024), Error);
}

TEST(Memory, MaxContextAgreesWithBisection) {
    const ModelSpec m = test::llama3_8b();
    const HardwareSpec hw = test::profile_a();
    const std::vector<Policy> policies{Policy::standard(), Policy::chunked_prefill(), Policy::kv_quant4(),
                                       Policy::layer_offload(), Policy::head_offload(1), Policy::head_offload(4)};
    for (Bytes reserve : {Bytes{0}, gib(4.7)}) {
        for (const Policy& p : policies) {
            EXPECT_EQ(max_context(m, hw, p, 10240, reserve), bisect_max_context(m, hw, p, 10240, reserve))
                << to_string(p) << " reserve " << reserve;
        }
    }
    // A small chunk exercises the piece where activation saturates early.
    EXPECT_EQ(max_context(test::toy(), hw, Policy::chunked_prefill(), 7, 0),
              bisect_max_context(test::toy(), hw, Policy::chunked_prefill(), 7, 0));
}

TEST(Memory, HeadInferMaxContextIsHostBound) {
    const ContextLimit lim = max_context_limit(test::llama3_8b(), test::profile_a(), Policy::head_offload(1), 10240, 0);
    EXPECT_EQ(lim.tokens, 4'194'304u);
    EXPECT_TRUE(lim.host_bound);
}

TEST(Memory, MaxContextOrdering) {
    const ModelSpec m = test::llama3_8b();
    const HardwareSpec hw = test::profile_a();
    const double std_ = static_cast<double>(max_context(m, hw, Policy::standard(), 10240, 0));
    const double chunked = static_cast<double>(max_context(m, hw, Policy::chunked_prefill(), 10240, 0));
    const double quant = static_cast<double>(max_context(m, hw, Policy::kv_quant4(), 10240, 0));
    const double layer = static_cast<double>(max_context(m, hw, Policy::layer_offload(), 10240, 0));
    const double head = static_cast<double>(max_context(m, hw, Policy::head_offload(1), 10240, 0));
    EXPECT_LT(std_, chunked);
    EXPECT_LE(chunked, quant);
    EXPECT_GE(quant / layer, 2.0 / 3.0);
    EXPECT_LE(quant / layer, 1.5);
    EXPECT_GE(head, 10.0 * std::max(quant, layer));
}

TEST(Memory, WeightsAloneInfeasible) {
    HardwareSpec hw = test::profile_a();
    hw.device_capacity = weight_bytes(test::llama3_8b());
    try {
        max_context(test::llama3_8b(), hw, Policy::standard(), 10240, 0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
    }
}

TEST(Memory, FootprintMonotoneInContext) {
    const ModelSpec m = test::llama3_8b();
    const HardwareSpec hw = test::profile_a();
    for (const Policy& p : {Policy::standard(), Policy::chunked_prefill(), Policy::head_offload(2)}) {
        Bytes prev = 0;
        for (Tokens s = 0; s <= 200000; s += 9973) {
            const Bytes t = footprint(m, hw, p, s, 10240).total_on_device;
            EXPECT_GE(t, prev);
            prev = t;
        }
    }
}
