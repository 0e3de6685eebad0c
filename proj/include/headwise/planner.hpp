#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "headwise/error.hpp"
#include "headwise/memory.hpp"
#include "headwise/roofline.hpp"
#include "headwise/units.hpp"
#include "headwise/workload.hpp"

namespace headwise {

// Device memory held back from the planner's budget for the framework,
// allocator fragmentation and kernels' scratch space. With this slack the
// derived Llama-3-8B group schedule lands on the published brackets.
inline constexpr double kDefaultReserveGiB = 4.7;

inline Bytes default_reserve() { return gib(kDefaultReserveGiB); }

struct Plan {
    Tokens context = 0;
    Tokens chunk = 0;
    std::uint64_t heads_per_group = 0;
    std::uint64_t groups = 0;  // head groups per layer, H_kv / heads_per_group
    Policy policy;
    Bytes reserve = 0;
    MemoryReport report;
};

inline constexpr std::uint64_t kChunkSafetyFactor = 5;
inline constexpr Tokens kChunkQuantum = 1024;

/// Chunk size a few times past the offload turning point, so chunked prefill
/// stays compute-bound while keeping activations small.
inline Tokens select_chunk(const ModelSpec& m, const HardwareSpec& hw, Tokens context = 0) {
    validate(m);
    validate(hw);
    const Tokens tp = turning_point(m, hw);
    const Tokens rounded = (tp + kChunkQuantum - 1) / kChunkQuantum * kChunkQuantum;
    Tokens chunk = std::max(rounded * kChunkSafetyFactor, kChunkQuantum);
    if (context > 0) {
        chunk = std::min(chunk, context);
    }
    return chunk;
}

/// Divisors of H_kv, largest first: the candidate heads-per-group values.
inline std::vector<std::uint64_t> group_sizes(const ModelSpec& m) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t g = m.num_kv_heads; g >= 1; --g) {
        if (m.num_kv_heads % g == 0) {
            out.push_back(g);
        }
    }
    return out;
}

/// Largest heads-per-group whose footprint fits the device budget.
inline std::uint64_t select_groups(const ModelSpec& m, const HardwareSpec& hw, Tokens context, Tokens chunk,
                                   Bytes reserve) {
    if (context < 1) {
        throw Error(ErrorKind::InvalidSpec, "context must be >= 1");
    }
    if (kv_cache_bytes(m, context) > hw.host_capacity) {
        throw Error(ErrorKind::Infeasible, "KV cache of " + std::to_string(context) + " tokens exceeds host memory");
    }
    for (std::uint64_t g : group_sizes(m)) {
        if (fits(footprint(m, hw, Policy::head_offload(g), context, chunk), hw, reserve)) {
            return g;
        }
    }
    throw Error(ErrorKind::Infeasible, "no head grouping fits " + std::to_string(context) + " tokens on device");
}

inline std::uint64_t select_groups(const ModelSpec& m, const HardwareSpec& hw, Tokens context) {
    return select_groups(m, hw, context, select_chunk(m, hw, context), default_reserve());
}

inline Plan plan(const ModelSpec& m, const HardwareSpec& hw, Tokens context, Bytes reserve = default_reserve()) {
    if (context < 1) {
        throw Error(ErrorKind::InvalidSpec, "context must be >= 1");
    }
    Plan p;
    p.context = context;
    p.reserve = reserve;
    p.chunk = select_chunk(m, hw, context);
    p.heads_per_group = select_groups(m, hw, context, p.chunk, reserve);
    p.groups = m.num_kv_heads / p.heads_per_group;
    p.policy = Policy::head_offload(p.heads_per_group);
    p.report = footprint(m, hw, p.policy, context, p.chunk);
    if (!fits(p.report, hw, reserve)) {
        throw Error(ErrorKind::Infeasible, "planned footprint does not fit");
    }
    return p;
}

/// Concrete policy for a request; Adaptive becomes the planner's choice.
inline Policy resolve_policy(const Policy& policy, const ModelSpec& m, const HardwareSpec& hw, Tokens context,
                             Bytes reserve = default_reserve()) {
    if (policy.kind != PolicyKind::Adaptive) {
        return policy;
    }
    return plan(m, hw, std::max<Tokens>(context, 1), reserve).policy;
}

} // namespace headwise
