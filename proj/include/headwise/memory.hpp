#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "headwise/error.hpp"
#include "headwise/units.hpp"
#include "headwise/workload.hpp"

namespace headwise {

struct MemoryReport {
    Bytes weights = 0;
    Bytes kv_on_device = 0;
    Bytes activation = 0;
    Bytes total_on_device = 0;
    Bytes kv_total = 0;  // device + host
    Policy policy{};
    Tokens context = 0;
    Tokens chunk = 0;  // tokens resident in activation memory
};

// Untied embedding and LM head, q/k/v/o projections with grouped kv heads,
// gated MLP (gate, up, down). Norm weights are ignored.
inline std::uint64_t parameter_count(const ModelSpec& m) {
    const std::uint64_t d = m.hidden_dim;
    const std::uint64_t per_layer = d * d + 2 * d * m.kv_dim() + d * d + 3 * d * m.intermediate_dim;
    return 2 * m.vocab_size * d + m.num_layers * per_layer;
}

inline Bytes weight_bytes(const ModelSpec& m) { return m.dtype_bytes * parameter_count(m); }

inline Bytes kv_cache_bytes(const ModelSpec& m, Tokens context) {
    return 2 * m.batch * m.num_layers * context * m.kv_dim() * m.dtype_bytes;
}

// Hidden state plus the two MLP intermediates, for every resident token.
inline Bytes activation_bytes(const ModelSpec& m, Tokens resident_tokens) {
    return (m.hidden_dim + 2 * m.intermediate_dim) * resident_tokens * m.dtype_bytes;
}

inline void require_resolved(const Policy& policy) {
    if (policy.kind == PolicyKind::Adaptive) {
        throw Error(ErrorKind::UnresolvedPolicy, "Adaptive must be resolved to a concrete policy first");
    }
}

/// On-device KV bytes for a single pipeline stage holding all layers.
/// Offload policies keep two staging copies (ping-pong) of one unit: a whole
/// layer for LayerOffload, one head group for HeadOffload.
inline Bytes kv_on_device_bytes(const ModelSpec& m, const Policy& policy, Tokens context) {
    require_resolved(policy);
    validate(policy, m);
    constexpr Bytes ping_pong = 2;
    switch (policy.kind) {
    case PolicyKind::Standard:
    case PolicyKind::ChunkedPrefill: return kv_cache_bytes(m, context);
    case PolicyKind::KvQuant4: return kv_cache_bytes(m, context) / 4;
    case PolicyKind::LayerOffload: return ping_pong * 2 * m.batch * context * m.kv_dim() * m.dtype_bytes;
    case PolicyKind::HeadOffload:
        return ping_pong * 2 * m.batch * context * (m.head_dim * policy.heads_per_group) * m.dtype_bytes;
    case PolicyKind::Adaptive: break;
    }
    return 0;
}

inline Tokens resident_activation_tokens(const Policy& policy, Tokens context, Tokens chunk) {
    if (!policy.chunks_activations()) {
        return context;
    }
    if (chunk == 0 && context > 0) {
        throw Error(ErrorKind::InvalidSpec, "chunk must be >= 1 for " + to_string(policy));
    }
    return std::min(chunk, context);
}

inline MemoryReport footprint(const ModelSpec& m, const HardwareSpec& hw, const Policy& policy, Tokens context,
                              Tokens chunk) {
    require_resolved(policy);
    validate(policy, m);
    const std::uint64_t stages = std::max<std::uint64_t>(hw.device_count, 1);
    if (m.num_layers % stages != 0) {
        throw Error(ErrorKind::InvalidSpec, "num_layers " + std::to_string(m.num_layers) +
                                                " not divisible across " + std::to_string(stages) + " devices");
    }
    MemoryReport r;
    r.policy = policy;
    r.context = context;
    r.chunk = resident_activation_tokens(policy, context, chunk);
    r.weights = weight_bytes(m) / stages;
    r.kv_on_device = kv_on_device_bytes(m, policy, context);
    if (!policy.offloads()) {
        r.kv_on_device /= stages;
    }
    r.activation = activation_bytes(m, r.chunk);
    r.total_on_device = r.weights + r.kv_on_device + r.activation;
    r.kv_total = kv_cache_bytes(m, context);
    if (policy.kind == PolicyKind::KvQuant4) {
        r.kv_total /= 4;
    }
    return r;
}

inline bool fits(const MemoryReport& r, const HardwareSpec& hw, Bytes reserve) {
    if (r.total_on_device + reserve > hw.device_capacity) {
        return false;
    }
    return !r.policy.offloads() || r.kv_total <= hw.host_capacity;
}

struct ContextLimit {
    Tokens tokens = 0;
    bool host_bound = false;
};

// Largest context whose footprint (plus reserve) fits device memory and, for
// offload policies, whose full KV cache fits host memory. The footprint is
// piecewise linear in S (activation stops growing once S reaches the chunk),
// so each piece is inverted in closed form and then nudged to absorb integer
// rounding in the byte formulas.
inline ContextLimit max_context_limit(const ModelSpec& m, const HardwareSpec& hw, const Policy& policy, Tokens chunk,
                                      Bytes reserve) {
    require_resolved(policy);
    auto fp = [&](Tokens s) { return footprint(m, hw, policy, s, chunk); };
    const MemoryReport empty = fp(0);
    if (empty.weights + reserve >= hw.device_capacity) {
        throw Error(ErrorKind::Infeasible, "weights plus reserve exceed device capacity");
    }
    const double budget = static_cast<double>(hw.device_capacity - reserve - empty.weights);

    // Slopes measured on a large probe to average out integer division.
    constexpr Tokens probe = Tokens{1} << 20;
    const MemoryReport at_probe = fp(probe);
    const double kv_slope = static_cast<double>(at_probe.kv_on_device) / static_cast<double>(probe);
    const double act_slope = static_cast<double>(activation_bytes(m, 1));

    auto device_fits = [&](Tokens s) {
        const MemoryReport r = fp(s);
        return r.total_on_device + reserve <= hw.device_capacity;
    };
    auto refine = [&](double estimate) {
        Tokens s = estimate <= 0.0 ? 0 : static_cast<Tokens>(std::floor(estimate));
        while (s > 0 && !device_fits(s)) {
            --s;
        }
        while (device_fits(s + 1)) {
            ++s;
        }
        return s;
    };

    Tokens device_limit = 0;
    if (policy.chunks_activations() && chunk > 0) {
        const double act_fixed = static_cast<double>(activation_bytes(m, chunk));
        const Tokens beyond_chunk = refine((budget - act_fixed) / kv_slope);
        if (beyond_chunk >= chunk) {
            device_limit = beyond_chunk;
        } else {
            device_limit = std::min(refine(budget / (kv_slope + act_slope)), chunk);
        }
    } else {
        device_limit = refine(budget / (kv_slope + act_slope));
    }

    ContextLimit out{device_limit, false};
    if (policy.offloads()) {
        const Bytes per_token = kv_cache_bytes(m, 1);
        const Tokens host_limit = hw.host_capacity / per_token;
        if (host_limit < out.tokens) {
            out = {host_limit, true};
        }
    }
    if (out.tokens < 1) {
        throw Error(ErrorKind::Infeasible, "no context length fits for " + to_string(policy));
    }
    return out;
}

inline Tokens max_context(const ModelSpec& m, const HardwareSpec& hw, const Policy& policy, Tokens chunk,
                          Bytes reserve) {
    return max_context_limit(m, hw, policy, chunk, reserve).tokens;
}

} // namespace headwise
