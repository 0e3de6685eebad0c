#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "headwise/memory.hpp"
#include "headwise/units.hpp"
#include "headwise/workload.hpp"

namespace headwise {

enum class Phase { Prefill, Decode };
enum class Bound { Compute, Memory };

inline std::string to_string(Phase p) { return p == Phase::Prefill ? "prefill" : "decode"; }
inline std::string to_string(Bound b) { return b == Bound::Compute ? "compute" : "memory"; }

// One attention kernel launch: either a whole layer or a group of g kv heads
// (with their query heads).
struct Kernel {
    std::uint64_t heads_per_group = 0;  // 0 = full layer

    static constexpr Kernel full_layer() { return {0}; }
    static constexpr Kernel head_wise(std::uint64_t g) { return {g}; }

    [[nodiscard]] double fraction(const ModelSpec& m) const {
        return heads_per_group == 0 ? 1.0
                                    : static_cast<double>(heads_per_group) / static_cast<double>(m.num_kv_heads);
    }
    friend constexpr bool operator==(const Kernel&, const Kernel&) = default;
};

struct RooflinePoint {
    Phase phase = Phase::Prefill;
    Kernel kernel{};
    bool offload = false;
    Tokens context = 0;
    double ops = 0.0;
    double bytes_moved = 0.0;
    double arithmetic_intensity = 0.0;
    double attainable = 0.0;
    Bound bound = Bound::Memory;
};

/// Per-layer attention FLOPs. Score and value matmuls over every query head,
/// no causal discount.
inline double attention_ops(const ModelSpec& m, Phase phase, Tokens context, Kernel kernel = Kernel::full_layer()) {
    const double s = static_cast<double>(context);
    const double d = static_cast<double>(m.hidden_dim);
    const double full = phase == Phase::Prefill ? 4.0 * s * s * d : 4.0 * s * d;
    return full * kernel.fraction(m);
}

/// Per-layer attention memory traffic.
///
/// Prefill resident traffic reads Q and writes O at full width and touches K
/// and V at kv width; prefill offload counts only the KV cache crossing the
/// link. Decode counts 2*S*D elements for both, i.e. full query width rather
/// than kv width, which is the convention the published tables use.
inline double attention_bytes(const ModelSpec& m, Phase phase, Tokens context, bool offload,
                              Kernel kernel = Kernel::full_layer()) {
    const double s = static_cast<double>(context);
    const double d = static_cast<double>(m.hidden_dim);
    const double dkv = static_cast<double>(m.kv_dim());
    const double elem = static_cast<double>(m.dtype_bytes);
    double elements = 0.0;
    if (phase == Phase::Prefill) {
        elements = offload ? 2.0 * s * dkv : 2.0 * s * d + 2.0 * s * dkv;
    } else {
        elements = 2.0 * s * d;
    }
    return elements * elem * kernel.fraction(m);
}

inline double effective_bandwidth(const HardwareSpec& hw, Phase phase, bool offload) {
    if (!offload) {
        return hw.mem_bw;
    }
    return phase == Phase::Prefill ? hw.link_bw_large : hw.link_bw_small;
}

inline RooflinePoint classify(const ModelSpec& m, const HardwareSpec& hw, Phase phase, Kernel kernel, bool offload,
                              Tokens context) {
    RooflinePoint p;
    p.phase = phase;
    p.kernel = kernel;
    p.offload = offload;
    p.context = context;
    p.ops = attention_ops(m, phase, context, kernel);
    p.bytes_moved = attention_bytes(m, phase, context, offload, kernel);
    p.arithmetic_intensity = p.bytes_moved > 0.0 ? p.ops / p.bytes_moved : 0.0;
    const double roof = p.arithmetic_intensity * effective_bandwidth(hw, phase, offload);
    p.attainable = std::min(hw.peak_flops, roof);
    p.bound = roof >= hw.peak_flops ? Bound::Compute : Bound::Memory;
    return p;
}

// Smallest chunk at which offloaded prefill reaches peak compute:
// AI_offload(S) * link_bw_large >= peak. AI_offload(S) = 2*S*D / (D_kv*dtype).
inline Tokens turning_point(const ModelSpec& m, const HardwareSpec& hw) {
    if (std::isinf(hw.link_bw_large)) {
        return 1;
    }
    auto reaches_peak = [&](Tokens s) {
        return classify(m, hw, Phase::Prefill, Kernel::full_layer(), true, s).bound == Bound::Compute;
    };
    const double per_token_ai = 2.0 * static_cast<double>(m.hidden_dim) /
                                (static_cast<double>(m.kv_dim()) * static_cast<double>(m.dtype_bytes));
    Tokens s = std::max<Tokens>(1, static_cast<Tokens>(std::ceil(hw.peak_flops / (per_token_ai * hw.link_bw_large))));
    while (s > 1 && reaches_peak(s - 1)) {
        --s;
    }
    while (!reaches_peak(s)) {
        ++s;
    }
    return s;
}

// --- whole-model phase time -------------------------------------------------

struct PhaseCost {
    double flops = 0.0;
    double hbm_bytes = 0.0;
    double link_in_bytes = 0.0;   // host -> device
    double link_out_bytes = 0.0;  // device -> host
};

struct PhaseTime {
    double compute = 0.0;
    double memory = 0.0;  // slowest data channel
    [[nodiscard]] double total() const { return std::max(compute, memory); }
};

inline PhaseTime time_of(const PhaseCost& c, const HardwareSpec& hw, double out_bw) {
    PhaseTime t;
    t.compute = c.flops / hw.peak_flops;
    const double hbm = c.hbm_bytes / hw.mem_bw;
    const double in = c.link_in_bytes / hw.link_bw_large;
    const double out = c.link_out_bytes / out_bw;
    t.memory = std::max({hbm, in, out});
    return t;
}

/// Cost of processing `tokens` new tokens on top of `prefix` cached ones.
inline PhaseCost step_cost(const ModelSpec& m, const Policy& policy, Tokens prefix, Tokens tokens) {
    const double l = static_cast<double>(m.num_layers);
    const double d = static_cast<double>(m.hidden_dim);
    const double dkv = static_cast<double>(m.kv_dim());
    const double elem = static_cast<double>(m.dtype_bytes);
    const double c = static_cast<double>(tokens);
    const double p = static_cast<double>(prefix);
    const double kv_scale = policy.kind == PolicyKind::KvQuant4 ? 0.25 : 1.0;
    PhaseCost cost;
    cost.flops = l * 4.0 * c * (p + c) * d + 2.0 * static_cast<double>(parameter_count(m)) * c;
    cost.hbm_bytes = static_cast<double>(weight_bytes(m)) + l * 2.0 * c * d * elem + l * 2.0 * (p + c) * dkv * elem * kv_scale;
    if (policy.offloads()) {
        cost.link_in_bytes = l * 2.0 * p * dkv * elem;
        cost.link_out_bytes = l * 2.0 * c * dkv * elem;
    }
    return cost;
}

/// Estimated seconds for a phase: max(T_comp, T_mem) per step. Prefill sums
/// over chunks with the cached prefix growing; decode is one token attending
/// to `context` cached tokens.
inline double phase_time(const ModelSpec& m, const HardwareSpec& hw, Phase phase, const Policy& policy, Tokens context,
                         Tokens chunk) {
    require_resolved(policy);
    if (phase == Phase::Decode) {
        return time_of(step_cost(m, policy, context, 1), hw, hw.link_bw_small).total();
    }
    if (context == 0) {
        return 0.0;
    }
    const Tokens step = (policy.chunks_activations() && chunk > 0) ? std::min(chunk, context) : context;
    double total = 0.0;
    for (Tokens done = 0; done < context; done += step) {
        const Tokens n = std::min(step, context - done);
        total += time_of(step_cost(m, policy, done, n), hw, hw.link_bw_large).total();
    }
    return total;
}

// --- published table layout -----------------------------------------------

struct RooflineRow {
    Phase phase = Phase::Prefill;
    std::string label;
    Tokens context = 0;
    RooflinePoint regular;
    RooflinePoint offload;
};

inline std::string context_label(Tokens s) {
    if (s % 1024 == 0) {
        return std::to_string(s / 1024) + "k";
    }
    return std::to_string(s);
}

inline std::vector<RooflineRow> roofline_table(const ModelSpec& m, const HardwareSpec& hw,
                                               const std::vector<Tokens>& contexts = {1024, 10240, 102400}) {
    std::vector<RooflineRow> rows;
    for (Phase phase : {Phase::Prefill, Phase::Decode}) {
        for (Kernel kernel : {Kernel::full_layer(), Kernel::head_wise(1)}) {
            for (Tokens s : contexts) {
                RooflineRow row;
                row.phase = phase;
                row.context = s;
                row.label = std::string(kernel.heads_per_group == 0 ? "flashattention" : "head-wise") + " (" +
                            context_label(s) + ")";
                row.regular = classify(m, hw, phase, kernel, false, s);
                row.offload = classify(m, hw, phase, kernel, true, s);
                rows.push_back(row);
            }
        }
    }
    return rows;
}

/// Rounds to n significant figures.
inline double round_significant(double x, int n) {
    if (x == 0.0 || !std::isfinite(x)) {
        return x;
    }
    const double magnitude = std::floor(std::log10(std::fabs(x)));
    const double scale = std::pow(10.0, static_cast<double>(n) - 1.0 - magnitude);
    return std::round(x * scale) / scale;
}

/// Compact engineering notation in the style of the published tables
/// ("17G", "1.7T", "0.5M").
inline std::string si_compact(double x, int significant = 2) {
    static constexpr const char* suffixes[] = {"", "K", "M", "G", "T", "P", "E"};
    if (x == 0.0) {
        return "0";
    }
    const double r = round_significant(x, significant);
    int idx = 0;
    double v = r;
    while (std::fabs(v) >= 1000.0 && idx < 6) {
        v /= 1000.0;
        ++idx;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*g%s", significant + 1, v, suffixes[idx]);
    return buf;
}

} // namespace headwise
