#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <future>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "headwise/arena.hpp"
#include "headwise/engine.hpp"
#include "headwise/error.hpp"
#include "headwise/memory.hpp"
#include "headwise/pingpong.hpp"
#include "headwise/roofline.hpp"
#include "headwise/timeline.hpp"
#include "headwise/workload.hpp"

namespace headwise {

enum class ExecMode { Simulated, Overlapped };

inline std::string to_string(ExecMode m) { return m == ExecMode::Simulated ? "simulated" : "overlapped"; }

struct RuntimeConfig {
    Policy policy = Policy::standard();
    ExecMode mode = ExecMode::Simulated;
    Tokens capacity = 0;  // cached-token capacity; 0 sizes it to the first prefill
    std::uint64_t seed = 42;
    bool numeric = true;  // false: schedule and memory accounting only
    std::uint64_t resident_units = 0;  // offload policies: leading (layer, group) units kept on device
};

struct RunResult {
    Matrix outputs;  // one final hidden row per processed token; empty when not numeric
    SimTimeline timeline;
};

// One (layer, head group) slice of the KV cache: the granularity at which the
// runtime moves data between tiers.
struct CacheUnit {
    std::uint64_t layer = 0;
    std::uint64_t group = 0;
    bool resident = false;
    std::uint64_t ordinal = 0;  // position among offloaded units; picks the ping-pong slot
};

// Executes prefill and decode over the mini-engine with the KV cache split
// between a device tier and a host tier.
//
// Each sweep (one prefill chunk or one decode token) walks every cache unit
// in layer order through a depth-2 pipeline: while unit k computes, unit k+1's
// history is prefetched into the other ping-pong slot and unit k-1's new
// tokens are evicted to host. Prefetch crosses layer boundaries. Timing always
// comes from the lock-step schedule on a virtual clock; in Overlapped mode the
// copies additionally run on real worker threads, which exercises the slot
// hand-off contract without changing any numbers.
class OffloadRuntime {
public:
    OffloadRuntime(ModelSpec m, HardwareSpec hw, RuntimeConfig cfg)
        : spec_(std::move(m)), hw_(std::move(hw)), cfg_(cfg), device_(Tier::Device, hw_.device_capacity),
          host_(Tier::Host, hw_.host_capacity), workspace_(Tier::Device, 0), scheduler_(hw_) {
        validate(spec_);
        require_resolved(cfg_.policy);
        validate(cfg_.policy, spec_);
        if (cfg_.policy.kind == PolicyKind::KvQuant4) {
            throw Error(ErrorKind::UnsupportedPolicy, "KvQuant4 is an analytic memory policy only");
        }
        if (cfg_.numeric && spec_.batch != 1) {
            throw Error(ErrorKind::InvalidSpec, "numeric execution supports batch 1 only");
        }
        heads_per_unit_ = unit_heads(cfg_.policy, spec_);
        const std::uint64_t groups = spec_.num_kv_heads / heads_per_unit_;
        std::uint64_t ordinal = 0;
        for (std::uint64_t l = 0; l < spec_.num_layers; ++l) {
            for (std::uint64_t g = 0; g < groups; ++g) {
                CacheUnit u{l, g, true, 0};
                if (cfg_.policy.offloads()) {
                    u.resident = units_.size() < cfg_.resident_units;
                    if (!u.resident) {
                        u.ordinal = ordinal++;
                    }
                }
                units_.push_back(u);
            }
        }
        if (cfg_.numeric) {
            weights_ = make_weights(spec_, cfg_.seed);
        }
        if (cfg_.mode == ExecMode::Overlapped) {
            prefetch_lane_ = std::make_unique<Lane>();
            evict_lane_ = std::make_unique<Lane>();
        }
    }

    [[nodiscard]] const ModelSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] const RuntimeConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] const std::vector<CacheUnit>& units() const noexcept { return units_; }
    [[nodiscard]] std::uint64_t heads_per_unit() const noexcept { return heads_per_unit_; }
    [[nodiscard]] Tokens cached_tokens() const noexcept { return cached_; }
    [[nodiscard]] Tokens capacity() const noexcept { return capacity_; }
    [[nodiscard]] const Arena& device_arena() const noexcept { return device_; }
    [[nodiscard]] const Arena& host_arena() const noexcept { return host_; }
    [[nodiscard]] const Arena& workspace_arena() const noexcept { return workspace_; }
    [[nodiscard]] const SlotLedger& ledger() const noexcept { return ledger_; }
    [[nodiscard]] const SimTimeline& timeline() const noexcept { return history_; }
    [[nodiscard]] double clock() const noexcept { return clock_; }

    /// Fraction of KV units pinned on device.
    [[nodiscard]] double resident_fraction() const {
        const auto resident = std::count_if(units_.begin(), units_.end(), [](const CacheUnit& u) { return u.resident; });
        return static_cast<double>(resident) / static_cast<double>(units_.size());
    }

    /// KV bytes currently held in the host tier.
    [[nodiscard]] Bytes host_kv_bytes() const {
        const auto offloaded = std::count_if(units_.begin(), units_.end(), [](const CacheUnit& u) { return !u.resident; });
        return static_cast<Bytes>(offloaded) * unit_bytes(cached_);
    }

    RunResult run_prefill(Tokens tokens, Tokens chunk) {
        const Tokens step = cfg_.policy.kind == PolicyKind::Standard || chunk == 0 ? tokens : std::min(chunk, tokens);
        reserve(cfg_.capacity != 0 ? cfg_.capacity : cached_ + tokens, tokens, step);
        if (cached_ + tokens > capacity_) {
            throw Error(ErrorKind::CapacityExceeded, "prefill of " + std::to_string(tokens) + " tokens on top of " +
                                                         std::to_string(cached_) + " exceeds capacity " +
                                                         std::to_string(capacity_));
        }
        RunResult result;
        if (cfg_.numeric) {
            result.outputs = Matrix(static_cast<std::size_t>(tokens), spec_.hidden_dim);
        }
        for (Tokens done = 0; done < tokens; done += step) {
            const Tokens n = std::min(step, tokens - done);
            Matrix y = sweep(n, Phase::Prefill, result.timeline);
            if (cfg_.numeric) {
                std::copy(y.data().begin(), y.data().end(),
                          result.outputs.data().begin() + static_cast<std::ptrdiff_t>(done * spec_.hidden_dim));
            }
        }
        finish(result.timeline);
        return result;
    }

    RunResult run_decode(std::uint64_t steps) {
        RunResult result;
        if (steps == 0) {
            return result;
        }
        if (cached_ == 0) {
            throw Error(ErrorKind::InvalidSpec, "decode requires a prefilled cache");
        }
        if (cfg_.numeric) {
            result.outputs = Matrix(static_cast<std::size_t>(steps), spec_.hidden_dim);
        }
        for (std::uint64_t s = 0; s < steps; ++s) {
            if (cached_ + 1 > capacity_) {
                throw Error(ErrorKind::CapacityExceeded, "decode: cache full at " + std::to_string(capacity_) +
                                                             " tokens");
            }
            Matrix y = sweep(1, Phase::Decode, result.timeline);
            if (cfg_.numeric) {
                std::copy(y.data().begin(), y.data().end(),
                          result.outputs.data().begin() + static_cast<std::ptrdiff_t>(s * spec_.hidden_dim));
            }
        }
        finish(result.timeline);
        return result;
    }

    /// Fault injection for negative controls: toggles one exponent bit of a
    /// cached value element in whichever tier holds it.
    void corrupt_cache(std::uint64_t layer, std::uint64_t kv_head, Tokens token, std::uint64_t element) {
        if (!cfg_.numeric) {
            throw Error(ErrorKind::InvalidSpec, "no numeric cache to corrupt");
        }
        const CacheUnit& u = units_.at(layer * (spec_.num_kv_heads / heads_per_unit_) + kv_head / heads_per_unit_);
        HeadKvCache& cache = u.resident ? device_cache_ : host_cache_;
        std::span<float> block = cache.value_block(layer, kv_head);
        auto* bytes = reinterpret_cast<unsigned char*>(&block[token * spec_.head_dim + element]);
        bytes[2] ^= 0x80;
    }

    /// Heads per unit for a policy: a whole layer unless HeadOffload.
    static std::uint64_t unit_heads(const Policy& p, const ModelSpec& m) {
        return p.kind == PolicyKind::HeadOffload ? p.heads_per_group : m.num_kv_heads;
    }

private:
    [[nodiscard]] Bytes unit_bytes(Tokens tokens) const {
        return 2 * spec_.batch * tokens * heads_per_unit_ * spec_.head_dim * spec_.dtype_bytes;
    }

    // Pre-allocates every tier once, before any compute.
    void reserve(Tokens capacity, Tokens tokens, Tokens step) {
        if (reserved_) {
            return;
        }
        capacity_ = capacity;
        const std::uint64_t stages = std::max<std::uint64_t>(hw_.device_count, 1);
        device_.alloc(weight_bytes(spec_) / stages, "weights");
        const Bytes act = activation_bytes(spec_, resident_activation_tokens(cfg_.policy, tokens, step));
        device_.alloc(act, "activation");
        workspace_ = Arena(Tier::Device, act);
        if (!cfg_.policy.offloads()) {
            device_.alloc(kv_cache_bytes(spec_, capacity_) / stages, "kv-cache");
        } else {
            device_.alloc(unit_bytes(capacity_), "ping-pong[0]");
            device_.alloc(unit_bytes(capacity_), "ping-pong[1]");
            workspace_.alloc(unit_bytes(step), "evict[0]");
            workspace_.alloc(unit_bytes(step), "evict[1]");
            for (const CacheUnit& u : units_) {
                const std::string where = "[" + std::to_string(u.layer) + "," + std::to_string(u.group) + "]";
                if (u.resident) {
                    device_.alloc(unit_bytes(capacity_), "kv-resident" + where);
                } else {
                    host_.alloc(unit_bytes(capacity_), "kv-host" + where);
                }
            }
        }
        if (cfg_.numeric) {
            constexpr Bytes numeric_limit = kGiB;
            const Bytes floats = 2 * spec_.num_layers * spec_.num_kv_heads * capacity_ * spec_.head_dim * sizeof(float);
            if (floats > numeric_limit) {
                throw Error(ErrorKind::InvalidSpec, "numeric execution is desk-scale only; disable it for this size");
            }
            const auto any_resident = std::any_of(units_.begin(), units_.end(), [](auto& u) { return u.resident; });
            const auto any_offloaded = std::any_of(units_.begin(), units_.end(), [](auto& u) { return !u.resident; });
            if (any_resident) {
                device_cache_ = HeadKvCache(spec_.num_layers, spec_.num_kv_heads, spec_.head_dim, capacity_);
            }
            if (any_offloaded) {
                host_cache_ = HeadKvCache(spec_.num_layers, spec_.num_kv_heads, spec_.head_dim, capacity_);
                for (auto& slot : prefetch_slots_) {
                    slot = HeadKvCache(1, heads_per_unit_, spec_.head_dim, capacity_);
                }
                for (auto& slot : evict_slots_) {
                    slot = HeadKvCache(1, heads_per_unit_, spec_.head_dim, step);
                }
            }
        }
        reserved_ = true;
    }

    [[nodiscard]] PipelineStep step_for(const CacheUnit& u, Tokens prefix, Tokens n) const {
        const double frac = static_cast<double>(heads_per_unit_) / static_cast<double>(spec_.num_kv_heads);
        const double count = static_cast<double>(units_.size());
        const double d = static_cast<double>(spec_.hidden_dim);
        const double c = static_cast<double>(n);
        const double p = static_cast<double>(prefix);
        const double elem = static_cast<double>(spec_.dtype_bytes);
        const double unit_width = static_cast<double>(heads_per_unit_ * spec_.head_dim);
        PipelineStep s;
        s.flops = 4.0 * c * (p + c) * d * frac + 2.0 * static_cast<double>(parameter_count(spec_)) * c / count;
        const double hbm = static_cast<double>(weight_bytes(spec_)) / count +
                           (2.0 * c * d * frac + 2.0 * (p + c) * unit_width) * elem;
        s.compute_seconds = std::max(s.flops / hw_.peak_flops, hbm / hw_.mem_bw);
        if (!u.resident) {
            s.prefetch_bytes = unit_bytes(prefix);
            s.evict_bytes = unit_bytes(n);
        }
        s.label = "L" + std::to_string(u.layer) + "G" + std::to_string(u.group);
        return s;
    }

    // --- numeric actions ---------------------------------------------------

    struct SweepState {
        Matrix x;
        Matrix attn;
        Tokens prefix = 0;
        Tokens n = 0;
    };

    void prefetch(std::size_t k, const SweepState& st) {
        const CacheUnit& u = units_[k];
        if (u.resident) {
            return;
        }
        const int slot = static_cast<int>(u.ordinal & 1);
        ledger_.begin_write(SlotKind::Prefetch, slot, k);
        HeadKvCache& dst = prefetch_slots_[slot];
        const std::size_t rows = static_cast<std::size_t>(st.prefix * spec_.head_dim);
        for (std::uint64_t h = 0; h < heads_per_unit_; ++h) {
            const std::uint64_t head = u.group * heads_per_unit_ + h;
            std::copy_n(host_cache_.key_block(u.layer, head).begin(), rows, dst.key_block(0, h).begin());
            std::copy_n(host_cache_.value_block(u.layer, head).begin(), rows, dst.value_block(0, h).begin());
            dst.set_length(0, h, st.prefix);
        }
        ledger_.end_write(SlotKind::Prefetch, slot, k);
    }

    void compute(std::size_t k, SweepState& st) {
        const CacheUnit& u = units_[k];
        const LayerWeights& lw = weights_.layers[u.layer];
        const std::size_t dh = spec_.head_dim;
        const std::size_t q_heads = heads_per_unit_ * spec_.q_per_kv();
        const std::size_t rows = static_cast<std::size_t>(st.n);

        Matrix q(rows, q_heads * dh);
        Matrix kx(rows, heads_per_unit_ * dh);
        Matrix vx(rows, heads_per_unit_ * dh);
        matmul_into(st.x.view(), lw.wq.view(), u.group * q_heads * dh, q.view());
        matmul_into(st.x.view(), lw.wk.view(), u.group * heads_per_unit_ * dh, kx.view());
        matmul_into(st.x.view(), lw.wv.view(), u.group * heads_per_unit_ * dh, vx.view());

        const int slot = static_cast<int>(u.ordinal & 1);
        HeadKvCache* cache = &device_cache_;
        std::uint64_t layer = u.layer;
        std::uint64_t head0 = u.group * heads_per_unit_;
        if (!u.resident) {
            ledger_.begin_write(SlotKind::Prefetch, slot, k);
            ledger_.begin_write(SlotKind::Evict, slot, k);
            cache = &prefetch_slots_[slot];
            layer = 0;
            head0 = 0;
            evict_slots_[slot].clear();
        }
        for (std::uint64_t h = 0; h < heads_per_unit_; ++h) {
            const auto kh = kx.cols_view(h * dh, dh);
            const auto vh = vx.cols_view(h * dh, dh);
            cache->append(layer, head0 + h, kh, vh);
            if (!u.resident) {
                evict_slots_[slot].append(0, h, kh, vh);
            }
        }
        for (std::size_t qh = 0; qh < q_heads; ++qh) {
            const std::uint64_t h = qh / spec_.q_per_kv();
            const std::size_t out_col = (u.group * q_heads + qh) * dh;
            attention_head_into(q.cols_view(qh * dh, dh), cache->keys(layer, head0 + h), cache->values(layer, head0 + h),
                                st.prefix, st.attn.cols_view(out_col, dh));
        }
        if (!u.resident) {
            ledger_.end_write(SlotKind::Evict, slot, k);
            ledger_.end_write(SlotKind::Prefetch, slot, k);
        }
        const bool last_in_layer = (u.group + 1) * heads_per_unit_ == spec_.num_kv_heads;
        if (last_in_layer) {
            add_output_projection(st.x, st.attn, lw);
        }
    }

    void evict(std::size_t k, const SweepState& st) {
        const CacheUnit& u = units_[k];
        if (u.resident) {
            return;
        }
        const int slot = static_cast<int>(u.ordinal & 1);
        ledger_.begin_read(SlotKind::Evict, slot, k);
        const HeadKvCache& src = evict_slots_[slot];
        for (std::uint64_t h = 0; h < heads_per_unit_; ++h) {
            const std::uint64_t head = u.group * heads_per_unit_ + h;
            if (host_cache_.length(u.layer, head) != st.prefix) {
                throw std::logic_error("host cache out of step with pipeline");
            }
            host_cache_.append(u.layer, head, src.keys(0, h), src.values(0, h));
        }
        ledger_.end_read(SlotKind::Evict, slot, k);
    }

    void execute(SweepState& st) {
        const std::size_t n = units_.size();
        if (cfg_.mode == ExecMode::Simulated) {
            prefetch(0, st);
            for (std::size_t k = 0; k < n; ++k) {
                if (k + 1 < n) {
                    prefetch(k + 1, st);
                }
                compute(k, st);
                if (k >= 1) {
                    evict(k - 1, st);
                }
            }
            evict(n - 1, st);
            return;
        }
        prefetch_lane_->submit([&] { prefetch(0, st); }).get();
        for (std::size_t k = 0; k < n; ++k) {
            std::future<void> pf;
            std::future<void> ev;
            if (k + 1 < n) {
                pf = prefetch_lane_->submit([&, k] { prefetch(k + 1, st); });
            }
            if (k >= 1) {
                ev = evict_lane_->submit([&, k] { evict(k - 1, st); });
            }
            std::exception_ptr failure;
            try {
                compute(k, st);
            } catch (...) {
                failure = std::current_exception();
            }
            // Join both lanes before the step advances, even on failure.
            for (auto* f : {&pf, &ev}) {
                if (f->valid()) {
                    try {
                        f->get();
                    } catch (...) {
                        if (!failure) {
                            failure = std::current_exception();
                        }
                    }
                }
            }
            if (failure) {
                std::rethrow_exception(failure);
            }
        }
        evict_lane_->submit([&] { evict(n - 1, st); }).get();
    }

    Matrix sweep(Tokens n, Phase phase, SimTimeline& timeline) {
        std::vector<PipelineStep> steps;
        steps.reserve(units_.size());
        for (const CacheUnit& u : units_) {
            steps.push_back(step_for(u, cached_, n));
        }
        clock_ = schedule_sweep(timeline, scheduler_, steps, phase, clock_);

        Matrix out;
        if (cfg_.numeric) {
            SweepState st{embed(spec_, cfg_.seed, cached_, n), Matrix(static_cast<std::size_t>(n), spec_.hidden_dim),
                          cached_, n};
            execute(st);
            out = std::move(st.x);
        }
        cached_ += n;
        return out;
    }

    void finish(SimTimeline& timeline) {
        timeline.peak_device_bytes = device_.peak();
        history_.append(timeline);
    }

    ModelSpec spec_;
    HardwareSpec hw_;
    RuntimeConfig cfg_;
    std::uint64_t heads_per_unit_ = 1;
    std::vector<CacheUnit> units_;
    ModelWeights weights_;

    Arena device_;
    Arena host_;
    Arena workspace_;  // activation region; evict staging lives inside it
    bool reserved_ = false;
    Tokens capacity_ = 0;
    Tokens cached_ = 0;

    HeadKvCache device_cache_;
    HeadKvCache host_cache_;
    std::array<HeadKvCache, 2> prefetch_slots_;
    std::array<HeadKvCache, 2> evict_slots_;
    SlotLedger ledger_;

    TransferScheduler scheduler_;
    double clock_ = 0.0;
    SimTimeline history_;

    std::unique_ptr<Lane> prefetch_lane_;
    std::unique_ptr<Lane> evict_lane_;
};

// --- exact-equivalence check ------------------------------------------------

struct PolicyDeviation {
    Policy policy;
    double prefill = 0.0;
    double decode = 0.0;
    [[nodiscard]] double max() const { return std::max(prefill, decode); }
};

struct EquivalenceReport {
    double tolerance = 1e-5;
    std::vector<PolicyDeviation> rows;
    [[nodiscard]] double max_deviation() const {
        double worst = 0.0;
        for (const auto& r : rows) {
            worst = std::max(worst, r.max());
        }
        return worst;
    }
    [[nodiscard]] bool pass() const { return max_deviation() <= tolerance; }
};

struct EquivalenceOptions {
    std::uint64_t seed = 42;
    std::uint64_t decode_steps = 4;
    ExecMode mode = ExecMode::Simulated;
    double tolerance = 1e-5;
    bool inject_fault = false;  // corrupt one cached value before decode in every non-reference run
};

/// Runs every policy on one seed and reports the worst absolute deviation of
/// prefill and decode outputs from an unchunked, fully resident reference.
inline EquivalenceReport verify_equivalence(const ModelSpec& m, Tokens context, Tokens chunk,
                                            const std::vector<Policy>& policies, EquivalenceOptions opt = {}) {
    HardwareSpec hw{"desk", 1e12, 1e11, 1e10, 1e10, 64 * kGiB, 256 * kGiB, 1};
    auto run = [&](const Policy& p, bool fault) {
        RuntimeConfig cfg;
        cfg.policy = p;
        cfg.mode = opt.mode;
        cfg.seed = opt.seed;
        cfg.capacity = context + opt.decode_steps;
        OffloadRuntime rt(m, hw, cfg);
        RunResult pre = rt.run_prefill(context, chunk);
        if (fault && context > 0) {
            rt.corrupt_cache(0, 0, 0, 0);
        }
        RunResult dec = rt.run_decode(context > 0 ? opt.decode_steps : 0);
        return std::pair{std::move(pre.outputs), std::move(dec.outputs)};
    };
    const auto [ref_pre, ref_dec] = run(Policy::standard(), false);
    EquivalenceReport report;
    report.tolerance = opt.tolerance;
    for (const Policy& p : policies) {
        const bool is_reference = p.kind == PolicyKind::Standard;
        const auto [pre, dec] = run(p, opt.inject_fault && !is_reference);
        report.rows.push_back({p, max_abs_diff(pre, ref_pre), max_abs_diff(dec, ref_dec)});
    }
    return report;
}

} // namespace headwise
