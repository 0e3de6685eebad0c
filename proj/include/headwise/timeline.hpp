#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "headwise/roofline.hpp"
#include "headwise/units.hpp"
#include "headwise/workload.hpp"

namespace headwise {

enum class Direction { HostToDevice, DeviceToHost };
enum class Stream { Prefetch, Evict };

inline std::string to_string(Direction d) { return d == Direction::HostToDevice ? "H2D" : "D2H"; }
inline std::string to_string(Stream s) { return s == Stream::Prefetch ? "prefetch" : "evict"; }

struct TransferEvent {
    Direction direction = Direction::HostToDevice;
    Bytes bytes = 0;
    double start = 0.0;
    double end = 0.0;
    Stream stream = Stream::Prefetch;
    std::string label;
};

struct ComputeInterval {
    double start = 0.0;
    double end = 0.0;
    double flops = 0.0;
    std::string label;
};

// One lock-step of a sweep: compute of unit k alongside the prefetch of k+1
// and the eviction of k-1.
struct StepRecord {
    double compute = 0.0;
    double transfer = 0.0;  // max(prefetch of next, evict of previous)
};

struct SweepRecord {
    double start = 0.0;
    double end = 0.0;
    double fill = 0.0;   // prefetch of the first unit
    double drain = 0.0;  // eviction of the last unit
    std::vector<StepRecord> steps;
};

// Two transfer streams over the host link. Each stream is serial; the two run
// concurrently (full duplex). Host-to-device traffic is always bulk history;
// device-to-host carries per-chunk deltas, which are per-token sized in decode.
class TransferScheduler {
public:
    TransferScheduler(double h2d_bw, double d2h_bulk_bw, double d2h_token_bw)
        : h2d_bw_(h2d_bw), d2h_bulk_bw_(d2h_bulk_bw), d2h_token_bw_(d2h_token_bw) {}

    explicit TransferScheduler(const HardwareSpec& hw)
        : TransferScheduler(hw.link_bw_large, hw.link_bw_large, hw.link_bw_small) {}

    [[nodiscard]] double bandwidth(Direction d, Phase phase) const {
        if (d == Direction::HostToDevice) {
            return h2d_bw_;
        }
        return phase == Phase::Prefill ? d2h_bulk_bw_ : d2h_token_bw_;
    }

    [[nodiscard]] double stream_end(Stream s) const { return s == Stream::Prefetch ? prefetch_end_ : evict_end_; }

    TransferEvent schedule(Direction d, Bytes bytes, double not_before, Phase phase, std::string label = {}) {
        const Stream stream = d == Direction::HostToDevice ? Stream::Prefetch : Stream::Evict;
        double& last = stream == Stream::Prefetch ? prefetch_end_ : evict_end_;
        TransferEvent e;
        e.direction = d;
        e.bytes = bytes;
        e.stream = stream;
        e.start = std::max(not_before, last);
        e.end = e.start + static_cast<double>(bytes) / bandwidth(d, phase);
        e.label = std::move(label);
        last = e.end;
        return e;
    }

private:
    double h2d_bw_;
    double d2h_bulk_bw_;
    double d2h_token_bw_;
    double prefetch_end_ = 0.0;
    double evict_end_ = 0.0;
};

inline TransferEvent schedule_transfer(TransferScheduler& sched, Direction d, Bytes bytes, double not_before,
                                       Phase phase) {
    return sched.schedule(d, bytes, not_before, phase);
}

class SimTimeline {
public:
    std::vector<ComputeInterval> compute;
    std::vector<TransferEvent> transfers;
    std::vector<SweepRecord> sweeps;
    Bytes peak_device_bytes = 0;

    [[nodiscard]] bool empty() const noexcept { return compute.empty() && transfers.empty(); }

    [[nodiscard]] double makespan() const {
        double end = 0.0;
        for (const auto& c : compute) {
            end = std::max(end, c.end);
        }
        for (const auto& t : transfers) {
            end = std::max(end, t.end);
        }
        for (const auto& s : sweeps) {
            end = std::max(end, s.end);
        }
        return end - origin();
    }

    [[nodiscard]] double origin() const {
        if (!sweeps.empty()) {
            return sweeps.front().start;
        }
        double start = compute.empty() ? 0.0 : compute.front().start;
        for (const auto& t : transfers) {
            start = std::min(start, t.start);
        }
        return start;
    }

    [[nodiscard]] double compute_seconds() const {
        double sum = 0.0;
        for (const auto& c : compute) {
            sum += c.end - c.start;
        }
        return sum;
    }

    [[nodiscard]] double transfer_seconds(Stream s) const {
        double sum = 0.0;
        for (const auto& t : transfers) {
            if (t.stream == s) {
                sum += t.end - t.start;
            }
        }
        return sum;
    }

    /// Share of transfer time that runs while compute is busy. 1 when there is
    /// nothing to transfer.
    [[nodiscard]] double overlap_fraction() const {
        double total = 0.0;
        double hidden = 0.0;
        for (const auto& t : transfers) {
            total += t.end - t.start;
            auto it = std::lower_bound(compute.begin(), compute.end(), t.start,
                                       [](const ComputeInterval& c, double x) { return c.end <= x; });
            for (; it != compute.end() && it->start < t.end; ++it) {
                hidden += std::max(0.0, std::min(it->end, t.end) - std::max(it->start, t.start));
            }
        }
        return total > 0.0 ? std::clamp(hidden / total, 0.0, 1.0) : 1.0;
    }

    void append(const SimTimeline& other) {
        compute.insert(compute.end(), other.compute.begin(), other.compute.end());
        transfers.insert(transfers.end(), other.transfers.begin(), other.transfers.end());
        sweeps.insert(sweeps.end(), other.sweeps.begin(), other.sweeps.end());
        peak_device_bytes = std::max(peak_device_bytes, other.peak_device_bytes);
    }
};

struct PipelineStep {
    double compute_seconds = 0.0;
    double flops = 0.0;
    Bytes prefetch_bytes = 0;  // history this unit needs before compute
    Bytes evict_bytes = 0;     // delta this unit writes back after compute
    std::string label;
};

// Depth-2 lock-step schedule over a sweep of n units:
//   fill:   prefetch(0)
//   step k: compute(k) || prefetch(k+1) || evict(k-1)
//   drain:  evict(n-1)
// so the sweep takes exactly fill + sum_k max(compute_k, transfer_k) + drain.
// Returns the end time.
inline double schedule_sweep(SimTimeline& timeline, TransferScheduler& sched, std::span<const PipelineStep> steps,
                             Phase phase, double start) {
    SweepRecord sweep;
    sweep.start = start;
    double t = start;
    auto transfer = [&](Direction d, const PipelineStep& s, double at) {
        const Bytes bytes = d == Direction::HostToDevice ? s.prefetch_bytes : s.evict_bytes;
        if (bytes == 0) {
            return at;
        }
        TransferEvent e = sched.schedule(d, bytes, at, phase, s.label);
        const double end = e.end;
        timeline.transfers.push_back(std::move(e));
        return end;
    };
    if (!steps.empty()) {
        t = transfer(Direction::HostToDevice, steps.front(), t);
        sweep.fill = t - start;
    }
    for (std::size_t k = 0; k < steps.size(); ++k) {
        const double step_start = t;
        double end = step_start + steps[k].compute_seconds;
        timeline.compute.push_back({step_start, end, steps[k].flops, steps[k].label});
        double moved = step_start;
        if (k + 1 < steps.size()) {
            moved = std::max(moved, transfer(Direction::HostToDevice, steps[k + 1], step_start));
        }
        if (k >= 1) {
            moved = std::max(moved, transfer(Direction::DeviceToHost, steps[k - 1], step_start));
        }
        sweep.steps.push_back({steps[k].compute_seconds, moved - step_start});
        t = std::max(end, moved);
    }
    if (!steps.empty()) {
        const double drain_start = t;
        t = transfer(Direction::DeviceToHost, steps.back(), t);
        sweep.drain = t - drain_start;
    }
    sweep.end = t;
    timeline.sweeps.push_back(std::move(sweep));
    return t;
}

} // namespace headwise
