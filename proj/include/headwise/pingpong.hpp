#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace headwise {

enum class SlotKind { Prefetch, Evict };
enum class SlotOp { WriteBegin, WriteEnd, ReadBegin, ReadEnd };

struct SlotEvent {
    std::uint64_t seq = 0;
    SlotKind kind = SlotKind::Prefetch;
    int slot = 0;
    SlotOp op = SlotOp::WriteBegin;
    std::uint64_t unit = 0;  // pipeline position that owns the access
};

// Access ledger for the two staging slots per direction. A write may only
// begin once every earlier access to that slot has signalled completion; a
// read may not overlap a write. Violations are counted and, unless disabled,
// thrown immediately.
class SlotLedger {
public:
    explicit SlotLedger(bool throw_on_violation = true) : throw_on_violation_(throw_on_violation) {}

    void begin_write(SlotKind k, int slot, std::uint64_t unit) {
        std::lock_guard lock(mu_);
        State& s = state(k, slot);
        if (s.readers != 0 || s.writers != 0) {
            fail("write to busy slot", k, slot, unit);
        }
        ++s.writers;
        log(k, slot, SlotOp::WriteBegin, unit);
    }

    void end_write(SlotKind k, int slot, std::uint64_t unit) {
        std::lock_guard lock(mu_);
        --state(k, slot).writers;
        log(k, slot, SlotOp::WriteEnd, unit);
    }

    void begin_read(SlotKind k, int slot, std::uint64_t unit) {
        std::lock_guard lock(mu_);
        State& s = state(k, slot);
        if (s.writers != 0) {
            fail("read of slot being written", k, slot, unit);
        }
        ++s.readers;
        log(k, slot, SlotOp::ReadBegin, unit);
    }

    void end_read(SlotKind k, int slot, std::uint64_t unit) {
        std::lock_guard lock(mu_);
        --state(k, slot).readers;
        log(k, slot, SlotOp::ReadEnd, unit);
    }

    [[nodiscard]] std::uint64_t violations() const {
        std::lock_guard lock(mu_);
        return violations_;
    }

    [[nodiscard]] std::vector<SlotEvent> events() const {
        std::lock_guard lock(mu_);
        return events_;
    }

    void clear() {
        std::lock_guard lock(mu_);
        events_.clear();
        violations_ = 0;
        states_ = {};
        seq_ = 0;
    }

private:
    struct State {
        int readers = 0;
        int writers = 0;
    };

    State& state(SlotKind k, int slot) { return states_[static_cast<std::size_t>(k) * 2 + static_cast<std::size_t>(slot & 1)]; }

    void log(SlotKind k, int slot, SlotOp op, std::uint64_t unit) { events_.push_back({seq_++, k, slot, op, unit}); }

    void fail(const char* what, SlotKind k, int slot, std::uint64_t unit) {
        ++violations_;
        if (throw_on_violation_) {
            throw std::logic_error(std::string("ping-pong safety: ") + what + " (" +
                                   (k == SlotKind::Prefetch ? "prefetch" : "evict") + " slot " + std::to_string(slot) +
                                   ", unit " + std::to_string(unit) + ")");
        }
    }

    mutable std::mutex mu_;
    bool throw_on_violation_;
    std::array<State, 4> states_{};
    std::vector<SlotEvent> events_;
    std::uint64_t violations_ = 0;
    std::uint64_t seq_ = 0;
};

/// Replays a ledger log and returns the number of accesses that began before
/// the previous access to the same slot completed.
inline std::uint64_t count_reuse_before_completion(const std::vector<SlotEvent>& events) {
    std::array<int, 4> readers{};
    std::array<int, 4> writers{};
    std::uint64_t bad = 0;
    for (const SlotEvent& e : events) {
        const std::size_t i = static_cast<std::size_t>(e.kind) * 2 + static_cast<std::size_t>(e.slot & 1);
        switch (e.op) {
        case SlotOp::WriteBegin:
            if (readers[i] != 0 || writers[i] != 0) {
                ++bad;
            }
            ++writers[i];
            break;
        case SlotOp::WriteEnd: --writers[i]; break;
        case SlotOp::ReadBegin:
            if (writers[i] != 0) {
                ++bad;
            }
            ++readers[i];
            break;
        case SlotOp::ReadEnd: --readers[i]; break;
        }
    }
    return bad;
}

// Single worker thread executing submitted tasks in order; models one
// hardware queue (a copy engine).
class Lane {
public:
    Lane() : worker_([this](std::stop_token st) { run(st); }) {}
    Lane(const Lane&) = delete;
    Lane& operator=(const Lane&) = delete;
    ~Lane() {
        worker_.request_stop();
        cv_.notify_all();
    }

    std::future<void> submit(std::function<void()> fn) {
        std::packaged_task<void()> task(std::move(fn));
        auto fut = task.get_future();
        {
            std::lock_guard lock(mu_);
            queue_.push_back(std::move(task));
        }
        cv_.notify_one();
        return fut;
    }

private:
    void run(std::stop_token st) {
        for (;;) {
            std::packaged_task<void()> task;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [&] { return st.stop_requested() || !queue_.empty(); });
                if (queue_.empty()) {
                    return;
                }
                task = std::move(queue_.front());
                queue_.pop_front();
            }
            task();
        }
    }

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::packaged_task<void()>> queue_;
    std::jthread worker_;
};

} // namespace headwise
