#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "headwise/error.hpp"
#include "headwise/units.hpp"

namespace headwise {

enum class Tier { Device, Host };

inline std::string to_string(Tier t) { return t == Tier::Device ? "device" : "host"; }

using ArenaHandle = std::uint64_t;

// Capacity-enforced accounting arena for one memory tier. It tracks sizes and
// owners only; backing storage (when any) lives with the caller. Everything is
// reserved up front, so a failed alloc means the configuration does not fit.
class Arena {
public:
    struct Allocation {
        Bytes bytes = 0;
        std::string tag;
    };

    Arena(Tier tier, Bytes capacity) : tier_(tier), capacity_(capacity) {}

    [[nodiscard]] Tier tier() const noexcept { return tier_; }
    [[nodiscard]] Bytes capacity() const noexcept { return capacity_; }
    [[nodiscard]] Bytes used() const noexcept { return used_; }
    [[nodiscard]] Bytes peak() const noexcept { return peak_; }
    [[nodiscard]] Bytes available() const noexcept { return capacity_ - used_; }
    [[nodiscard]] std::uint64_t events() const noexcept { return events_; }
    [[nodiscard]] const std::map<ArenaHandle, Allocation>& allocations() const noexcept { return allocations_; }

    ArenaHandle alloc(Bytes bytes, std::string tag) {
        if (bytes > available()) {
            throw Error(ErrorKind::CapacityExceeded, to_string(tier_) + " arena cannot fit '" + tag + "' (" +
                                                         std::to_string(bytes) + " bytes, " +
                                                         std::to_string(available()) + " of " +
                                                         std::to_string(capacity_) + " free)");
        }
        const ArenaHandle h = next_++;
        allocations_.emplace(h, Allocation{bytes, std::move(tag)});
        used_ += bytes;
        peak_ = std::max(peak_, used_);
        record_event();
        return h;
    }

    void free(ArenaHandle h) {
        auto it = allocations_.find(h);
        if (it == allocations_.end()) {
            throw Error(ErrorKind::InvalidSpec, to_string(tier_) + " arena: unknown handle " + std::to_string(h));
        }
        used_ -= it->second.bytes;
        allocations_.erase(it);
        record_event();
    }

    [[nodiscard]] Bytes bytes_of(ArenaHandle h) const {
        auto it = allocations_.find(h);
        if (it == allocations_.end()) {
            throw Error(ErrorKind::InvalidSpec, to_string(tier_) + " arena: unknown handle " + std::to_string(h));
        }
        return it->second.bytes;
    }

private:
    void record_event() {
        ++events_;
        Bytes sum = 0;
        for (const auto& [_, a] : allocations_) {
            sum += a.bytes;
        }
        if (used_ > capacity_ || sum != used_) {
            throw std::logic_error(to_string(tier_) + " arena accounting broken");
        }
    }

    Tier tier_;
    Bytes capacity_;
    Bytes used_ = 0;
    Bytes peak_ = 0;
    std::uint64_t events_ = 0;
    ArenaHandle next_ = 1;
    std::map<ArenaHandle, Allocation> allocations_;
};

inline ArenaHandle arena_alloc(Arena& a, Bytes bytes, std::string tag) { return a.alloc(bytes, std::move(tag)); }

} // namespace headwise
