#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headwise/error.hpp"
#include "headwise/units.hpp"

namespace headwise {

// Transformer architecture dimensions. Every memory and FLOP formula in the
// library reads from here; validate() enforces the structural invariants.
struct ModelSpec {
    std::string name;
    std::uint64_t num_layers = 0;
    std::uint64_t num_q_heads = 0;
    std::uint64_t num_kv_heads = 0;
    std::uint64_t head_dim = 0;
    std::uint64_t hidden_dim = 0;
    std::uint64_t intermediate_dim = 0;
    std::uint64_t vocab_size = 0;
    std::uint64_t dtype_bytes = 2;
    std::uint64_t batch = 1;

    /// Width of one token's keys (or values) across all kv heads.
    [[nodiscard]] std::uint64_t kv_dim() const noexcept { return num_kv_heads * head_dim; }
    /// Query heads sharing one kv head.
    [[nodiscard]] std::uint64_t q_per_kv() const noexcept { return num_kv_heads == 0 ? 0 : num_q_heads / num_kv_heads; }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct HardwareSpec {
    std::string name;
    double peak_flops = 0.0;
    double mem_bw = 0.0;
    double link_bw_large = 0.0;  // bulk transfers
    double link_bw_small = 0.0;  // per-token-scale transfers
    Bytes device_capacity = 0;
    Bytes host_capacity = 0;
    std::uint64_t device_count = 1;

    friend bool operator==(const HardwareSpec&, const HardwareSpec&) = default;
};

enum class PolicyKind { Standard, ChunkedPrefill, KvQuant4, LayerOffload, HeadOffload, Adaptive };

struct Policy {
    PolicyKind kind = PolicyKind::Standard;
    std::uint64_t heads_per_group = 0;  // HeadOffload only

    static constexpr Policy standard() { return {PolicyKind::Standard, 0}; }
    static constexpr Policy chunked_prefill() { return {PolicyKind::ChunkedPrefill, 0}; }
    static constexpr Policy kv_quant4() { return {PolicyKind::KvQuant4, 0}; }
    static constexpr Policy layer_offload() { return {PolicyKind::LayerOffload, 0}; }
    static constexpr Policy head_offload(std::uint64_t g) { return {PolicyKind::HeadOffload, g}; }
    static constexpr Policy adaptive() { return {PolicyKind::Adaptive, 0}; }

    [[nodiscard]] constexpr bool offloads() const noexcept {
        return kind == PolicyKind::LayerOffload || kind == PolicyKind::HeadOffload;
    }
    [[nodiscard]] constexpr bool chunks_activations() const noexcept {
        return kind == PolicyKind::ChunkedPrefill || kind == PolicyKind::HeadOffload;
    }

    friend constexpr bool operator==(const Policy&, const Policy&) = default;
};

inline std::string to_string(const Policy& p) {
    switch (p.kind) {
    case PolicyKind::Standard: return "Standard";
    case PolicyKind::ChunkedPrefill: return "ChunkedPrefill";
    case PolicyKind::KvQuant4: return "KvQuant4";
    case PolicyKind::LayerOffload: return "LayerOffload";
    case PolicyKind::HeadOffload: return "HeadOffload(" + std::to_string(p.heads_per_group) + ")";
    case PolicyKind::Adaptive: return "Adaptive";
    }
    return "Unknown";
}

// --- validation ---------------------------------------------------------

inline void validate(const ModelSpec& m) {
    auto require = [&](bool ok, const char* field, const std::string& why) {
        if (!ok) {
            throw Error(ErrorKind::InvalidSpec, "model '" + m.name + "' field " + field + ": " + why);
        }
    };
    require(m.num_layers >= 1, "num_layers", "must be >= 1");
    require(m.num_q_heads >= 1, "num_q_heads", "must be >= 1");
    require(m.num_kv_heads >= 1, "num_kv_heads", "must be >= 1");
    require(m.head_dim >= 1, "head_dim", "must be >= 1");
    require(m.hidden_dim >= 1, "hidden_dim", "must be >= 1");
    require(m.intermediate_dim >= 1, "intermediate_dim", "must be >= 1");
    require(m.vocab_size >= 1, "vocab_size", "must be >= 1");
    require(m.batch >= 1, "batch", "must be >= 1");
    require(m.dtype_bytes == 1 || m.dtype_bytes == 2 || m.dtype_bytes == 4, "dtype_bytes", "must be 1, 2 or 4");
    require(m.hidden_dim == m.num_q_heads * m.head_dim, "hidden_dim",
            "must equal num_q_heads x head_dim (" + std::to_string(m.num_q_heads * m.head_dim) + ")");
    require(m.num_q_heads % m.num_kv_heads == 0, "num_kv_heads", "must divide num_q_heads");
}

inline void validate(const HardwareSpec& hw) {
    auto require = [&](bool ok, const char* field, const std::string& why) {
        if (!ok) {
            throw Error(ErrorKind::InvalidSpec, "hardware '" + hw.name + "' field " + field + ": " + why);
        }
    };
    require(hw.peak_flops > 0.0, "peak_flops", "must be > 0");
    require(hw.mem_bw > 0.0, "mem_bw", "must be > 0");
    require(hw.link_bw_large > 0.0, "link_bw_large", "must be > 0");
    require(hw.link_bw_small > 0.0, "link_bw_small", "must be > 0");
    require(hw.device_capacity > 0, "device_capacity", "must be > 0");
    require(hw.host_capacity > 0, "host_capacity", "must be > 0");
    require(hw.device_count >= 1, "device_count", "must be >= 1");
    require(hw.link_bw_small <= hw.link_bw_large, "link_bw_small", "must not exceed link_bw_large");
    require(hw.link_bw_large <= hw.mem_bw, "link_bw_large", "must not exceed mem_bw");
}

inline void validate(const Policy& p, const ModelSpec& m) {
    if (p.kind == PolicyKind::HeadOffload) {
        if (p.heads_per_group == 0 || m.num_kv_heads % p.heads_per_group != 0) {
            throw Error(ErrorKind::InvalidSpec, "HeadOffload heads_per_group " + std::to_string(p.heads_per_group) +
                                                    " must divide num_kv_heads " + std::to_string(m.num_kv_heads));
        }
    }
}

// --- JSON ---------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ModelSpec& m) {
    j = nlohmann::json{{"name", m.name},
                       {"num_layers", m.num_layers},
                       {"num_q_heads", m.num_q_heads},
                       {"num_kv_heads", m.num_kv_heads},
                       {"head_dim", m.head_dim},
                       {"hidden_dim", m.hidden_dim},
                       {"intermediate_dim", m.intermediate_dim},
                       {"vocab_size", m.vocab_size},
                       {"dtype_bytes", m.dtype_bytes},
                       {"batch", m.batch}};
}

inline void from_json(const nlohmann::json& j, ModelSpec& m) {
    j.at("name").get_to(m.name);
    j.at("num_layers").get_to(m.num_layers);
    j.at("num_q_heads").get_to(m.num_q_heads);
    j.at("num_kv_heads").get_to(m.num_kv_heads);
    j.at("head_dim").get_to(m.head_dim);
    j.at("hidden_dim").get_to(m.hidden_dim);
    j.at("intermediate_dim").get_to(m.intermediate_dim);
    j.at("vocab_size").get_to(m.vocab_size);
    j.at("dtype_bytes").get_to(m.dtype_bytes);
    m.batch = j.value("batch", std::uint64_t{1});
}

inline void to_json(nlohmann::json& j, const HardwareSpec& hw) {
    j = nlohmann::json{{"name", hw.name},
                       {"peak_flops", hw.peak_flops},
                       {"mem_bw", hw.mem_bw},
                       {"link_bw_large", hw.link_bw_large},
                       {"link_bw_small", hw.link_bw_small},
                       {"device_capacity", hw.device_capacity},
                       {"host_capacity", hw.host_capacity},
                       {"device_count", hw.device_count}};
}

inline void from_json(const nlohmann::json& j, HardwareSpec& hw) {
    j.at("name").get_to(hw.name);
    j.at("peak_flops").get_to(hw.peak_flops);
    j.at("mem_bw").get_to(hw.mem_bw);
    j.at("link_bw_large").get_to(hw.link_bw_large);
    j.at("link_bw_small").get_to(hw.link_bw_small);
    j.at("device_capacity").get_to(hw.device_capacity);
    j.at("host_capacity").get_to(hw.host_capacity);
    hw.device_count = j.value("device_count", std::uint64_t{1});
}

namespace detail {

template <typename T>
T parse_spec_text(const std::string& text, const std::string& origin) {
    T spec;
    try {
        from_json(nlohmann::json::parse(text), spec);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::ParseError, origin + ": " + e.what());
    }
    validate(spec);
    return spec;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::ParseError, "cannot open " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

template <typename T>
void write_spec(const T& spec, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) {
        throw Error(ErrorKind::ParseError, "cannot write " + path.string());
    }
    nlohmann::json j;
    to_json(j, spec);
    out << j.dump(2) << '\n';
}

} // namespace detail

inline ModelSpec parse_model_spec(const std::string& text, const std::string& origin = "<string>") {
    return detail::parse_spec_text<ModelSpec>(text, origin);
}

inline HardwareSpec parse_hardware_spec(const std::string& text, const std::string& origin = "<string>") {
    return detail::parse_spec_text<HardwareSpec>(text, origin);
}

inline ModelSpec load_model_spec(const std::filesystem::path& path) {
    return parse_model_spec(detail::read_file(path), path.string());
}

inline HardwareSpec load_hardware_spec(const std::filesystem::path& path) {
    return parse_hardware_spec(detail::read_file(path), path.string());
}

inline void save_model_spec(const ModelSpec& m, const std::filesystem::path& path) { detail::write_spec(m, path); }
inline void save_hardware_spec(const HardwareSpec& hw, const std::filesystem::path& path) {
    detail::write_spec(hw, path);
}

// Hardware profiles behind the two published roofline tables: a 24 GiB
// consumer card (profile-A) and an 80 GiB datacenter card (profile-B). The
// small-link figures are the effective decode-offload rates those tables imply.
inline std::vector<HardwareSpec> builtin_profiles() {
    return {
        HardwareSpec{"profile-A", 165e12, 1e12, 25e9, 13e9, 24 * kGiB, 512 * kGiB, 1},
        HardwareSpec{"profile-B", 312e12, 1.4e12, 25e9, 23e9, 80 * kGiB, 512 * kGiB, 1},
    };
}

inline HardwareSpec builtin_profile(const std::string& name) {
    for (auto& hw : builtin_profiles()) {
        if (hw.name == name) {
            return hw;
        }
    }
    throw Error(ErrorKind::InvalidSpec, "unknown hardware profile '" + name + "'");
}

} // namespace headwise
