#pragma once

// Command-line driver. Kept in a header so tests can run it in-process.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "headwise/headwise.hpp"

#ifndef HEADWISE_DEFAULT_CONFIG_DIR
#define HEADWISE_DEFAULT_CONFIG_DIR "configs"
#endif

namespace headwise::cli {

enum Exit : int { kOk = 0, kUsage = 1, kInfeasible = 2, kVerifyFailed = 3 };

inline std::filesystem::path config_dir() {
    if (const char* env = std::getenv("HEADWISE_CONFIG_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return HEADWISE_DEFAULT_CONFIG_DIR;
}

// A name resolves to <config dir>/<kind>/<name>.json; anything that exists on
// disk is taken as a path.
inline std::filesystem::path resolve_config(const std::string& name, const char* kind) {
    if (std::filesystem::exists(name) && std::filesystem::is_regular_file(name)) {
        return name;
    }
    const auto p = config_dir() / kind / (name + ".json");
    if (!std::filesystem::exists(p)) {
        throw Error(ErrorKind::ParseError, std::string("unknown ") + kind + " '" + name + "' (looked in " +
                                               p.parent_path().string() + ")");
    }
    return p;
}

inline ModelSpec load_model(const std::string& name) { return load_model_spec(resolve_config(name, "models")); }

inline HardwareSpec load_hardware(const std::string& name) {
    for (const auto& hw : builtin_profiles()) {
        if (hw.name == name) {
            const auto p = config_dir() / "hardware" / (name + ".json");
            return std::filesystem::exists(p) ? load_hardware_spec(p) : hw;
        }
    }
    return load_hardware_spec(resolve_config(name, "hardware"));
}

struct Options {
    std::string model = "llama3-8b";
    std::string hw = "profile-A";
    std::string policy = "all";
    std::optional<std::uint64_t> groups;
    std::string context;
    std::string chunk = "10K";
    std::string gpu;
    std::string cpu;
    std::string reserve;
    std::string format = "table";
    std::uint64_t seed = 42;
    std::string mode = "simulated";
    std::uint64_t steps = 0;
    std::optional<std::uint64_t> devices;
    std::string trace;
    bool fault = false;
};

struct Context {
    ModelSpec model;
    HardwareSpec hw;
    Format format = Format::Table;
};

inline Context load_context(const Options& o) {
    Context c;
    c.model = load_model(o.model);
    c.hw = load_hardware(o.hw);
    if (!o.gpu.empty()) {
        c.hw.device_capacity = parse_gib(o.gpu);
    }
    if (!o.cpu.empty()) {
        c.hw.host_capacity = parse_gib(o.cpu);
    }
    if (o.devices) {
        c.hw.device_count = *o.devices;
    }
    validate(c.hw);
    c.format = parse_format(o.format);
    return c;
}

inline std::uint64_t heads_per_group(const Options& o, const ModelSpec& m) {
    const std::uint64_t groups = o.groups.value_or(m.num_kv_heads);
    if (groups == 0 || m.num_kv_heads % groups != 0) {
        throw Error(ErrorKind::InvalidSpec, "--groups must divide num_kv_heads (" + std::to_string(m.num_kv_heads) + ")");
    }
    return m.num_kv_heads / groups;
}

inline std::vector<Policy> parse_policies(const Options& o, const ModelSpec& m, const HardwareSpec& hw, Tokens context,
                                          Bytes reserve) {
    const Policy head = Policy::head_offload(heads_per_group(o, m));
    if (o.policy == "all") {
        return {Policy::standard(), Policy::chunked_prefill(), Policy::kv_quant4(), Policy::layer_offload(), head};
    }
    if (o.policy == "standard") return {Policy::standard()};
    if (o.policy == "chunked") return {Policy::chunked_prefill()};
    if (o.policy == "kvquant4") return {Policy::kv_quant4()};
    if (o.policy == "layer") return {Policy::layer_offload()};
    if (o.policy == "headinfer") return {head};
    if (o.policy == "adaptive") return {resolve_policy(Policy::adaptive(), m, hw, context, reserve)};
    throw Error(ErrorKind::ParseError, "unknown policy '" + o.policy +
                                           "' (standard, chunked, kvquant4, layer, headinfer, adaptive, all)");
}

inline Tokens require_context(const Options& o) {
    if (o.context.empty()) {
        throw Error(ErrorKind::ParseError, "--context is required");
    }
    return parse_tokens(o.context);
}

inline ExecMode parse_mode(const std::string& s) {
    if (s == "simulated") return ExecMode::Simulated;
    if (s == "overlapped") return ExecMode::Overlapped;
    throw Error(ErrorKind::ParseError, "unknown mode '" + s + "' (simulated, overlapped)");
}

inline int cmd_memory(const Options& o, std::ostream& out) {
    const Context c = load_context(o);
    const Tokens s = require_context(o);
    const Tokens chunk = parse_tokens(o.chunk);
    std::vector<MemoryReport> reports;
    for (const Policy& p : parse_policies(o, c.model, c.hw, s, default_reserve())) {
        reports.push_back(footprint(c.model, c.hw, p, s, chunk));
    }
    out << emit(reports, c.format);
    return kOk;
}

inline int cmd_roofline(const Options& o, std::ostream& out) {
    const Context c = load_context(o);
    std::vector<RooflineRow> rows;
    if (o.context.empty()) {
        rows = roofline_table(c.model, c.hw);
    } else {
        rows = roofline_table(c.model, c.hw, {parse_tokens(o.context)});
    }
    out << emit(rows, c.format);
    if (c.format == Format::Table) {
        out << "turning_point=" << turning_point(c.model, c.hw) << "\n";
    }
    return kOk;
}

inline int cmd_maxlen(const Options& o, std::ostream& out) {
    const Context c = load_context(o);
    const Tokens chunk = parse_tokens(o.chunk);
    const Bytes reserve = o.reserve.empty() ? 0 : parse_gib(o.reserve);
    std::vector<MaxLenRow> rows;
    for (const Policy& p : parse_policies(o, c.model, c.hw, 0, reserve)) {
        rows.push_back({p, max_context_limit(c.model, c.hw, p, chunk, reserve)});
    }
    out << emit(rows, c.format);
    return kOk;
}

inline int cmd_plan(const Options& o, std::ostream& out) {
    const Context c = load_context(o);
    const Bytes reserve = o.reserve.empty() ? default_reserve() : parse_gib(o.reserve);
    out << emit(plan(c.model, c.hw, require_context(o), reserve), c.format);
    return kOk;
}

inline void write_trace(const std::string& path, const SimTimeline& prefill, const SimTimeline& decode) {
    std::ofstream f(path);
    if (!f) {
        throw Error(ErrorKind::ParseError, "cannot write trace " + path);
    }
    nlohmann::ordered_json j;
    j["prefill"] = timeline_json(prefill);
    j["decode"] = timeline_json(decode);
    f << j.dump(2) << '\n';
}

inline int cmd_simulate(const Options& o, std::ostream& out) {
    const Context c = load_context(o);
    const Tokens s = require_context(o);
    const Tokens chunk = parse_tokens(o.chunk);
    const Bytes reserve = o.reserve.empty() ? default_reserve() : parse_gib(o.reserve);
    std::vector<Policy> policies = parse_policies(o, c.model, c.hw, s, reserve);
    if (o.policy == "all") {
        std::erase(policies, Policy::kv_quant4());
    }
    // Real numerics only at desk scale; larger runs are schedule-only.
    constexpr Bytes numeric_limit = 64 * kMiB;
    const bool numeric = kv_cache_bytes(c.model, s + o.steps) / c.model.dtype_bytes * sizeof(float) <= numeric_limit;

    nlohmann::ordered_json runs = nlohmann::ordered_json::array();
    std::vector<detail::Row> rows;
    for (const Policy& p : policies) {
        RuntimeConfig cfg;
        cfg.policy = p;
        cfg.mode = parse_mode(o.mode);
        cfg.seed = o.seed;
        cfg.numeric = numeric;
        cfg.capacity = s + o.steps;
        OffloadRuntime rt(c.model, c.hw, cfg);
        const RunResult pre = rt.run_prefill(s, chunk);
        const RunResult dec = rt.run_decode(o.steps);
        if (!o.trace.empty()) {
            write_trace(policies.size() == 1 ? o.trace : o.trace + "." + to_string(p), pre.timeline, dec.timeline);
        }
        const double per_token = o.steps > 0 ? dec.timeline.makespan() / static_cast<double>(o.steps) : 0.0;
        runs.push_back({{"policy", to_string(p)},
                        {"S", s},
                        {"chunk", chunk},
                        {"numeric", numeric},
                        {"prefill_seconds", pre.timeline.makespan()},
                        {"prefill_overlap_fraction", pre.timeline.overlap_fraction()},
                        {"decode_steps", o.steps},
                        {"decode_seconds_per_token", per_token},
                        {"peak_device_bytes", rt.device_arena().peak()},
                        {"host_kv_bytes", rt.host_kv_bytes()}});
        rows.push_back({to_string(p), detail::scientific(pre.timeline.makespan()),
                        detail::fixed(pre.timeline.overlap_fraction()), std::to_string(o.steps),
                        detail::scientific(per_token), detail::fixed(to_gib(rt.device_arena().peak())),
                        detail::fixed(to_gib(rt.host_kv_bytes()))});
        if (c.format == Format::Table) {
            SimTimeline all = pre.timeline;
            all.append(dec.timeline);
            rows.back().push_back(summary_line(all));
        }
    }
    if (c.format == Format::Json) {
        out << runs.dump(2) << '\n';
        return kOk;
    }
    detail::Row header{"policy", "prefill_s", "prefill_overlap", "decode_steps", "decode_s_per_token",
                       "peak_device_gib", "host_kv_gib"};
    if (c.format == Format::Table) {
        header.push_back("summary");
    }
    out << detail::render(c.format, header, rows);
    return kOk;
}

inline int cmd_verify(const Options& o, std::ostream& out) {
    const Context c = load_context(o);
    const Tokens s = require_context(o);
    const Tokens chunk = parse_tokens(o.chunk);
    std::vector<Policy> policies;
    if (o.policy == "all") {
        policies = {Policy::chunked_prefill(), Policy::layer_offload()};
        for (std::uint64_t g : group_sizes(c.model)) {
            policies.push_back(Policy::head_offload(g));
        }
    } else {
        policies = parse_policies(o, c.model, c.hw, s, default_reserve());
    }
    EquivalenceOptions opt;
    opt.seed = o.seed;
    opt.decode_steps = o.steps;
    opt.mode = parse_mode(o.mode);
    opt.inject_fault = o.fault;
    const EquivalenceReport r = verify_equivalence(c.model, s, chunk, policies, opt);
    out << emit(r, c.format);
    return r.pass() ? kOk : kVerifyFailed;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Head-wise KV-cache offloading: memory, roofline and runtime models", "headwise"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--model", o.model, "model name under the config dir, or a JSON path");
        sub->add_option("--hw", o.hw, "hardware profile name or JSON path");
        sub->add_option("--gpu", o.gpu, "override device capacity, e.g. 24GiB");
        sub->add_option("--cpu", o.cpu, "override host capacity, e.g. 512GiB");
        sub->add_option("--devices", o.devices, "pipeline-parallel device count");
        sub->add_option("--format", o.format, "table | json | csv");
    };
    auto policy = [&](CLI::App* sub) {
        sub->add_option("--policy", o.policy, "standard | chunked | kvquant4 | layer | headinfer | adaptive | all");
        sub->add_option("--groups", o.groups, "head groups per layer for headinfer (default: one kv head each)");
    };

    auto* memory = app.add_subcommand("memory", "device memory footprint per policy");
    common(memory);
    policy(memory);
    memory->add_option("--context", o.context, "context length (K/M suffix)")->required();
    memory->add_option("--chunk", o.chunk, "prefill chunk (K/M suffix)");

    auto* roofline = app.add_subcommand("roofline", "attention roofline table");
    common(roofline);
    roofline->add_option("--context", o.context, "single context instead of the 1k/10k/100k table");

    auto* maxlen = app.add_subcommand("maxlen", "largest context that fits");
    common(maxlen);
    policy(maxlen);
    maxlen->add_option("--chunk", o.chunk, "prefill chunk (K/M suffix)");
    maxlen->add_option("--reserve", o.reserve, "device memory held back, e.g. 4.7GiB (default 0GiB)");

    auto* simulate = app.add_subcommand("simulate", "run the offload runtime on the simulated clock");
    common(simulate);
    policy(simulate);
    simulate->add_option("--context", o.context, "prefill length (K/M suffix)")->required();
    simulate->add_option("--chunk", o.chunk, "prefill chunk (K/M suffix)");
    simulate->add_option("--steps", o.steps, "decode steps after prefill");
    simulate->add_option("--mode", o.mode, "simulated | overlapped");
    simulate->add_option("--seed", o.seed, "weights and input seed");
    simulate->add_option("--reserve", o.reserve, "reserve used when resolving adaptive");
    simulate->add_option("--trace", o.trace, "write the event timeline as JSON to this file");

    auto* plan_cmd = app.add_subcommand("plan", "pick chunk size and head grouping");
    common(plan_cmd);
    plan_cmd->add_option("--context", o.context, "context length (K/M suffix)")->required();
    plan_cmd->add_option("--reserve", o.reserve, "device memory held back (default 4.7GiB)");

    auto* verify = app.add_subcommand("verify", "check offload policies against the resident reference");
    common(verify);
    policy(verify);
    verify->add_option("--context", o.context, "prefill length")->required();
    verify->add_option("--chunk", o.chunk, "prefill chunk");
    verify->add_option("--seed", o.seed, "weights and input seed");
    verify->add_option("--steps", o.steps, "decode steps (default 4)");
    verify->add_option("--mode", o.mode, "simulated | overlapped");
    verify->add_flag("--fault", o.fault, "corrupt one cached value (negative control)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        std::ostringstream msg;
        std::ostringstream error;
        const int code = app.exit(e, msg, error);
        out << msg.str();
        err << error.str();
        return code == 0 ? kOk : kUsage;
    }

    try {
        if (*memory) return cmd_memory(o, out);
        if (*roofline) return cmd_roofline(o, out);
        if (*maxlen) return cmd_maxlen(o, out);
        if (*simulate) return cmd_simulate(o, out);
        if (*plan_cmd) return cmd_plan(o, out);
        if (*verify) {
            if (verify->count("--steps") == 0) {
                o.steps = 4;
            }
            return cmd_verify(o, out);
        }
    } catch (const Error& e) {
        err << error_line(e) << '\n';
        const bool capacity = e.kind() == ErrorKind::Infeasible || e.kind() == ErrorKind::CapacityExceeded;
        return capacity ? kInfeasible : kUsage;
    } catch (const std::exception& e) {
        err << nlohmann::ordered_json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
        return kUsage;
    }
    return kUsage;
}

} // namespace headwise::cli
