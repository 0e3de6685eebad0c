#pragma once

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "headwise/error.hpp"
#include "headwise/memory.hpp"
#include "headwise/planner.hpp"
#include "headwise/roofline.hpp"
#include "headwise/runtime.hpp"
#include "headwise/timeline.hpp"
#include "headwise/units.hpp"

namespace headwise {

enum class Format { Table, Json, Csv };

inline Format parse_format(const std::string& s) {
    if (s == "table") return Format::Table;
    if (s == "json") return Format::Json;
    if (s == "csv") return Format::Csv;
    throw Error(ErrorKind::ParseError, "unknown format '" + s + "' (table, json, csv)");
}

namespace detail {

inline std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

inline std::string scientific(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

using Row = std::vector<std::string>;

inline std::string render_table(const Row& header, const std::vector<Row>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    auto widen = [&](const Row& r) {
        for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) {
            width[i] = std::max(width[i], r[i].size());
        }
    };
    widen(header);
    for (const Row& r : rows) {
        widen(r);
    }
    std::ostringstream out;
    auto line = [&](const Row& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            out << r[i];
            if (i + 1 < r.size()) {
                out << std::string(width[i] - r[i].size() + 2, ' ');
            }
        }
        out << '\n';
    };
    line(header);
    Row rule;
    for (std::size_t w : width) {
        rule.emplace_back(w, '-');
    }
    line(rule);
    for (const Row& r : rows) {
        line(r);
    }
    return out.str();
}

inline std::string render_csv(const Row& header, const std::vector<Row>& rows) {
    std::ostringstream out;
    auto line = [&](const Row& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            const bool quote = r[i].find_first_of(",\"") != std::string::npos;
            if (quote) {
                std::string esc;
                for (char c : r[i]) {
                    esc += c == '"' ? "\"\"" : std::string(1, c);
                }
                out << '"' << esc << '"';
            } else {
                out << r[i];
            }
            out << (i + 1 < r.size() ? "," : "");
        }
        out << '\n';
    };
    line(header);
    for (const Row& r : rows) {
        line(r);
    }
    return out.str();
}

inline std::string render(Format f, const Row& header, const std::vector<Row>& rows) {
    return f == Format::Csv ? render_csv(header, rows) : render_table(header, rows);
}

} // namespace detail

// --- memory ---------------------------------------------------------------

inline const detail::Row& memory_csv_header() {
    static const detail::Row h{"policy", "S", "chunk", "weights", "kv_on_device", "activation", "total", "kv_total"};
    return h;
}

inline nlohmann::ordered_json to_json(const MemoryReport& r) {
    return {{"policy", to_string(r.policy)},
            {"S", r.context},
            {"chunk", r.chunk},
            {"weights_bytes", r.weights},
            {"kv_on_device_bytes", r.kv_on_device},
            {"activation_bytes", r.activation},
            {"total_bytes", r.total_on_device},
            {"kv_total_bytes", r.kv_total},
            {"weights_gib", to_gib(r.weights)},
            {"kv_on_device_gib", to_gib(r.kv_on_device)},
            {"activation_gib", to_gib(r.activation)},
            {"total_gib", to_gib(r.total_on_device)},
            {"kv_total_gib", to_gib(r.kv_total)}};
}

/// Byte columns are GiB with four decimals.
inline std::string emit(const std::vector<MemoryReport>& reports, Format f) {
    if (f == Format::Json) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : reports) {
            arr.push_back(to_json(r));
        }
        return arr.dump(2) + "\n";
    }
    std::vector<detail::Row> rows;
    for (const auto& r : reports) {
        rows.push_back({to_string(r.policy), std::to_string(r.context), std::to_string(r.chunk),
                        detail::fixed(to_gib(r.weights)), detail::fixed(to_gib(r.kv_on_device)),
                        detail::fixed(to_gib(r.activation)), detail::fixed(to_gib(r.total_on_device)),
                        detail::fixed(to_gib(r.kv_total))});
    }
    return detail::render(f, memory_csv_header(), rows);
}

// --- roofline -------------------------------------------------------------

inline nlohmann::ordered_json to_json(const RooflinePoint& p) {
    return {{"ops", p.ops},
            {"bytes", p.bytes_moved},
            {"arithmetic_intensity", p.arithmetic_intensity},
            {"attainable_flops", p.attainable},
            {"bound", to_string(p.bound)}};
}

inline std::string emit(const std::vector<RooflineRow>& rows, Format f) {
    if (f == Format::Json) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            arr.push_back({{"phase", to_string(r.phase)},
                           {"label", r.label},
                           {"context", r.context},
                           {"regular", to_json(r.regular)},
                           {"offload", to_json(r.offload)}});
        }
        return arr.dump(2) + "\n";
    }
    const detail::Row header{"phase", "kernel", "ops", "mem", "ai", "flops", "bound",
                             "ops_off", "mem_off", "ai_off", "flops_off", "bound_off"};
    std::vector<detail::Row> out;
    for (const auto& r : rows) {
        auto cells = [&](const RooflinePoint& p) {
            if (f == Format::Csv) {
                return detail::Row{detail::scientific(p.ops), detail::scientific(p.bytes_moved),
                                   detail::scientific(p.arithmetic_intensity), detail::scientific(p.attainable),
                                   to_string(p.bound)};
            }
            return detail::Row{si_compact(p.ops, 3), si_compact(p.bytes_moved, 3),
                               si_compact(p.arithmetic_intensity, 3), si_compact(p.attainable, 3), to_string(p.bound)};
        };
        detail::Row row{to_string(r.phase), r.label};
        for (auto& c : cells(r.regular)) row.push_back(c);
        for (auto& c : cells(r.offload)) row.push_back(c);
        out.push_back(std::move(row));
    }
    return detail::render(f, header, out);
}

// --- max context ----------------------------------------------------------

struct MaxLenRow {
    Policy policy;
    ContextLimit limit;
};

inline std::string emit(const std::vector<MaxLenRow>& rows, Format f) {
    if (f == Format::Json) {
        auto arr = nlohmann::ordered_json::array();
        for (const auto& r : rows) {
            arr.push_back({{"policy", to_string(r.policy)},
                           {"max_tokens", r.limit.tokens},
                           {"bound", r.limit.host_bound ? "host" : "device"}});
        }
        return arr.dump(2) + "\n";
    }
    std::vector<detail::Row> out;
    for (const auto& r : rows) {
        out.push_back({to_string(r.policy), std::to_string(r.limit.tokens), r.limit.host_bound ? "host" : "device"});
    }
    return detail::render(f, {"policy", "max_tokens", "bound"}, out);
}

// --- plan -----------------------------------------------------------------

inline nlohmann::ordered_json to_json(const Plan& p) {
    return {{"S", p.context},
            {"chunk", p.chunk},
            {"heads_per_group", p.heads_per_group},
            {"groups", p.groups},
            {"policy", to_string(p.policy)},
            {"reserve_gib", to_gib(p.reserve)},
            {"footprint", to_json(p.report)}};
}

inline std::string emit(const Plan& p, Format f) {
    if (f == Format::Json) {
        return to_json(p).dump(2) + "\n";
    }
    const detail::Row header{"S", "chunk", "heads_per_group", "groups", "policy", "total_gib", "reserve_gib"};
    return detail::render(f, header,
                          {{std::to_string(p.context), std::to_string(p.chunk), std::to_string(p.heads_per_group),
                            std::to_string(p.groups), to_string(p.policy), detail::fixed(to_gib(p.report.total_on_device)),
                            detail::fixed(to_gib(p.reserve), 2)}});
}

// --- timeline -------------------------------------------------------------

/// Flat event list sorted by start time (compute before transfers on ties).
inline nlohmann::ordered_json timeline_json(const SimTimeline& t) {
    struct Item {
        double start;
        int order;
        std::size_t index;
    };
    std::vector<Item> items;
    for (std::size_t i = 0; i < t.compute.size(); ++i) {
        items.push_back({t.compute[i].start, 0, i});
    }
    for (std::size_t i = 0; i < t.transfers.size(); ++i) {
        items.push_back({t.transfers[i].start, 1, i});
    }
    std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        return a.start != b.start ? a.start < b.start : a.order < b.order;
    });
    auto arr = nlohmann::ordered_json::array();
    for (const Item& it : items) {
        if (it.order == 0) {
            const auto& c = t.compute[it.index];
            arr.push_back({{"kind", "compute"}, {"stream", "compute"}, {"label", c.label},
                           {"start", c.start}, {"end", c.end}, {"flops", c.flops}});
        } else {
            const auto& e = t.transfers[it.index];
            arr.push_back({{"kind", "transfer"}, {"stream", to_string(e.stream)},
                           {"direction", to_string(e.direction)}, {"label", e.label},
                           {"start", e.start}, {"end", e.end}, {"bytes", e.bytes}});
        }
    }
    return arr;
}

inline std::string summary_line(const SimTimeline& t) {
    return "makespan=" + detail::scientific(t.makespan()) + "s overlap_fraction=" +
           detail::fixed(t.overlap_fraction()) + " peak_device_bytes=" + std::to_string(t.peak_device_bytes);
}

// --- verify ---------------------------------------------------------------

inline std::string emit(const EquivalenceReport& r, Format f) {
    char dev[32];
    std::snprintf(dev, sizeof dev, "%.3g", r.max_deviation());
    char tol[32];
    std::snprintf(tol, sizeof tol, "%.0e", r.tolerance);
    if (f == Format::Json) {
        nlohmann::ordered_json j;
        j["pass"] = r.pass();
        j["max_dev"] = r.max_deviation();
        j["tolerance"] = r.tolerance;
        auto arr = nlohmann::ordered_json::array();
        for (const auto& row : r.rows) {
            arr.push_back({{"policy", to_string(row.policy)}, {"prefill_dev", row.prefill}, {"decode_dev", row.decode}});
        }
        j["policies"] = arr;
        return j.dump(2) + "\n";
    }
    std::vector<detail::Row> rows;
    for (const auto& row : r.rows) {
        rows.push_back({to_string(row.policy), detail::scientific(row.prefill), detail::scientific(row.decode),
                        row.max() <= r.tolerance ? "pass" : "FAIL"});
    }
    std::string out = detail::render(f, {"policy", "prefill_dev", "decode_dev", "status"}, rows);
    if (f == Format::Table) {
        out += std::string(r.pass() ? "PASS" : "FAIL") + " max_dev " + dev + (r.pass() ? " <= " : " > ") + tol + "\n";
    }
    return out;
}

// --- errors ---------------------------------------------------------------

inline std::string error_line(const Error& e) {
    nlohmann::ordered_json j{{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
    return j.dump();
}

} // namespace headwise
