#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hpcserve/errors.hpp"
#include "hpcserve/perf_model.hpp"
#include "hpcserve/scheduler.hpp"
#include "hpcserve/slurm_script.hpp"

namespace hpcserve {

// ── sweep ──────────────────────────────────────────────────────────────────

struct PerfCurvePoint {
    std::string model;
    int concurrency = 0;
    double mean_latency_ms = 0.0;
    double throughput_tps = 0.0;
    bool saturated = false;

    bool operator==(const PerfCurvePoint&) const = default;
};

struct SweepConfig {
    std::vector<std::string> models;
    std::vector<int> levels;
    int prompt_tokens = 1024;
    std::string out_path;  // empty: no file written
};

inline void validate_sweep_config(const SweepConfig& cfg) {
    if (cfg.models.empty()) throw validation_error("sweep wants at least one model");
    if (cfg.levels.empty()) throw validation_error("sweep wants at least one concurrency level");
    if (cfg.levels.front() < 1) throw validation_error("concurrency levels must be >= 1");
    for (std::size_t i = 1; i < cfg.levels.size(); ++i)
        if (cfg.levels[i] <= cfg.levels[i - 1])
            throw validation_error("concurrency levels must be strictly increasing");
    if (cfg.prompt_tokens < 1) throw validation_error("prompt_tokens must be >= 1");
}

// Mean latency and throughput per (model, level), sorted by (model,
// concurrency). Latencies come from the stress simulation, throughput from
// the capacity law; startup time is not part of either. Models without
// calibration are skipped with a note on `diag`.
inline std::vector<PerfCurvePoint> run_sweep(const SweepConfig& cfg,
                                             std::ostream& diag = std::cerr) {
    validate_sweep_config(cfg);

    std::vector<ModelProfile> picked;
    for (const std::string& name : cfg.models) {
        ModelProfile p = find_profile(name);
        if (!p.has_perf()) {
            diag << "warning: skipping " << p.name << ": no calibrated performance constants\n";
            continue;
        }
        p.tokens_per_request = cfg.prompt_tokens;
        picked.push_back(std::move(p));
    }
    std::sort(picked.begin(), picked.end(),
              [](const ModelProfile& a, const ModelProfile& b) { return a.name < b.name; });
    for (std::size_t i = 1; i < picked.size(); ++i)
        if (picked[i].name == picked[i - 1].name)
            throw validation_error("duplicate model in sweep: " + picked[i].name);

    PerfBackend backend(picked);
    std::vector<PerfCurvePoint> points;
    for (const ModelProfile& p : picked) {
        for (int c : cfg.levels) {
            PerfCurvePoint pt;
            pt.model = p.name;
            pt.concurrency = c;
            pt.mean_latency_ms = mean_latency_ms(backend.simulate_stress(p.name, c, 1));
            pt.throughput_tps = throughput_tps(p, c);
            pt.saturated = c >= p.perf->saturation_concurrency;
            points.push_back(std::move(pt));
        }
    }
    return points;
}

// ── CSV codec ──────────────────────────────────────────────────────────────

inline constexpr const char* curve_csv_header = "model,concurrency,mean_latency_ms,throughput_tps,saturated";

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw error("double formatting failed");
    return std::string(buf, end);
}

inline double parse_double_field(const std::string& s, int lineno) {
    double v = 0.0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        throw parse_error("bad number: " + s, lineno);
    return v;
}

inline int parse_int_field(const std::string& s, int lineno) {
    int v = 0;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size())
        throw parse_error("bad integer: " + s, lineno);
    return v;
}

}  // namespace detail

inline std::string to_csv(const std::vector<PerfCurvePoint>& points) {
    std::string out = std::string(curve_csv_header) + "\n";
    for (const PerfCurvePoint& p : points) {
        out += p.model;
        out += ',';
        out += std::to_string(p.concurrency);
        out += ',';
        out += detail::format_double(p.mean_latency_ms);
        out += ',';
        out += detail::format_double(p.throughput_tps);
        out += ',';
        out += p.saturated ? "true" : "false";
        out += '\n';
    }
    return out;
}

inline std::vector<PerfCurvePoint> parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    std::vector<PerfCurvePoint> points;
    while (std::getline(in, line)) {
        ++lineno;
        if (lineno == 1) {
            if (line != curve_csv_header)
                throw parse_error("expected header: " + std::string(curve_csv_header), 1);
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            std::size_t comma = line.find(',', pos);
            if (comma == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, comma - pos));
            pos = comma + 1;
        }
        if (fields.size() != 5) throw parse_error("expected 5 fields", lineno);
        PerfCurvePoint p;
        p.model = fields[0];
        if (p.model.empty()) throw parse_error("empty model field", lineno);
        p.concurrency = detail::parse_int_field(fields[1], lineno);
        p.mean_latency_ms = detail::parse_double_field(fields[2], lineno);
        p.throughput_tps = detail::parse_double_field(fields[3], lineno);
        if (fields[4] == "true")
            p.saturated = true;
        else if (fields[4] == "false")
            p.saturated = false;
        else
            throw parse_error("saturated must be true or false, got: " + fields[4], lineno);
        points.push_back(std::move(p));
    }
    if (lineno == 0) throw parse_error("empty CSV");
    return points;
}

inline void write_csv(const std::vector<PerfCurvePoint>& points, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw error("cannot write " + path);
    out << to_csv(points);
    if (!out) throw error("write failed: " + path);
}

// ── saturation detection ───────────────────────────────────────────────────

// Smallest concurrency whose throughput the next level fails to improve on
// by at least 0.1%. The curve must start at c=1 and extend past the plateau.
inline int detect_saturation(const std::vector<PerfCurvePoint>& points) {
    if (points.size() < 2)
        throw validation_error("need at least two points covering c=1 past saturation");
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].model != points[0].model)
            throw validation_error("points mix models: " + points[0].model + " and " +
                                   points[i].model);
        if (i > 0 && points[i].concurrency <= points[i - 1].concurrency)
            throw validation_error("points must be strictly increasing in concurrency");
    }
    if (points[0].concurrency != 1) throw validation_error("curve must start at concurrency 1");
    for (std::size_t i = 1; i < points.size(); ++i) {
        double prev = points[i - 1].throughput_tps;
        double gain = (points[i].throughput_tps - prev) / prev;
        if (gain < 0.001) return points[i - 1].concurrency;
    }
    throw validation_error("throughput still rising at c=" +
                           std::to_string(points.back().concurrency) +
                           "; extend levels past saturation");
}

// ── scheduler scenarios ────────────────────────────────────────────────────
//
// Line grammar, one event per line, '#' comments:
//   <time_ms> submit <model> <duration_ms>
//   <time_ms> fail <node_id>
//   <time_ms> recover <node_id>

enum class ScenarioKind { Submit, FailNode, RecoverNode };

struct ScenarioEvent {
    std::int64_t time_ms = 0;
    ScenarioKind kind = ScenarioKind::Submit;
    std::string model;             // Submit
    std::int64_t duration_ms = 0;  // Submit
    std::string node_id;           // FailNode / RecoverNode
};

inline std::vector<ScenarioEvent> parse_scenario(const std::string& text) {
    std::vector<ScenarioEvent> events;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string first;
        if (!(ls >> first) || first[0] == '#') continue;

        ScenarioEvent ev;
        if (first.find_first_not_of("0123456789") != std::string::npos)
            throw parse_error("bad time: " + first, lineno);
        try {
            ev.time_ms = std::stoll(first);
        } catch (const std::exception&) {
            throw parse_error("time out of range: " + first, lineno);
        }

        std::string kind;
        if (!(ls >> kind)) throw parse_error("missing event kind", lineno);
        if (kind == "submit") {
            ev.kind = ScenarioKind::Submit;
            std::string dur;
            if (!(ls >> ev.model >> dur)) throw parse_error("submit wants <model> <duration_ms>", lineno);
            if (dur.find_first_not_of("0123456789") != std::string::npos)
                throw parse_error("bad duration: " + dur, lineno);
            try {
                ev.duration_ms = std::stoll(dur);
            } catch (const std::exception&) {
                throw parse_error("duration out of range: " + dur, lineno);
            }
            if (ev.duration_ms < 1) throw parse_error("duration must be >= 1 ms", lineno);
        } else if (kind == "fail" || kind == "recover") {
            ev.kind = kind == "fail" ? ScenarioKind::FailNode : ScenarioKind::RecoverNode;
            if (!(ls >> ev.node_id)) throw parse_error(kind + " wants <node_id>", lineno);
        } else {
            throw parse_error("unknown event kind: " + kind, lineno);
        }
        std::string extra;
        if (ls >> extra) throw parse_error("trailing field: " + extra, lineno);
        events.push_back(std::move(ev));
    }
    // same-time events keep file order
    std::stable_sort(events.begin(), events.end(),
                     [](const ScenarioEvent& a, const ScenarioEvent& b) {
                         return a.time_ms < b.time_ms;
                     });
    return events;
}

// Drives the scheduler through the events, then drains it to quiescence.
// Returns the complete transition log.
inline std::vector<Transition> run_scenario(Scheduler& sched,
                                            const std::vector<ScenarioEvent>& events) {
    for (const ScenarioEvent& ev : events) {
        sched.advance(ev.time_ms);
        switch (ev.kind) {
            case ScenarioKind::Submit: {
                ModelProfile p = find_profile(ev.model);
                sched.submit(make_script(p, EngineKind::Mock, 1), ev.duration_ms);
                break;
            }
            case ScenarioKind::FailNode:
                sched.fail_node(ev.node_id, ev.time_ms);
                break;
            case ScenarioKind::RecoverNode:
                sched.recover_node(ev.node_id, ev.time_ms);
                break;
        }
    }
    while (auto t = sched.next_event_time()) sched.advance(*t);
    return sched.log();
}

}  // namespace hpcserve
