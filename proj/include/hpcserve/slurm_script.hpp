#pragma once

// Batch script codec. One fixed dialect: #SBATCH --key=value directives in a
// canonical order, export lines, then one launch command per replica.
// render and parse are inverse up to directive reordering.

#include <array>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hpcserve/cluster.hpp"
#include "hpcserve/errors.hpp"

namespace hpcserve {

inline constexpr int port_base = 8300;

enum class EngineKind { Tgi, Vllm, Mock };

inline const char* to_string(EngineKind e) {
    switch (e) {
        case EngineKind::Tgi: return "TGI";
        case EngineKind::Vllm: return "VLLM";
        case EngineKind::Mock: return "MOCK";
    }
    return "?";
}

inline const char* engine_binary(EngineKind e) {
    switch (e) {
        case EngineKind::Tgi: return "text-generation-launcher";
        case EngineKind::Vllm: return "vllm-server";
        case EngineKind::Mock: return "mock-engine";
    }
    return "?";
}

inline EngineKind parse_engine(std::string name) {
    for (auto& c : name) c = (char)std::tolower((unsigned char)c);
    if (name == "tgi") return EngineKind::Tgi;
    if (name == "vllm") return EngineKind::Vllm;
    if (name == "mock") return EngineKind::Mock;
    throw validation_error("unknown engine: " + name + " (expected tgi, vllm, or mock)");
}

struct SlurmScript {
    std::string job_name;
    std::vector<std::pair<std::string, std::string>> directives;  // canonical order
    std::vector<std::pair<std::string, std::string>> env_vars;
    std::vector<std::string> launch_commands;  // one per replica

    bool operator==(const SlurmScript&) const = default;
};

namespace detail {

inline constexpr std::array<const char*, 7> directive_order = {
    "job-name", "nodes", "ntasks", "cpus-per-task", "mem", "gres", "time"};

inline int directive_rank(const std::string& key) {
    for (std::size_t i = 0; i < directive_order.size(); ++i)
        if (key == directive_order[i]) return (int)i;
    return -1;
}

inline int parse_positive_int(const std::string& s, const std::string& what, int line_no) {
    try {
        std::size_t pos = 0;
        int v = std::stoi(s, &pos);
        if (pos != s.size() || v < 1) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw parse_error("bad " + what + " value '" + s + "'", line_no);
    }
}

}  // namespace detail

inline std::string format_walltime(int minutes) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d:%02d:00", minutes / 60, minutes % 60);
    return buf;
}

// Accepts HH:MM:SS with SS == 00; HH may exceed two digits.
inline int parse_walltime(const std::string& s, int line_no = 0) {
    auto bad = [&] { return parse_error("bad time '" + s + "' (want HH:MM:00)", line_no); };
    auto all_digits = [](const std::string& p) {
        if (p.empty()) return false;
        for (char c : p)
            if (!std::isdigit((unsigned char)c)) return false;
        return true;
    };
    auto c1 = s.find(':'), c2 = s.rfind(':');
    if (c1 == std::string::npos || c2 == c1) throw bad();
    std::string hh = s.substr(0, c1), mm = s.substr(c1 + 1, c2 - c1 - 1), ss = s.substr(c2 + 1);
    if (hh.size() < 2 || mm.size() != 2 || ss.size() != 2) throw bad();
    if (!all_digits(hh) || !all_digits(mm) || !all_digits(ss)) throw bad();
    if (ss != "00") throw parse_error("time seconds must be 00 in '" + s + "'", line_no);
    int h = std::stoi(hh), m = std::stoi(mm);
    if (m > 59) throw parse_error("bad time minutes in '" + s + "'", line_no);
    int total = h * 60 + m;
    if (total < 1) throw parse_error("time must be at least one minute", line_no);
    return total;
}

// Builds the script for replicas copies of one engine process on one node.
inline SlurmScript make_script(const ModelProfile& p, EngineKind engine, int replicas) {
    if (replicas < 1) throw validation_error("replicas must be >= 1");
    validate_request(p.request);
    SlurmScript s;
    s.job_name = p.name;
    s.directives = {{"job-name", p.name},
                    {"nodes", "1"},
                    {"ntasks", "1"},
                    {"cpus-per-task", std::to_string(p.request.cpu_cores)},
                    {"mem", std::to_string(p.request.ram_gb) + "G"}};
    if (p.request.gpu_count > 0)
        s.directives.emplace_back("gres", "gpu:" + std::to_string(p.request.gpu_count));
    s.directives.emplace_back("time", format_walltime(p.request.walltime_minutes));
    s.env_vars = {{"MODEL_NAME", p.name},
                  {"ENGINE", to_string(engine)},
                  {"PORT_BASE", std::to_string(port_base)}};
    for (int i = 0; i < replicas; ++i)
        s.launch_commands.push_back(std::string(engine_binary(engine)) + " --model " + p.name +
                                    " --port $((PORT_BASE+" + std::to_string(i) + "))");
    return s;
}

inline std::string render_script(const SlurmScript& s) {
    std::ostringstream out;
    out << "#!/bin/bash\n";
    for (const auto& [k, v] : s.directives) out << "#SBATCH --" << k << "=" << v << "\n";
    for (const auto& [k, v] : s.env_vars) out << "export " << k << "=" << v << "\n";
    for (const auto& cmd : s.launch_commands) out << cmd << "\n";
    return out.str();
}

inline std::string render_script(const ModelProfile& p, EngineKind engine, int replicas) {
    return render_script(make_script(p, engine, replicas));
}

// Parses text in the dialect render emits. Directives may appear in any
// order; the result is normalized to canonical order. cpus-per-task, mem,
// and time are mandatory.
inline SlurmScript parse_script(const std::string& text) {
    SlurmScript s;
    std::vector<std::pair<std::string, std::string>> seen;  // unordered directives
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        if (line.rfind("#!", 0) == 0) continue;
        if (line.rfind("#SBATCH", 0) == 0) {
            std::string rest = line.substr(7);
            std::size_t start = rest.find_first_not_of(' ');
            if (start == std::string::npos || rest.compare(start, 2, "--") != 0)
                throw parse_error("malformed directive '" + line + "'", line_no);
            rest = rest.substr(start + 2);
            auto eq = rest.find('=');
            if (eq == std::string::npos || eq == 0 || eq + 1 >= rest.size())
                throw parse_error("directive needs --key=value, got '" + line + "'", line_no);
            std::string key = rest.substr(0, eq), value = rest.substr(eq + 1);
            if (detail::directive_rank(key) < 0)
                throw parse_error("unknown directive --" + key, line_no);
            for (const auto& [k, v] : seen)
                if (k == key) throw parse_error("duplicate directive --" + key, line_no);
            // field validation
            if (key == "nodes" || key == "ntasks" || key == "cpus-per-task") {
                detail::parse_positive_int(value, key, line_no);
            } else if (key == "mem") {
                if (value.empty() || value.back() != 'G')
                    throw parse_error("mem must be <int>G, got '" + value + "'", line_no);
                detail::parse_positive_int(value.substr(0, value.size() - 1), "mem", line_no);
            } else if (key == "gres") {
                if (value.rfind("gpu:", 0) != 0)
                    throw parse_error("gres must be gpu:<count>, got '" + value + "'", line_no);
                detail::parse_positive_int(value.substr(4), "gres", line_no);
            } else if (key == "time") {
                parse_walltime(value, line_no);
            }
            seen.emplace_back(key, value);
            continue;
        }
        if (line[0] == '#') continue;  // plain comment
        if (line.rfind("export ", 0) == 0) {
            std::string rest = line.substr(7);
            auto eq = rest.find('=');
            if (eq == std::string::npos || eq == 0)
                throw parse_error("export needs NAME=value, got '" + line + "'", line_no);
            s.env_vars.emplace_back(rest.substr(0, eq), rest.substr(eq + 1));
            continue;
        }
        s.launch_commands.push_back(line);
    }
    for (const char* needed : {"cpus-per-task", "mem", "time"}) {
        bool found = false;
        for (const auto& [k, v] : seen) found |= (k == needed);
        if (!found) throw parse_error(std::string("missing mandatory directive --") + needed);
    }
    std::stable_sort(seen.begin(), seen.end(), [](const auto& a, const auto& b) {
        return detail::directive_rank(a.first) < detail::directive_rank(b.first);
    });
    s.directives = std::move(seen);
    for (const auto& [k, v] : s.directives)
        if (k == "job-name") s.job_name = v;
    return s;
}

// Resource demand encoded by a script. Per-GPU vram is not expressible in the
// directive dialect; it comes from the catalog when MODEL_NAME names a known
// model, else 1 GB (any free slot qualifies).
inline ResourceRequest request_of(const SlurmScript& s) {
    ResourceRequest r{1, 1, 0, 0, 1};
    for (const auto& [k, v] : s.directives) {
        if (k == "cpus-per-task") r.cpu_cores = std::stoi(v);
        else if (k == "mem") r.ram_gb = std::stoi(v);
        else if (k == "gres") r.gpu_count = std::stoi(v.substr(4));
        else if (k == "time") r.walltime_minutes = parse_walltime(v);
    }
    if (r.gpu_count > 0) {
        r.vram_per_gpu_gb = 1;
        for (const auto& [k, v] : s.env_vars) {
            if (k != "MODEL_NAME") continue;
            try {
                r.vram_per_gpu_gb = find_profile(v).request.vram_per_gpu_gb;
            } catch (const not_found_error&) {
            }
        }
    }
    return r;
}

// ${NAME} placeholder expansion for user-supplied script templates.
inline std::string substitute_placeholders(const std::string& text,
                                           const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        if (text[i] == '$' && i + 1 < text.size() && text[i + 1] == '{') {
            auto end = text.find('}', i + 2);
            if (end == std::string::npos)
                throw validation_error("unterminated ${ placeholder");
            std::string name = text.substr(i + 2, end - i - 2);
            auto it = values.find(name);
            if (it == values.end())
                throw validation_error("unresolved placeholder ${" + name + "}");
            out += it->second;
            i = end + 1;
        } else {
            out += text[i++];
        }
    }
    return out;
}

inline std::map<std::string, std::string> template_values(const ModelProfile& p,
                                                          EngineKind engine) {
    std::map<std::string, std::string> v;
    v["MODEL"] = p.name;
    v["JOB_NAME"] = p.name;
    v["ENGINE"] = to_string(engine);
    v["ENGINE_BIN"] = engine_binary(engine);
    v["PORT_BASE"] = std::to_string(port_base);
    v["CPUS"] = std::to_string(p.request.cpu_cores);
    v["MEM_GB"] = std::to_string(p.request.ram_gb);
    v["GPUS"] = std::to_string(p.request.gpu_count);
    v["TIME"] = format_walltime(p.request.walltime_minutes);
    return v;
}

}  // namespace hpcserve
