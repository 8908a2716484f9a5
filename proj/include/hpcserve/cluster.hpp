#pragma once

// Static cluster description, per-node resource accounting, and the built-in
// model catalog (resource footprints + calibrated latency constants).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hpcserve/errors.hpp"

namespace hpcserve {

struct NodeSpec {
    std::string node_id;
    int cpu_cores = 0;
    int ram_gb = 0;
    std::vector<int> gpu_vram_gb;  // one entry per GPU, in slot order
};

struct ResourceRequest {
    int cpu_cores = 0;
    int ram_gb = 0;
    int gpu_count = 0;
    int vram_per_gpu_gb = 0;
    int walltime_minutes = 0;
};

struct Allocation {
    std::string job_id;
    std::string node_id;
    int cpu_cores = 0;
    int ram_gb = 0;
    std::vector<int> gpu_indices;  // slots held on the node
};

// Complement of the allocations currently held on a node.
struct NodeFree {
    int cpu_cores = 0;
    int ram_gb = 0;
    std::vector<bool> gpu_free;
};

inline void validate_node(const NodeSpec& n) {
    if (n.node_id.empty()) throw validation_error("node_id must be non-empty");
    if (n.cpu_cores < 1) throw validation_error("node " + n.node_id + ": cpu_cores must be >= 1");
    if (n.ram_gb < 1) throw validation_error("node " + n.node_id + ": ram_gb must be >= 1");
    for (int v : n.gpu_vram_gb)
        if (v < 1) throw validation_error("node " + n.node_id + ": gpu vram must be >= 1");
}

inline void validate_request(const ResourceRequest& r) {
    if (r.cpu_cores < 1) throw validation_error("request: cpu_cores must be >= 1");
    if (r.ram_gb < 1) throw validation_error("request: ram_gb must be >= 1");
    if (r.gpu_count < 0) throw validation_error("request: gpu_count must be >= 0");
    if (r.gpu_count > 0 && r.vram_per_gpu_gb < 1)
        throw validation_error("request: vram_per_gpu_gb must be >= 1 when gpus are requested");
    if (r.walltime_minutes < 1) throw validation_error("request: walltime_minutes must be >= 1");
}

inline NodeFree free_of(const NodeSpec& n) {
    return NodeFree{n.cpu_cores, n.ram_gb, std::vector<bool>(n.gpu_vram_gb.size(), true)};
}

// A request fits iff enough cores, ram, and free GPU slots with sufficient vram remain.
inline bool fits(const NodeSpec& node, const NodeFree& free, const ResourceRequest& req) {
    if (free.cpu_cores < req.cpu_cores) return false;
    if (free.ram_gb < req.ram_gb) return false;
    int usable = 0;
    for (std::size_t i = 0; i < node.gpu_vram_gb.size(); ++i)
        if (free.gpu_free[i] && node.gpu_vram_gb[i] >= req.vram_per_gpu_gb) ++usable;
    return usable >= req.gpu_count;
}

// Takes the lowest-index qualifying GPU slots. Deterministic for a given free state.
inline Allocation allocate(const NodeSpec& node, NodeFree& free, const ResourceRequest& req,
                           const std::string& job_id) {
    if (!fits(node, free, req))
        throw infeasible_error("request does not fit on node " + node.node_id);
    Allocation a{job_id, node.node_id, req.cpu_cores, req.ram_gb, {}};
    for (std::size_t i = 0; i < node.gpu_vram_gb.size() && (int)a.gpu_indices.size() < req.gpu_count; ++i) {
        if (free.gpu_free[i] && node.gpu_vram_gb[i] >= req.vram_per_gpu_gb) {
            free.gpu_free[i] = false;
            a.gpu_indices.push_back((int)i);
        }
    }
    free.cpu_cores -= req.cpu_cores;
    free.ram_gb -= req.ram_gb;
    return a;
}

inline void release(const NodeSpec& node, NodeFree& free, const Allocation& a) {
    free.cpu_cores += a.cpu_cores;
    free.ram_gb += a.ram_gb;
    if (free.cpu_cores > node.cpu_cores || free.ram_gb > node.ram_gb)
        throw validation_error("release exceeds node capacity on " + node.node_id);
    for (int idx : a.gpu_indices) {
        if (idx < 0 || idx >= (int)free.gpu_free.size() || free.gpu_free[idx])
            throw validation_error("release of gpu slot not held on " + node.node_id);
        free.gpu_free[idx] = true;
    }
}

// ── cluster state ──────────────────────────────────────────────────────────

// Node specs plus live usage. Nodes are kept sorted by node_id; every
// placement scan walks that order, so placement is deterministic.
class Cluster {
  public:
    Cluster() = default;

    explicit Cluster(std::vector<NodeSpec> nodes) {
        std::sort(nodes.begin(), nodes.end(),
                  [](const NodeSpec& a, const NodeSpec& b) { return a.node_id < b.node_id; });
        for (std::size_t i = 0; i + 1 < nodes.size(); ++i)
            if (nodes[i].node_id == nodes[i + 1].node_id)
                throw validation_error("duplicate node_id " + nodes[i].node_id);
        for (const auto& n : nodes) validate_node(n);
        specs_ = std::move(nodes);
        for (const auto& n : specs_) free_.push_back(free_of(n));
        up_.assign(specs_.size(), true);
    }

    std::size_t size() const { return specs_.size(); }
    const std::vector<NodeSpec>& specs() const { return specs_; }

    std::size_t index_of(const std::string& node_id) const {
        for (std::size_t i = 0; i < specs_.size(); ++i)
            if (specs_[i].node_id == node_id) return i;
        throw not_found_error("no such node: " + node_id);
    }

    const NodeSpec& spec(const std::string& node_id) const { return specs_[index_of(node_id)]; }
    const NodeFree& free_state(const std::string& node_id) const { return free_[index_of(node_id)]; }
    bool is_up(const std::string& node_id) const { return up_[index_of(node_id)]; }
    void set_up(const std::string& node_id, bool up) { up_[index_of(node_id)] = up; }

    // First fit over up nodes in node_id order.
    std::optional<Allocation> try_allocate(const ResourceRequest& req, const std::string& job_id) {
        for (std::size_t i = 0; i < specs_.size(); ++i) {
            if (!up_[i]) continue;
            if (fits(specs_[i], free_[i], req))
                return allocate(specs_[i], free_[i], req, job_id);
        }
        return std::nullopt;
    }

    void release_allocation(const Allocation& a) {
        std::size_t i = index_of(a.node_id);
        release(specs_[i], free_[i], a);
    }

    // True iff some configured node at full capacity could host the request.
    // Availability is ignored: a down node may recover.
    bool feasible_ever(const ResourceRequest& req) const {
        for (const auto& n : specs_) {
            NodeFree all = free_of(n);
            if (fits(n, all, req)) return true;
        }
        return false;
    }

  private:
    std::vector<NodeSpec> specs_;
    std::vector<NodeFree> free_;
    std::vector<bool> up_;
};

// ── cluster config file ────────────────────────────────────────────────────
//
//   <node_id> <cpu_cores> <ram_gb> [<vram1,vram2,...>]
//
// '#' starts a comment; blank lines are skipped. A node without a fourth
// field has no GPUs.

inline std::vector<NodeSpec> parse_cluster(const std::string& text) {
    std::vector<NodeSpec> nodes;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw.substr(0, raw.find('#'));
        std::istringstream ls(line);
        NodeSpec n;
        if (!(ls >> n.node_id)) continue;  // blank or comment-only
        std::string gpus;
        if (!(ls >> n.cpu_cores >> n.ram_gb))
            throw parse_error("expected <node_id> <cpu_cores> <ram_gb> [<vram,...>]", line_no);
        if (ls >> gpus) {
            std::string extra;
            if (ls >> extra) throw parse_error("trailing field '" + extra + "'", line_no);
            std::istringstream gs(gpus);
            std::string part;
            while (std::getline(gs, part, ',')) {
                try {
                    std::size_t pos = 0;
                    int v = std::stoi(part, &pos);
                    if (pos != part.size()) throw std::invalid_argument(part);
                    n.gpu_vram_gb.push_back(v);
                } catch (const std::exception&) {
                    throw parse_error("bad vram value '" + part + "'", line_no);
                }
            }
            if (n.gpu_vram_gb.empty()) throw parse_error("empty gpu list", line_no);
        }
        try {
            validate_node(n);
        } catch (const validation_error& e) {
            throw parse_error(e.what(), line_no);
        }
        nodes.push_back(std::move(n));
    }
    return nodes;
}

inline Cluster load_cluster(const std::string& text) { return Cluster(parse_cluster(text)); }

// Desk-scale stand-in for the four-A100 rig: one node, 4 x 80 GB.
inline Cluster default_cluster() {
    return Cluster({NodeSpec{"gpu01", 32, 256, {80, 80, 80, 80}}});
}

// ── model catalog ──────────────────────────────────────────────────────────

struct PerfConstants {
    double init_latency_ms = 0.0;       // single-request latency floor
    int saturation_concurrency = 0;     // concurrent requests the engine absorbs
    double saturation_latency_ms = 0.0; // mean latency at that point
};

struct ModelProfile {
    std::string name;
    double params_billions = 0.0;
    ResourceRequest request;
    std::optional<PerfConstants> perf;  // absent for catalog-only entries
    int tokens_per_request = 1024;

    bool has_perf() const { return perf.has_value(); }
};

// Measured floors exist for 1B (10 ms) and 70B (750 ms); sizes in between
// follow a power law through those two points.
inline double interp_init_latency_ms(double params_billions) {
    static const double k = std::log(75.0) / std::log(70.0);
    return 10.0 * std::pow(params_billions, k);
}

inline const std::vector<ModelProfile>& builtin_profiles() {
    static const std::vector<ModelProfile> profiles = [] {
        std::vector<ModelProfile> p;
        p.push_back({"llama3.2-1b", 1.0, {4, 8, 1, 2, 120}, PerfConstants{10.0, 128, 36.0}, 1024});
        p.push_back({"llama3.2-3b", 3.0, {8, 16, 1, 6, 120},
                     PerfConstants{interp_init_latency_ms(3.0), 49, 85.0}, 1024});
        p.push_back({"llama3.1-8b", 8.0, {8, 16, 1, 16, 120},
                     PerfConstants{interp_init_latency_ms(8.0), 20, 336.0}, 1024});
        p.push_back({"llama3.1-70b", 70.0, {16, 128, 2, 80, 360}, PerfConstants{750.0, 2, 2131.0}, 1024});
        p.push_back({"llama3-8b", 8.0, {8, 16, 1, 16, 120}, std::nullopt, 1024});
        p.push_back({"mistral-7b", 7.3, {8, 16, 1, 16, 120}, std::nullopt, 1024});
        p.push_back({"deepseek-67b", 67.0, {16, 128, 4, 24, 360}, std::nullopt, 1024});
        p.push_back({"falcon-40b", 40.0, {12, 80, 2, 24, 240}, std::nullopt, 1024});
        p.push_back({"mpt-30b", 30.0, {12, 60, 2, 24, 240}, std::nullopt, 1024});
        return p;
    }();
    return profiles;
}

// Accepts catalog names and the short aliases 1b/3b/8b/70b.
inline const ModelProfile& find_profile(const std::string& name) {
    std::string key = name;
    if (key == "1b") key = "llama3.2-1b";
    else if (key == "3b") key = "llama3.2-3b";
    else if (key == "8b") key = "llama3.1-8b";
    else if (key == "70b") key = "llama3.1-70b";
    for (const auto& p : builtin_profiles())
        if (p.name == key) return p;
    throw not_found_error("unknown model: " + name);
}

}  // namespace hpcserve
