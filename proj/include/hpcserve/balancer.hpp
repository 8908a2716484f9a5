#pragma once

// Request balancing across READY endpoints, plus reverse-proxy config
// generation for the replica case. pick/complete keep per-endpoint in-flight
// counts; both strategies are deterministic given the call sequence.

#include <mutex>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "hpcserve/errors.hpp"
#include "hpcserve/hosts.hpp"

namespace hpcserve {

enum class BalancerStrategy { RoundRobin, LeastConnections };

inline const char* to_string(BalancerStrategy s) {
    return s == BalancerStrategy::RoundRobin ? "rr" : "lc";
}

inline BalancerStrategy parse_strategy(const std::string& s) {
    if (s == "rr") return BalancerStrategy::RoundRobin;
    if (s == "lc") return BalancerStrategy::LeastConnections;
    throw validation_error("unknown balancing strategy: " + s + " (expected rr or lc)");
}

// Mutable balancer pool. Entries keep insertion (registry) order; the
// round-robin cursor renormalizes on removal so no live endpoint is skipped
// or served twice in one cycle.
class BalancerState {
  public:
    void add(const Endpoint& e) {
        validate_endpoint(e);
        std::lock_guard lk(mu_);
        for (const auto& en : entries_)
            if (en.ep.address == e.address)
                throw duplicate_error("balancer already has " + e.address);
        entries_.push_back({e, 0});
    }

    bool remove(const std::string& address) {
        std::lock_guard lk(mu_);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].ep.address != address) continue;
            entries_.erase(entries_.begin() + i);
            if (i < cursor_) --cursor_;
            if (cursor_ >= entries_.size()) cursor_ = 0;
            return true;
        }
        return false;
    }

    // Chooses an endpoint and counts the request against it.
    Endpoint pick(BalancerStrategy strategy) {
        std::lock_guard lk(mu_);
        if (entries_.empty()) throw unavailable_error("no endpoint available");
        std::size_t chosen = 0;
        if (strategy == BalancerStrategy::RoundRobin) {
            chosen = cursor_;
            cursor_ = (cursor_ + 1) % entries_.size();
        } else {
            for (std::size_t i = 1; i < entries_.size(); ++i)
                if (entries_[i].in_flight < entries_[chosen].in_flight) chosen = i;
        }
        ++entries_[chosen].in_flight;
        return entries_[chosen].ep;
    }

    // Releases one request. Quietly ignores addresses that were removed while
    // the request was in flight; a decrement below zero is an accounting bug.
    void complete(const std::string& address) {
        std::lock_guard lk(mu_);
        for (auto& en : entries_) {
            if (en.ep.address != address) continue;
            if (en.in_flight == 0)
                throw validation_error("complete without matching pick on " + address);
            --en.in_flight;
            return;
        }
    }

    int in_flight(const std::string& address) const {
        std::lock_guard lk(mu_);
        for (const auto& en : entries_)
            if (en.ep.address == address) return en.in_flight;
        throw not_found_error("balancer has no endpoint at " + address);
    }

    int total_in_flight() const {
        std::lock_guard lk(mu_);
        int sum = 0;
        for (const auto& en : entries_) sum += en.in_flight;
        return sum;
    }

    std::vector<std::pair<Endpoint, int>> snapshot() const {
        std::lock_guard lk(mu_);
        std::vector<std::pair<Endpoint, int>> out;
        for (const auto& en : entries_) out.emplace_back(en.ep, en.in_flight);
        return out;
    }

    std::size_t size() const {
        std::lock_guard lk(mu_);
        return entries_.size();
    }

  private:
    struct Entry {
        Endpoint ep;
        int in_flight = 0;
    };

    mutable std::mutex mu_;
    std::vector<Entry> entries_;
    std::size_t cursor_ = 0;
};

// ── reverse proxy config ───────────────────────────────────────────────────

inline constexpr const char* upstream_pool_name = "llm_pool";

inline std::string generate_nginx_conf(const std::vector<Endpoint>& endpoints, int listen_port) {
    if (endpoints.empty()) throw validation_error("cannot balance zero endpoints");
    if (listen_port < 1 || listen_port > 65535)
        throw validation_error("listen port out of range: " + std::to_string(listen_port));
    for (const auto& e : endpoints) validate_endpoint(e);
    std::ostringstream out;
    out << "upstream " << upstream_pool_name << " {\n";
    for (const auto& e : endpoints) out << "    server " << e.address << ";\n";
    out << "}\n"
        << "server {\n"
        << "    listen " << listen_port << ";\n"
        << "    location / {\n"
        << "        proxy_pass http://" << upstream_pool_name << ";\n"
        << "    }\n"
        << "}\n";
    return out.str();
}

// Structural well-formedness check for the config dialect generate emits.
// Returns human-readable violations; empty means the config is sound.
inline std::vector<std::string> check_conf(const std::string& text) {
    std::vector<std::string> violations;

    // tokenize: braces and semicolons are tokens of their own
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (c == '{' || c == '}' || c == ';') {
            if (!cur.empty()) tokens.push_back(std::exchange(cur, ""));
            tokens.push_back(std::string(1, c));
        } else if (std::isspace((unsigned char)c)) {
            if (!cur.empty()) tokens.push_back(std::exchange(cur, ""));
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) tokens.push_back(cur);

    int depth = 0;
    bool in_upstream = false;
    int upstream_depth = 0;
    std::string upstream_name;
    int upstream_blocks = 0, server_lines = 0, proxy_passes = 0, listens = 0;
    std::string proxy_target;

    for (std::size_t i = 0; i < tokens.size(); ++i) {
        const std::string& t = tokens[i];
        if (t == "{") {
            ++depth;
        } else if (t == "}") {
            --depth;
            if (depth < 0) {
                violations.push_back("unbalanced braces: '}' without matching '{'");
                depth = 0;
            }
            if (in_upstream && depth < upstream_depth) in_upstream = false;
        } else if (t == "upstream") {
            ++upstream_blocks;
            if (i + 2 < tokens.size() && tokens[i + 2] == "{") {
                upstream_name = tokens[i + 1];
                in_upstream = true;
                upstream_depth = depth + 1;
            } else {
                violations.push_back("upstream block missing name or '{'");
            }
        } else if (t == "server" && i + 1 < tokens.size() && tokens[i + 1] != "{") {
            if (!in_upstream) {
                violations.push_back("server address outside upstream block: " + tokens[i + 1]);
                continue;
            }
            ++server_lines;
            try {
                validate_address(tokens[i + 1]);
            } catch (const validation_error& e) {
                violations.push_back(std::string("bad server address: ") + e.what());
            }
            if (i + 2 >= tokens.size() || tokens[i + 2] != ";")
                violations.push_back("server line missing ';'");
        } else if (t == "proxy_pass") {
            ++proxy_passes;
            if (i + 1 < tokens.size() && tokens[i + 1].rfind("http://", 0) == 0)
                proxy_target = tokens[i + 1].substr(7);
            else
                violations.push_back("proxy_pass target must be http://<pool>");
            if (i + 2 >= tokens.size() || tokens[i + 2] != ";")
                violations.push_back("proxy_pass line missing ';'");
        } else if (t == "listen") {
            ++listens;
            int port = 0;
            if (i + 1 < tokens.size()) {
                try {
                    std::size_t pos = 0;
                    port = std::stoi(tokens[i + 1], &pos);
                    if (pos != tokens[i + 1].size()) port = 0;
                } catch (const std::exception&) {
                    port = 0;
                }
            }
            if (port < 1 || port > 65535)
                violations.push_back("listen needs a port in 1..65535");
        }
    }
    if (depth != 0) violations.push_back("unbalanced braces: block left open");
    if (upstream_blocks != 1)
        violations.push_back("expected exactly one upstream block, found " +
                             std::to_string(upstream_blocks));
    if (upstream_blocks == 1 && server_lines == 0)
        violations.push_back("upstream block has no server entries");
    if (proxy_passes != 1)
        violations.push_back("expected exactly one proxy_pass, found " +
                             std::to_string(proxy_passes));
    if (listens != 1)
        violations.push_back("expected exactly one listen directive, found " +
                             std::to_string(listens));
    if (upstream_blocks == 1 && proxy_passes == 1 && !proxy_target.empty() &&
        proxy_target != upstream_name)
        violations.push_back("proxy_pass targets '" + proxy_target + "' but the pool is '" +
                             upstream_name + "'");
    return violations;
}

}  // namespace hpcserve
