#pragma once

// Endpoint records and the hosts file format:
//
//   <job_id> <node_id> <ip:port> <engine> <model> <status>
//
// One line per endpoint, single spaces, status transitions timestamped with
// the virtual clock. parse and serialize are exact inverses.

#include <cstdint>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "hpcserve/errors.hpp"
#include "hpcserve/slurm_script.hpp"

namespace hpcserve {

enum class EndpointStatus { Starting, Ready, Down };

inline const char* to_string(EndpointStatus s) {
    switch (s) {
        case EndpointStatus::Starting: return "STARTING";
        case EndpointStatus::Ready: return "READY";
        case EndpointStatus::Down: return "DOWN";
    }
    return "?";
}

inline EndpointStatus parse_status(const std::string& s) {
    if (s == "STARTING") return EndpointStatus::Starting;
    if (s == "READY") return EndpointStatus::Ready;
    if (s == "DOWN") return EndpointStatus::Down;
    throw validation_error("unknown endpoint status: " + s);
}

struct Endpoint {
    std::string job_id;
    std::string node_id;
    std::string address;  // ip:port
    EngineKind engine = EngineKind::Mock;
    std::string model;
    EndpointStatus status = EndpointStatus::Starting;

    bool operator==(const Endpoint&) const = default;
};

inline void validate_address(const std::string& addr) {
    auto colon = addr.find(':');
    if (colon == std::string::npos) throw validation_error("address needs ip:port, got " + addr);
    std::string ip = addr.substr(0, colon), port = addr.substr(colon + 1);
    int octets = 0;
    std::istringstream ips(ip);
    std::string part;
    while (std::getline(ips, part, '.')) {
        if (part.empty() || part.size() > 3) throw validation_error("bad ipv4 octet in " + addr);
        for (char c : part)
            if (!std::isdigit((unsigned char)c)) throw validation_error("bad ipv4 octet in " + addr);
        if (std::stoi(part) > 255) throw validation_error("ipv4 octet out of range in " + addr);
        ++octets;
    }
    if (octets != 4 || ip.back() == '.') throw validation_error("bad ipv4 address in " + addr);
    if (port.empty() || port.size() > 5) throw validation_error("bad port in " + addr);
    for (char c : port)
        if (!std::isdigit((unsigned char)c)) throw validation_error("bad port in " + addr);
    int p = std::stoi(port);
    if (p < 1 || p > 65535) throw validation_error("port out of range in " + addr);
}

inline void validate_endpoint(const Endpoint& e) {
    if (e.job_id.empty()) throw validation_error("endpoint job_id must be non-empty");
    if (e.node_id.empty()) throw validation_error("endpoint node_id must be non-empty");
    if (e.model.empty()) throw validation_error("endpoint model must be non-empty");
    validate_address(e.address);
}

struct HostsFile {
    std::vector<Endpoint> endpoints;

    bool operator==(const HostsFile&) const = default;
};

// Readiness wait ran out. Carries whatever was READY at the deadline.
struct await_timeout_error : error {
    std::vector<Endpoint> ready;
    await_timeout_error(const std::string& msg, std::vector<Endpoint> ready_now)
        : error(msg), ready(std::move(ready_now)) {}
};

inline std::string serialize_hosts(const std::vector<Endpoint>& endpoints) {
    std::ostringstream out;
    for (const auto& e : endpoints)
        out << e.job_id << ' ' << e.node_id << ' ' << e.address << ' ' << to_string(e.engine)
            << ' ' << e.model << ' ' << to_string(e.status) << '\n';
    return out.str();
}

inline std::string serialize_hosts(const HostsFile& h) { return serialize_hosts(h.endpoints); }

inline HostsFile parse_hosts(const std::string& text) {
    HostsFile h;
    std::istringstream in(text);
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string line = raw.substr(0, raw.find('#'));
        std::istringstream ls(line);
        Endpoint e;
        std::string engine, status, extra;
        if (!(ls >> e.job_id)) continue;
        if (!(ls >> e.node_id >> e.address >> engine >> e.model >> status))
            throw parse_error("expected <job> <node> <ip:port> <engine> <model> <status>",
                              line_no);
        if (ls >> extra) throw parse_error("trailing field '" + extra + "'", line_no);
        try {
            e.engine = parse_engine(engine);
            e.status = parse_status(status);
            validate_endpoint(e);
        } catch (const validation_error& err) {
            throw parse_error(err.what(), line_no);
        }
        for (const auto& seen : h.endpoints)
            if (seen.job_id == e.job_id && seen.address == e.address)
                throw duplicate_error("line " + std::to_string(line_no) +
                                      ": duplicate endpoint " + e.job_id + " " + e.address);
        h.endpoints.push_back(std::move(e));
    }
    return h;
}

// Live endpoint table. Read-mostly: reads take a shared lock and return
// snapshots, writes are serialized. Keyed by (job_id, address).
class EndpointRegistry {
  public:
    EndpointRegistry() = default;
    EndpointRegistry(const EndpointRegistry& other) { *this = other; }
    EndpointRegistry& operator=(const EndpointRegistry& other) {
        if (this != &other) {
            std::unique_lock lk(mu_, std::defer_lock);
            std::shared_lock ot(other.mu_, std::defer_lock);
            std::lock(lk, ot);
            records_ = other.records_;
        }
        return *this;
    }

    // Inserts or updates. A status change restamps status_since.
    void upsert(const Endpoint& e, std::int64_t now_ms) {
        validate_endpoint(e);
        std::unique_lock lk(mu_);
        for (auto& r : records_) {
            if (r.ep.job_id == e.job_id && r.ep.address == e.address) {
                if (r.ep.status != e.status) r.since_ms = now_ms;
                r.ep = e;
                return;
            }
        }
        records_.push_back({e, now_ms});
    }

    // Marks every record at this address DOWN. Throws if none exists.
    void mark_down(const std::string& address, std::int64_t now_ms) {
        std::unique_lock lk(mu_);
        bool found = false;
        for (auto& r : records_) {
            if (r.ep.address != address) continue;
            found = true;
            if (r.ep.status != EndpointStatus::Down) {
                r.ep.status = EndpointStatus::Down;
                r.since_ms = now_ms;
            }
        }
        if (!found) throw not_found_error("no endpoint at " + address);
    }

    // Marks all endpoints of a job DOWN; a job with no endpoints is fine.
    int mark_down_by_job(const std::string& job_id, std::int64_t now_ms) {
        std::unique_lock lk(mu_);
        int n = 0;
        for (auto& r : records_) {
            if (r.ep.job_id != job_id || r.ep.status == EndpointStatus::Down) continue;
            r.ep.status = EndpointStatus::Down;
            r.since_ms = now_ms;
            ++n;
        }
        return n;
    }

    std::vector<Endpoint> all() const {
        std::shared_lock lk(mu_);
        std::vector<Endpoint> out;
        out.reserve(records_.size());
        for (const auto& r : records_) out.push_back(r.ep);
        return out;
    }

    // READY endpoints, optionally restricted to one model. Registry order.
    std::vector<Endpoint> ready(const std::string& model = "") const {
        std::shared_lock lk(mu_);
        std::vector<Endpoint> out;
        for (const auto& r : records_)
            if (r.ep.status == EndpointStatus::Ready && (model.empty() || r.ep.model == model))
                out.push_back(r.ep);
        return out;
    }

    std::int64_t status_since(const std::string& job_id, const std::string& address) const {
        std::shared_lock lk(mu_);
        for (const auto& r : records_)
            if (r.ep.job_id == job_id && r.ep.address == address) return r.since_ms;
        throw not_found_error("no endpoint " + job_id + " " + address);
    }

    HostsFile hosts() const { return HostsFile{all()}; }

    void load(const HostsFile& h, std::int64_t now_ms) {
        std::unique_lock lk(mu_);
        records_.clear();
        for (const auto& e : h.endpoints) records_.push_back({e, now_ms});
    }

    std::size_t size() const {
        std::shared_lock lk(mu_);
        return records_.size();
    }

  private:
    struct Record {
        Endpoint ep;
        std::int64_t since_ms = 0;
    };

    mutable std::shared_mutex mu_;
    std::vector<Record> records_;
};

}  // namespace hpcserve
