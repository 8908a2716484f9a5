#pragma once

// JSON-over-HTTP front for the orchestrator. The wire clock is virtual: all
// latencies in responses come from the simulator. With realtime=true the
// handler additionally sleeps the reported virtual time before answering, so
// demos feel like the real thing.

#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "hpcserve/errors.hpp"
#include "hpcserve/gateway.hpp"
#include "hpcserve/hosts.hpp"

namespace hpcserve {

using json = nlohmann::json;

// One slug per error family; the HTTP status follows from it.
struct WireError {
    int status;
    std::string code;
};

inline WireError classify_error(const std::exception& e) {
    if (dynamic_cast<const not_found_error*>(&e)) return {404, "not_found"};
    if (dynamic_cast<const infeasible_error*>(&e)) return {422, "infeasible"};
    if (dynamic_cast<const unsupported_error*>(&e)) return {422, "unsupported"};
    if (dynamic_cast<const overloaded_error*>(&e)) return {429, "overloaded"};
    if (dynamic_cast<const unavailable_error*>(&e)) return {503, "unavailable"};
    if (dynamic_cast<const await_timeout_error*>(&e)) return {504, "timeout"};
    if (dynamic_cast<const duplicate_error*>(&e)) return {409, "duplicate"};
    if (dynamic_cast<const parse_error*>(&e)) return {400, "validation"};
    if (dynamic_cast<const validation_error*>(&e)) return {400, "validation"};
    if (dynamic_cast<const json::exception*>(&e)) return {400, "validation"};
    return {500, "internal"};
}

inline json to_json(const InferenceResponse& r) {
    return {{"request_id", r.request_id}, {"text", r.text},
            {"generated_tokens", r.generated_tokens}, {"latency_ms", r.latency_ms},
            {"queued_ms", r.queued_ms}};
}

inline json to_json(const GatewayStatus& st) {
    json models = json::object();
    for (const auto& [name, ms] : st.models)
        models[name] = {{"ready_endpoints", ms.ready_endpoints},
                        {"in_flight", ms.in_flight},
                        {"queued", ms.queued}};
    return {{"clock_ms", st.clock_ms}, {"pending_jobs", st.pending_jobs},
            {"running_jobs", st.running_jobs}, {"models", models}};
}

class GatewayServer {
  public:
    explicit GatewayServer(Orchestrator& orchestrator, bool realtime = false)
        : orch_(orchestrator), realtime_(realtime) {
        wire_routes();
    }

    // Blocks serving until stop(). Returns false if the bind failed.
    bool listen(const std::string& host, int port) { return server_.listen(host, port); }

    // For tests and --port 0: binds an ephemeral port and serves on a thread.
    int start_detached(const std::string& host) {
        int port = server_.bind_to_any_port(host);
        if (port < 0) throw error("cannot bind " + host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~GatewayServer() { stop(); }

  private:
    template <typename Fn>
    void reply(httplib::Response& res, Fn&& fn) {
        try {
            fn();
        } catch (const std::exception& e) {
            WireError w = classify_error(e);
            json detail = json::object();
            if (auto* t = dynamic_cast<const await_timeout_error*>(&e)) {
                detail["ready"] = json::array();
                for (const Endpoint& ep : t->ready) detail["ready"].push_back(ep.address);
            }
            res.status = w.status;
            res.set_content(
                json{{"code", w.code}, {"message", e.what()}, {"detail", detail}}.dump(),
                "application/json");
        }
    }

    void sleep_virtual(double ms) const {
        if (realtime_ && ms > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds((std::int64_t)ms));
    }

    void wire_routes() {
        server_.Post("/v1/models/spinup", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
            reply(res, [&] {
                json body = json::parse(req.body);
                SpinUpResult r = orch_.spinup(body.at("model").get<std::string>(),
                                              parse_engine(body.at("engine").get<std::string>()),
                                              body.value("replicas", 1));
                res.set_content(json{{"job_ids", r.job_ids},
                                     {"hosts_hint", r.hosts_hint},
                                     {"balanced_address", r.balanced_address},
                                     {"nginx_conf", r.nginx_conf}}
                                    .dump(),
                                "application/json");
            });
        });

        server_.Post("/v1/infer", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, [&] {
                json body = json::parse(req.body);
                InferenceResponse r = orch_.infer(body.at("model").get<std::string>(),
                                                  body.at("prompt").get<std::string>(),
                                                  body.value("max_new_tokens", 1024));
                sleep_virtual(r.queued_ms + r.latency_ms);
                res.set_content(to_json(r).dump(), "application/json");
            });
        });

        server_.Post("/v1/batch", [this](const httplib::Request& req, httplib::Response& res) {
            reply(res, [&] {
                json body = json::parse(req.body);
                auto prompts = body.at("prompts").get<std::vector<std::string>>();
                auto rs = orch_.batch_infer(body.at("model").get<std::string>(), prompts,
                                            body.value("max_new_tokens", 1024));
                double makespan = 0.0;
                json out = json::array();
                for (const InferenceResponse& r : rs) {
                    makespan = std::max(makespan, r.queued_ms + r.latency_ms);
                    out.push_back(to_json(r));
                }
                sleep_virtual(makespan);
                res.set_content(out.dump(), "application/json");
            });
        });

        server_.Get("/v1/status", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, [&] {
                res.set_content(to_json(orch_.status()).dump(), "application/json");
            });
        });

        server_.Get("/v1/endpoints", [this](const httplib::Request&, httplib::Response& res) {
            reply(res, [&] { res.set_content(orch_.endpoints_text(), "text/plain"); });
        });
    }

    Orchestrator& orch_;
    bool realtime_;
    httplib::Server server_;
    std::thread thread_;
};

}  // namespace hpcserve
