#pragma once

// Orchestrator: the gateway core. Owns the scheduler, endpoint registry,
// per-model balancers, and the perf backend, all driven by one virtual
// clock. Every public call is one step of a serialized command stream (a
// single mutex); HTTP handlers and tests share it safely.
//
// Request path: submit_infer admits or queues, dispatch binds a request to
// an endpoint FIFO slot, take finalizes (and retries once if the endpoint
// died mid-flight). Endpoint wait is computed as position * service_latency
// from a per-endpoint anchor, one multiplication, so homogeneous batch
// makespans are bit-exact multiples of the single-request latency.

#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "hpcserve/balancer.hpp"
#include "hpcserve/cluster.hpp"
#include "hpcserve/errors.hpp"
#include "hpcserve/hosts.hpp"
#include "hpcserve/perf_model.hpp"
#include "hpcserve/scheduler.hpp"
#include "hpcserve/slurm_script.hpp"

namespace hpcserve {

struct OrchestratorConfig {
    std::int64_t spin_up_ms = 2000;           // engine boot time after job start
    std::int64_t spinup_timeout_ms = 3'600'000;
    std::size_t queue_cap = 1024;             // per model; 0 disables queueing
    BalancerStrategy strategy = BalancerStrategy::RoundRobin;
    int max_batch = 256;
    int listen_port = 8080;                   // balanced front door
    SchedulerConfig scheduler{};
};

struct SpinUpResult {
    std::vector<std::string> job_ids;
    std::vector<Endpoint> endpoints;
    std::string hosts_hint;       // hosts-file rendering of the new endpoints
    std::string balanced_address; // set when replicas > 1
    std::string nginx_conf;       // set when replicas > 1
};

struct ModelStatus {
    int ready_endpoints = 0;
    int in_flight = 0;
    int queued = 0;
};

struct GatewayStatus {
    std::map<std::string, ModelStatus> models;
    int pending_jobs = 0;
    int running_jobs = 0;
    std::int64_t clock_ms = 0;
};

using Ticket = std::uint64_t;

class Orchestrator {
  public:
    explicit Orchestrator(Cluster cluster, OrchestratorConfig cfg = {},
                          std::vector<ModelProfile> profiles = builtin_profiles())
        : cfg_(cfg), sched_(std::move(cluster), cfg.scheduler), perf_(std::move(profiles)) {}

    std::int64_t now() const {
        std::lock_guard lk(mu_);
        return sched_.now();
    }

    void advance(std::int64_t until_ms) {
        std::lock_guard lk(mu_);
        advance_locked(until_ms);
    }

    // ── lifecycle ───────────────────────────────────────────────────────────

    // Submits replicas single-engine jobs and waits (in virtual time) until
    // each has a READY endpoint. replicas > 1 also yields a reverse-proxy
    // config and a balanced front address.
    SpinUpResult spinup(const std::string& model, EngineKind engine, int replicas) {
        std::lock_guard lk(mu_);
        if (replicas < 1) throw validation_error("replicas must be >= 1");
        const ModelProfile& p = perf_.profile(model);
        if (!sched_.cluster().feasible_ever(p.request))
            throw infeasible_error("no node can ever host " + p.name);

        SpinUpResult res;
        for (int r = 0; r < replicas; ++r) {
            std::string id = sched_.submit(make_script(p, engine, 1),
                                           (std::int64_t)p.request.walltime_minutes * 60'000);
            job_meta_[id] = {p.name, engine};
            res.job_ids.push_back(std::move(id));
        }
        sync_from_scheduler();

        std::int64_t deadline = sched_.now() + cfg_.spinup_timeout_ms;
        while (ready_count_for(res.job_ids) < (std::size_t)res.job_ids.size()) {
            auto next = next_wake();
            if (!next || *next > deadline) {
                advance_locked(deadline);
                throw await_timeout_error("spinup of " + p.name + " timed out",
                                          ready_for(res.job_ids));
            }
            advance_locked(*next);
        }
        res.endpoints = ready_for(res.job_ids);
        res.hosts_hint = serialize_hosts(res.endpoints);
        if (replicas > 1) {
            res.nginx_conf = generate_nginx_conf(res.endpoints, cfg_.listen_port);
            res.balanced_address = "10.0.0.254:" + std::to_string(cfg_.listen_port);
        }
        return res;
    }

    // Waits until min_count endpoints of the model are READY.
    std::vector<Endpoint> await_ready(const std::string& model, std::size_t min_count,
                                      std::int64_t timeout_ms) {
        std::lock_guard lk(mu_);
        std::int64_t deadline = sched_.now() + timeout_ms;
        while (registry_.ready(model).size() < min_count) {
            auto next = next_wake();
            if (!next || *next > deadline) {
                advance_locked(deadline);
                throw await_timeout_error("only " +
                                              std::to_string(registry_.ready(model).size()) +
                                              "/" + std::to_string(min_count) + " endpoints of " +
                                              model + " became READY in time",
                                          registry_.ready(model));
            }
            advance_locked(*next);
        }
        return registry_.ready(model);
    }

    std::vector<std::string> fail_node(const std::string& node_id, std::int64_t at_ms) {
        std::lock_guard lk(mu_);
        auto affected = sched_.fail_node(node_id, at_ms);
        sync_from_scheduler();
        return affected;
    }

    void recover_node(const std::string& node_id, std::int64_t at_ms) {
        std::lock_guard lk(mu_);
        sched_.recover_node(node_id, at_ms);
        sync_from_scheduler();
    }

    void cancel_job(const std::string& job_id) {
        std::lock_guard lk(mu_);
        sched_.cancel(job_id);
        sync_from_scheduler();
    }

    // ── inference ───────────────────────────────────────────────────────────

    // Admits a request: dispatches now if an endpoint is READY, else queues
    // FIFO (per model). The ticket is claimed later with take().
    Ticket submit_infer(const std::string& model, const std::string& prompt,
                        int max_new_tokens = 1024) {
        std::lock_guard lk(mu_);
        return submit_locked(model, prompt, max_new_tokens);
    }

    // True once the response can be taken without advancing the clock.
    bool done(Ticket t) const {
        std::lock_guard lk(mu_);
        auto it = pending_.find(t);
        if (it == pending_.end()) return false;
        return it->second.dispatched && (double)sched_.now() >= it->second.finish_ms;
    }

    // Blocks in virtual time: advances the clock to the request's completion
    // and returns the response. Retries once if the endpoint died mid-flight.
    InferenceResponse take(Ticket t) {
        std::lock_guard lk(mu_);
        return take_locked(t);
    }

    InferenceResponse infer(const std::string& model, const std::string& prompt,
                            int max_new_tokens = 1024) {
        std::lock_guard lk(mu_);
        return take_locked(submit_locked(model, prompt, max_new_tokens));
    }

    // Fans a homogeneous batch across the model's endpoints. Responses come
    // back in prompt order.
    std::vector<InferenceResponse> batch_infer(const std::string& model,
                                               const std::vector<std::string>& prompts,
                                               int max_new_tokens = 1024) {
        std::lock_guard lk(mu_);
        if (prompts.empty()) throw validation_error("batch must contain at least one prompt");
        if ((int)prompts.size() > cfg_.max_batch)
            throw validation_error("batch of " + std::to_string(prompts.size()) +
                                   " exceeds the admission limit of " +
                                   std::to_string(cfg_.max_batch));
        std::vector<Ticket> tickets;
        tickets.reserve(prompts.size());
        for (const auto& p : prompts) tickets.push_back(submit_locked(model, p, max_new_tokens));
        std::vector<InferenceResponse> out;
        out.reserve(tickets.size());
        for (Ticket t : tickets) out.push_back(take_locked(t));
        return out;
    }

    // ── introspection ───────────────────────────────────────────────────────

    GatewayStatus status() const {
        std::lock_guard lk(mu_);
        GatewayStatus st;
        st.clock_ms = sched_.now();
        for (const auto& j : sched_.query_all()) {
            if (j.state == JobState::Pending) ++st.pending_jobs;
            if (j.state == JobState::Running) ++st.running_jobs;
        }
        for (const auto& e : registry_.all()) touch_model_status(st, e.model);
        for (const auto& [model, q] : queues_)
            if (!q.empty()) touch_model_status(st, model);
        for (auto& [model, ms] : st.models) {
            ms.ready_endpoints = (int)registry_.ready(model).size();
            auto it = balancers_.find(model);
            ms.in_flight = it == balancers_.end() ? 0 : it->second->total_in_flight();
            auto qit = queues_.find(model);
            ms.queued = qit == queues_.end() ? 0 : (int)qit->second.size();
        }
        return st;
    }

    std::string endpoints_text() const {
        std::lock_guard lk(mu_);
        return serialize_hosts(registry_.all());
    }

    std::vector<Endpoint> endpoints() const {
        std::lock_guard lk(mu_);
        return registry_.all();
    }

    std::vector<Endpoint> ready_endpoints(const std::string& model) const {
        std::lock_guard lk(mu_);
        return registry_.ready(model);
    }

    std::vector<Job> jobs() const {
        std::lock_guard lk(mu_);
        return sched_.query_all();
    }

    std::vector<Transition> transitions() const {
        std::lock_guard lk(mu_);
        return sched_.log();
    }

    const PerfBackend& perf() const { return perf_; }
    const OrchestratorConfig& config() const { return cfg_; }

  private:
    struct JobMeta {
        std::string model;
        EngineKind engine = EngineKind::Mock;
    };

    // Single-slot FIFO per endpoint. Wait for the k-th request queued since
    // the anchor is k * D with one multiplication (no additive drift).
    struct EndpointQueue {
        std::int64_t anchor_ms = 0;
        std::int64_t position = 0;
    };

    struct PendingInfer {
        std::string model;
        std::string prompt;
        int max_new_tokens = 1024;
        std::int64_t enqueue_ms = 0;
        bool dispatched = false;
        bool retried = false;
        std::string endpoint_address;
        double service_ms = 0.0;
        double queue_wait_ms = 0.0;
        double finish_ms = 0.0;
    };

    static void touch_model_status(GatewayStatus& st, const std::string& model) {
        st.models.emplace(model, ModelStatus{});
    }

    BalancerState& balancer_for(const std::string& model) {
        auto it = balancers_.find(model);
        if (it == balancers_.end())
            it = balancers_.emplace(model, std::make_unique<BalancerState>()).first;
        return *it->second;
    }

    std::size_t ready_count_for(const std::vector<std::string>& job_ids) const {
        return ready_for(job_ids).size();
    }

    std::vector<Endpoint> ready_for(const std::vector<std::string>& job_ids) const {
        std::vector<Endpoint> out;
        for (const auto& e : registry_.all()) {
            if (e.status != EndpointStatus::Ready) continue;
            for (const auto& id : job_ids)
                if (e.job_id == id) {
                    out.push_back(e);
                    break;
                }
        }
        return out;
    }

    // Earliest upcoming virtual event: scheduler event or endpoint readiness.
    std::optional<std::int64_t> next_wake() const {
        std::optional<std::int64_t> t = sched_.next_event_time();
        for (const auto& [addr, at] : ready_at_)
            if (!t || at < *t) t = at;
        return t;
    }

    void advance_locked(std::int64_t until_ms) {
        if (until_ms < sched_.now()) throw validation_error("advance into the past");
        for (;;) {
            auto next = next_wake();
            if (!next || *next > until_ms) break;
            step_to(*next);
        }
        sched_.advance(until_ms);
        sync_from_scheduler();
    }

    // One micro-step: scheduler events first, then endpoint readiness at the
    // same instant (an endpoint whose node died this tick never turns READY).
    void step_to(std::int64_t t) {
        sched_.advance(t);
        sync_from_scheduler();
        flush_ready(t);
        drain_queues();
    }

    // Applies scheduler transitions the orchestrator has not seen yet:
    // job starts create STARTING endpoints, everything leaving RUNNING takes
    // its endpoints DOWN.
    void sync_from_scheduler() {
        const auto& log = sched_.log();
        for (; log_mark_ < log.size(); ++log_mark_) {
            const Transition& tr = log[log_mark_];
            auto meta = job_meta_.find(tr.job_id);
            if (meta == job_meta_.end()) continue;
            if (tr.to == JobState::Running) {
                create_endpoints(tr.job_id, meta->second);
            } else if (tr.from == JobState::Running) {
                take_job_down(tr.job_id);
            }
        }
        flush_ready(sched_.now());
        drain_queues();
    }

    void create_endpoints(const std::string& job_id, const JobMeta& meta) {
        Job j = sched_.query(job_id);
        const std::string& node_id = j.allocation->node_id;
        std::size_t node_index = sched_.cluster().index_of(node_id);
        std::string ip = "10.0." + std::to_string(node_index / 250) + "." +
                         std::to_string(node_index % 250 + 1);
        int n = std::max<std::size_t>(j.script.launch_commands.size(), 1);
        for (int i = 0; i < n; ++i) {
            int& next_port = next_port_[node_id];
            if (next_port == 0) next_port = port_base + 1;
            Endpoint e{job_id, node_id, ip + ":" + std::to_string(next_port++), meta.engine,
                       meta.model, EndpointStatus::Starting};
            registry_.upsert(e, sched_.now());
            ready_at_[e.address] = sched_.now() + cfg_.spin_up_ms;
        }
    }

    void take_job_down(const std::string& job_id) {
        for (const auto& e : registry_.all()) {
            if (e.job_id != job_id || e.status == EndpointStatus::Down) continue;
            ready_at_.erase(e.address);
            balancer_for(e.model).remove(e.address);
            down_since_[e.address] = sched_.now();
        }
        registry_.mark_down_by_job(job_id, sched_.now());
    }

    // Promotes STARTING endpoints whose boot delay elapsed.
    void flush_ready(std::int64_t now_ms) {
        std::vector<std::string> due;
        for (const auto& [addr, at] : ready_at_)
            if (at <= now_ms) due.push_back(addr);
        for (const auto& addr : due) {
            ready_at_.erase(addr);
            for (const auto& e : registry_.all()) {
                if (e.address != addr || e.status != EndpointStatus::Starting) continue;
                Endpoint up = e;
                up.status = EndpointStatus::Ready;
                registry_.upsert(up, now_ms);
                balancer_for(up.model).add(up);
            }
        }
    }

    // FIFO drain: queued requests go out as soon as their model has capacity.
    void drain_queues() {
        for (auto& [model, q] : queues_) {
            BalancerState& b = balancer_for(model);
            while (!q.empty() && b.size() > 0) {
                Ticket t = q.front();
                q.pop_front();
                dispatch(pending_.at(t));
            }
        }
    }

    Ticket submit_locked(const std::string& model, const std::string& prompt,
                         int max_new_tokens) {
        const ModelProfile& p = perf_.profile(model);  // not_found on unknown
        if (!p.has_perf())
            throw unsupported_error("model " + p.name + " cannot serve inference (no perf data)");
        if (count_tokens(prompt) == 0)
            throw validation_error("prompt must contain at least one token");
        if (max_new_tokens < 1) throw validation_error("max_new_tokens must be >= 1");

        Ticket t = next_ticket_++;
        PendingInfer pi;
        pi.model = p.name;
        pi.prompt = prompt;
        pi.max_new_tokens = max_new_tokens;
        pi.enqueue_ms = sched_.now();
        auto [it, inserted] = pending_.emplace(t, std::move(pi));

        if (balancer_for(p.name).size() > 0) {
            dispatch(it->second);
        } else if (cfg_.queue_cap == 0) {
            pending_.erase(it);
            throw unavailable_error("no READY endpoint for " + p.name +
                                    " and queueing is disabled");
        } else if (queues_[p.name].size() >= cfg_.queue_cap) {
            pending_.erase(it);
            throw overloaded_error("admission queue for " + p.name + " is full (" +
                                   std::to_string(cfg_.queue_cap) + ")");
        } else {
            queues_[p.name].push_back(t);
        }
        return t;
    }

    // Binds the request to an endpoint slot at the current instant.
    void dispatch(PendingInfer& pi) {
        Endpoint ep = balancer_for(pi.model).pick(cfg_.strategy);
        double D = perf_.latency(pi.model, 1);
        std::int64_t T = sched_.now();
        EndpointQueue& q = queues_by_endpoint_[ep.address];
        double rel = (double)q.position * D;
        double elapsed = (double)(T - q.anchor_ms);
        double wait;
        if (q.position == 0 || elapsed >= rel) {
            q.anchor_ms = T;
            q.position = 0;
            wait = 0.0;
        } else {
            wait = rel - elapsed;
        }
        ++q.position;
        pi.dispatched = true;
        pi.endpoint_address = ep.address;
        pi.service_ms = D;
        pi.queue_wait_ms = wait + (double)(T - pi.enqueue_ms);
        pi.finish_ms = (double)T + wait + D;
    }

    InferenceResponse take_locked(Ticket t) {
        auto it = pending_.find(t);
        if (it == pending_.end()) throw not_found_error("no such ticket: " + std::to_string(t));
        PendingInfer& pi = it->second;

        for (;;) {
            if (!pi.dispatched) {
                auto next = next_wake();
                if (!next)
                    throw unavailable_error("request for " + pi.model +
                                            " is queued but no capacity is coming");
                advance_locked(*next);
                continue;
            }
            if ((double)sched_.now() < pi.finish_ms) {
                advance_locked((std::int64_t)std::ceil(pi.finish_ms));
                continue;
            }
            // finished; if the endpoint died before completion, retry once
            auto down = down_since_.find(pi.endpoint_address);
            if (down != down_since_.end() && (double)down->second < pi.finish_ms) {
                if (pi.retried)
                    throw unavailable_error("endpoint for " + pi.model + " died twice mid-flight");
                pi.retried = true;
                pi.dispatched = false;
                if (balancer_for(pi.model).size() > 0) {
                    dispatch(pi);
                    continue;
                }
                if (cfg_.queue_cap == 0) {
                    pending_.erase(it);
                    throw unavailable_error("endpoint died and no replacement is READY for " +
                                            pi.model);
                }
                queues_[pi.model].push_back(t);
                continue;
            }
            break;
        }

        balancer_for(pi.model).complete(pi.endpoint_address);
        InferenceResponse resp;
        resp.request_id = "req-" + std::to_string(t);
        resp.text = mock_translate(pi.prompt, pi.max_new_tokens);
        resp.generated_tokens = std::min(count_tokens(pi.prompt), pi.max_new_tokens);
        resp.latency_ms = pi.service_ms;
        resp.queued_ms = pi.queue_wait_ms;
        pending_.erase(it);
        return resp;
    }

    OrchestratorConfig cfg_;
    mutable std::mutex mu_;
    Scheduler sched_;
    EndpointRegistry registry_;
    PerfBackend perf_;
    std::map<std::string, std::unique_ptr<BalancerState>> balancers_;  // per model
    std::map<std::string, JobMeta> job_meta_;
    std::map<std::string, int> next_port_;            // per node
    std::map<std::string, std::int64_t> ready_at_;    // STARTING endpoint -> boot time
    std::map<std::string, std::int64_t> down_since_;  // endpoint -> death time
    std::map<std::string, EndpointQueue> queues_by_endpoint_;
    std::map<std::string, std::deque<Ticket>> queues_;
    std::map<Ticket, PendingInfer> pending_;
    std::size_t log_mark_ = 0;
    Ticket next_ticket_ = 1;
};

}  // namespace hpcserve
