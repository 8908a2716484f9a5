#pragma once

// Discrete-event job scheduler over a virtual integer-millisecond clock.
// FIFO with an optional size penalty; first fit over nodes in node_id order;
// skip-if-unfit (a stuck head job does not block smaller jobs behind it).
//
// Determinism contract: same submission/command sequence, same transition
// log. Events at equal timestamps apply in kind order SUBMIT < JOB_END <
// NODE_FAIL < NODE_RECOVER < CANCEL, then insertion order; one scheduling
// pass runs per timestamp after its events apply.

#include <cstdint>
#include <optional>
#include <queue>
#include <string>
#include <vector>

#include "hpcserve/cluster.hpp"
#include "hpcserve/errors.hpp"
#include "hpcserve/slurm_script.hpp"

namespace hpcserve {

enum class JobState { Pending, Running, Completed, Failed, Cancelled };

inline const char* to_string(JobState s) {
    switch (s) {
        case JobState::Pending: return "PENDING";
        case JobState::Running: return "RUNNING";
        case JobState::Completed: return "COMPLETED";
        case JobState::Failed: return "FAILED";
        case JobState::Cancelled: return "CANCELLED";
    }
    return "?";
}

inline bool is_terminal(JobState s) {
    return s == JobState::Completed || s == JobState::Failed || s == JobState::Cancelled;
}

struct Job {
    std::string job_id;
    SlurmScript script;
    ResourceRequest request;
    JobState state = JobState::Pending;
    std::int64_t submit_time_ms = 0;
    std::optional<std::int64_t> start_time_ms;  // last start when requeued
    std::optional<std::int64_t> end_time_ms;
    double priority = 0.0;  // as of the last scheduling pass
    std::optional<Allocation> allocation;
    int requeue_count = 0;
};

struct Transition {
    std::int64_t time_ms = 0;
    std::string job_id;
    JobState from = JobState::Pending;
    JobState to = JobState::Pending;

    bool operator==(const Transition&) const = default;
};

inline std::string format_transition(const Transition& t) {
    return std::to_string(t.time_ms) + " " + t.job_id + " " + to_string(t.from) + "->" +
           to_string(t.to);
}

struct SchedulerConfig {
    // priority = queue_wait_ms - lambda * gpu_count * walltime_minutes.
    // 0 = plain FIFO; > 0 lets small jobs overtake big ones.
    double lambda = 0.0;
};

class Scheduler {
  public:
    explicit Scheduler(Cluster cluster, SchedulerConfig cfg = {})
        : cluster_(std::move(cluster)), cfg_(cfg) {}

    std::int64_t now() const { return now_; }
    const Cluster& cluster() const { return cluster_; }
    const std::vector<Transition>& log() const { return log_; }

    // Job ids are "1", "2", ... in submission order. The job becomes eligible
    // for placement at the next advance() that reaches the current time.
    std::string submit(const SlurmScript& script, std::int64_t duration_ms) {
        if (duration_ms < 1) throw validation_error("duration_ms must be >= 1");
        ResourceRequest req = request_of(script);
        validate_request(req);
        Rec rec;
        rec.job.job_id = std::to_string(jobs_.size() + 1);
        rec.job.script = script;
        rec.job.request = req;
        rec.job.submit_time_ms = now_;
        rec.duration_ms = duration_ms;
        rec.seq = next_seq_++;
        jobs_.push_back(std::move(rec));
        push_event(now_, EvKind::Submit, jobs_.size() - 1, 0);
        return jobs_.back().job.job_id;
    }

    std::string submit(const std::string& script_text, std::int64_t duration_ms) {
        return submit(parse_script(script_text), duration_ms);
    }

    // Applies at the current clock and reschedules freed capacity at once.
    void cancel(const std::string& job_id) {
        apply_cancel(index_of_job(job_id));
        schedule_pass();
    }

    // Cancellation as a simulation event (applies during advance()).
    void cancel_at(const std::string& job_id, std::int64_t at_ms) {
        std::size_t j = index_of_job(job_id);
        if (at_ms < now_) throw validation_error("cancel_at in the past");
        push_event(at_ms, EvKind::Cancel, j, jobs_[j].epoch);
    }

    // at_ms == now(): applies immediately, returns ids of requeued jobs.
    // at_ms > now(): recorded as a simulation event, returns empty.
    std::vector<std::string> fail_node(const std::string& node_id, std::int64_t at_ms) {
        std::size_t n = cluster_.index_of(node_id);
        if (at_ms < now_) throw validation_error("fail_node in the past");
        if (at_ms > now_) {
            push_event(at_ms, EvKind::NodeFail, n, 0);
            return {};
        }
        std::vector<std::string> affected = apply_node_fail(n);
        schedule_pass();
        return affected;
    }

    void recover_node(const std::string& node_id, std::int64_t at_ms) {
        std::size_t n = cluster_.index_of(node_id);
        if (at_ms < now_) throw validation_error("recover_node in the past");
        if (at_ms > now_) {
            push_event(at_ms, EvKind::NodeRecover, n, 0);
            return;
        }
        cluster_.set_up(node_id, true);
        schedule_pass();
    }

    // Runs the simulation up to and including until_ms. Returns the
    // transitions that happened during this call, in order.
    std::vector<Transition> advance(std::int64_t until_ms) {
        if (until_ms < now_) throw validation_error("advance into the past");
        std::size_t log_mark = log_.size();
        while (!events_.empty() && events_.top().time_ms <= until_ms) {
            std::int64_t t = events_.top().time_ms;
            now_ = t;
            while (!events_.empty() && events_.top().time_ms == t) {
                Ev ev = events_.top();
                events_.pop();
                apply_event(ev);
            }
            schedule_pass();
        }
        now_ = until_ms;
        return {log_.begin() + log_mark, log_.end()};
    }

    std::optional<std::int64_t> next_event_time() const {
        if (events_.empty()) return std::nullopt;
        return events_.top().time_ms;
    }

    Job query(const std::string& job_id) const { return jobs_[index_of_job(job_id)].job; }

    std::vector<Job> query_all() const {
        std::vector<Job> out;
        out.reserve(jobs_.size());
        for (const auto& r : jobs_) out.push_back(r.job);
        return out;
    }

    const NodeFree& free_state(const std::string& node_id) const {
        return cluster_.free_state(node_id);
    }

  private:
    enum class EvKind { Submit = 0, JobEnd = 1, NodeFail = 2, NodeRecover = 3, Cancel = 4 };

    struct Ev {
        std::int64_t time_ms;
        int rank;        // EvKind, tie level 2
        std::uint64_t seq;  // insertion order, tie level 3
        std::size_t index;  // job or node index
        int epoch;          // guards JOB_END/CANCEL against requeued jobs
    };
    struct EvLater {
        bool operator()(const Ev& a, const Ev& b) const {
            if (a.time_ms != b.time_ms) return a.time_ms > b.time_ms;
            if (a.rank != b.rank) return a.rank > b.rank;
            return a.seq > b.seq;
        }
    };

    struct Rec {
        Job job;
        std::int64_t duration_ms = 0;
        std::uint64_t seq = 0;
        int epoch = 0;  // bumped on requeue/cancel; stale events check it
    };

    std::size_t index_of_job(const std::string& job_id) const {
        if (job_id.empty()) throw not_found_error("no such job: (empty)");
        for (char c : job_id)
            if (!std::isdigit((unsigned char)c)) throw not_found_error("no such job: " + job_id);
        unsigned long long n = 0;
        try {
            n = std::stoull(job_id);
        } catch (const std::exception&) {
            throw not_found_error("no such job: " + job_id);
        }
        if (n < 1 || n > jobs_.size()) throw not_found_error("no such job: " + job_id);
        return (std::size_t)(n - 1);
    }

    void push_event(std::int64_t t, EvKind k, std::size_t index, int epoch) {
        events_.push(Ev{t, (int)k, next_seq_++, index, epoch});
    }

    void log_transition(const std::string& id, JobState from, JobState to) {
        log_.push_back(Transition{now_, id, from, to});
    }

    void apply_event(const Ev& ev) {
        switch ((EvKind)ev.rank) {
            case EvKind::Submit:
                break;  // placement handled by the pass at this timestamp
            case EvKind::JobEnd: {
                Rec& r = jobs_[ev.index];
                if (r.epoch != ev.epoch || r.job.state != JobState::Running) break;  // stale
                cluster_.release_allocation(*r.job.allocation);
                r.job.allocation.reset();
                r.job.end_time_ms = now_;
                JobState to = r.duration_ms > walltime_ms(r) ? JobState::Failed
                                                             : JobState::Completed;
                log_transition(r.job.job_id, JobState::Running, to);
                r.job.state = to;
                break;
            }
            case EvKind::NodeFail:
                apply_node_fail(ev.index);
                break;
            case EvKind::NodeRecover:
                cluster_.set_up(cluster_.specs()[ev.index].node_id, true);
                break;
            case EvKind::Cancel:
                // no epoch guard: a cancel targets the job, not one placement
                apply_cancel(ev.index);
                break;
        }
    }

    static std::int64_t walltime_ms(const Rec& r) {
        return (std::int64_t)r.job.request.walltime_minutes * 60'000;
    }

    std::vector<std::string> apply_node_fail(std::size_t node_index) {
        const std::string& node_id = cluster_.specs()[node_index].node_id;
        cluster_.set_up(node_id, false);
        std::vector<std::string> affected;
        for (auto& r : jobs_) {
            if (r.job.state != JobState::Running || r.job.allocation->node_id != node_id)
                continue;
            cluster_.release_allocation(*r.job.allocation);
            r.job.allocation.reset();
            r.job.state = JobState::Pending;
            ++r.job.requeue_count;
            ++r.epoch;  // invalidates the in-flight JOB_END
            log_transition(r.job.job_id, JobState::Running, JobState::Pending);
            affected.push_back(r.job.job_id);
        }
        return affected;
    }

    void apply_cancel(std::size_t j) {
        Rec& r = jobs_[j];
        if (is_terminal(r.job.state)) return;
        JobState from = r.job.state;
        if (r.job.state == JobState::Running) {
            cluster_.release_allocation(*r.job.allocation);
            r.job.allocation.reset();
        }
        ++r.epoch;
        r.job.state = JobState::Cancelled;
        r.job.end_time_ms = now_;
        log_transition(r.job.job_id, from, JobState::Cancelled);
    }

    // One first-fit sweep at the current clock. Queue order: priority
    // descending, then submission order. With lambda == 0 priorities tie
    // (equal wait grows equally), so order is pure FIFO.
    void schedule_pass() {
        std::vector<std::size_t> pending;
        for (std::size_t j = 0; j < jobs_.size(); ++j) {
            Rec& r = jobs_[j];
            if (r.job.state != JobState::Pending) continue;
            r.job.priority = (double)(now_ - r.job.submit_time_ms) -
                             cfg_.lambda * r.job.request.gpu_count *
                                 (double)r.job.request.walltime_minutes;
            pending.push_back(j);
        }
        std::stable_sort(pending.begin(), pending.end(), [&](std::size_t a, std::size_t b) {
            if (jobs_[a].job.priority != jobs_[b].job.priority)
                return jobs_[a].job.priority > jobs_[b].job.priority;
            return jobs_[a].seq < jobs_[b].seq;
        });
        for (std::size_t j : pending) {
            Rec& r = jobs_[j];
            auto alloc = cluster_.try_allocate(r.job.request, r.job.job_id);
            if (!alloc) continue;  // unfit now; smaller jobs behind may still fit
            r.job.allocation = std::move(*alloc);
            r.job.start_time_ms = now_;
            r.job.state = JobState::Running;
            log_transition(r.job.job_id, JobState::Pending, JobState::Running);
            std::int64_t run_ms = std::min(r.duration_ms, walltime_ms(r));
            push_event(now_ + run_ms, EvKind::JobEnd, j, r.epoch);
        }
    }

    Cluster cluster_;
    SchedulerConfig cfg_;
    std::vector<Rec> jobs_;
    std::priority_queue<Ev, std::vector<Ev>, EvLater> events_;
    std::vector<Transition> log_;
    std::int64_t now_ = 0;
    std::uint64_t next_seq_ = 0;
};

}  // namespace hpcserve
