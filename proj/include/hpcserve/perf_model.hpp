#pragma once

// Calibrated latency/throughput law and the deterministic mock engine.
//
// Latency model per model profile (S = saturation concurrency, L1 = init
// latency, Ls = saturation latency):
//   c == S   ->  Ls                                  (calibration anchor)
//   c <  S   ->  L1 + (Ls - L1) * (0.85 + 0.15 c/S)  (shallow ramp)
//   c >  S   ->  Ls/c * sum_{i=1..c} ceil(i/S)       (FIFO waves of width S)
// Throughput is c*T*1000/L(c) tokens/s, capped at the engine ceiling
// S*T*1000/Ls. T is tokens per request.

#include <atomic>
#include <cstdint>
#include <map>
#include <queue>
#include <string>
#include <vector>

#include "hpcserve/cluster.hpp"
#include "hpcserve/errors.hpp"

namespace hpcserve {

inline double service_latency(const PerfConstants& pc, int concurrency) {
    if (concurrency < 1) throw validation_error("concurrency must be >= 1");
    const int S = pc.saturation_concurrency;
    const double Ls = pc.saturation_latency_ms;
    if (concurrency == S) return Ls;
    if (concurrency < S)
        return pc.init_latency_ms +
               (Ls - pc.init_latency_ms) * (0.85 + 0.15 * (double)concurrency / (double)S);
    double waves = 0.0;
    for (int i = 1; i <= concurrency; ++i) waves += (double)((i + S - 1) / S);
    return Ls * waves / (double)concurrency;
}

inline const PerfConstants& perf_of(const ModelProfile& p) {
    if (!p.perf)
        throw unsupported_error("model " + p.name + " has no calibrated performance constants");
    return *p.perf;
}

inline double service_latency(const ModelProfile& p, int concurrency) {
    return service_latency(perf_of(p), concurrency);
}

inline double throughput_ceiling_tps(const ModelProfile& p) {
    const PerfConstants& pc = perf_of(p);
    return (double)pc.saturation_concurrency * (double)p.tokens_per_request * 1000.0 /
           pc.saturation_latency_ms;
}

inline double throughput_tps(const ModelProfile& p, int concurrency) {
    double raw = (double)concurrency * (double)p.tokens_per_request * 1000.0 /
                 service_latency(p, concurrency);
    return std::min(raw, throughput_ceiling_tps(p));
}

// ── mock engine text transform ──────────────────────────────────────────────
//
// Per whitespace token: reverse bytes and flip ASCII case. Applying it twice
// gives back the original tokens, so request/response pairs can be matched
// exactly in tests.

inline std::vector<std::string> whitespace_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (char c : text) {
        if (std::isspace((unsigned char)c)) {
            if (!cur.empty()) tokens.push_back(std::move(cur)), cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

inline int count_tokens(const std::string& text) { return (int)whitespace_tokens(text).size(); }

inline std::string flip_case(char c) {
    unsigned char u = (unsigned char)c;
    if (std::isupper(u)) return std::string(1, (char)std::tolower(u));
    if (std::islower(u)) return std::string(1, (char)std::toupper(u));
    return std::string(1, c);
}

inline std::string mock_translate(const std::string& prompt, int max_new_tokens) {
    if (max_new_tokens < 1) throw validation_error("max_new_tokens must be >= 1");
    std::vector<std::string> tokens = whitespace_tokens(prompt);
    std::size_t n = std::min(tokens.size(), (std::size_t)max_new_tokens);
    std::string out;
    for (std::size_t t = 0; t < n; ++t) {
        if (t) out += ' ';
        const std::string& tok = tokens[t];
        for (auto it = tok.rbegin(); it != tok.rend(); ++it) out += flip_case(*it);
    }
    return out;
}

// ── inference plumbing ──────────────────────────────────────────────────────

struct InferenceRequest {
    std::string request_id;
    std::string model;
    std::string prompt;
    int max_new_tokens = 1024;
};

struct InferenceResponse {
    std::string request_id;
    std::string text;
    int generated_tokens = 0;
    double latency_ms = 0.0;
    double queued_ms = 0.0;
};

// One stress-test request: arrival is always t=0, start is when a slot freed.
struct StressSample {
    int request_index = 0;
    double start_ms = 0.0;
    double end_ms = 0.0;
};

inline double mean_latency_ms(const std::vector<StressSample>& samples) {
    if (samples.empty()) throw validation_error("no samples");
    double sum = 0.0;
    for (const auto& s : samples) sum += s.end_ms;  // arrival at 0
    return sum / (double)samples.size();
}

// Direct-call engine backend: serves the catalog, tracks live concurrency,
// answers with the mock transform at the model's calibrated latency.
class PerfBackend {
  public:
    explicit PerfBackend(std::vector<ModelProfile> profiles = builtin_profiles()) {
        for (auto& p : profiles) {
            if (profiles_.count(p.name)) throw duplicate_error("duplicate profile " + p.name);
            in_flight_[p.name] = 0;
            profiles_.emplace(p.name, std::move(p));
        }
    }

    const ModelProfile& profile(const std::string& model) const {
        auto it = profiles_.find(resolve(model));
        if (it == profiles_.end()) throw not_found_error("unknown model: " + model);
        return it->second;
    }

    double latency(const std::string& model, int concurrency) const {
        return service_latency(profile(model), concurrency);
    }

    double throughput(const std::string& model, int concurrency) const {
        return throughput_tps(profile(model), concurrency);
    }

    int in_flight(const std::string& model) const {
        return in_flight_.at(profile(model).name).load();
    }

    // Latency reflects the concurrency this call observes (itself included).
    InferenceResponse generate(const InferenceRequest& req) {
        const ModelProfile& p = profile(req.model);
        if (req.max_new_tokens < 1) throw validation_error("max_new_tokens must be >= 1");
        int prompt_tokens = count_tokens(req.prompt);
        if (prompt_tokens == 0) throw validation_error("prompt must contain at least one token");
        std::atomic<int>& counter = in_flight_.at(p.name);
        int observed = counter.fetch_add(1) + 1;
        InferenceResponse resp;
        resp.request_id = req.request_id;
        resp.text = mock_translate(req.prompt, req.max_new_tokens);
        resp.generated_tokens = std::min(prompt_tokens, req.max_new_tokens);
        resp.latency_ms = service_latency(p, observed);
        resp.queued_ms = 0.0;
        counter.fetch_sub(1);
        return resp;
    }

    // Closed-load stress bench: concurrency*jobs_per_user requests hit the
    // engine at t=0 and drain through S parallel slots FIFO. Independent of
    // the closed-form law above except for the per-request duration.
    std::vector<StressSample> simulate_stress(const std::string& model, int concurrency,
                                              int jobs_per_user) const {
        if (concurrency < 1) throw validation_error("concurrency must be >= 1");
        if (jobs_per_user < 1) throw validation_error("jobs_per_user must be >= 1");
        const ModelProfile& p = profile(model);
        const PerfConstants& pc = perf_of(p);
        const int total = concurrency * jobs_per_user;
        const int S = pc.saturation_concurrency;
        const double duration =
            total <= S ? service_latency(pc, total) : pc.saturation_latency_ms;

        std::priority_queue<double, std::vector<double>, std::greater<>> slots;
        std::vector<StressSample> samples;
        samples.reserve(total);
        for (int i = 0; i < total; ++i) {
            double start = 0.0;
            if ((int)slots.size() < S) {
                start = 0.0;  // free slot at arrival
            } else {
                start = slots.top();
                slots.pop();
            }
            double end = start + duration;
            slots.push(end);
            samples.push_back({i, start, end});
        }
        return samples;
    }

  private:
    static std::string resolve(const std::string& model) {
        if (model == "1b") return "llama3.2-1b";
        if (model == "3b") return "llama3.2-3b";
        if (model == "8b") return "llama3.1-8b";
        if (model == "70b") return "llama3.1-70b";
        return model;
    }

    std::map<std::string, ModelProfile> profiles_;
    mutable std::map<std::string, std::atomic<int>> in_flight_;
};

}  // namespace hpcserve
