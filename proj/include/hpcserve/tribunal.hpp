#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hpcserve/errors.hpp"
#include "hpcserve/gateway.hpp"
#include "hpcserve/perf_model.hpp"

namespace hpcserve {

// ── laws ───────────────────────────────────────────────────────────────────
//
// A law is a named quality rule. Its instruction text is prepended to the
// generation prompt as guidance; its optional predicate is what the verdict
// is actually decided on. Laws without a predicate always pass mechanically.

enum class PredicateKind { None, MaxLen, Require, Forbid };

struct LawPredicate {
    PredicateKind kind = PredicateKind::None;
    int max_tokens = 0;       // MaxLen
    std::string needle;       // Require / Forbid
};

struct Law {
    std::string name;
    LawPredicate predicate;
    std::string instruction;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

}  // namespace detail

inline LawPredicate parse_law_predicate(const std::string& text) {
    if (text.empty()) return {};
    std::size_t colon = text.find(':');
    if (colon == std::string::npos)
        throw validation_error("predicate must be maxlen:<n>, require:<s>, or forbid:<s>: " + text);
    std::string kind = text.substr(0, colon);
    std::string arg = text.substr(colon + 1);
    if (kind == "maxlen") {
        if (arg.empty() || arg.find_first_not_of("0123456789") != std::string::npos)
            throw validation_error("maxlen wants a positive integer, got: " + arg);
        int n = 0;
        try {
            n = std::stoi(arg);
        } catch (const std::exception&) {
            throw validation_error("maxlen out of range: " + arg);
        }
        if (n < 1) throw validation_error("maxlen must be >= 1, got: " + arg);
        return {PredicateKind::MaxLen, n, ""};
    }
    if (arg.empty()) throw validation_error(kind + " wants a non-empty argument");
    if (kind == "require") return {PredicateKind::Require, 0, arg};
    if (kind == "forbid") return {PredicateKind::Forbid, 0, arg};
    throw validation_error("unknown predicate kind: " + kind);
}

// One law per line: `name | predicate? | instruction`. The middle field may
// be omitted or left empty. '#' starts a comment.
inline std::vector<Law> parse_laws(const std::string& text) {
    std::vector<Law> laws;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            std::size_t bar = t.find('|', pos);
            if (bar == std::string::npos) {
                fields.push_back(detail::trim(t.substr(pos)));
                break;
            }
            fields.push_back(detail::trim(t.substr(pos, bar - pos)));
            pos = bar + 1;
        }
        if (fields.size() < 2 || fields.size() > 3)
            throw parse_error("law wants `name | predicate? | instruction`", lineno);
        Law law;
        law.name = fields[0];
        if (law.name.empty()) throw parse_error("law name is empty", lineno);
        try {
            law.predicate = fields.size() == 3 ? parse_law_predicate(fields[1]) : LawPredicate{};
        } catch (const validation_error& e) {
            throw parse_error(e.what(), lineno);
        }
        law.instruction = fields.back();
        if (law.instruction.empty()) throw parse_error("law instruction is empty", lineno);
        for (const Law& seen : laws)
            if (seen.name == law.name) throw parse_error("duplicate law name: " + law.name, lineno);
        laws.push_back(std::move(law));
    }
    return laws;
}

// Findings are deterministic one-liners so critiques are reproducible.
inline std::optional<std::string> check_law(const std::string& text, const Law& law) {
    switch (law.predicate.kind) {
        case PredicateKind::None:
            return std::nullopt;
        case PredicateKind::MaxLen: {
            int got = count_tokens(text);
            if (got <= law.predicate.max_tokens) return std::nullopt;
            return law.name + ": exceeds " + std::to_string(law.predicate.max_tokens) +
                   " tokens (got " + std::to_string(got) + ")";
        }
        case PredicateKind::Require:
            if (text.find(law.predicate.needle) != std::string::npos) return std::nullopt;
            return law.name + ": missing required \"" + law.predicate.needle + "\"";
        case PredicateKind::Forbid:
            if (text.find(law.predicate.needle) == std::string::npos) return std::nullopt;
            return law.name + ": contains forbidden \"" + law.predicate.needle + "\"";
    }
    return std::nullopt;
}

inline std::vector<std::string> check_laws(const std::string& text, const std::vector<Law>& laws) {
    std::vector<std::string> findings;
    for (const Law& law : laws) {
        auto f = check_law(text, law);
        if (f) findings.push_back(std::move(*f));
    }
    return findings;
}

// ── backends ───────────────────────────────────────────────────────────────
//
// A backend is bound to one model. `calls` counts prompts processed; a batch
// of N counts as N. The default batch runs sequentially; the gateway backend
// overrides it to fan out in virtual time.

class TextBackend {
  public:
    virtual ~TextBackend() = default;

    virtual std::string generate(const std::string& prompt, int max_new_tokens) = 0;

    virtual std::vector<std::string> generate_batch(const std::vector<std::string>& prompts,
                                                    int max_new_tokens) {
        std::vector<std::string> out;
        out.reserve(prompts.size());
        for (const std::string& p : prompts) out.push_back(generate(p, max_new_tokens));
        return out;
    }

    int calls() const { return calls_; }

  protected:
    int calls_ = 0;
};

// Zero-latency deterministic backend for tests and offline runs.
class MockBackend : public TextBackend {
  public:
    std::string generate(const std::string& prompt, int max_new_tokens) override {
        ++calls_;
        return mock_translate(prompt, max_new_tokens);
    }
};

class GatewayBackend : public TextBackend {
  public:
    GatewayBackend(Orchestrator& orchestrator, std::string model)
        : orchestrator_(orchestrator), model_(std::move(model)) {}

    std::string generate(const std::string& prompt, int max_new_tokens) override {
        ++calls_;
        return orchestrator_.infer(model_, prompt, max_new_tokens).text;
    }

    std::vector<std::string> generate_batch(const std::vector<std::string>& prompts,
                                            int max_new_tokens) override {
        calls_ += (int)prompts.size();
        std::vector<std::string> out;
        out.reserve(prompts.size());
        for (auto& r : orchestrator_.batch_infer(model_, prompts, max_new_tokens))
            out.push_back(std::move(r.text));
        return out;
    }

  private:
    Orchestrator& orchestrator_;
    std::string model_;
};

// ── tribunal ───────────────────────────────────────────────────────────────

enum class Verdict { Accepted, Rejected };

inline std::string to_string(Verdict v) {
    return v == Verdict::Accepted ? "ACCEPTED" : "REJECTED";
}

struct TribunalCall {
    std::string stage;  // generate | critique | revise
    std::string prompt;
    std::string reply;
};

struct TribunalResult {
    std::string draft;
    std::string critique;  // mechanical findings, "; "-joined; empty when clean
    std::string revision;
    Verdict verdict = Verdict::Rejected;
    int steps_run = 0;
    bool bypassed = false;
    std::string failed_stage;  // empty when the full sequence ran
    std::vector<TribunalCall> log;
};

inline constexpr int default_max_new_tokens = 1024;
inline constexpr double default_bypass_threshold = 0.8;

namespace detail {

inline std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

inline std::string law_guidance(const std::vector<Law>& laws) {
    std::vector<std::string> ins;
    ins.reserve(laws.size());
    for (const Law& l : laws) ins.push_back(l.instruction);
    return join(ins, " ");
}

// The revision must be able to satisfy every MaxLen law, so its token
// budget is the tightest one.
inline int revise_budget(const std::vector<Law>& laws, int max_new_tokens) {
    int budget = max_new_tokens;
    for (const Law& l : laws)
        if (l.predicate.kind == PredicateKind::MaxLen)
            budget = std::min(budget, l.predicate.max_tokens);
    return budget;
}

}  // namespace detail

// Three sequential stages: generate a draft, critique it against the laws,
// revise from draft plus critique. The verdict is decided mechanically on the
// revision. A backend failure mid-sequence yields the completed prefix with
// the failed stage named. With bypass the whole ritual collapses to a single
// generate call and the draft ships as-is.
inline TribunalResult run_tribunal(const std::string& prompt, const std::vector<Law>& laws,
                                   TextBackend& backend, bool bypass = false,
                                   int max_new_tokens = default_max_new_tokens) {
    if (max_new_tokens < 1) throw validation_error("max_new_tokens must be >= 1");
    TribunalResult r;
    r.bypassed = bypass;

    std::string guidance = detail::law_guidance(laws);
    std::string generate_prompt = guidance.empty() ? prompt : guidance + " " + prompt;
    try {
        r.draft = backend.generate(generate_prompt, max_new_tokens);
    } catch (const error&) {
        r.failed_stage = "generate";
        return r;
    }
    r.steps_run = 1;
    r.log.push_back({"generate", generate_prompt, r.draft});
    if (bypass) {
        r.verdict = Verdict::Accepted;
        return r;
    }

    // The backend supplies the debate turn; the predicate checker supplies
    // the findings the verdict is made of.
    std::string critique_prompt = guidance.empty() ? r.draft : guidance + " " + r.draft;
    std::string debate;
    try {
        debate = backend.generate(critique_prompt, max_new_tokens);
    } catch (const error&) {
        r.failed_stage = "critique";
        return r;
    }
    r.steps_run = 2;
    r.log.push_back({"critique", critique_prompt, debate});
    r.critique = detail::join(check_laws(r.draft, laws), "; ");

    std::string revise_prompt = r.critique.empty() ? r.draft : r.draft + " " + r.critique;
    try {
        r.revision = backend.generate(revise_prompt, detail::revise_budget(laws, max_new_tokens));
    } catch (const error&) {
        r.failed_stage = "revise";
        return r;
    }
    r.steps_run = 3;
    r.log.push_back({"revise", revise_prompt, r.revision});

    r.verdict = check_laws(r.revision, laws).empty() ? Verdict::Accepted : Verdict::Rejected;
    return r;
}

// ── chunked summarization ──────────────────────────────────────────────────

struct ChunkPlan {
    int n_chunks = 0;
    std::vector<int> boundaries;      // starting token offset of each chunk
    std::vector<std::string> chunks;  // byte-exact partition of the input
    std::vector<std::string> summaries;
    bool clamped = false;  // n_chunks was larger than the token count
};

// Splits at whitespace boundaries so the chunks concatenate back to the
// input byte for byte. Token counts differ by at most one, longer chunks
// first.
inline ChunkPlan plan_chunks(const std::string& input, int n_chunks) {
    if (n_chunks < 1) throw validation_error("n_chunks must be >= 1");
    if (input.empty()) throw validation_error("input is empty");

    // byte offset where each token starts
    std::vector<std::size_t> starts;
    bool in_token = false;
    for (std::size_t i = 0; i < input.size(); ++i) {
        bool ws = input[i] == ' ' || input[i] == '\t' || input[i] == '\n' || input[i] == '\r';
        if (!ws && !in_token) starts.push_back(i);
        in_token = !ws;
    }
    int total = (int)starts.size();
    if (total == 0) throw validation_error("input has no tokens");

    ChunkPlan plan;
    plan.clamped = n_chunks > total;
    plan.n_chunks = std::min(n_chunks, total);

    int base = total / plan.n_chunks;
    int extra = total % plan.n_chunks;  // first `extra` chunks take one more
    int token = 0;
    std::size_t byte = 0;
    for (int c = 0; c < plan.n_chunks; ++c) {
        plan.boundaries.push_back(token);
        token += base + (c < extra ? 1 : 0);
        std::size_t end = token < total ? starts[(std::size_t)token] : input.size();
        plan.chunks.push_back(input.substr(byte, end - byte));
        byte = end;
    }
    return plan;
}

inline std::string concat_summaries(const ChunkPlan& plan) {
    return detail::join(plan.summaries, " ");
}

// Summaries come back in chunk order regardless of how the backend
// interleaves them; concat_summaries(plan) is what goes to run_tribunal.
inline ChunkPlan chunk_and_summarize(const std::string& input, int n_chunks, TextBackend& backend,
                                     int max_new_tokens = default_max_new_tokens) {
    ChunkPlan plan = plan_chunks(input, n_chunks);
    plan.summaries = backend.generate_batch(plan.chunks, max_new_tokens);
    return plan;
}

// Default chunk count: smallest N so no chunk exceeds the per-request token
// budget.
inline int default_chunk_count(const std::string& input, int tokens_per_request) {
    if (tokens_per_request < 1) throw validation_error("tokens_per_request must be >= 1");
    int total = count_tokens(input);
    return std::max(1, (total + tokens_per_request - 1) / tokens_per_request);
}

// ── load-based bypass ──────────────────────────────────────────────────────

// True when the model's in-flight load has reached `threshold` of its
// saturation capacity (S per READY endpoint). Zero capacity never bypasses:
// a system that serves nothing is idle, not saturated.
inline bool should_bypass(const GatewayStatus& status, const ModelProfile& profile,
                          double threshold = default_bypass_threshold) {
    if (!(threshold > 0.0) || threshold > 1.0)
        throw validation_error("threshold must be in (0, 1]");
    if (!profile.has_perf()) return false;
    auto it = status.models.find(profile.name);
    if (it == status.models.end()) return false;
    double capacity =
        (double)profile.perf->saturation_concurrency * (double)it->second.ready_endpoints;
    if (capacity <= 0.0) return false;
    return (double)it->second.in_flight >= threshold * capacity;
}

}  // namespace hpcserve
