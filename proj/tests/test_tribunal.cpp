#include <gtest/gtest.h>

#include <random>

#include "hpcserve/tribunal.hpp"

using namespace hpcserve;

namespace {

// ── law parsing ────────────────────────────────────────────────────────────

TEST(Laws, ParsesAllForms) {
    std::string text =
        "# quality rules\n"
        "tone | Use informal language.\n"
        "brevity | maxlen:40 | Keep answers short.\n"
        "cite | require:[1] | Cite at least one source.\n"
        "polite |forbid:stupid| Stay polite.\n";
    auto laws = parse_laws(text);
    ASSERT_EQ(laws.size(), 4u);
    EXPECT_EQ(laws[0].name, "tone");
    EXPECT_EQ(laws[0].predicate.kind, PredicateKind::None);
    EXPECT_EQ(laws[0].instruction, "Use informal language.");
    EXPECT_EQ(laws[1].predicate.kind, PredicateKind::MaxLen);
    EXPECT_EQ(laws[1].predicate.max_tokens, 40);
    EXPECT_EQ(laws[2].predicate.kind, PredicateKind::Require);
    EXPECT_EQ(laws[2].predicate.needle, "[1]");
    EXPECT_EQ(laws[3].predicate.kind, PredicateKind::Forbid);
    EXPECT_EQ(laws[3].predicate.needle, "stupid");
}

TEST(Laws, EmptyPredicateFieldIsAllowed) {
    auto laws = parse_laws("tone | | Use informal language.\n");
    ASSERT_EQ(laws.size(), 1u);
    EXPECT_EQ(laws[0].predicate.kind, PredicateKind::None);
}

TEST(Laws, RejectsMalformedLines) {
    EXPECT_THROW(parse_laws("just-a-name\n"), parse_error);
    EXPECT_THROW(parse_laws("a | b | c | d\n"), parse_error);
    EXPECT_THROW(parse_laws(" | maxlen:4 | no name\n"), parse_error);
    EXPECT_THROW(parse_laws("x | maxlen:4 | \n"), parse_error);
    EXPECT_THROW(parse_laws("x | maxlen:zero | inst\n"), parse_error);
    EXPECT_THROW(parse_laws("x | maxlen:0 | inst\n"), parse_error);
    EXPECT_THROW(parse_laws("x | shorter:4 | inst\n"), parse_error);
    EXPECT_THROW(parse_laws("x | require: | inst\n"), parse_error);
    EXPECT_THROW(parse_laws("a | one\na | two\n"), parse_error);
    try {
        parse_laws("ok | fine\nbad | oops:1 | inst\n");
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(Laws, CheckerFindingsAreExact) {
    std::vector<Law> laws = parse_laws(
        "brevity | maxlen:5 | Short.\n"
        "cite | require:[1] | Cite.\n"
        "polite | forbid:dumb | Polite.\n");
    auto findings = check_laws("this answer is way too dumb and long", laws);
    ASSERT_EQ(findings.size(), 3u);
    EXPECT_EQ(findings[0], "brevity: exceeds 5 tokens (got 8)");
    EXPECT_EQ(findings[1], "cite: missing required \"[1]\"");
    EXPECT_EQ(findings[2], "polite: contains forbidden \"dumb\"");
    EXPECT_TRUE(check_laws("fine [1] answer", laws).empty());
}

// ── tribunal runs ──────────────────────────────────────────────────────────

TEST(Tribunal, EmptyLawSetAcceptsAndStillRunsThreeSteps) {
    MockBackend backend;
    TribunalResult r = run_tribunal("Hello World", {}, backend);
    EXPECT_EQ(r.steps_run, 3);
    EXPECT_EQ(backend.calls(), 3);
    EXPECT_EQ(r.verdict, Verdict::Accepted);
    EXPECT_EQ(r.draft, "OLLEh DLROw");
    EXPECT_TRUE(r.critique.empty());
    EXPECT_EQ(r.revision, "Hello World");  // mock round-trips the clean draft
    EXPECT_FALSE(r.bypassed);
    EXPECT_TRUE(r.failed_stage.empty());
    ASSERT_EQ(r.log.size(), 3u);
    EXPECT_EQ(r.log[0].stage, "generate");
    EXPECT_EQ(r.log[1].stage, "critique");
    EXPECT_EQ(r.log[2].stage, "revise");
}

TEST(Tribunal, MaxLenLawTruncatesRevisionAndAccepts) {
    MockBackend backend;
    auto laws = parse_laws("brevity | maxlen:4 | Keep it short.\n");
    TribunalResult r =
        run_tribunal("one two three four five six seven eight", laws, backend);
    // guidance (3 tokens) + prompt (8) = 11-token draft
    EXPECT_EQ(count_tokens(r.draft), 11);
    EXPECT_EQ(r.critique, "brevity: exceeds 4 tokens (got 11)");
    EXPECT_EQ(count_tokens(r.revision), 4);
    EXPECT_EQ(r.verdict, Verdict::Accepted);
    EXPECT_EQ(r.steps_run, 3);
}

TEST(Tribunal, UnsatisfiedRequireRejects) {
    MockBackend backend;
    auto laws = parse_laws("cite | require:[1] | Cite sources.\n");
    TribunalResult r = run_tribunal("just some plain words", laws, backend);
    EXPECT_EQ(r.verdict, Verdict::Rejected);
    EXPECT_EQ(r.critique, "cite: missing required \"[1]\"");
    EXPECT_EQ(r.steps_run, 3);
}

TEST(Tribunal, BypassIsSingleCallWithEmptyStages) {
    MockBackend backend;
    auto laws = parse_laws("brevity | maxlen:4 | Keep it short.\n");
    TribunalResult r = run_tribunal("one two three four five", laws, backend, /*bypass=*/true);
    EXPECT_EQ(backend.calls(), 1);
    EXPECT_EQ(r.steps_run, 1);
    EXPECT_TRUE(r.bypassed);
    EXPECT_TRUE(r.critique.empty());
    EXPECT_TRUE(r.revision.empty());
    EXPECT_FALSE(r.draft.empty());
    EXPECT_EQ(r.verdict, Verdict::Accepted);
    ASSERT_EQ(r.log.size(), 1u);
    EXPECT_EQ(r.log[0].stage, "generate");
}

TEST(Tribunal, DeterministicOnMockBackend) {
    auto laws = parse_laws("brevity | maxlen:6 | Short.\n");
    MockBackend a, b;
    TribunalResult ra = run_tribunal("same input every time", laws, a);
    TribunalResult rb = run_tribunal("same input every time", laws, b);
    EXPECT_EQ(ra.draft, rb.draft);
    EXPECT_EQ(ra.critique, rb.critique);
    EXPECT_EQ(ra.revision, rb.revision);
    EXPECT_EQ(ra.verdict, rb.verdict);
}

class FlakyBackend : public MockBackend {
  public:
    explicit FlakyBackend(int fail_after) : fail_after_(fail_after) {}
    std::string generate(const std::string& prompt, int max_new_tokens) override {
        if (calls() == fail_after_) throw unavailable_error("backend died");
        return MockBackend::generate(prompt, max_new_tokens);
    }

  private:
    int fail_after_;
};

TEST(Tribunal, BackendDeathYieldsPartialResultNamingTheStage) {
    {
        FlakyBackend backend(0);
        TribunalResult r = run_tribunal("hello there", {}, backend);
        EXPECT_EQ(r.failed_stage, "generate");
        EXPECT_EQ(r.steps_run, 0);
        EXPECT_TRUE(r.draft.empty());
        EXPECT_EQ(r.verdict, Verdict::Rejected);
    }
    {
        FlakyBackend backend(1);
        TribunalResult r = run_tribunal("hello there", {}, backend);
        EXPECT_EQ(r.failed_stage, "critique");
        EXPECT_EQ(r.steps_run, 1);
        EXPECT_EQ(r.draft, "OLLEH EREHT");
        EXPECT_TRUE(r.revision.empty());
    }
    {
        FlakyBackend backend(2);
        TribunalResult r = run_tribunal("hello there", {}, backend);
        EXPECT_EQ(r.failed_stage, "revise");
        EXPECT_EQ(r.steps_run, 2);
        EXPECT_FALSE(r.draft.empty());
        EXPECT_TRUE(r.revision.empty());
    }
}

// ── chunking ───────────────────────────────────────────────────────────────

TEST(Chunks, NearEqualSplitLongerChunksFirst) {
    std::string ten = "t1 t2 t3 t4 t5 t6 t7 t8 t9 t10";
    ChunkPlan even = plan_chunks(ten, 2);
    EXPECT_EQ(even.n_chunks, 2);
    EXPECT_EQ(even.boundaries, (std::vector<int>{0, 5}));

    ChunkPlan odd = plan_chunks(ten, 3);
    EXPECT_EQ(odd.boundaries, (std::vector<int>{0, 4, 7}));  // 4+3+3
    EXPECT_FALSE(odd.clamped);
}

TEST(Chunks, PartitionIsByteExact) {
    std::string messy = "  leading\twhitespace\n\nand   odd    gaps trailing too   ";
    int total = count_tokens(messy);
    for (int n = 1; n <= total; ++n) {
        ChunkPlan plan = plan_chunks(messy, n);
        std::string concat;
        for (const std::string& c : plan.chunks) concat += c;
        EXPECT_EQ(concat, messy) << "n=" << n;
    }
}

TEST(Chunks, RandomPartitionsKeepAllInvariants) {
    std::mt19937 rng(20240817);
    for (int iter = 0; iter < 200; ++iter) {
        int total = 1 + (int)(rng() % 40);
        std::string input;
        const char* seps[] = {" ", "  ", "\t", "\n", " \t "};
        if (rng() % 3 == 0) input += seps[rng() % 5];
        for (int t = 0; t < total; ++t) {
            if (t) input += seps[rng() % 5];
            input += "tok" + std::to_string(t);
        }
        if (rng() % 3 == 0) input += seps[rng() % 5];

        int n = 1 + (int)(rng() % 50);
        ChunkPlan plan = plan_chunks(input, n);
        EXPECT_EQ(plan.n_chunks, std::min(n, total));
        EXPECT_EQ(plan.clamped, n > total);

        std::string concat;
        int max_size = 0, min_size = total;
        for (int c = 0; c < plan.n_chunks; ++c) {
            concat += plan.chunks[(std::size_t)c];
            int next = c + 1 < plan.n_chunks ? plan.boundaries[(std::size_t)c + 1] : total;
            int size = next - plan.boundaries[(std::size_t)c];
            EXPECT_EQ(count_tokens(plan.chunks[(std::size_t)c]), size);
            max_size = std::max(max_size, size);
            min_size = std::min(min_size, size);
        }
        EXPECT_EQ(concat, input);
        EXPECT_LE(max_size - min_size, 1);
    }
}

TEST(Chunks, Validation) {
    EXPECT_THROW(plan_chunks("a b c", 0), validation_error);
    EXPECT_THROW(plan_chunks("", 2), validation_error);
    EXPECT_THROW(plan_chunks("   \t\n", 2), validation_error);
    ChunkPlan clamped = plan_chunks("a b c", 10);
    EXPECT_EQ(clamped.n_chunks, 3);
    EXPECT_TRUE(clamped.clamped);
}

TEST(Chunks, SummariesComeBackInChunkOrder) {
    MockBackend backend;
    std::string input = "alpha beta gamma delta epsilon zeta";
    ChunkPlan plan = chunk_and_summarize(input, 3, backend);
    EXPECT_EQ(backend.calls(), 3);
    ASSERT_EQ(plan.summaries.size(), 3u);
    for (int c = 0; c < 3; ++c)
        EXPECT_EQ(plan.summaries[(std::size_t)c],
                  mock_translate(plan.chunks[(std::size_t)c], 1024));
    // the mock is self-inverse, so the joined summaries round-trip the input
    EXPECT_EQ(mock_translate(concat_summaries(plan), 1024), input);
}

TEST(Chunks, DefaultCountCoversTokenBudget) {
    std::string ten = "t1 t2 t3 t4 t5 t6 t7 t8 t9 t10";
    EXPECT_EQ(default_chunk_count(ten, 4), 3);
    EXPECT_EQ(default_chunk_count(ten, 5), 2);
    EXPECT_EQ(default_chunk_count(ten, 1024), 1);
    EXPECT_THROW(default_chunk_count(ten, 0), validation_error);
}

TEST(Chunks, GatewayFanOutFinishesInOneWave) {
    Orchestrator o(default_cluster());
    o.spinup("llama3.2-1b", EngineKind::Mock, 3);
    GatewayBackend backend(o, "llama3.2-1b");
    std::int64_t t0 = o.now();
    ChunkPlan plan = chunk_and_summarize("a b c d e f g h i", 3, backend);
    EXPECT_EQ(o.now() - t0, 33);  // ceil of one request's 32.13 ms, not three
    EXPECT_EQ(backend.calls(), 3);
    EXPECT_EQ(mock_translate(concat_summaries(plan), 1024), "a b c d e f g h i");
}

// ── load-based bypass ──────────────────────────────────────────────────────

ModelProfile toy_profile(int saturation) {
    return {"toy", 1.0, {1, 1, 0, 0, 10}, PerfConstants{10.0, saturation, 20.0}, 1024};
}

GatewayStatus status_with(const std::string& model, int ready, int in_flight) {
    GatewayStatus st;
    st.models[model] = ModelStatus{ready, in_flight, 0};
    return st;
}

TEST(Bypass, TriggersAtThresholdFractionOfCapacity) {
    ModelProfile toy = toy_profile(2);
    // capacity = S * ready = 4; threshold 0.8 -> trip at 3.2
    EXPECT_FALSE(should_bypass(status_with("toy", 2, 3), toy, 0.8));
    EXPECT_TRUE(should_bypass(status_with("toy", 2, 4), toy, 0.8));
    // boundary is inclusive
    EXPECT_TRUE(should_bypass(status_with("toy", 1, 1), toy, 0.5));
    // fully saturated endpoints trip any threshold
    EXPECT_TRUE(should_bypass(status_with("toy", 3, 6), toy, 1.0));
}

TEST(Bypass, IdleOrUnservedSystemsNeverBypass) {
    ModelProfile toy = toy_profile(2);
    EXPECT_FALSE(should_bypass(GatewayStatus{}, toy, 0.8));
    EXPECT_FALSE(should_bypass(status_with("toy", 0, 50), toy, 0.8));  // nothing READY
    EXPECT_FALSE(should_bypass(status_with("other", 2, 50), toy, 0.8));
    // models without calibration can't measure saturation
    EXPECT_FALSE(should_bypass(status_with("falcon-40b", 2, 50), find_profile("falcon-40b"), 0.8));
}

TEST(Bypass, ThresholdMustBeAFraction) {
    ModelProfile toy = toy_profile(2);
    EXPECT_THROW(should_bypass(status_with("toy", 1, 1), toy, 0.0), validation_error);
    EXPECT_THROW(should_bypass(status_with("toy", 1, 1), toy, 1.2), validation_error);
}

TEST(Bypass, LiveGatewayLoadFlipsTheDecision) {
    Orchestrator o(default_cluster());
    o.spinup("llama3.2-1b", EngineKind::Mock, 1);  // S = 128, one endpoint
    ModelProfile p = find_profile("llama3.2-1b");
    for (int i = 0; i < 102; ++i) o.submit_infer("llama3.2-1b", "load");
    EXPECT_FALSE(should_bypass(o.status(), p, 0.8));  // 102 < 102.4
    o.submit_infer("llama3.2-1b", "tip over");
    EXPECT_TRUE(should_bypass(o.status(), p, 0.8));  // 103 >= 102.4
}

}  // namespace
