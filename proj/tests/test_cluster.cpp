#include <gtest/gtest.h>

#include "hpcserve/cluster.hpp"

using namespace hpcserve;

namespace {

NodeSpec a100_node() { return NodeSpec{"gpu01", 32, 256, {80, 80, 80, 80}}; }

// ── fits / allocate / release ──────────────────────────────────────────────

TEST(ClusterFits, SeventyBFitsOnFreeA100Node) {
    NodeSpec n = a100_node();
    NodeFree f = free_of(n);
    ResourceRequest req{16, 128, 2, 80, 360};
    EXPECT_TRUE(fits(n, f, req));
}

TEST(ClusterFits, VramFilterExcludesOccupiedSlots) {
    NodeSpec n = a100_node();
    NodeFree f = free_of(n);
    allocate(n, f, ResourceRequest{4, 8, 2, 80, 120}, "1");
    // two slots left, four 24 GB GPUs wanted
    EXPECT_FALSE(fits(n, f, ResourceRequest{4, 8, 4, 24, 120}));
    EXPECT_TRUE(fits(n, f, ResourceRequest{4, 8, 2, 24, 120}));
}

TEST(ClusterFits, CpuAndRamBoundsChecked) {
    NodeSpec n = a100_node();
    NodeFree f = free_of(n);
    EXPECT_FALSE(fits(n, f, ResourceRequest{33, 8, 0, 0, 120}));
    EXPECT_FALSE(fits(n, f, ResourceRequest{4, 257, 0, 0, 120}));
    EXPECT_TRUE(fits(n, f, ResourceRequest{32, 256, 4, 80, 120}));
}

TEST(ClusterAllocate, TakesLowestQualifyingSlots) {
    NodeSpec n{"n1", 16, 64, {24, 16, 80}};
    NodeFree f = free_of(n);
    Allocation a = allocate(n, f, ResourceRequest{2, 4, 1, 16, 60}, "7");
    EXPECT_EQ(a.gpu_indices, (std::vector<int>{0}));

    Allocation b = allocate(n, f, ResourceRequest{2, 4, 1, 24, 60}, "8");
    EXPECT_EQ(b.gpu_indices, (std::vector<int>{2}));  // slot 1 has too little vram

    EXPECT_EQ(f.cpu_cores, 12);
    EXPECT_EQ(f.ram_gb, 56);
    EXPECT_TRUE(f.gpu_free[1]);

    release(n, f, a);
    release(n, f, b);
    EXPECT_EQ(f.cpu_cores, 16);
    EXPECT_EQ(f.ram_gb, 64);
    EXPECT_TRUE(f.gpu_free[0] && f.gpu_free[1] && f.gpu_free[2]);
}

TEST(ClusterAllocate, ThrowsWhenUnfit) {
    NodeSpec n{"n1", 4, 8, {}};
    NodeFree f = free_of(n);
    EXPECT_THROW(allocate(n, f, ResourceRequest{2, 4, 1, 16, 60}, "1"), infeasible_error);
}

TEST(ClusterRelease, DoubleReleaseRejected) {
    NodeSpec n{"n1", 8, 16, {80}};
    NodeFree f = free_of(n);
    Allocation a = allocate(n, f, ResourceRequest{2, 4, 1, 16, 60}, "1");
    release(n, f, a);
    EXPECT_THROW(release(n, f, a), validation_error);
}

// ── Cluster state ──────────────────────────────────────────────────────────

TEST(Cluster, FirstFitWalksNodeIdOrder) {
    Cluster c({NodeSpec{"b01", 8, 32, {80}}, NodeSpec{"a01", 8, 32, {80}}});
    auto a = c.try_allocate(ResourceRequest{2, 4, 1, 16, 60}, "1");
    ASSERT_TRUE(a.has_value());
    EXPECT_EQ(a->node_id, "a01");
    auto b = c.try_allocate(ResourceRequest{2, 4, 1, 16, 60}, "2");
    ASSERT_TRUE(b.has_value());
    EXPECT_EQ(b->node_id, "b01");
    EXPECT_FALSE(c.try_allocate(ResourceRequest{2, 4, 1, 16, 60}, "3").has_value());
    c.release_allocation(*a);
    auto d = c.try_allocate(ResourceRequest{2, 4, 1, 16, 60}, "3");
    ASSERT_TRUE(d.has_value());
    EXPECT_EQ(d->node_id, "a01");
}

TEST(Cluster, DownNodesAreSkipped) {
    Cluster c({NodeSpec{"a01", 8, 32, {80}}, NodeSpec{"b01", 8, 32, {80}}});
    c.set_up("a01", false);
    auto a = c.try_allocate(ResourceRequest{2, 4, 1, 16, 60}, "1");
    ASSERT_TRUE(a.has_value());
    EXPECT_EQ(a->node_id, "b01");
}

TEST(Cluster, FeasibleEverIgnoresLoadAndAvailability) {
    Cluster c({NodeSpec{"a01", 8, 32, {80}}});
    ASSERT_TRUE(c.try_allocate(ResourceRequest{8, 32, 1, 80, 60}, "1").has_value());
    EXPECT_TRUE(c.feasible_ever(ResourceRequest{8, 32, 1, 80, 60}));  // busy but possible
    c.set_up("a01", false);
    EXPECT_TRUE(c.feasible_ever(ResourceRequest{8, 32, 1, 80, 60}));
    EXPECT_FALSE(c.feasible_ever(ResourceRequest{9, 32, 1, 80, 60}));
    EXPECT_FALSE(c.feasible_ever(ResourceRequest{2, 4, 2, 80, 60}));
}

TEST(Cluster, DuplicateNodeIdRejected) {
    EXPECT_THROW(Cluster({NodeSpec{"a01", 8, 32, {}}, NodeSpec{"a01", 4, 16, {}}}),
                 validation_error);
}

// ── config file ────────────────────────────────────────────────────────────

TEST(ClusterConfig, ParsesNodesCommentsAndGpuFreeNodes) {
    auto nodes = parse_cluster(
        "# desk rig\n"
        "gpu01 32 256 80,80,80,80\n"
        "\n"
        "cpu01 64 512   # head node, no gpus\n");
    ASSERT_EQ(nodes.size(), 2u);
    EXPECT_EQ(nodes[0].node_id, "gpu01");
    EXPECT_EQ(nodes[0].gpu_vram_gb, (std::vector<int>{80, 80, 80, 80}));
    EXPECT_EQ(nodes[1].node_id, "cpu01");
    EXPECT_TRUE(nodes[1].gpu_vram_gb.empty());
}

TEST(ClusterConfig, ErrorsCarryLineNumbers) {
    try {
        parse_cluster("gpu01 32 256 80,80\ngpu02 16 bad\n");
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_EQ(e.line, 2);
    }
    try {
        parse_cluster("gpu01 32 256 80,x\n");
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_EQ(e.line, 1);
    }
    EXPECT_THROW(parse_cluster("gpu01 32 256 80 extra\n"), parse_error);
    EXPECT_THROW(parse_cluster("gpu01 0 256\n"), parse_error);
}

// ── model catalog ──────────────────────────────────────────────────────────

TEST(ModelCatalog, ResourceFootprints) {
    const ModelProfile& b70 = find_profile("llama3.1-70b");
    EXPECT_EQ(b70.request.cpu_cores, 16);
    EXPECT_EQ(b70.request.ram_gb, 128);
    EXPECT_EQ(b70.request.gpu_count, 2);
    EXPECT_EQ(b70.request.vram_per_gpu_gb, 80);
    EXPECT_EQ(b70.request.walltime_minutes, 360);

    const ModelProfile& f40 = find_profile("falcon-40b");
    EXPECT_EQ(f40.request.cpu_cores, 12);
    EXPECT_EQ(f40.request.ram_gb, 80);
    EXPECT_EQ(f40.request.gpu_count, 2);
    EXPECT_EQ(f40.request.vram_per_gpu_gb, 24);
    EXPECT_EQ(f40.request.walltime_minutes, 240);
    EXPECT_FALSE(f40.has_perf());

    const ModelProfile& b1 = find_profile("llama3.2-1b");
    EXPECT_EQ(b1.request.cpu_cores, 4);
    EXPECT_EQ(b1.request.ram_gb, 8);
    EXPECT_EQ(b1.request.gpu_count, 1);
    EXPECT_EQ(b1.request.vram_per_gpu_gb, 2);

    EXPECT_EQ(find_profile("deepseek-67b").request.gpu_count, 4);
    EXPECT_EQ(find_profile("mpt-30b").request.ram_gb, 60);
    EXPECT_EQ(find_profile("mistral-7b").params_billions, 7.3);
}

TEST(ModelCatalog, PerfConstantsMatchCalibration) {
    const ModelProfile& b1 = find_profile("1b");
    ASSERT_TRUE(b1.has_perf());
    EXPECT_EQ(b1.perf->init_latency_ms, 10.0);
    EXPECT_EQ(b1.perf->saturation_concurrency, 128);
    EXPECT_EQ(b1.perf->saturation_latency_ms, 36.0);

    const ModelProfile& b3 = find_profile("3b");
    EXPECT_EQ(b3.perf->init_latency_ms, 30.54002594419095);
    EXPECT_EQ(b3.perf->saturation_concurrency, 49);
    EXPECT_EQ(b3.perf->saturation_latency_ms, 85.0);

    const ModelProfile& b8 = find_profile("8b");
    EXPECT_EQ(b8.perf->init_latency_ms, 82.74763618190443);
    EXPECT_EQ(b8.perf->saturation_concurrency, 20);
    EXPECT_EQ(b8.perf->saturation_latency_ms, 336.0);

    const ModelProfile& b70 = find_profile("70b");
    EXPECT_EQ(b70.perf->init_latency_ms, 750.0);  // measured floor, not interpolated
    EXPECT_EQ(b70.perf->saturation_concurrency, 2);
    EXPECT_EQ(b70.perf->saturation_latency_ms, 2131.0);

    EXPECT_EQ(b1.tokens_per_request, 1024);
    EXPECT_EQ(b70.tokens_per_request, 1024);
}

TEST(ModelCatalog, InterpolationAnchorsAndMonotonicity) {
    // endpoints of the power law
    EXPECT_DOUBLE_EQ(interp_init_latency_ms(1.0), 10.0);
    EXPECT_NEAR(interp_init_latency_ms(70.0), 750.0, 1e-9);
    // strictly increasing in parameter count
    double prev = 0.0;
    for (double p : {1.0, 3.0, 7.3, 8.0, 30.0, 40.0, 67.0, 70.0}) {
        double v = interp_init_latency_ms(p);
        EXPECT_GT(v, prev);
        prev = v;
    }
}

TEST(ModelCatalog, UnknownModelThrowsNotFound) {
    EXPECT_THROW(find_profile("gpt-5"), not_found_error);
}

}  // namespace
