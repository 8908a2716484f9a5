#include <gtest/gtest.h>

#include <thread>

#include "hpcserve/hosts.hpp"

using namespace hpcserve;

namespace {

Endpoint ep(const std::string& job, const std::string& addr,
            EndpointStatus st = EndpointStatus::Ready, const std::string& model = "llama3.2-1b") {
    return Endpoint{job, "gpu01", addr, EngineKind::Tgi, model, st};
}

// ── codec ──────────────────────────────────────────────────────────────────

TEST(HostsCodec, SerializeMatchesLineFormat) {
    HostsFile h;
    h.endpoints.push_back(ep("7", "10.0.0.5:8301"));
    EXPECT_EQ(serialize_hosts(h), "7 gpu01 10.0.0.5:8301 TGI llama3.2-1b READY\n");
}

TEST(HostsCodec, EmptyFileSerializesToEmptyString) {
    EXPECT_EQ(serialize_hosts(HostsFile{}), "");
    EXPECT_TRUE(parse_hosts("").endpoints.empty());
    EXPECT_TRUE(parse_hosts("# only a comment\n\n").endpoints.empty());
}

TEST(HostsCodec, RoundTripIsIdentity) {
    HostsFile h;
    h.endpoints.push_back(ep("7", "10.0.0.5:8301"));
    h.endpoints.push_back(ep("7", "10.0.0.5:8302", EndpointStatus::Starting));
    h.endpoints.push_back(ep("8", "10.0.0.6:8301", EndpointStatus::Down, "llama3.1-70b"));
    h.endpoints[2].engine = EngineKind::Vllm;
    EXPECT_EQ(parse_hosts(serialize_hosts(h)), h);
    EXPECT_EQ(serialize_hosts(parse_hosts(serialize_hosts(h))), serialize_hosts(h));
}

TEST(HostsCodec, MalformedLinesCarryLineNumbers) {
    std::string good = "7 gpu01 10.0.0.5:8301 TGI llama3.2-1b READY\n";
    try {
        parse_hosts(good + "8 gpu01 10.0.0.6:8301 TGI llama3.2-1b\n");
        FAIL() << "expected parse_error";
    } catch (const parse_error& e) {
        EXPECT_EQ(e.line, 2);
    }
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.0.5:8301 TGI llama3.2-1b READY extra\n"), parse_error);
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.0.299:8301 TGI m READY\n"), parse_error);
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.5:8301 TGI m READY\n"), parse_error);
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.0.5:0 TGI m READY\n"), parse_error);
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.0.5:99999 TGI m READY\n"), parse_error);
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.0.5 TGI m READY\n"), parse_error);
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.0.5:8301 triton m READY\n"), parse_error);
    EXPECT_THROW(parse_hosts("7 gpu01 10.0.0.5:8301 TGI m BOOTING\n"), parse_error);
}

TEST(HostsCodec, DuplicateKeyRejected) {
    std::string line = "7 gpu01 10.0.0.5:8301 TGI llama3.2-1b READY\n";
    EXPECT_THROW(parse_hosts(line + line), duplicate_error);
    // same job, different port: fine (replicas)
    EXPECT_NO_THROW(parse_hosts(line + "7 gpu01 10.0.0.5:8302 TGI llama3.2-1b READY\n"));
}

// ── registry ───────────────────────────────────────────────────────────────

TEST(Registry, UpsertInsertsThenUpdatesInPlace) {
    EndpointRegistry reg;
    reg.upsert(ep("1", "10.0.0.1:8301", EndpointStatus::Starting), 100);
    EXPECT_EQ(reg.size(), 1u);
    EXPECT_EQ(reg.status_since("1", "10.0.0.1:8301"), 100);
    EXPECT_TRUE(reg.ready().empty());

    Endpoint e = ep("1", "10.0.0.1:8301", EndpointStatus::Ready);
    reg.upsert(e, 2100);
    EXPECT_EQ(reg.size(), 1u);
    EXPECT_EQ(reg.status_since("1", "10.0.0.1:8301"), 2100);
    ASSERT_EQ(reg.ready().size(), 1u);
    EXPECT_EQ(reg.ready()[0], e);

    // same status again: timestamp unchanged
    reg.upsert(e, 5000);
    EXPECT_EQ(reg.status_since("1", "10.0.0.1:8301"), 2100);
}

TEST(Registry, ReadyFiltersByModelInRegistryOrder) {
    EndpointRegistry reg;
    reg.upsert(ep("1", "10.0.0.1:8301", EndpointStatus::Ready, "a"), 0);
    reg.upsert(ep("2", "10.0.0.2:8301", EndpointStatus::Ready, "b"), 0);
    reg.upsert(ep("3", "10.0.0.3:8301", EndpointStatus::Starting, "a"), 0);
    reg.upsert(ep("4", "10.0.0.4:8301", EndpointStatus::Ready, "a"), 0);
    auto r = reg.ready("a");
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].job_id, "1");
    EXPECT_EQ(r[1].job_id, "4");
    EXPECT_EQ(reg.ready().size(), 3u);
}

TEST(Registry, MarkDownByAddressAndJob) {
    EndpointRegistry reg;
    reg.upsert(ep("1", "10.0.0.1:8301"), 0);
    reg.upsert(ep("1", "10.0.0.1:8302"), 0);
    reg.mark_down("10.0.0.1:8301", 500);
    EXPECT_EQ(reg.ready().size(), 1u);
    EXPECT_EQ(reg.status_since("1", "10.0.0.1:8301"), 500);
    EXPECT_THROW(reg.mark_down("10.0.0.9:1234", 600), not_found_error);

    EXPECT_EQ(reg.mark_down_by_job("1", 700), 1);  // only the still-ready one
    EXPECT_EQ(reg.mark_down_by_job("1", 800), 0);
    EXPECT_EQ(reg.mark_down_by_job("nope", 800), 0);
    EXPECT_TRUE(reg.ready().empty());
}

TEST(Registry, HostsSnapshotRoundTrip) {
    EndpointRegistry reg;
    reg.upsert(ep("1", "10.0.0.1:8301"), 0);
    reg.upsert(ep("2", "10.0.0.2:8301", EndpointStatus::Starting), 0);
    HostsFile snapshot = reg.hosts();
    EXPECT_EQ(parse_hosts(serialize_hosts(snapshot)), snapshot);

    EndpointRegistry other;
    other.load(snapshot, 42);
    EXPECT_EQ(other.hosts(), snapshot);
    EXPECT_EQ(other.status_since("1", "10.0.0.1:8301"), 42);
}

TEST(Registry, ValidatesEndpointsOnUpsert) {
    EndpointRegistry reg;
    EXPECT_THROW(reg.upsert(ep("", "10.0.0.1:8301"), 0), validation_error);
    EXPECT_THROW(reg.upsert(ep("1", "not-an-address"), 0), validation_error);
}

TEST(Registry, ConcurrentReadersAndWritersKeepConsistentCounts) {
    EndpointRegistry reg;
    for (int i = 0; i < 8; ++i)
        reg.upsert(ep(std::to_string(i), "10.0.0." + std::to_string(i + 1) + ":8301",
                      EndpointStatus::Starting),
                   0);
    std::vector<std::thread> workers;
    for (int w = 0; w < 4; ++w) {
        workers.emplace_back([&reg, w] {
            for (int i = 0; i < 200; ++i) {
                int id = (w * 200 + i) % 8;
                reg.upsert(ep(std::to_string(id), "10.0.0." + std::to_string(id + 1) + ":8301",
                              i % 2 ? EndpointStatus::Ready : EndpointStatus::Starting),
                           i);
            }
        });
        workers.emplace_back([&reg] {
            for (int i = 0; i < 200; ++i) {
                auto snap = reg.all();
                EXPECT_EQ(snap.size(), 8u);  // snapshot never torn
            }
        });
    }
    for (auto& t : workers) t.join();
    EXPECT_EQ(reg.size(), 8u);
}

}  // namespace
