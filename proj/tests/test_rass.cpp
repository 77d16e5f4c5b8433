#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "sofa/rass.hpp"
#include "sofa/rng.hpp"

using namespace sofa;

namespace {

FCRow row_of(std::initializer_list<int> keys) {
    FCRow r;
    int32_t score = 100;
    for (int k : keys) r.entries.push_back({k, score--});
    return r;
}

// Shared-key pattern: q0..q2 demand {k2,k3} plus one private key each,
// q3 demands only {k5,k6}. 12 demand pairs over 8 distinct keys.
FCSet golden_demands() {
    return {row_of({0, 1, 2, 3}), row_of({2, 3, 4}), row_of({2, 3, 7}), row_of({5, 6})};
}

FCSet random_demands(SplitMix64& rng, int queries, int keys) {
    FCSet fc(queries);
    for (int q = 0; q < queries; ++q) {
        int want = static_cast<int>(rng.range(1, std::max(1, keys / 2)));
        std::set<int> chosen;
        while (static_cast<int>(chosen.size()) < want)
            chosen.insert(static_cast<int>(rng.bounded(keys)));
        for (int k : chosen) fc[q].entries.push_back({k, 1});
    }
    return fc;
}

}  // namespace

TEST_CASE("demand map inverts FC sets into query bitmasks") {
    FCSet fc = {row_of({2, 3}), row_of({2, 3}), row_of({2, 3}), row_of({5, 6})};
    DemandMap map = build_demand_map(fc);
    REQUIRE(map.key_to_queries.size() == 4);
    CHECK(map.key_to_queries.at(2).hex() == "0x7");
    CHECK(map.key_to_queries.at(3).hex() == "0x7");
    CHECK(map.key_to_queries.at(5).hex() == "0x8");
    CHECK(map.key_to_queries.at(6).hex() == "0x8");
    for (const auto& [k, m] : map.key_to_queries) CHECK(m.any());

    CHECK(build_demand_map({}).key_to_queries.empty());

    FCSet single = {row_of({0, 4})};
    DemandMap smap = build_demand_map(single);
    for (const auto& [k, m] : smap.key_to_queries) CHECK(m.hex() == "0x1");
}

TEST_CASE("golden schedule: shared keys and exclusives pack into phase 0") {
    DemandMap map = build_demand_map(golden_demands());
    SchedulePlan plan = schedule_rass(map, 4);
    REQUIRE(!plan.phases.empty());
    CHECK(plan.phases[0].keys == std::vector<int>{2, 3, 5, 6});
    CHECK(plan.total_key_fetches() == 8);  // every key exactly once
}

TEST_CASE("golden instance reproduces the one-third access reduction") {
    FCSet fc = golden_demands();
    DemandMap map = build_demand_map(fc);
    SchedulePlan plan = schedule_rass(map, 4);
    FetchTally rass = count_memory_access(plan, 64);
    FetchTally base = count_memory_access_baseline(fc, 64);
    CHECK(base.kv_fetches == 12);
    CHECK(rass.kv_fetches == 8);
    CHECK(rass.kv_fetches * 3 == base.kv_fetches * 2);  // exactly 2:3
    CHECK(rass.dram_bytes * 3 == base.dram_bytes * 2);
}

TEST_CASE("degenerate demand patterns") {
    // All queries share one key, capacity 1: a single phase, one fetch.
    FCSet shared = {row_of({5}), row_of({5}), row_of({5})};
    SchedulePlan p1 = schedule_rass(build_demand_map(shared), 1);
    CHECK(p1.phases.size() == 1);
    CHECK(p1.total_key_fetches() == 1);

    // Disjoint demands: no reuse available; one phase at capacity T.
    FCSet disjoint = {row_of({0}), row_of({1}), row_of({2}), row_of({3})};
    SchedulePlan p2 = schedule_rass(build_demand_map(disjoint), 4);
    CHECK(p2.phases.size() == 1);
    CHECK(p2.total_key_fetches() == 4);
    FetchTally r = count_memory_access(p2, 8);
    FetchTally b = count_memory_access_baseline(disjoint, 8);
    CHECK(r.kv_fetches == b.kv_fetches);

    // Identical FC sets: fetch ratio 1/T.
    FCSet same = {row_of({1, 2}), row_of({1, 2}), row_of({1, 2}), row_of({1, 2})};
    SchedulePlan p3 = schedule_rass(build_demand_map(same), 4);
    FetchTally r3 = count_memory_access(p3, 8);
    FetchTally b3 = count_memory_access_baseline(same, 8);
    CHECK(r3.kv_fetches * 4 == b3.kv_fetches);
}

TEST_CASE("coverage: every demand served by exactly one phase holding the key") {
    SplitMix64 rng(8);
    for (int rep = 0; rep < 100; ++rep) {
        int queries = static_cast<int>(rng.range(1, 12));
        int keys = static_cast<int>(rng.range(2, 48));
        FCSet fc = random_demands(rng, queries, keys);
        DemandMap map = build_demand_map(fc);
        int capacity = static_cast<int>(rng.range(1, 8));
        SchedulePlan plan = schedule_rass(map, capacity);

        std::set<int> scheduled;
        for (const auto& phase : plan.phases) {
            CHECK(static_cast<int>(phase.keys.size()) <= capacity);
            for (int k : phase.keys) CHECK(scheduled.insert(k).second);  // no duplicates
        }
        for (const auto& [k, m] : map.key_to_queries) CHECK(scheduled.count(k) == 1);

        // Never worse than the per-query baseline.
        FetchTally r = count_memory_access(plan, 16);
        FetchTally b = count_memory_access_baseline(fc, 16);
        CHECK(r.kv_fetches <= b.kv_fetches);
    }
}

TEST_CASE("scheduling is deterministic") {
    SplitMix64 rng(99);
    FCSet fc = random_demands(rng, 8, 32);
    DemandMap map = build_demand_map(fc);
    SchedulePlan a = schedule_rass(map, 4);
    SchedulePlan b = schedule_rass(map, 4);
    REQUIRE(a.phases.size() == b.phases.size());
    for (size_t i = 0; i < a.phases.size(); ++i) {
        CHECK(a.phases[i].keys == b.phases[i].keys);
        CHECK(a.phases[i].served == b.phases[i].served);
    }
}

TEST_CASE("bitmask hex rendering widens with the query count") {
    QueryMask m(12);
    m.set(0);
    m.set(11);
    CHECK(m.hex() == "0x801");
    QueryMask wide(70);
    wide.set(69);
    CHECK(wide.popcount() == 1);
    CHECK(wide.hex().size() == 2 + 18);  // 70 bits -> 18 nibbles
}
