#pragma once

#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sofa/common.hpp"
#include "sofa/costmodel.hpp"
#include "sofa/sads.hpp"

namespace sofa {

// Query bitmask, bit q set iff query q demands the key. Sized at build time.
struct QueryMask {
    int nbits = 0;
    std::vector<uint64_t> words;

    explicit QueryMask(int n = 0) : nbits(n), words((n + 63) / 64, 0) {}

    void set(int q) { words[q >> 6] |= uint64_t(1) << (q & 63); }
    bool test(int q) const { return (words[q >> 6] >> (q & 63)) & 1; }

    int popcount() const {
        int n = 0;
        for (uint64_t w : words) n += std::popcount(w);
        return n;
    }
    bool intersects(const QueryMask& o) const {
        for (size_t i = 0; i < words.size(); ++i)
            if (words[i] & o.words[i]) return true;
        return false;
    }
    void merge(const QueryMask& o) {
        for (size_t i = 0; i < words.size(); ++i) words[i] |= o.words[i];
    }
    bool any() const {
        for (uint64_t w : words)
            if (w) return true;
        return false;
    }
    bool operator==(const QueryMask& o) const { return nbits == o.nbits && words == o.words; }

    std::string hex() const {
        static const char* digits = "0123456789abcdef";
        std::string s;
        int nibbles = (nbits + 3) / 4;
        if (nibbles == 0) nibbles = 1;
        for (int i = nibbles - 1; i >= 0; --i) {
            uint64_t w = (i * 4 < static_cast<int>(words.size()) * 64)
                             ? (words[(i * 4) >> 6] >> ((i * 4) & 63)) & 0xF
                             : 0;
            s.push_back(digits[w]);
        }
        return "0x" + s;
    }
};

// key index -> bitmask of the queries whose FC set contains it. Ordered map
// keeps iteration (and therefore scheduling) deterministic.
struct DemandMap {
    int num_queries = 0;
    std::map<int, QueryMask> key_to_queries;
};

inline DemandMap build_demand_map(const FCSet& fc_sets) {
    DemandMap map;
    map.num_queries = static_cast<int>(fc_sets.size());
    for (int q = 0; q < map.num_queries; ++q) {
        for (const auto& e : fc_sets[q].entries) {
            auto [it, fresh] =
                map.key_to_queries.try_emplace(e.index, QueryMask(map.num_queries));
            (void)fresh;
            it->second.set(q);
        }
    }
    return map;
}

struct SchedulePhase {
    std::vector<int> keys;
    QueryMask served;
};

struct SchedulePlan {
    std::vector<SchedulePhase> phases;
    uint64_t total_key_fetches() const {
        uint64_t n = 0;
        for (const auto& p : phases) n += p.keys.size();
        return n;
    }
};

// Greedy phase packing. Each phase first takes the unscheduled keys tied at
// the highest demand count (the broadly shared ones), then fills remaining
// slots with keys exclusive to queries this phase has not served yet. Ties
// break toward the lower key index. Every key is fetched exactly once.
inline SchedulePlan schedule_rass(const DemandMap& map, int phase_capacity) {
    check_arg(phase_capacity >= 1, "rass: phase_capacity must be >= 1");
    SchedulePlan plan;
    std::map<int, QueryMask> pending = map.key_to_queries;

    while (!pending.empty()) {
        SchedulePhase phase;
        phase.served = QueryMask(map.num_queries);

        int top_pop = 0;
        for (const auto& [k, m] : pending) top_pop = std::max(top_pop, m.popcount());

        // Top candidates: all keys tied at the maximum demand count.
        for (auto it = pending.begin();
             it != pending.end() && static_cast<int>(phase.keys.size()) < phase_capacity;) {
            if (it->second.popcount() == top_pop) {
                phase.keys.push_back(it->first);
                phase.served.merge(it->second);
                it = pending.erase(it);
            } else {
                ++it;
            }
        }
        // Fill: keys used exclusively by queries the top candidates left
        // unserved. The unserved set is frozen here so several exclusives for
        // the same remaining query can share the phase.
        const QueryMask covered = phase.served;
        while (static_cast<int>(phase.keys.size()) < phase_capacity) {
            int best_key = -1;
            int best_pop = -1;
            for (const auto& [k, m] : pending) {
                if (m.intersects(covered)) continue;
                int pc = m.popcount();
                if (pc > best_pop) {
                    best_pop = pc;
                    best_key = k;
                }
            }
            if (best_key < 0) break;
            phase.keys.push_back(best_key);
            phase.served.merge(pending.at(best_key));
            pending.erase(best_key);
        }
        plan.phases.push_back(std::move(phase));
    }
    return plan;
}

// ---------------------------------------------------------------------------
// Memory-access accounting (KV vector fetches from DRAM)
// ---------------------------------------------------------------------------

struct FetchTally {
    uint64_t kv_fetches = 0;  // one fetch = one key's K and V vectors
    uint64_t dram_bytes = 0;
};

inline uint64_t kv_vector_bytes(int head_dim, const MemoryModel& mem) {
    return static_cast<uint64_t>(2) * head_dim * mem.kv_element_bits / 8;  // K and V
}

// Out-of-order schedule: each scheduled key is fetched once.
inline FetchTally count_memory_access(const SchedulePlan& plan, int head_dim,
                                      const MemoryModel& mem = {}) {
    FetchTally t;
    t.kv_fetches = plan.total_key_fetches();
    t.dram_bytes = t.kv_fetches * kv_vector_bytes(head_dim, mem);
    return t;
}

// Default left-to-right order: queries stream one after another and each
// fetches its own FC keys; nothing is retained across queries (the working
// set is flushed per query), so the cost is one fetch per (query, key) pair.
inline FetchTally count_memory_access_baseline(const FCSet& fc_sets, int head_dim,
                                               const MemoryModel& mem = {}) {
    FetchTally t;
    for (const auto& row : fc_sets) t.kv_fetches += row.entries.size();
    t.dram_bytes = t.kv_fetches * kv_vector_bytes(head_dim, mem);
    return t;
}

}  // namespace sofa
