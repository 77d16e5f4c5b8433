#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "sofa/common.hpp"

namespace sofa {

// ---------------------------------------------------------------------------
// Weighted operation counting
// ---------------------------------------------------------------------------

struct OpTally {
    uint64_t add = 0;
    uint64_t cmp = 0;
    uint64_t shift = 0;
    uint64_t mul = 0;
    uint64_t exp = 0;
    uint64_t div = 0;

    OpTally& operator+=(const OpTally& o) {
        add += o.add;
        cmp += o.cmp;
        shift += o.shift;
        mul += o.mul;
        exp += o.exp;
        div += o.div;
        return *this;
    }
    friend OpTally operator+(OpTally a, const OpTally& b) { return a += b; }
    uint64_t total_raw() const { return add + cmp + shift + mul + exp + div; }
};

// Arithmetic-complexity normalization. The weights are a configurable
// convention: cheap ops cost 1, a multiply 3, exp/div 10.
struct OpWeights {
    double add = 1.0;
    double cmp = 1.0;
    double shift = 1.0;
    double mul = 3.0;
    double exp = 10.0;
    double div = 10.0;
};

inline double weighted_cost(const OpTally& t, const OpWeights& w = {}) {
    return w.add * t.add + w.cmp * t.cmp + w.shift * t.shift + w.mul * t.mul +
           w.exp * t.exp + w.div * t.div;
}

// ---------------------------------------------------------------------------
// Memory and throughput constants
// ---------------------------------------------------------------------------

struct MemoryModel {
    uint64_t sram_bytes = 316 * 1024;        // 192K token + 96K weight + 28K temp
    double dram_energy_pj_per_bit = 15.0;    // midpoint of the 5-20 pJ/bit range
    double sram_energy_pj_per_bit = 0.1;
    double dram_bw_gbps = 25.6;              // DDR4-class, GB/s
    double sram_bw_tbps = 19.0;              // TB/s
    // Element widths (bits) for intermediate footprints.
    int pred_score_bits = 4;    // predicted attention entries
    int formal_score_bits = 16; // pre-softmax scores
    int prob_bits = 16;         // post-softmax attention
    int fc_index_bits = 16;     // selected-key bookkeeping
    int kv_element_bits = 16;

    double dram_bw_bytes_per_s() const { return dram_bw_gbps * 1e9; }
    double sram_bw_bytes_per_s() const { return sram_bw_tbps * 1e12; }
};

struct ThroughputModel {
    double parallel_units = 128.0;  // multiplier lanes, one MAC each per cycle
    double clock_hz = 1e9;
    // One multiply-accumulate is mul + add = 4 weighted units at default
    // weights; lane throughput is expressed in those units.
    double weighted_units_per_lane = 4.0;
    double weighted_ops_per_s() const {
        return parallel_units * clock_hz * weighted_units_per_lane;
    }
};

// ---------------------------------------------------------------------------
// Intermediate footprints (bytes)
// ---------------------------------------------------------------------------

enum class Intermediate { PredScores, FormalScores, AttenProbs, FcIndices, KvSlice, Output };

struct FootprintDims {
    int num_queries = 0;  // T
    int seq_len = 0;      // S
    int head_dim = 0;     // d
    double k_fraction = 0.25;
};

inline uint64_t footprint(Intermediate stage, const FootprintDims& dims,
                          const MemoryModel& mem = {}) {
    const uint64_t T = dims.num_queries, S = dims.seq_len, d = dims.head_dim;
    const auto bytes = [](uint64_t elems, int bits) { return elems * bits / 8; };
    switch (stage) {
        case Intermediate::PredScores: return bytes(T * S, mem.pred_score_bits);
        case Intermediate::FormalScores: return bytes(T * S, mem.formal_score_bits);
        case Intermediate::AttenProbs: return bytes(T * S, mem.prob_bits);
        case Intermediate::FcIndices: {
            uint64_t k = static_cast<uint64_t>(dims.k_fraction * S);
            return bytes(T * k, mem.fc_index_bits);
        }
        case Intermediate::KvSlice: return bytes(2 * S * d, mem.kv_element_bits);
        case Intermediate::Output: return bytes(T * d, mem.formal_score_bits);
    }
    return 0;
}

// Everything the standard (whole-row) dataflow keeps live between stages.
inline uint64_t standard_intermediate_footprint(const FootprintDims& dims,
                                                const MemoryModel& mem = {}) {
    return footprint(Intermediate::PredScores, dims, mem) +
           footprint(Intermediate::FormalScores, dims, mem) +
           footprint(Intermediate::AttenProbs, dims, mem) +
           footprint(Intermediate::FcIndices, dims, mem);
}

// ---------------------------------------------------------------------------
// FA-2 op counter (analytic)
//
// Streaming-hardware convention: the tiled kernel materializes its exp
// coefficients twice per element (once for the normalizer path, once for the
// accumulator path; nothing is buffered across the two) plus two rescale
// factors per tile, while the untiled baseline buffers the full probability
// matrix and exponentiates once per element.
// ---------------------------------------------------------------------------

struct Fa2Counts {
    uint64_t fa2_exp = 0;
    uint64_t fa2_cmp = 0;
    uint64_t vanilla_exp = 0;
    uint64_t vanilla_cmp = 0;
    uint64_t excess_exp() const { return fa2_exp - vanilla_exp; }
    uint64_t excess_cmp() const { return fa2_cmp - vanilla_cmp; }
};

inline Fa2Counts fa2_op_counter(int num_rows, int seq_len, int tile_size) {
    check_arg(num_rows >= 1 && seq_len >= 1 && tile_size >= 1, "fa2_op_counter: bad dims");
    const uint64_t T = num_rows, S = seq_len;
    const uint64_t tiles = (S + tile_size - 1) / tile_size;
    Fa2Counts c;
    c.vanilla_exp = T * S;
    c.vanilla_cmp = T * S;  // row max scan
    c.fa2_exp = T * (2 * S + 2 * tiles);
    c.fa2_cmp = T * (S + tiles);  // tile max scans + cross-tile refresh
    return c;
}

// ---------------------------------------------------------------------------
// Stage latency model
// ---------------------------------------------------------------------------

enum class Dataflow { Standard, Tiled };

struct StageCost {
    std::string name;
    OpTally ops;
    uint64_t dram_bytes = 0;
    uint64_t sram_bytes = 0;
};

struct LatencyReport {
    double compute_s = 0.0;
    double dram_s = 0.0;
    double sram_s = 0.0;
    double total_s = 0.0;
    double mat = 0.0;  // memory-access time share of total
};

// Standard flow serializes stages and their memory traffic; the tiled flow
// overlaps stages across tiles (fill + bottleneck * (tiles-1)).
inline LatencyReport model_latency(const std::vector<StageCost>& stages,
                                   const OpWeights& w, const MemoryModel& mem,
                                   const ThroughputModel& thr, Dataflow flow,
                                   int num_tiles = 1) {
    LatencyReport rep;
    double bottleneck = 0.0;
    double fill = 0.0;
    for (const auto& st : stages) {
        double c = weighted_cost(st.ops, w) / thr.weighted_ops_per_s();
        double dm = st.dram_bytes / mem.dram_bw_bytes_per_s();
        double sm = st.sram_bytes / mem.sram_bw_bytes_per_s();
        rep.compute_s += c;
        rep.dram_s += dm;
        rep.sram_s += sm;
        double stage_t = c + dm + sm;
        fill += stage_t;
        bottleneck = std::max(bottleneck, stage_t);
    }
    double mem_t = rep.dram_s + rep.sram_s;
    if (flow == Dataflow::Standard || num_tiles <= 1) {
        rep.total_s = rep.compute_s + mem_t;
    } else {
        double per_tile_fill = fill / num_tiles;
        double per_tile_bottleneck = bottleneck / num_tiles;
        rep.total_s = per_tile_fill + per_tile_bottleneck * (num_tiles - 1);
    }
    rep.mat = rep.total_s > 0.0 ? std::min(1.0, mem_t / rep.total_s) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Aggregate report
// ---------------------------------------------------------------------------

struct CostReport {
    int schema_version = 1;
    std::vector<StageCost> stages;
    double weighted_total = 0.0;
    uint64_t dram_bytes = 0;
    uint64_t sram_bytes = 0;
    double energy_pj = 0.0;
    LatencyReport latency_standard;
    LatencyReport latency_tiled;
    int num_tiles = 1;

    void finalize(const OpWeights& w, const MemoryModel& mem, const ThroughputModel& thr) {
        weighted_total = 0.0;
        dram_bytes = 0;
        sram_bytes = 0;
        for (const auto& st : stages) {
            weighted_total += weighted_cost(st.ops, w);
            dram_bytes += st.dram_bytes;
            sram_bytes += st.sram_bytes;
        }
        energy_pj = 8.0 * (dram_bytes * mem.dram_energy_pj_per_bit +
                           sram_bytes * mem.sram_energy_pj_per_bit);
        latency_standard = model_latency(stages, w, mem, thr, Dataflow::Standard, num_tiles);
        latency_tiled = model_latency(stages, w, mem, thr, Dataflow::Tiled, num_tiles);
    }
};

}  // namespace sofa
