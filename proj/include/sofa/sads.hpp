#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "sofa/common.hpp"
#include "sofa/costmodel.hpp"

namespace sofa {

// Sphere-search-aided distributed sorting: a score row is split into
// num_segments contiguous sub-segments, each emits its own top-(k/n) through
// an iterative batched selector with adaptive clipping, and the union forms
// the FC set that drives on-demand KV generation.

constexpr int64_t kNoBound = std::numeric_limits<int64_t>::min();
constexpr int64_t kInfiniteRadius = std::numeric_limits<int64_t>::max();

struct SadsConfig {
    int num_segments = 4;        // n
    int k = 64;                  // per-row selected total
    int64_t r = kInfiniteRadius; // top-margin radius; infinite = low bound only
    int batch_in = 12;           // new inputs per selector iteration
    int keep = 4;                // sorted outputs carried between iterations
};

inline void validate(const SadsConfig& cfg) {
    check_arg(cfg.num_segments >= 1, "sads: num_segments must be >= 1");
    check_arg(cfg.k >= 1, "sads: k must be >= 1");
    check_arg(cfg.batch_in >= 1 && cfg.keep >= 1, "sads: batch_in/keep must be >= 1");
}

struct SelEntry {
    int index;      // key index within the full row
    int32_t score;
};

struct ThresholdState {
    int iteration = 0;
    int64_t running_max = kNoBound;
};

struct Threshold {
    int64_t value = 0;
    bool active = false;
};

// threshold = max(top margin, low bound) where top margin = Max - r and the
// low bound is the current min of the output buffer (kNoBound while the
// buffer is not full). Nothing is eliminated on the first iteration.
inline Threshold update_threshold(const ThresholdState& state, int64_t new_batch_max,
                                  int64_t output_buffer_min, int64_t r) {
    if (state.iteration == 0) return {0, false};
    int64_t max_seen = std::max(state.running_max, new_batch_max);
    int64_t margin = (r == kInfiniteRadius || max_seen == kNoBound) ? kNoBound : max_seen - r;
    int64_t thr = std::max(margin, output_buffer_min);
    return {thr, true};
}

struct ClipResult {
    std::vector<int32_t> values;   // sub-threshold entries substituted with 0
    std::vector<uint8_t> skipped;  // skip marks; marked entries never enter selection
    int clipped_count = 0;
};

inline ClipResult clip(std::span<const int32_t> values, Threshold thr) {
    ClipResult out;
    out.values.assign(values.begin(), values.end());
    out.skipped.assign(values.size(), 0);
    if (!thr.active) return out;
    for (size_t i = 0; i < values.size(); ++i) {
        if (static_cast<int64_t>(values[i]) < thr.value) {
            out.values[i] = 0;
            out.skipped[i] = 1;
            ++out.clipped_count;
        }
    }
    return out;
}

namespace detail {

// Ordered insert into the running top-m buffer. Ties go to the lower index,
// so earlier entries stay ahead and results are reproducible.
inline void buffer_insert(std::vector<SelEntry>& buf, SelEntry e, size_t cap, OpTally& t) {
    if (buf.size() == cap) {
        ++t.cmp;
        if (e.score <= buf.back().score) return;  // cannot displace on a tie
        buf.pop_back();
    }
    auto pos = std::upper_bound(buf.begin(), buf.end(), e, [&t](const SelEntry& a, const SelEntry& b) {
        ++t.cmp;
        return a.score > b.score;
    });
    buf.insert(pos, e);
}

}  // namespace detail

// Exact top-m of one segment, emulating the iterative 16-to-4 selector:
// each round takes batch_in new values, clips against the adaptive threshold
// and merges survivors into the output buffer. Clipping uses the low bound
// (buffer min once full), so no value that belongs in the top-m is ever lost;
// with a finite radius r the top margin becomes a lossy pruning heuristic.
// m > segment length returns every entry.
inline std::vector<SelEntry> select_topk_segment(std::span<const int32_t> scores,
                                                 int base_index, int m,
                                                 const SadsConfig& cfg,
                                                 OpTally* tally = nullptr,
                                                 uint64_t* clipped = nullptr) {
    OpTally t;
    std::vector<SelEntry> buf;
    const size_t cap = static_cast<size_t>(std::max(0, m));
    if (cap > 0) buf.reserve(std::min(cap + 1, scores.size() + 1));
    ThresholdState state;

    for (size_t start = 0; start < scores.size() && cap > 0; start += cfg.batch_in) {
        size_t end = std::min(scores.size(), start + cfg.batch_in);
        int64_t buffer_min = buf.size() == cap ? buf.back().score : kNoBound;
        Threshold thr = update_threshold(state, kNoBound, buffer_min, cfg.r);

        auto batch = scores.subspan(start, end - start);
        ClipResult cr = clip(batch, thr);
        t.cmp += thr.active ? batch.size() : 0;
        if (clipped) *clipped += cr.clipped_count;

        for (size_t i = 0; i < batch.size(); ++i) {
            int64_t raw = batch[i];
            if (state.running_max == kNoBound || raw > state.running_max)
                state.running_max = raw;
            if (cr.skipped[i]) continue;
            detail::buffer_insert(buf, {base_index + static_cast<int>(start + i), batch[i]},
                                  cap, t);
        }
        ++state.iteration;
    }
    if (tally) *tally += t;
    return buf;
}

// Per-query selection result: indices with predicted scores, descending.
struct FCRow {
    std::vector<SelEntry> entries;
    int top1_index = -1;
    int top2_index = -1;
    bool k_clamped = false;  // set when k > row length forced a clamp
};

using FCSet = std::vector<FCRow>;

inline FCRow sads_topk(std::span<const int32_t> row, const SadsConfig& cfg,
                       OpTally* tally = nullptr, uint64_t* clipped = nullptr) {
    validate(cfg);
    FCRow out;
    const int S = static_cast<int>(row.size());
    if (S == 0) return out;

    int k = cfg.k;
    if (k > S) {
        k = S;
        out.k_clamped = true;
    }
    const int n = std::min(cfg.num_segments, S);
    const int quota = (k + n - 1) / n;  // ceil(k/n); union trimmed back to k
    const int seg_len = S / n;          // last segment takes the remainder

    std::vector<SelEntry> pool;
    pool.reserve(static_cast<size_t>(quota) * n);
    for (int seg = 0; seg < n; ++seg) {
        int lo = seg * seg_len;
        int hi = (seg == n - 1) ? S : lo + seg_len;
        auto picked = select_topk_segment(row.subspan(lo, hi - lo), lo, quota, cfg,
                                          tally, clipped);
        pool.insert(pool.end(), picked.begin(), picked.end());
    }
    std::sort(pool.begin(), pool.end(), [](const SelEntry& a, const SelEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.index < b.index;
    });
    if (static_cast<int>(pool.size()) > k) pool.resize(k);
    out.entries = std::move(pool);
    if (!out.entries.empty()) out.top1_index = out.entries[0].index;
    if (out.entries.size() > 1) out.top2_index = out.entries[1].index;
    return out;
}

}  // namespace sofa
