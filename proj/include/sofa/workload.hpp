#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "sofa/common.hpp"
#include "sofa/quant.hpp"
#include "sofa/rng.hpp"

namespace sofa {

// Score-row shapes the generator can synthesize:
//   TypeI   - a few dominant keys spike far above the rest of the row
//   TypeII  - unstructured rows, inputs i.i.d. uniform over the full range
//   TypeIII - moderately large scores concentrated in one contiguous window
enum class Distribution { TypeI, TypeII, TypeIII };

struct WorkloadSpec {
    int seq_len = 256;    // S
    int head_dim = 64;
    int num_queries = 64; // T
    Distribution distribution = Distribution::TypeII;
    double dominant_fraction = 0.02;  // TypeI spike density
    int cluster_width = 64;           // TypeIII window size
    uint64_t seed = 1;
};

struct Workload {
    QuantMatrix Q;   // T x d, 16-bit
    QuantMatrix K;   // S x d, 16-bit (exact X*Wk, requantized)
    QuantMatrix V;   // S x d, 16-bit (exact X*Wv, requantized)
    QuantMatrix X;   // S x d, 8-bit tokens
    QuantMatrix Wk;  // d x d, 8-bit
    QuantMatrix Wv;  // d x d, 8-bit
    int kv_shift = 0;

    // Generator metadata, consumed by the distribution validators.
    std::vector<int> spike_tokens;
    int cluster_start = -1;
};

namespace detail {

// Alignment strength added to every query along the sign pattern of the
// boosted keys. Makes the boosted keys score high for all queries, which is
// what gives TypeI/TypeIII rows their shape. The query noise is shrunk to a
// quarter so the aligned component dominates deterministically while the sum
// stays exactly representable in 16 bits (8191 + 24576 = 32767).
constexpr int32_t kAlignGain = 24576;

inline void fill_uniform(QuantMatrix& m, SplitMix64& rng, int32_t lo, int32_t hi) {
    for (auto& v : m.data) v = static_cast<int32_t>(rng.range(lo, hi));
}

inline std::vector<int> sample_distinct(SplitMix64& rng, int n, int upper) {
    std::vector<int> all(upper);
    for (int i = 0; i < upper; ++i) all[i] = i;
    for (int i = 0; i < n; ++i) {
        int j = i + static_cast<int>(rng.bounded(static_cast<uint64_t>(upper - i)));
        std::swap(all[i], all[j]);
    }
    all.resize(n);
    std::sort(all.begin(), all.end());
    return all;
}

// Overwrites the given token rows with sign-pattern * amplitude and biases
// all queries toward the resulting key direction.
inline void boost_tokens(Workload& w, SplitMix64& rng, const std::vector<int>& tokens,
                         int32_t amp_lo, int32_t amp_hi) {
    const int d = w.X.cols;
    std::vector<int32_t> pattern(d);
    for (int h = 0; h < d; ++h) pattern[h] = rng.bounded(2) ? 1 : -1;
    for (int tok : tokens) {
        int32_t amp = static_cast<int32_t>(rng.range(amp_lo, amp_hi));
        for (int h = 0; h < d; ++h) w.X.at(tok, h) = pattern[h] * amp;
    }
    // Key direction shared by the boosted tokens: v = pattern^T * Wk.
    std::vector<int64_t> v(d, 0);
    for (int h = 0; h < d; ++h)
        for (int j = 0; j < d; ++j) v[j] += int64_t(pattern[h]) * w.Wk.at(h, j);
    for (int t = 0; t < w.Q.rows; ++t) {
        for (int j = 0; j < d; ++j) {
            int32_t noise = w.Q.at(t, j) / 4;  // [-8191, 8191]
            int32_t align = v[j] > 0 ? kAlignGain : (v[j] < 0 ? -kAlignGain : 0);
            w.Q.at(t, j) = noise + align;
        }
    }
}

}  // namespace detail

inline void validate(const WorkloadSpec& spec) {
    check_arg(spec.seq_len >= 1, "workload: seq_len must be >= 1");
    check_arg(spec.head_dim >= 1, "workload: head_dim must be >= 1");
    check_arg(spec.num_queries >= 1, "workload: num_queries must be >= 1");
    check_arg(spec.distribution == Distribution::TypeI ||
                  spec.distribution == Distribution::TypeII ||
                  spec.distribution == Distribution::TypeIII,
              "workload: invalid distribution");
    check_arg(spec.dominant_fraction >= 0.0 && spec.dominant_fraction <= 1.0,
              "workload: dominant_fraction must be in [0,1]");
    if (spec.distribution == Distribution::TypeIII)
        check_arg(spec.cluster_width >= 1 && spec.cluster_width <= spec.seq_len,
                  "workload: cluster_width must be in [1, seq_len]");
}

// Deterministic per seed: same spec -> bit-identical matrices.
inline Workload generate_workload(const WorkloadSpec& spec) {
    validate(spec);
    const int S = spec.seq_len, d = spec.head_dim, T = spec.num_queries;

    Workload w;
    w.X = QuantMatrix(S, d, 8);
    w.Wk = QuantMatrix(d, d, 8);
    w.Wv = QuantMatrix(d, d, 8);
    w.Q = QuantMatrix(T, d, 16);

    SplitMix64 rx(substream_seed(spec.seed, 0));
    SplitMix64 rwk(substream_seed(spec.seed, 1));
    SplitMix64 rwv(substream_seed(spec.seed, 2));
    SplitMix64 rq(substream_seed(spec.seed, 3));
    SplitMix64 rshape(substream_seed(spec.seed, 4));

    detail::fill_uniform(w.X, rx, -127, 127);
    detail::fill_uniform(w.Wk, rwk, -127, 127);
    detail::fill_uniform(w.Wv, rwv, -127, 127);
    detail::fill_uniform(w.Q, rq, -32767, 32767);

    if (spec.distribution == Distribution::TypeI && spec.dominant_fraction > 0.0) {
        int n_spike = std::max<int>(1, static_cast<int>(std::llround(spec.dominant_fraction * S)));
        n_spike = std::min(n_spike, S);
        w.spike_tokens = detail::sample_distinct(rshape, n_spike, S);
        detail::boost_tokens(w, rshape, w.spike_tokens, 112, 127);
    } else if (spec.distribution == Distribution::TypeIII) {
        int w0 = static_cast<int>(rshape.bounded(static_cast<uint64_t>(S - spec.cluster_width + 1)));
        w.cluster_start = w0;
        std::vector<int> window(spec.cluster_width);
        for (int i = 0; i < spec.cluster_width; ++i) window[i] = w0 + i;
        detail::boost_tokens(w, rshape, window, 80, 112);
    }

    w.kv_shift = requant_shift(8, 8, d, 16);
    w.K = requantize(exact_matmul_i64(w.X, w.Wk), S, d, w.kv_shift, 16);
    w.V = requantize(exact_matmul_i64(w.X, w.Wv), S, d, w.kv_shift, 16);
    return w;
}

// ---------------------------------------------------------------------------
// Shape validators. The distribution types have no formal criteria, so these
// pin the operational ones (thresholds are arguments, defaults below).
// ---------------------------------------------------------------------------

// Exact integer score rows Q * K^T.
inline std::vector<std::vector<int64_t>> exact_score_rows(const QuantMatrix& Q,
                                                          const QuantMatrix& K) {
    check_arg(Q.cols == K.cols, "exact_score_rows: dim mismatch");
    std::vector<std::vector<int64_t>> rows(Q.rows, std::vector<int64_t>(K.rows, 0));
    for (int t = 0; t < Q.rows; ++t)
        for (int s = 0; s < K.rows; ++s) {
            int64_t acc = 0;
            for (int j = 0; j < Q.cols; ++j)
                acc += int64_t(Q.at(t, j)) * K.at(s, j);
            rows[t][s] = acc;
        }
    return rows;
}

inline double median_abs(std::vector<int64_t> v) {
    for (auto& x : v) x = std::abs(x);
    size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + mid, v.end());
    return static_cast<double>(v[mid]);
}

// Fraction of score rows whose max magnitude is >= ratio * row median magnitude.
inline double spike_row_fraction(const std::vector<std::vector<int64_t>>& scores,
                                 double ratio = 4.0) {
    if (scores.empty()) return 0.0;
    int hits = 0;
    for (const auto& row : scores) {
        int64_t mx = 0;
        for (int64_t x : row) mx = std::max(mx, std::abs(x));
        double med = median_abs(row);
        if (med == 0.0 || static_cast<double>(mx) >= ratio * med) ++hits;
    }
    return static_cast<double>(hits) / scores.size();
}

// Mean fraction of each row's top-ceil(S/4) magnitudes falling inside the
// window, normalized by the best achievable fraction for the window size.
inline double cluster_containment(const std::vector<std::vector<int64_t>>& scores,
                                  int window_start, int window_width) {
    if (scores.empty()) return 0.0;
    double total = 0.0;
    const int S = static_cast<int>(scores[0].size());
    const int quart = (S + 3) / 4;
    const int denom = std::min(quart, window_width);
    for (const auto& row : scores) {
        std::vector<int> idx(S);
        for (int i = 0; i < S; ++i) idx[i] = i;
        std::partial_sort(idx.begin(), idx.begin() + quart, idx.end(),
                          [&row](int a, int b) { return std::abs(row[a]) > std::abs(row[b]); });
        int inside = 0;
        for (int i = 0; i < quart; ++i)
            if (idx[i] >= window_start && idx[i] < window_start + window_width) ++inside;
        total += static_cast<double>(inside) / denom;
    }
    return total / scores.size();
}

}  // namespace sofa
