#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "sofa/common.hpp"
#include "sofa/costmodel.hpp"
#include "sofa/sads.hpp"

namespace sofa {

// Sorted-updating FlashAttention. The formal stage runs in doubles; the
// mechanisms under test are the update orders and their op counts, not the
// storage format.
//
// Tally scopes:
//   update    - softmax bookkeeping: score scaling, max checks, exponentials,
//               normalizer maintenance, accumulator rescales
//   mac       - q.k products and e*v accumulation (systolic-array work,
//               identical across update orders)
//   normalize - the final o/l divide
struct SufaTally {
    OpTally update;
    OpTally mac;
    OpTally normalize;
    OpTally total() const { return update + mac + normalize; }
};

struct AttentionResult {
    RealMatrix O;
    SufaTally tally;
    std::vector<SufaTally> row_tallies;
    uint64_t correction_events = 0;
    std::vector<uint8_t> empty_rows;  // rows with an empty FC set stay zero
};

// Online-softmax state carried across sub-blocks of one query row.
struct SufaState {
    double m = 0.0;  // running max of processed scores
    double l = 0.0;  // running denominator
    std::vector<double> o;
    int processed = 0;
};

namespace detail {

inline double scaled_score(const double* q, const double* k, int d, double scale,
                           SufaTally& t) {
    double acc = 0.0;
    for (int i = 0; i < d; ++i) acc += q[i] * k[i];
    t.mac.mul += d;
    t.mac.add += d > 0 ? d - 1 : 0;
    t.update.mul += 1;  // scale
    return acc * scale;
}

inline void finish_row(SufaState& st, double* out, int d, SufaTally& t) {
    for (int i = 0; i < d; ++i) out[i] = st.o[i] / st.l;
    t.normalize.div += d;
}

}  // namespace detail

// Descending update: the running max is pinned by the first
// entry, so a well-predicted step costs one exp and one add for l. A score
// that beats the current max means the prediction was wrong; the correction
// path rescales l and o (standard online-softmax identity) and bumps the max.
inline void sufa_descending_step(SufaState& st, double x, const double* v, int d,
                                 SufaTally& t, uint64_t& corrections) {
    if (st.processed == 0) {
        st.m = x;
        st.l = 1.0;
        st.o.assign(v, v + d);
        st.processed = 1;
        t.update.cmp += 1;  // max-update mode on the first entry
        return;
    }
    t.update.cmp += 1;
    if (x <= st.m) {
        double arg = x - st.m;
        check_state(arg <= 0.0, "sufa: exponent argument must be <= 0 under a correct max");
        double e = std::exp(arg);
        t.update.add += 1;
        t.update.exp += 1;
        st.l += e;
        t.update.add += 1;
        for (int i = 0; i < d; ++i) st.o[i] += e * v[i];
        t.mac.mul += d;
        t.mac.add += d;
    } else {
        double a = std::exp(st.m - x);
        t.update.add += 1;
        t.update.exp += 1;
        st.l = st.l * a + 1.0;
        t.update.mul += 1;
        t.update.add += 1;
        for (int i = 0; i < d; ++i) st.o[i] = st.o[i] * a + v[i];
        t.mac.mul += d;
        t.mac.add += d;
        st.m = x;
        ++corrections;
    }
    ++st.processed;
}

// Ascending update: every well-predicted step raises the max, so l needs an
// extra multiply (l = l*a + 1) compared to the descending form.
inline void sufa_ascending_step(SufaState& st, double x, const double* v, int d,
                                SufaTally& t, uint64_t& corrections) {
    if (st.processed == 0) {
        st.m = x;
        st.l = 1.0;
        st.o.assign(v, v + d);
        st.processed = 1;
        t.update.cmp += 1;
        return;
    }
    t.update.cmp += 1;
    if (x >= st.m) {
        double a = std::exp(st.m - x);
        t.update.add += 1;
        t.update.exp += 1;
        st.l = st.l * a + 1.0;
        t.update.mul += 1;
        t.update.add += 1;
        for (int i = 0; i < d; ++i) st.o[i] = st.o[i] * a + v[i];
        t.mac.mul += d;
        t.mac.add += d;
        st.m = x;
    } else {
        // Out-of-order score in ascending mode; falls back to the fixed-max step.
        double e = std::exp(x - st.m);
        t.update.add += 1;
        t.update.exp += 1;
        st.l += e;
        t.update.add += 1;
        for (int i = 0; i < d; ++i) st.o[i] += e * v[i];
        t.mac.mul += d;
        t.mac.add += d;
        ++corrections;
    }
    ++st.processed;
}

namespace detail {

template <bool Ascending>
AttentionResult sufa_run(const RealMatrix& Q, const RealMatrix& K, const RealMatrix& V,
                         const FCSet& fc_sets, double scale) {
    check_arg(Q.cols == K.cols && K.rows == V.rows && K.cols > 0, "sufa: shape mismatch");
    check_arg(static_cast<int>(fc_sets.size()) == Q.rows, "sufa: one FC row per query");
    const int d_out = V.cols;
    AttentionResult res;
    res.O = RealMatrix(Q.rows, d_out);
    res.empty_rows.assign(Q.rows, 0);

    std::vector<SufaTally> tallies(Q.rows);
    std::vector<uint64_t> corr(Q.rows, 0);
    parallel_for_rows(Q.rows, [&](int r) {
        const FCRow& fc = fc_sets[r];
        if (fc.entries.empty()) {
            res.empty_rows[r] = 1;
            return;
        }
        SufaTally& t = tallies[r];
        SufaState st;
        st.o.resize(d_out, 0.0);
        const double* q = Q.row(r);
        auto process = [&](const SelEntry& e) {
            check_arg(e.index >= 0 && e.index < K.rows, "sufa: key index out of range");
            double x = scaled_score(q, K.row(e.index), K.cols, scale, t);
            check_arg(std::isfinite(x), "sufa: non-finite score");
            if constexpr (Ascending)
                sufa_ascending_step(st, x, V.row(e.index), d_out, t, corr[r]);
            else
                sufa_descending_step(st, x, V.row(e.index), d_out, t, corr[r]);
        };
        if constexpr (Ascending) {
            for (auto it = fc.entries.rbegin(); it != fc.entries.rend(); ++it) process(*it);
        } else {
            for (const auto& e : fc.entries) process(e);
        }
        finish_row(st, res.O.row(r), d_out, t);
        for (int i = 0; i < d_out; ++i)
            check_state(std::isfinite(res.O.at(r, i)), "sufa: non-finite output");
    });
    for (int r = 0; r < Q.rows; ++r) {
        res.tally.update += tallies[r].update;
        res.tally.mac += tallies[r].mac;
        res.tally.normalize += tallies[r].normalize;
        res.correction_events += corr[r];
    }
    res.row_tallies = std::move(tallies);
    return res;
}

}  // namespace detail

// FC entries are consumed in the order given (descending predicted score in
// the normal flow); correctness does not depend on the prediction quality.
inline AttentionResult sufa_descending(const RealMatrix& Q, const RealMatrix& K,
                                       const RealMatrix& V, const FCSet& fc_sets,
                                       double scale) {
    return detail::sufa_run<false>(Q, K, V, fc_sets, scale);
}

inline AttentionResult sufa_ascending(const RealMatrix& Q, const RealMatrix& K,
                                      const RealMatrix& V, const FCSet& fc_sets,
                                      double scale) {
    return detail::sufa_run<true>(Q, K, V, fc_sets, scale);
}

// ---------------------------------------------------------------------------
// Classical references
// ---------------------------------------------------------------------------

// FA-2-style tiled pass over the given key indices (index order, no sorting
// information). Each tile may refresh the running max, which costs a rescale
// of l and of the d-dimensional accumulator.
inline AttentionResult flash_attention_selected(const RealMatrix& Q, const RealMatrix& K,
                                                const RealMatrix& V,
                                                const std::vector<std::vector<int>>& rows,
                                                int tile_size, double scale) {
    check_arg(tile_size >= 1, "flash: tile size must be >= 1");
    check_arg(static_cast<int>(rows.size()) == Q.rows, "flash: one index list per query");
    const int d = K.cols;
    const int d_out = V.cols;
    AttentionResult res;
    res.O = RealMatrix(Q.rows, d_out);
    res.empty_rows.assign(Q.rows, 0);

    std::vector<SufaTally> tallies(Q.rows);
    parallel_for_rows(Q.rows, [&](int r) {
        const auto& keys = rows[r];
        if (keys.empty()) {
            res.empty_rows[r] = 1;
            return;
        }
        SufaTally& t = tallies[r];
        double m = -std::numeric_limits<double>::infinity();
        double l = 0.0;
        std::vector<double> o(d_out, 0.0);
        std::vector<double> x(tile_size);
        const double* q = Q.row(r);
        for (size_t tile = 0; tile < keys.size(); tile += tile_size) {
            size_t hi = std::min(keys.size(), tile + tile_size);
            double tile_max = -std::numeric_limits<double>::infinity();
            for (size_t i = tile; i < hi; ++i) {
                x[i - tile] = detail::scaled_score(q, K.row(keys[i]), d, scale, t);
                t.update.cmp += 1;  // tile max scan
                tile_max = std::max(tile_max, x[i - tile]);
            }
            t.update.cmp += 1;  // cross-tile max refresh
            double m_new = std::max(m, tile_max);
            if (l > 0.0) {
                // The tiled algorithm rescales l and the accumulator every
                // tile (the factor is 1 when the max did not move); this
                // per-tile refresh is exactly what the sorted update removes.
                double a = std::exp(m - m_new);
                t.update.add += 1;
                t.update.exp += 1;
                l *= a;
                t.update.mul += 1;
                for (int i = 0; i < d_out; ++i) o[i] *= a;
                t.update.mul += d_out;
            }
            m = m_new;
            for (size_t i = tile; i < hi; ++i) {
                double e = std::exp(x[i - tile] - m);
                t.update.add += 1;
                t.update.exp += 1;
                l += e;
                t.update.add += 1;
                const double* v = V.row(keys[i]);
                for (int j = 0; j < d_out; ++j) o[j] += e * v[j];
                t.mac.mul += d_out;
                t.mac.add += d_out;
            }
        }
        for (int i = 0; i < d_out; ++i) res.O.at(r, i) = o[i] / l;
        t.normalize.div += d_out;
    });
    for (auto& t : tallies) {
        res.tally.update += t.update;
        res.tally.mac += t.mac;
        res.tally.normalize += t.normalize;
    }
    res.row_tallies = std::move(tallies);
    return res;
}

inline AttentionResult flash_attention_reference(const RealMatrix& Q, const RealMatrix& K,
                                                 const RealMatrix& V, int tile_size,
                                                 double scale) {
    std::vector<std::vector<int>> all(Q.rows);
    for (auto& row : all) {
        row.resize(K.rows);
        for (int i = 0; i < K.rows; ++i) row[i] = i;
    }
    return flash_attention_selected(Q, K, V, all, tile_size, scale);
}

// Three-pass baseline: scores, row max + exp + sum, normalize, then P*V.
// Exactly one exp per score.
inline AttentionResult vanilla_attention_reference(const RealMatrix& Q, const RealMatrix& K,
                                                   const RealMatrix& V, double scale) {
    const int d = K.cols;
    const int d_out = V.cols;
    AttentionResult res;
    res.O = RealMatrix(Q.rows, d_out);
    res.empty_rows.assign(Q.rows, 0);
    SufaTally t;
    std::vector<double> x(K.rows), p(K.rows);
    for (int r = 0; r < Q.rows; ++r) {
        const double* q = Q.row(r);
        for (int s = 0; s < K.rows; ++s) x[s] = detail::scaled_score(q, K.row(s), d, scale, t);
        double m = x[0];
        for (int s = 1; s < K.rows; ++s) {
            t.update.cmp += 1;
            m = std::max(m, x[s]);
        }
        double l = 0.0;
        for (int s = 0; s < K.rows; ++s) {
            p[s] = std::exp(x[s] - m);
            t.update.add += 1;
            t.update.exp += 1;
            l += p[s];
            t.update.add += 1;
        }
        for (int s = 0; s < K.rows; ++s) p[s] /= l;
        t.normalize.div += K.rows;
        for (int s = 0; s < K.rows; ++s) {
            const double* v = V.row(s);
            for (int j = 0; j < d_out; ++j) res.O.at(r, j) += p[s] * v[j];
            t.mac.mul += d_out;
            t.mac.add += d_out;
        }
    }
    res.tally = t;
    return res;
}

}  // namespace sofa
