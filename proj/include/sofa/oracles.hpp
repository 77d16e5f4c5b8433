#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "sofa/common.hpp"
#include "sofa/dlzs.hpp"
#include "sofa/dse.hpp"
#include "sofa/quant.hpp"

// Brute-force references used by tests. Deliberately naive and independent of
// the implementation paths they check: full sorts, three-pass softmax with
// compensated summation, exhaustive sweeps.

namespace sofa::oracle {

// Exact per-row top-k indices: full sort, value descending, ties to the
// lower index. k = 0 yields an empty set.
template <typename T>
std::vector<int> exact_topk(std::span<const T> row, int k) {
    std::vector<int> idx(row.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&row](int a, int b) { return row[a] > row[b]; });
    if (k < static_cast<int>(idx.size())) idx.resize(std::max(0, k));
    return idx;
}

inline std::vector<int> exact_topk_i32(const std::vector<int32_t>& row, int k) {
    return exact_topk(std::span<const int32_t>(row), k);
}

// Naive masked softmax attention, Kahan-summed so the result does not depend
// on accumulation order. mask = per-row list of admissible key indices;
// empty outer vector means no mask (all keys).
inline RealMatrix dense_attention(const RealMatrix& Q, const RealMatrix& K,
                                  const RealMatrix& V, double scale,
                                  const std::vector<std::vector<int>>& mask = {}) {
    check_arg(Q.cols == K.cols && K.rows == V.rows, "dense_attention: shape mismatch");
    RealMatrix O(Q.rows, V.cols);
    std::vector<int> all(K.rows);
    std::iota(all.begin(), all.end(), 0);
    for (int r = 0; r < Q.rows; ++r) {
        const std::vector<int>& keys = mask.empty() ? all : mask[r];
        if (keys.empty()) continue;
        std::vector<double> x(keys.size());
        double m = -std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < keys.size(); ++i) {
            double acc = 0.0, c = 0.0;
            for (int j = 0; j < Q.cols; ++j) {
                double y = Q.at(r, j) * K.at(keys[i], j) - c;
                double t = acc + y;
                c = (t - acc) - y;
                acc = t;
            }
            x[i] = acc * scale;
            m = std::max(m, x[i]);
        }
        double l = 0.0, lc = 0.0;
        for (double& xi : x) {
            xi = std::exp(xi - m);
            double y = xi - lc;
            double t = l + y;
            lc = (t - l) - y;
            l = t;
        }
        for (int j = 0; j < V.cols; ++j) {
            double acc = 0.0, c = 0.0;
            for (size_t i = 0; i < keys.size(); ++i) {
                double y = x[i] * V.at(keys[i], j) - c;
                double t = acc + y;
                c = (t - acc) - y;
                acc = t;
            }
            O.at(r, j) = acc / l;
        }
    }
    return O;
}

// Error profile of the scalar log-domain product over every nonzero operand
// pair at the given width. Exhaustive; zero operands are excluded.
struct LzErrorTable {
    double min_ratio = 0.0;
    double max_ratio = 0.0;
    double mean_ratio = 0.0;
    uint64_t pairs = 0;
    uint64_t sign_mismatches = 0;
};

inline LzErrorTable lz_error_table(int W = 8) {
    check_arg(W == 8, "lz_error_table: exhaustive sweep is defined for W=8");
    LzErrorTable tab;
    tab.min_ratio = std::numeric_limits<double>::infinity();
    double sum = 0.0;
    const int32_t lo = -127, hi = 127;
    for (int32_t x = lo; x <= hi; ++x) {
        if (x == 0) continue;
        for (int32_t y = lo; y <= hi; ++y) {
            if (y == 0) continue;
            SignMagnitude sy = to_sign_magnitude(y, 8);
            int lz = count_leading_zeros(sy.magnitude, 8);
            int64_t approx = approx_product(x, sy.sign, lz, 8);
            int64_t exact = int64_t(x) * y;
            if ((approx < 0) != (exact < 0)) ++tab.sign_mismatches;
            double ratio = static_cast<double>(std::abs(approx)) / std::abs(exact);
            tab.min_ratio = std::min(tab.min_ratio, ratio);
            tab.max_ratio = std::max(tab.max_ratio, ratio);
            sum += ratio;
            ++tab.pairs;
        }
    }
    tab.mean_ratio = sum / tab.pairs;
    return tab;
}

// Spearman rank correlation with average ranks for ties.
inline std::vector<double> ranks_of(std::span<const double> v) {
    std::vector<int> idx(v.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&v](int a, int b) { return v[a] < v[b]; });
    std::vector<double> rank(v.size());
    size_t i = 0;
    while (i < idx.size()) {
        size_t j = i;
        while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
        double avg = 0.5 * (i + j) + 1.0;
        for (size_t t = i; t <= j; ++t) rank[idx[t]] = avg;
        i = j + 1;
    }
    return rank;
}

inline double spearman(std::span<const double> a, std::span<const double> b) {
    check_arg(a.size() == b.size() && a.size() >= 2, "spearman: need matched series");
    auto ra = ranks_of(a), rb = ranks_of(b);
    double ma = 0, mb = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= ra.size();
    mb /= rb.size();
    double num = 0, da = 0, db = 0;
    for (size_t i = 0; i < ra.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma) * (ra[i] - ma);
        db += (rb[i] - mb) * (rb[i] - mb);
    }
    if (da == 0.0 || db == 0.0) return 0.0;
    return num / std::sqrt(da * db);
}

// Full enumeration of a (small) DSE grid.
struct GridMin {
    std::vector<LayerChoice> best;
    ObjectiveParts parts;
};

inline GridMin brute_force_grid_min(const SearchSpace& space, const LenEvaluator& evaluator,
                                    double alpha, double beta) {
    check_arg(space.grid_points() <= 100000, "brute_force_grid_min: grid too large");
    GridMin out;
    out.parts.total = std::numeric_limits<double>::infinity();
    const int ntc = static_cast<int>(SearchSpace::tc_options().size());
    const int nk = static_cast<int>(SearchSpace::k_options().size());
    std::vector<int> enc(static_cast<size_t>(space.num_layers) * 2, 0);
    bool done = false;
    while (!done) {
        std::vector<LayerChoice> r(space.num_layers);
        for (int i = 0; i < space.num_layers; ++i) {
            r[i].tc = SearchSpace::tc_options()[enc[2 * i]];
            r[i].k = SearchSpace::k_options()[enc[2 * i + 1]];
        }
        ObjectiveParts parts = objective(r, space, evaluator, alpha, beta);
        if (parts.total < out.parts.total) {
            out.parts = parts;
            out.best = r;
        }
        int pos = static_cast<int>(enc.size()) - 1;
        while (pos >= 0) {
            int lim = (pos % 2 == 0) ? ntc : nk;
            if (++enc[pos] < lim) break;
            enc[pos] = 0;
            --pos;
        }
        done = pos < 0;
    }
    return out;
}

inline double max_rel_error(const RealMatrix& got, const RealMatrix& want) {
    check_arg(got.rows == want.rows && got.cols == want.cols, "max_rel_error: shape mismatch");
    double worst = 0.0;
    for (size_t i = 0; i < got.data.size(); ++i) {
        double denom = std::max(1e-300, std::abs(want.data[i]));
        double rel = std::abs(got.data[i] - want.data[i]) / denom;
        // Near-zero reference entries are compared absolutely.
        if (std::abs(want.data[i]) < 1e-12)
            rel = std::abs(got.data[i] - want.data[i]);
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace sofa::oracle
