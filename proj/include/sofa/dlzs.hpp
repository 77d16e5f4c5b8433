#pragma once

#include <cstdint>
#include <vector>

#include "sofa/common.hpp"
#include "sofa/costmodel.hpp"
#include "sofa/quant.hpp"

namespace sofa {

// ---------------------------------------------------------------------------
// Leading-zero convention, used everywhere:
//   * magnitudes occupy a (W-1)-bit field (sign-magnitude, saturated min),
//   * lz is the leading-zero count of that field: the top magnitude bit gives
//     lz = 0, magnitude 1 gives lz = W-2 (6 for W=8, 14 for W=16),
//   * an all-zero magnitude sets the zero flag and reports the sentinel lz = W,
//   * the shift a log-domain operand applies to the other side is
//     (W-1) - lz, i.e. the bit length of the magnitude, which realizes the
//     2^(W-LZ) scale of the log approximation (LZ there counted over W bits).
// One scalar product is approximated as XOR(sx,sy) * |x| << ((W-1)-lz(y)),
// an overestimate by a factor in (1, 2] because the mantissa of y is dropped.
// ---------------------------------------------------------------------------

struct Lzc8Result {
    int count;      // leading zeros in the 8-bit word
    bool all_zero;  // a_i flag
};

// Bit-serial 8-bit leading-zero counter.
inline Lzc8Result lzc8(uint8_t byte) {
    if (byte == 0) return {8, true};
    int n = 0;
    for (int bit = 7; bit >= 0; --bit) {
        if (byte & (1u << bit)) break;
        ++n;
    }
    return {n, false};
}

// Configurable 8/16-bit counter. The 16-bit mode chains two 8-bit counters
// through their all-zero flags. Returns W as the zero sentinel.
inline int count_leading_zeros(uint32_t magnitude, int W) {
    check_arg(W == 8 || W == 16, "count_leading_zeros: W must be 8 or 16");
    check_arg(magnitude < (uint32_t(1) << (W - 1)), "count_leading_zeros: magnitude exceeds field");
    if (magnitude == 0) return W;
    if (W == 8) {
        // Field is the low 7 bits; the forced-0 sign position is skipped.
        return lzc8(static_cast<uint8_t>(magnitude)).count - 1;
    }
    Lzc8Result hi = lzc8(static_cast<uint8_t>(magnitude >> 8));
    Lzc8Result lo = lzc8(static_cast<uint8_t>(magnitude & 0xFF));
    int over16 = hi.all_zero ? 8 + lo.count : hi.count;
    return over16 - 1;  // skip the forced-0 sign position
}

inline int lz_shift_amount(int lz, int W) { return (W - 1) - lz; }

// Per-element (sign, leading-zero) encoding of a quantized matrix.
struct LZMatrix {
    int rows = 0;
    int cols = 0;
    int source_bit_width = 8;
    std::vector<uint8_t> signs;
    std::vector<uint8_t> lz;
    std::vector<uint8_t> zero_flags;

    size_t idx(int r, int c) const { return static_cast<size_t>(r) * cols + c; }
};

inline LZMatrix encode_lz(const QuantMatrix& m) {
    check_arg(m.bit_width == 8 || m.bit_width == 16, "encode_lz: bit_width must be 8 or 16");
    LZMatrix out;
    out.rows = m.rows;
    out.cols = m.cols;
    out.source_bit_width = m.bit_width;
    size_t n = m.data.size();
    out.signs.resize(n);
    out.lz.resize(n);
    out.zero_flags.resize(n);
    for (size_t i = 0; i < n; ++i) {
        SignMagnitude sm = to_sign_magnitude(m.data[i], m.bit_width);
        out.signs[i] = sm.sign;
        if (sm.magnitude == 0) {
            out.zero_flags[i] = 1;
            out.lz[i] = static_cast<uint8_t>(m.bit_width);
        } else {
            out.zero_flags[i] = 0;
            out.lz[i] = static_cast<uint8_t>(count_leading_zeros(sm.magnitude, m.bit_width));
        }
    }
    return out;
}

// Scalar log-domain product estimate; the shared primitive under test.
inline int64_t approx_product(int32_t x, uint8_t sign_y, int lz_y, int W_y) {
    if (x == 0) return 0;
    SignMagnitude sx = to_sign_magnitude(x, 32);
    int64_t mag = static_cast<int64_t>(sx.magnitude) << lz_shift_amount(lz_y, W_y);
    return (sx.sign ^ sign_y) ? -mag : mag;
}

struct PredictionConfig {
    int phase1_in_bits = 8;
    int phase1_weight_lz_bits = 4;
    int phase2_in_bits = 16;
    int phase2_lz_bits = 5;
    int truncate_to_bits = 16;
};

struct DlzsStats {
    uint64_t used_terms = 0;
    uint64_t skipped_terms = 0;  // removed by the zero eliminator
};

// Multiplication-free matrix product: lhs stays in the integer domain, rhs is
// pre-encoded to (sign, lz). Zero operands never enter the shift array.
// Output is truncated to cfg.truncate_to_bits by a fixed power-of-two divide
// (round toward zero) derived from the worst-case accumulator range.
inline QuantMatrix dlzs_matmul(const QuantMatrix& lhs, const LZMatrix& rhs,
                               const PredictionConfig& cfg, OpTally* tally = nullptr,
                               DlzsStats* stats = nullptr) {
    check_arg(lhs.cols == rhs.rows, "dlzs_matmul: inner dimension mismatch");
    const int W = rhs.source_bit_width;
    const int out_bits = cfg.truncate_to_bits;
    const int shift_out = requant_shift(lhs.bit_width, W, lhs.cols, out_bits);
    const int64_t div = int64_t(1) << shift_out;

    QuantMatrix out(lhs.rows, rhs.cols, out_bits);
    OpTally t;
    DlzsStats st;
    for (int r = 0; r < lhs.rows; ++r) {
        const int32_t* lrow = lhs.row(r);
        for (int c = 0; c < rhs.cols; ++c) {
            int64_t acc = 0;
            for (int j = 0; j < lhs.cols; ++j) {
                size_t ri = rhs.idx(j, c);
                if (lrow[j] == 0 || rhs.zero_flags[ri]) {
                    ++st.skipped_terms;
                    continue;
                }
                acc += approx_product(lrow[j], rhs.signs[ri], rhs.lz[ri], W);
                ++st.used_terms;
            }
            out.at(r, c) = static_cast<int32_t>(acc / div);
        }
    }
    t.shift = st.used_terms;
    t.add = st.used_terms;
    if (tally) *tally += t;
    if (stats) {
        stats->used_terms += st.used_terms;
        stats->skipped_terms += st.skipped_terms;
    }
    return out;
}

// Phase 1.1: K-hat = X (8-bit tokens) x Wk (pre-converted to LZ format).
inline QuantMatrix predict_khat(const QuantMatrix& X, const LZMatrix& Wk_lz,
                                const PredictionConfig& cfg, OpTally* tally = nullptr,
                                DlzsStats* stats = nullptr) {
    check_arg(X.bit_width == cfg.phase1_in_bits, "predict_khat: X must match phase-1 width");
    check_arg(Wk_lz.source_bit_width == 8, "predict_khat: weights are 8-bit");
    return dlzs_matmul(X, Wk_lz, cfg, tally, stats);
}

// Phase 1.2: A-hat[t][s] estimates q_t . k_s. Q (not K-hat) is the log-domain
// operand here, which keeps the phase-1 truncation error out of the encode.
inline QuantMatrix predict_ahat(const QuantMatrix& Q, const QuantMatrix& Khat,
                                const PredictionConfig& cfg, OpTally* tally = nullptr,
                                DlzsStats* stats = nullptr) {
    check_arg(Q.bit_width == cfg.phase2_in_bits, "predict_ahat: Q must match phase-2 width");
    check_arg(Q.cols == Khat.cols, "predict_ahat: head_dim mismatch");
    const int W = Q.bit_width;
    const int out_bits = cfg.truncate_to_bits;
    const int shift_out = requant_shift(Khat.bit_width, W, Q.cols, out_bits);
    const int64_t div = int64_t(1) << shift_out;
    const LZMatrix q_lz = encode_lz(Q);

    QuantMatrix out(Q.rows, Khat.rows, out_bits);
    std::vector<OpTally> row_tallies(Q.rows);
    std::vector<DlzsStats> row_stats(Q.rows);
    parallel_for_rows(Q.rows, [&](int t_row) {
        DlzsStats st;
        for (int s = 0; s < Khat.rows; ++s) {
            int64_t acc = 0;
            for (int h = 0; h < Q.cols; ++h) {
                size_t qi = q_lz.idx(t_row, h);
                int32_t kv = Khat.at(s, h);
                if (kv == 0 || q_lz.zero_flags[qi]) {
                    ++st.skipped_terms;
                    continue;
                }
                acc += approx_product(kv, q_lz.signs[qi], q_lz.lz[qi], W);
                ++st.used_terms;
            }
            out.at(t_row, s) = static_cast<int32_t>(acc / div);
        }
        row_tallies[t_row].shift = st.used_terms;
        row_tallies[t_row].add = st.used_terms;
        row_stats[t_row] = st;
    });
    for (int r = 0; r < Q.rows; ++r) {
        if (tally) *tally += row_tallies[r];
        if (stats) {
            stats->used_terms += row_stats[r].used_terms;
            stats->skipped_terms += row_stats[r].skipped_terms;
        }
    }
    return out;
}

}  // namespace sofa
