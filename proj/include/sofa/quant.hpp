#pragma once

#include <cstdint>
#include <cstdlib>
#include <vector>

#include "sofa/common.hpp"

namespace sofa {

// Integer matrix with a declared storage width. Values live in two's
// complement; the log-domain ops read them through sign-magnitude.
struct QuantMatrix {
    int rows = 0;
    int cols = 0;
    int bit_width = 8;  // one of {4, 8, 16}
    std::vector<int32_t> data;

    QuantMatrix() = default;
    QuantMatrix(int r, int c, int bw)
        : rows(r), cols(c), bit_width(bw), data(static_cast<size_t>(r) * c, 0) {
        check_arg(r >= 0 && c >= 0, "QuantMatrix: negative dimensions");
        check_arg(bw == 4 || bw == 8 || bw == 16, "QuantMatrix: bit_width must be 4, 8 or 16");
    }

    int32_t& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    int32_t at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    const int32_t* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    int32_t* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }

    int32_t min_value() const { return -(int32_t(1) << (bit_width - 1)); }
    int32_t max_value() const { return (int32_t(1) << (bit_width - 1)) - 1; }

    void validate() const {
        check_arg(data.size() == static_cast<size_t>(rows) * cols,
                  "QuantMatrix: data length mismatch");
        for (int32_t v : data)
            check_arg(v >= min_value() && v <= max_value(),
                      "QuantMatrix: element outside declared bit width");
    }
};

struct SignMagnitude {
    uint8_t sign;        // 1 iff negative
    uint32_t magnitude;  // fits in bit_width-1 bits
};

// Two's-complement minimum saturates to the maximum magnitude so the
// magnitude always fits the (W-1)-bit field the LZ encoder works on.
inline SignMagnitude to_sign_magnitude(int32_t x, int bit_width) {
    const int32_t min_v = -(int32_t(1) << (bit_width - 1));
    const uint32_t max_mag = (uint32_t(1) << (bit_width - 1)) - 1;
    if (x == min_v) return {1, max_mag};
    if (x < 0) return {1, static_cast<uint32_t>(-x)};
    return {0, static_cast<uint32_t>(x)};
}

inline int32_t from_sign_magnitude(SignMagnitude sm) {
    return sm.sign ? -static_cast<int32_t>(sm.magnitude)
                   : static_cast<int32_t>(sm.magnitude);
}

// Exact integer product A(r x i) * B(i x c) in a 64-bit accumulator.
inline std::vector<int64_t> exact_matmul_i64(const QuantMatrix& a, const QuantMatrix& b) {
    check_arg(a.cols == b.rows, "exact_matmul_i64: inner dimension mismatch");
    std::vector<int64_t> out(static_cast<size_t>(a.rows) * b.cols, 0);
    for (int r = 0; r < a.rows; ++r) {
        for (int j = 0; j < a.cols; ++j) {
            int64_t av = a.at(r, j);
            if (av == 0) continue;
            const int32_t* brow = b.row(j);
            int64_t* orow = out.data() + static_cast<size_t>(r) * b.cols;
            for (int c = 0; c < b.cols; ++c) orow[c] += av * brow[c];
        }
    }
    return out;
}

// Width-reducing requantization: divides by a fixed power of two chosen from
// the worst-case accumulator range (round toward zero), never from the data,
// so identical shapes always use identical shifts.
inline int requant_shift(int a_bits, int b_bits, int inner, int out_bits) {
    // |acc| <= inner * (2^(a_bits-1)-1) * (2^(b_bits-1)-1) < 2^(a_bits-1 + b_bits-1 + ceil_log2(inner))
    int acc_mag_bits = (a_bits - 1) + (b_bits - 1) + ceil_log2(static_cast<uint64_t>(inner));
    int excess = acc_mag_bits - (out_bits - 1);
    return excess > 0 ? excess : 0;
}

inline QuantMatrix requantize(const std::vector<int64_t>& acc, int rows, int cols,
                              int shift, int out_bits) {
    QuantMatrix out(rows, cols, out_bits);
    const int64_t div = int64_t(1) << shift;
    for (size_t i = 0; i < acc.size(); ++i)
        out.data[i] = static_cast<int32_t>(acc[i] / div);  // trunc toward zero
    return out;
}

}  // namespace sofa
