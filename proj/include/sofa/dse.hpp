#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <set>
#include <vector>

#include "sofa/common.hpp"
#include "sofa/rng.hpp"

namespace sofa {

// Design-space exploration over per-layer tile counts and top-k ratios.
// Objective: J(R) = L_en + alpha * L_cmp + beta * L_exp with
//   L_cmp = sum_i(B_ci * k_i) / sum_i(S_i * k_i),   B_ci = S_i / Tc_i
//   L_exp = sum_i(S_i / B_ci) = sum_i Tc_i
// L_en comes from a pluggable evaluator (at desk scale a pipeline-vs-oracle
// error proxy stands in for the cross-entropy term).

struct SearchSpace {
    int num_layers = 1;
    std::vector<int> seq_len = {1024};  // per layer

    static const std::vector<int>& tc_options() {
        static const std::vector<int> v = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24, 26, 28, 30, 32};
        return v;
    }
    static const std::vector<double>& k_options() {
        static const std::vector<double> v = {0.05, 0.10, 0.15, 0.20, 0.25,
                                              0.30, 0.35, 0.40, 0.45, 0.50};
        return v;
    }
    uint64_t grid_points() const {
        uint64_t per_layer = tc_options().size() * k_options().size();
        uint64_t total = 1;
        for (int i = 0; i < num_layers; ++i) total *= per_layer;
        return total;
    }
};

struct LayerChoice {
    int tc = 8;
    double k = 0.25;
};

using LenEvaluator = std::function<double(const std::vector<LayerChoice>&)>;

struct DseConfig {
    double alpha = 0.0;
    double beta = 0.0;
    int max_iter = 200;
    int init_samples = 10;
    double gp_length_scale = 0.2;  // on [0,1]-normalized coordinates
    double gp_noise = 1e-4;
    int patience = 30;             // iterations without incumbent improvement
    int acq_candidates = 512;      // random-subset size when the grid is large
    uint64_t seed = 1;
    bool tie_k_global = false;     // one shared k index across layers
};

struct ObjectiveParts {
    double total = 0.0;
    double len = 0.0;
    double cmp = 0.0;
    double exp_penalty = 0.0;
};

namespace detail {

inline int find_tc_index(int tc) {
    const auto& opts = SearchSpace::tc_options();
    for (size_t i = 0; i < opts.size(); ++i)
        if (opts[i] == tc) return static_cast<int>(i);
    return -1;
}

inline int find_k_index(double k) {
    const auto& opts = SearchSpace::k_options();
    for (size_t i = 0; i < opts.size(); ++i)
        if (std::abs(opts[i] - k) < 1e-9) return static_cast<int>(i);
    return -1;
}

}  // namespace detail

inline void validate_on_grid(const SearchSpace& space, const std::vector<LayerChoice>& r) {
    check_arg(static_cast<int>(r.size()) == space.num_layers, "dse: wrong layer count");
    for (const auto& c : r) {
        check_arg(detail::find_tc_index(c.tc) >= 0, "dse: Tc not on the search grid");
        check_arg(detail::find_k_index(c.k) >= 0, "dse: top-k ratio not on the search grid");
    }
}

inline ObjectiveParts objective(const std::vector<LayerChoice>& r, const SearchSpace& space,
                                const LenEvaluator& evaluator, double alpha, double beta) {
    validate_on_grid(space, r);
    ObjectiveParts parts;
    double cmp_num = 0.0, cmp_den = 0.0;
    for (int i = 0; i < space.num_layers; ++i) {
        double S = space.seq_len[i];
        double bc = S / r[i].tc;
        cmp_num += bc * r[i].k;
        cmp_den += S * r[i].k;
        parts.exp_penalty += S / bc;  // == Tc_i
    }
    parts.cmp = cmp_den > 0.0 ? cmp_num / cmp_den : 0.0;
    parts.len = evaluator(r);
    parts.total = parts.len + alpha * parts.cmp + beta * parts.exp_penalty;
    return parts;
}

struct DseSample {
    std::vector<int> encoded;  // (tc_idx, k_idx) per layer
    ObjectiveParts parts;
    bool failed = false;
};

struct DseResult {
    std::vector<LayerChoice> best;
    ObjectiveParts best_parts;
    std::vector<DseSample> history;
    std::vector<double> incumbent_trace;  // incumbent J after each evaluation
    int evaluations = 0;
    bool converged_early = false;
};

// ---------------------------------------------------------------------------
// Gaussian-process surrogate (fixed hyperparameters, squared-exponential
// kernel over normalized grid coordinates) and expected improvement.
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<double> normalize_point(const std::vector<int>& enc) {
    const double tmax = static_cast<double>(SearchSpace::tc_options().size() - 1);
    const double kmax = static_cast<double>(SearchSpace::k_options().size() - 1);
    std::vector<double> x(enc.size());
    for (size_t i = 0; i < enc.size(); ++i)
        x[i] = enc[i] / ((i % 2 == 0) ? tmax : kmax);
    return x;
}

inline double se_kernel(const std::vector<double>& a, const std::vector<double>& b,
                        double length_scale) {
    double d2 = 0.0;
    for (size_t i = 0; i < a.size(); ++i) d2 += (a[i] - b[i]) * (a[i] - b[i]);
    return std::exp(-0.5 * d2 / (length_scale * length_scale));
}

struct GpModel {
    std::vector<std::vector<double>> x;
    std::vector<double> y;          // standardized
    std::vector<double> chol;       // lower-triangular factor, row-major
    std::vector<double> alpha_vec;  // K^-1 y
    double y_mean = 0.0, y_std = 1.0;
    double length_scale = 0.2, noise = 1e-4;
    int n = 0;

    void fit(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
             double ls, double ns) {
        x = xs;
        length_scale = ls;
        noise = ns;
        n = static_cast<int>(xs.size());
        y_mean = 0.0;
        for (double v : ys) y_mean += v;
        y_mean /= n;
        double var = 0.0;
        for (double v : ys) var += (v - y_mean) * (v - y_mean);
        y_std = n > 1 ? std::sqrt(var / (n - 1)) : 1.0;
        if (y_std < 1e-12) y_std = 1.0;
        y.resize(n);
        for (int i = 0; i < n; ++i) y[i] = (ys[i] - y_mean) / y_std;

        std::vector<double> K(static_cast<size_t>(n) * n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j) {
                double v = se_kernel(x[i], x[j], length_scale);
                if (i == j) v += noise;
                K[static_cast<size_t>(i) * n + j] = v;
                K[static_cast<size_t>(j) * n + i] = v;
            }
        // Cholesky with escalating jitter; the kernel matrix is near-singular
        // when sampled points nearly coincide.
        double jitter = 0.0;
        for (int attempt = 0; attempt < 6; ++attempt) {
            chol.assign(K.begin(), K.end());
            if (jitter > 0.0)
                for (int i = 0; i < n; ++i) chol[static_cast<size_t>(i) * n + i] += jitter;
            if (cholesky_inplace()) break;
            jitter = jitter == 0.0 ? 1e-8 : jitter * 100.0;
        }
        alpha_vec = solve(y);
    }

    bool cholesky_inplace() {
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j <= i; ++j) {
                double sum = chol[static_cast<size_t>(i) * n + j];
                for (int k = 0; k < j; ++k)
                    sum -= chol[static_cast<size_t>(i) * n + k] * chol[static_cast<size_t>(j) * n + k];
                if (i == j) {
                    if (sum <= 0.0) return false;
                    chol[static_cast<size_t>(i) * n + j] = std::sqrt(sum);
                } else {
                    chol[static_cast<size_t>(i) * n + j] = sum / chol[static_cast<size_t>(j) * n + j];
                }
            }
            for (int j = i + 1; j < n; ++j) chol[static_cast<size_t>(i) * n + j] = 0.0;
        }
        return true;
    }

    std::vector<double> solve(const std::vector<double>& rhs) const {
        std::vector<double> z(n);
        for (int i = 0; i < n; ++i) {
            double sum = rhs[i];
            for (int k = 0; k < i; ++k) sum -= chol[static_cast<size_t>(i) * n + k] * z[k];
            z[i] = sum / chol[static_cast<size_t>(i) * n + i];
        }
        std::vector<double> out(n);
        for (int i = n - 1; i >= 0; --i) {
            double sum = z[i];
            for (int k = i + 1; k < n; ++k) sum -= chol[static_cast<size_t>(k) * n + i] * out[k];
            out[i] = sum / chol[static_cast<size_t>(i) * n + i];
        }
        return out;
    }

    void predict(const std::vector<double>& q, double& mean, double& var) const {
        std::vector<double> kx(n);
        for (int i = 0; i < n; ++i) kx[i] = se_kernel(q, x[i], length_scale);
        double mu = 0.0;
        for (int i = 0; i < n; ++i) mu += kx[i] * alpha_vec[i];
        // v = L^-1 kx
        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) {
            double sum = kx[i];
            for (int k = 0; k < i; ++k) sum -= chol[static_cast<size_t>(i) * n + k] * v[k];
            v[i] = sum / chol[static_cast<size_t>(i) * n + i];
        }
        double vv = 0.0;
        for (int i = 0; i < n; ++i) vv += v[i] * v[i];
        var = std::max(1e-12, 1.0 + noise - vv);
        mean = mu * y_std + y_mean;
        var *= y_std * y_std;
    }
};

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double normal_pdf(double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * 3.14159265358979323846);
}

// Expected improvement below the incumbent (minimization).
inline double expected_improvement(double mean, double var, double best) {
    double sigma = std::sqrt(var);
    if (sigma < 1e-12) return std::max(0.0, best - mean);
    double z = (best - mean) / sigma;
    return (best - mean) * normal_cdf(z) + sigma * normal_pdf(z);
}

inline std::vector<int> random_point(const SearchSpace& space, const DseConfig& cfg,
                                     SplitMix64& rng) {
    std::vector<int> enc(static_cast<size_t>(space.num_layers) * 2);
    int shared_k = static_cast<int>(rng.bounded(SearchSpace::k_options().size()));
    for (int i = 0; i < space.num_layers; ++i) {
        enc[2 * i] = static_cast<int>(rng.bounded(SearchSpace::tc_options().size()));
        enc[2 * i + 1] =
            cfg.tie_k_global ? shared_k : static_cast<int>(rng.bounded(SearchSpace::k_options().size()));
    }
    return enc;
}

inline std::vector<LayerChoice> decode(const std::vector<int>& enc) {
    std::vector<LayerChoice> r(enc.size() / 2);
    for (size_t i = 0; i < r.size(); ++i) {
        r[i].tc = SearchSpace::tc_options()[enc[2 * i]];
        r[i].k = SearchSpace::k_options()[enc[2 * i + 1]];
    }
    return r;
}

}  // namespace detail

// Bayesian search: seed with random samples, then loop fit-surrogate /
// maximize-EI / evaluate until the budget runs out or the incumbent stalls
// for cfg.patience iterations. Evaluator failures are recorded as +inf and
// excluded from the surrogate.
inline DseResult run_dse(const SearchSpace& space, const DseConfig& cfg,
                         const LenEvaluator& evaluator) {
    check_arg(cfg.alpha >= 0.0 && cfg.beta >= 0.0, "dse: alpha/beta must be >= 0");
    check_arg(cfg.init_samples >= 1, "dse: need at least one initial sample");
    check_arg(static_cast<int>(space.seq_len.size()) == space.num_layers,
              "dse: seq_len per layer");

    SplitMix64 rng(substream_seed(cfg.seed, 0xD5E));
    DseResult res;
    res.best_parts.total = std::numeric_limits<double>::infinity();
    std::set<std::vector<int>> visited;

    auto evaluate = [&](const std::vector<int>& enc) {
        DseSample sample;
        sample.encoded = enc;
        auto r = detail::decode(enc);
        try {
            sample.parts = objective(r, space, evaluator, cfg.alpha, cfg.beta);
            sample.failed = !std::isfinite(sample.parts.total);
        } catch (const std::exception&) {
            sample.failed = true;
        }
        if (sample.failed) sample.parts.total = std::numeric_limits<double>::infinity();
        if (sample.parts.total < res.best_parts.total) {
            res.best_parts = sample.parts;
            res.best = r;
        }
        res.history.push_back(sample);
        res.incumbent_trace.push_back(res.best_parts.total);
        ++res.evaluations;
        visited.insert(enc);
    };

    uint64_t grid = space.grid_points();
    int init = static_cast<int>(std::min<uint64_t>(cfg.init_samples, grid));
    for (int i = 0; i < init; ++i) {
        auto enc = detail::random_point(space, cfg, rng);
        int guard = 0;
        while (visited.count(enc) && guard++ < 64) enc = detail::random_point(space, cfg, rng);
        evaluate(enc);
    }

    int stall = 0;
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        if (stall >= cfg.patience) {
            res.converged_early = true;
            break;
        }
        // Fit the surrogate on successful samples only.
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        for (const auto& s : res.history) {
            if (s.failed) continue;
            xs.push_back(detail::normalize_point(s.encoded));
            ys.push_back(s.parts.total);
        }
        if (xs.empty()) break;

        detail::GpModel gp;
        gp.fit(xs, ys, cfg.gp_length_scale, cfg.gp_noise);

        // Acquisition: exhaustive scan over a candidate subset of the grid.
        std::vector<std::vector<int>> candidates;
        if (grid <= static_cast<uint64_t>(cfg.acq_candidates)) {
            std::vector<int> enc(static_cast<size_t>(space.num_layers) * 2, 0);
            const int ntc = static_cast<int>(SearchSpace::tc_options().size());
            const int nk = static_cast<int>(SearchSpace::k_options().size());
            bool done = false;
            while (!done) {
                if (!visited.count(enc)) candidates.push_back(enc);
                int pos = static_cast<int>(enc.size()) - 1;
                while (pos >= 0) {
                    int lim = (pos % 2 == 0) ? ntc : nk;
                    if (++enc[pos] < lim) break;
                    enc[pos] = 0;
                    --pos;
                }
                done = pos < 0;
            }
        } else {
            for (int i = 0; i < cfg.acq_candidates; ++i) {
                auto enc = detail::random_point(space, cfg, rng);
                if (!visited.count(enc)) candidates.push_back(enc);
            }
        }
        if (candidates.empty()) break;

        double best_ei = -1.0;
        const std::vector<int>* pick = nullptr;
        for (const auto& c : candidates) {
            double mean, var;
            gp.predict(detail::normalize_point(c), mean, var);
            double ei = detail::expected_improvement(mean, var, res.best_parts.total);
            if (ei > best_ei) {
                best_ei = ei;
                pick = &c;
            }
        }
        double before = res.best_parts.total;
        evaluate(*pick);
        stall = res.best_parts.total < before ? 0 : stall + 1;
    }
    return res;
}

// Published per-model penalty presets.
inline bool alpha_beta_preset(const std::string& name, double& alpha, double& beta) {
    if (name == "bert-b" || name == "bert-l") { alpha = 0.24; beta = 0.31; return true; }
    if (name == "vit") { alpha = 0.20; beta = 0.24; return true; }
    if (name == "gpt2") { alpha = 0.40; beta = 0.42; return true; }
    if (name == "bloom") { alpha = 0.53; beta = 0.56; return true; }
    if (name == "llama") { alpha = 0.58; beta = 0.63; return true; }
    return false;
}

}  // namespace sofa
