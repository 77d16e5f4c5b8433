#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <vector>

#include "sofa/attention.hpp"
#include "sofa/costmodel.hpp"
#include "sofa/dlzs.hpp"
#include "sofa/oracles.hpp"
#include "sofa/rass.hpp"
#include "sofa/sads.hpp"
#include "sofa/workload.hpp"

namespace sofa {

// End-to-end flow: DLZS prediction -> SADS selection per tile -> RASS
// scheduling -> on-demand KV generation for selected keys -> SU-FA in
// descending predicted order, with per-stage tallies and oracle comparisons.

struct LayerTiling {
    int num_segments = 4;     // = Tc; segment length = S / Tc = Bc
    double k_fraction = 0.25; // selected share of the row
};

struct PipelineConfig {
    LayerTiling tiling;
    PredictionConfig pred;
    int64_t clip_radius = kInfiniteRadius;
    OpWeights weights;
    MemoryModel mem;
    ThroughputModel throughput;
    Dataflow dataflow = Dataflow::Tiled;
    bool rass_enabled = true;
    int rass_phase_capacity = 128;  // mirrors the 128-query engine batch
    // The formal stage maps integer scores onto logits with this target
    // standard deviation; keeps softmax in a meaningful range for any dims.
    double logit_target_std = 2.0;
    // Recall / output-error comparisons cost O(T*S*d); model-only sweeps can
    // switch them off.
    bool with_oracles = true;
};

struct RunSummary {
    RealMatrix O;
    SufaTally formal_tally;
    OpTally prediction_tally;
    OpTally sorting_tally;
    OpTally kv_gen_tally;
    uint64_t correction_events = 0;

    double recall_mean = 0.0;    // selected vs exact top-k
    double rel_err_mean = 0.0;   // output error vs dense oracle (selection loss)
    double rel_err_max = 0.0;

    double weighted_dense_attention = 0.0;
    double weighted_formal = 0.0;
    double weighted_prediction = 0.0;
    double weighted_sorting = 0.0;
    double weighted_kv_gen = 0.0;
    double weighted_dense_qkv = 0.0;
    double reduction_attention_only = 0.0;  // 1 - formal/dense
    double net_saving_weighted = 0.0;       // dense - formal - prediction - sorting
    double reduction_net = 0.0;             // net_saving / dense
    double reduction_attention_qkv = 0.0;   // includes on-demand KV generation savings

    uint64_t kv_fetches_rass = 0;
    uint64_t kv_fetches_baseline = 0;
    uint64_t kv_fetch_bytes = 0;  // bytes under the active policy
    uint64_t selected_union_keys = 0;
    uint64_t clipped_values = 0;
    uint64_t prediction_skipped_terms = 0;

    double scale_used = 0.0;
    int num_tiles = 1;
    bool tile_spill_warning = false;
    CostReport cost;
    FCSet fc_sets;
};

namespace detail {

inline RealMatrix to_real(const QuantMatrix& m) {
    RealMatrix out(m.rows, m.cols);
    for (size_t i = 0; i < m.data.size(); ++i) out.data[i] = m.data[i];
    return out;
}

inline double rms(const QuantMatrix& m) {
    if (m.data.empty()) return 0.0;
    double acc = 0.0;
    for (int32_t v : m.data) acc += static_cast<double>(v) * v;
    return std::sqrt(acc / m.data.size());
}

// Closed-form tally of the three-pass dense baseline; mirrors
// vanilla_attention_reference op for op.
inline SufaTally vanilla_attention_tally(int T, int S, int d) {
    SufaTally t;
    uint64_t rows = T, keys = S, dim = d;
    t.mac.mul = rows * keys * dim * 2;
    t.mac.add = rows * keys * (dim - 1) + rows * keys * dim;
    t.update.mul = rows * keys;            // score scaling
    t.update.cmp = rows * (keys - 1);      // row max scan
    t.update.add = rows * keys * 2;        // exp argument + accumulate
    t.update.exp = rows * keys;
    t.normalize.div = rows * keys;
    return t;
}

// Dense QKV generation cost (per-key K and V projection, MAC counted).
inline OpTally dense_kv_tally(int S, int d) {
    OpTally t;
    t.mul = uint64_t(2) * S * d * d;
    t.add = uint64_t(2) * S * d * (d > 0 ? d - 1 : 0);
    return t;
}

}  // namespace detail

inline double pipeline_scale(const QuantMatrix& Q, const QuantMatrix& K, double target_std) {
    double rq = detail::rms(Q), rk = detail::rms(K);
    double d = static_cast<double>(Q.cols);
    if (rq <= 0.0 || rk <= 0.0) return 1.0 / std::sqrt(d);
    return target_std / (rq * rk * std::sqrt(d));
}

namespace detail {

// Stage failures surface with the stage name attached.
template <typename Fn>
auto run_stage(const char* name, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw std::runtime_error(std::string("pipeline stage '") + name + "': " + e.what());
    }
}

}  // namespace detail

inline RunSummary run_pipeline(const PipelineConfig& cfg, const Workload& w) {
    check_arg(cfg.tiling.num_segments >= 1, "pipeline: num_segments must be >= 1");
    check_arg(cfg.tiling.k_fraction > 0.0 && cfg.tiling.k_fraction <= 1.0,
              "pipeline: k_fraction must be in (0,1]");
    const int S = w.X.rows, d = w.X.cols, T = w.Q.rows;
    const int n_seg = std::min(cfg.tiling.num_segments, S);
    const int k = std::max(1, static_cast<int>(std::llround(cfg.tiling.k_fraction * S)));

    RunSummary sum;
    sum.num_tiles = n_seg;

    // -- prediction ---------------------------------------------------------
    QuantMatrix ahat = detail::run_stage("prediction", [&] {
        LZMatrix wk_lz = encode_lz(w.Wk);  // pre-converted, free at inference time
        DlzsStats pred_stats;
        QuantMatrix khat = predict_khat(w.X, wk_lz, cfg.pred, &sum.prediction_tally, &pred_stats);
        QuantMatrix a = predict_ahat(w.Q, khat, cfg.pred, &sum.prediction_tally, &pred_stats);
        sum.prediction_skipped_terms = pred_stats.skipped_terms;
        return a;
    });

    // -- distributed top-k per query row -------------------------------------
    detail::run_stage("sorting", [&] {
        SadsConfig sads_cfg;
        sads_cfg.num_segments = n_seg;
        sads_cfg.k = k;
        sads_cfg.r = cfg.clip_radius;
        sum.fc_sets.resize(T);
        for (int t = 0; t < T; ++t) {
            std::span<const int32_t> row(ahat.row(t), static_cast<size_t>(S));
            sum.fc_sets[t] = sads_topk(row, sads_cfg, &sum.sorting_tally, &sum.clipped_values);
        }
        return 0;
    });

    // -- RASS schedule + fetch accounting ------------------------------------
    DemandMap demand = build_demand_map(sum.fc_sets);
    SchedulePlan plan = detail::run_stage(
        "schedule", [&] { return schedule_rass(demand, cfg.rass_phase_capacity); });
    FetchTally rass_fetch = count_memory_access(plan, d, cfg.mem);
    FetchTally base_fetch = count_memory_access_baseline(sum.fc_sets, d, cfg.mem);
    sum.kv_fetches_rass = rass_fetch.kv_fetches;
    sum.kv_fetches_baseline = base_fetch.kv_fetches;
    sum.kv_fetch_bytes = cfg.rass_enabled ? rass_fetch.dram_bytes : base_fetch.dram_bytes;
    sum.selected_union_keys = demand.key_to_queries.size();

    // -- on-demand KV generation (exact integer path) ------------------------
    // Values are bit-identical to the workload's K/V; only the cost of
    // generating the selected union is charged.
    sum.kv_gen_tally.mul = 2 * sum.selected_union_keys * static_cast<uint64_t>(d) * d;
    sum.kv_gen_tally.add =
        2 * sum.selected_union_keys * static_cast<uint64_t>(d) * (d > 0 ? d - 1 : 0);

    // -- formal stage (SU-FA descending) --------------------------------------
    RealMatrix Qr = detail::to_real(w.Q);
    RealMatrix Kr = detail::to_real(w.K);
    RealMatrix Vr = detail::to_real(w.V);
    sum.scale_used = pipeline_scale(w.Q, w.K, cfg.logit_target_std);

    FCSet ordered = sum.fc_sets;
    if (cfg.dataflow == Dataflow::Tiled && n_seg > 1) {
        // SU-FA consumes per-tile sub-blocks in ascending tile order; entries
        // stay score-descending within each tile. State carries across tiles.
        const int seg_len = S / n_seg;
        for (auto& row : ordered) {
            std::stable_sort(row.entries.begin(), row.entries.end(),
                             [seg_len, n_seg](const SelEntry& a, const SelEntry& b) {
                                 int sa = std::min(a.index / seg_len, n_seg - 1);
                                 int sb = std::min(b.index / seg_len, n_seg - 1);
                                 return sa < sb;
                             });
        }
    }
    AttentionResult att = detail::run_stage(
        "attention", [&] { return sufa_descending(Qr, Kr, Vr, ordered, sum.scale_used); });
    sum.O = att.O;
    sum.formal_tally = att.tally;
    sum.correction_events = att.correction_events;

    // -- oracle comparisons ---------------------------------------------------
    if (cfg.with_oracles) {
        auto exact_rows = exact_score_rows(w.Q, w.K);
        double recall_acc = 0.0;
        for (int t = 0; t < T; ++t) {
            auto truth = oracle::exact_topk(std::span<const int64_t>(exact_rows[t]), k);
            std::set<int> truth_set(truth.begin(), truth.end());
            int hit = 0;
            for (const auto& e : sum.fc_sets[t].entries)
                if (truth_set.count(e.index)) ++hit;
            recall_acc += truth.empty() ? 1.0 : static_cast<double>(hit) / truth.size();
        }
        sum.recall_mean = T > 0 ? recall_acc / T : 0.0;

        RealMatrix dense = oracle::dense_attention(Qr, Kr, Vr, sum.scale_used);
        double err_acc = 0.0, err_max = 0.0;
        for (int t = 0; t < T; ++t) {
            double num = 0.0, den = 0.0;
            for (int j = 0; j < dense.cols; ++j) {
                double diff = sum.O.at(t, j) - dense.at(t, j);
                num += diff * diff;
                den += dense.at(t, j) * dense.at(t, j);
            }
            double rel = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
            err_acc += rel;
            err_max = std::max(err_max, rel);
        }
        sum.rel_err_mean = T > 0 ? err_acc / T : 0.0;
        sum.rel_err_max = err_max;
    }

    // -- reduction bookkeeping -------------------------------------------------
    SufaTally dense_tally = detail::vanilla_attention_tally(T, S, d);
    sum.weighted_dense_attention = weighted_cost(dense_tally.total(), cfg.weights);
    sum.weighted_formal = weighted_cost(sum.formal_tally.total(), cfg.weights);
    sum.weighted_prediction = weighted_cost(sum.prediction_tally, cfg.weights);
    sum.weighted_sorting = weighted_cost(sum.sorting_tally, cfg.weights);
    sum.weighted_kv_gen = weighted_cost(sum.kv_gen_tally, cfg.weights);
    sum.weighted_dense_qkv = weighted_cost(detail::dense_kv_tally(S, d), cfg.weights);
    sum.reduction_attention_only =
        1.0 - sum.weighted_formal / std::max(1e-12, sum.weighted_dense_attention);
    sum.net_saving_weighted = sum.weighted_dense_attention - sum.weighted_formal -
                              sum.weighted_prediction - sum.weighted_sorting;
    sum.reduction_net = sum.net_saving_weighted / std::max(1e-12, sum.weighted_dense_attention);
    double dense_all = sum.weighted_dense_attention + sum.weighted_dense_qkv;
    double sparse_all = sum.weighted_formal + sum.weighted_prediction + sum.weighted_sorting +
                        sum.weighted_kv_gen;
    sum.reduction_attention_qkv = (dense_all - sparse_all) / std::max(1e-12, dense_all);

    // -- memory traffic + latency ---------------------------------------------
    const uint64_t x_bytes = static_cast<uint64_t>(S) * d;           // 8-bit tokens
    const uint64_t w_bytes = static_cast<uint64_t>(2) * d * d;       // Wk + Wv, 8-bit
    const uint64_t q_bytes = static_cast<uint64_t>(T) * d * 2;       // 16-bit queries
    const uint64_t ahat_bytes = static_cast<uint64_t>(T) * S * 2;    // 16-bit scores
    const uint64_t fc_bytes = [&] {
        uint64_t entries = 0;
        for (const auto& r : sum.fc_sets) entries += r.entries.size();
        return entries * 2;  // 16-bit indices
    }();
    const uint64_t kv_union_bytes = sum.selected_union_keys * kv_vector_bytes(d, cfg.mem);
    const uint64_t out_bytes = static_cast<uint64_t>(T) * d * 2;

    const uint64_t live = ahat_bytes + fc_bytes;
    bool spill_standard = live > cfg.mem.sram_bytes;
    bool spill_tiled = (live / n_seg) > cfg.mem.sram_bytes;
    sum.tile_spill_warning = spill_tiled;

    bool spill = cfg.dataflow == Dataflow::Standard ? spill_standard : spill_tiled;
    StageCost pred_stage{"prediction", sum.prediction_tally,
                         x_bytes + w_bytes + q_bytes + (spill ? ahat_bytes : 0),
                         ahat_bytes};
    StageCost sort_stage{"sorting", sum.sorting_tally,
                         (spill ? ahat_bytes + fc_bytes : 0), ahat_bytes + fc_bytes};
    StageCost kv_stage{"kv_generation", sum.kv_gen_tally, kv_union_bytes,
                       kv_union_bytes};
    StageCost formal_stage{"attention", sum.formal_tally.total(),
                           sum.kv_fetch_bytes + (spill ? fc_bytes : 0) + out_bytes,
                           sum.kv_fetch_bytes};
    sum.cost.stages = {pred_stage, sort_stage, kv_stage, formal_stage};
    sum.cost.num_tiles = cfg.dataflow == Dataflow::Tiled ? n_seg : 1;
    sum.cost.finalize(cfg.weights, cfg.mem, cfg.throughput);
    return sum;
}

struct DataflowComparison {
    CostReport tiled;
    CostReport standard;
    double dram_reduction = 0.0;  // tiled vs standard traffic
};

inline DataflowComparison compare_dataflows(const PipelineConfig& cfg, const Workload& w) {
    PipelineConfig a = cfg, b = cfg;
    a.dataflow = Dataflow::Tiled;
    b.dataflow = Dataflow::Standard;
    DataflowComparison out;
    out.tiled = run_pipeline(a, w).cost;
    out.standard = run_pipeline(b, w).cost;
    if (out.standard.dram_bytes > 0)
        out.dram_reduction =
            1.0 - static_cast<double>(out.tiled.dram_bytes) / out.standard.dram_bytes;
    return out;
}

// DSE plug: mean relative L2 error of the pipeline against the dense oracle,
// averaged over calibration workloads and layers. Memoized per (Tc, k).
inline LenEvaluator make_len_evaluator(WorkloadSpec base, std::vector<uint64_t> seeds,
                                       PipelineConfig cfg) {
    auto cache = std::make_shared<std::map<std::pair<int, int>, double>>();
    return [base, seeds, cfg, cache](const std::vector<LayerChoice>& r) {
        double acc = 0.0;
        for (const auto& layer : r) {
            std::pair<int, int> key{layer.tc, static_cast<int>(std::llround(layer.k * 100))};
            auto it = cache->find(key);
            if (it == cache->end()) {
                double err = 0.0;
                for (uint64_t s : seeds) {
                    WorkloadSpec ws = base;
                    ws.seed = s;
                    Workload w = generate_workload(ws);
                    PipelineConfig pc = cfg;
                    pc.tiling.num_segments = layer.tc;
                    pc.tiling.k_fraction = layer.k;
                    err += run_pipeline(pc, w).rel_err_mean;
                }
                err /= seeds.empty() ? 1.0 : static_cast<double>(seeds.size());
                it = cache->emplace(key, err).first;
            }
            acc += it->second;
        }
        return acc / std::max<size_t>(1, r.size());
    };
}

}  // namespace sofa
