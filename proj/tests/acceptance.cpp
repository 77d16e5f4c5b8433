// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criterion 10 drives the CLI binary passed via --cli.

#include <bit>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sofa/attention.hpp"
#include "sofa/oracles.hpp"
#include "sofa/pipeline.hpp"
#include "sofa/serialize.hpp"

namespace fs = std::filesystem;
using namespace sofa;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_s() {
    using clock = std::chrono::steady_clock;
    static const auto t0 = clock::now();
    return std::chrono::duration<double>(clock::now() - t0).count();
}

RealMatrix random_real(SplitMix64& rng, int r, int c, double amp) {
    RealMatrix m(r, c);
    for (auto& v : m.data) v = (2.0 * rng.unit() - 1.0) * amp;
    return m;
}

std::vector<double> row_scores(const RealMatrix& Q, const RealMatrix& K, int row, double scale) {
    std::vector<double> s(K.rows, 0.0);
    for (int i = 0; i < K.rows; ++i) {
        double acc = 0.0;
        for (int j = 0; j < Q.cols; ++j) acc += Q.at(row, j) * K.at(i, j);
        s[i] = acc * scale;
    }
    return s;
}

// ---------------------------------------------------------------------------
// 1. SU-FA oracle equivalence on 1000 random instances
// ---------------------------------------------------------------------------
Outcome criterion1() {
    double t0 = now_s();
    SplitMix64 rng(0xC1);
    double worst = 0.0;
    for (int inst = 0; inst < 1000; ++inst) {
        int S = 8 + static_cast<int>(rng.bounded(505));   // <= 512
        int d = 1 + static_cast<int>(rng.bounded(64));    // <= 64
        int rows = 1 + static_cast<int>(rng.bounded(2));
        int sel = 1 + static_cast<int>(rng.bounded(S));
        double scale = 1.0 / std::sqrt(static_cast<double>(d));
        RealMatrix Q = random_real(rng, rows, d, 2.0);
        RealMatrix K = random_real(rng, S, d, 2.0);
        RealMatrix V = random_real(rng, S, d, 1.5);

        FCSet fcs(rows);
        std::vector<std::vector<int>> masks(rows);
        for (int r = 0; r < rows; ++r) {
            std::vector<int> keys(S);
            std::iota(keys.begin(), keys.end(), 0);
            for (int i = 0; i < sel; ++i) {
                int j = i + static_cast<int>(rng.bounded(S - i));
                std::swap(keys[i], keys[j]);
            }
            keys.resize(sel);
            masks[r] = keys;
            auto scores = row_scores(Q, K, r, scale);
            for (int idx : keys)
                fcs[r].entries.push_back({idx, static_cast<int32_t>(scores[idx] * 1e4)});
            switch (inst % 3) {
                case 0:  // well-predicted descending order
                    std::sort(fcs[r].entries.begin(), fcs[r].entries.end(),
                              [](const SelEntry& a, const SelEntry& b) { return a.score > b.score; });
                    break;
                case 1:  // adversarial: ascending (max arrives last)
                    std::sort(fcs[r].entries.begin(), fcs[r].entries.end(),
                              [](const SelEntry& a, const SelEntry& b) { return a.score < b.score; });
                    break;
                default:  // random shuffle
                    for (size_t i = 0; i + 1 < fcs[r].entries.size(); ++i) {
                        size_t j = i + rng.bounded(fcs[r].entries.size() - i);
                        std::swap(fcs[r].entries[i], fcs[r].entries[j]);
                    }
            }
        }
        AttentionResult got = sufa_descending(Q, K, V, fcs, scale);
        RealMatrix want = oracle::dense_attention(Q, K, V, scale, masks);
        worst = std::max(worst, oracle::max_rel_error(got.O, want));
    }
    double dt = now_s() - t0;
    std::ostringstream d;
    d << "max rel err " << worst << " over 1000 instances in " << dt << " s";
    return {worst <= 1e-5 && dt < 60.0, d.str()};
}

// ---------------------------------------------------------------------------
// 2. complexity claims: descending vs classical FA and vs ascending
// ---------------------------------------------------------------------------
Outcome criterion2() {
    std::ostringstream detail;
    bool ok = true;
    SplitMix64 rng(0xC2);
    const int d = 32, rows = 4, tile = 16;
    const OpWeights w;
    for (int S : {1024, 2048, 4096}) {
        int k = S / 4;
        double scale = 1.0 / std::sqrt(static_cast<double>(d));
        RealMatrix Q = random_real(rng, rows, d, 1.0);
        RealMatrix K = random_real(rng, S, d, 1.0);
        RealMatrix V = random_real(rng, S, d, 1.0);

        FCSet fcs(rows);
        std::vector<std::vector<int>> index_order(rows);
        for (int r = 0; r < rows; ++r) {
            auto scores = row_scores(Q, K, r, scale);
            auto top = oracle::exact_topk(std::span<const double>(scores), k);
            for (int idx : top)
                fcs[r].entries.push_back({idx, static_cast<int32_t>(scores[idx] * 1e4)});
            index_order[r] = top;
            std::sort(index_order[r].begin(), index_order[r].end());
        }
        auto desc = sufa_descending(Q, K, V, fcs, scale);
        auto asc = sufa_ascending(Q, K, V, fcs, scale);
        auto fa = flash_attention_selected(Q, K, V, index_order, tile, scale);

        // Softmax-update complexity: bookkeeping + final normalization; the
        // q.k / e*v accumulation is identical systolic work in all three.
        auto update_cost = [&w](const SufaTally& t) {
            return weighted_cost(t.update, w) + weighted_cost(t.normalize, w);
        };
        double c_desc = update_cost(desc.tally);
        double red_fa = 1.0 - c_desc / update_cost(fa.tally);
        double red_asc = 1.0 - c_desc / update_cost(asc.tally);
        detail << "S=" << S << ": vsFA " << red_fa * 100 << "% vsAsc " << red_asc * 100 << "%  ";
        ok = ok && red_fa >= 0.15 && red_fa <= 0.35 && red_asc >= 0.06 && red_asc <= 0.16;
    }
    return {ok, detail.str()};
}

// ---------------------------------------------------------------------------
// 3. FA-2 cost trend
// ---------------------------------------------------------------------------
Outcome criterion3() {
    const int S = 2048;
    uint64_t prev = 0;
    bool increasing = true;
    for (int bc : {1024, 512, 256, 128, 64, 32, 16, 8, 4}) {
        uint64_t e = fa2_op_counter(S, S, bc).excess_exp();
        if (e <= prev) increasing = false;
        prev = e;
    }
    uint64_t excess = fa2_op_counter(S, S, 16).excess_exp();
    std::ostringstream d;
    d << "excess exp at Bc=16: " << excess << " (target 9e6 within x3), strict growth in Tc: "
      << (increasing ? "yes" : "no");
    bool in_window = excess >= 3'000'000ull && excess <= 27'000'000ull;
    return {increasing && in_window, d.str()};
}

// ---------------------------------------------------------------------------
// 4. DLZS scalar error bound + composed counter
// ---------------------------------------------------------------------------
Outcome criterion4() {
    double t0 = now_s();
    auto tab = oracle::lz_error_table(8);
    bool lzc_ok = true;
    for (uint32_t m = 0; m < (1u << 15); ++m) {
        int direct = (m == 0) ? 16 : 15 - std::bit_width(m);
        if (count_leading_zeros(m, 16) != direct) lzc_ok = false;
    }
    double dt = now_s() - t0;
    std::ostringstream d;
    d << "ratio in [" << tab.min_ratio << ", " << tab.max_ratio << "] (bound (1,2]), sign errors "
      << tab.sign_mismatches << ", composed LZC " << (lzc_ok ? "exact" : "BROKEN") << ", " << dt
      << " s";
    bool ok = tab.min_ratio >= 1.0 && tab.min_ratio > 1.0 - 1e-12 && tab.max_ratio <= 2.0 &&
              tab.sign_mismatches == 0 && lzc_ok && dt < 10.0;
    return {ok, d.str()};
}

// ---------------------------------------------------------------------------
// 5. SADS exactness and spike capture
// ---------------------------------------------------------------------------
Outcome criterion5() {
    SplitMix64 rng(0xC5);
    SadsConfig cfg;
    bool exact = true;
    for (int rep = 0; rep < 10000; ++rep) {
        int n = 1 + static_cast<int>(rng.bounded(200));
        int m = 1 + static_cast<int>(rng.bounded(n));
        std::vector<int32_t> vals(n);
        for (auto& v : vals) v = static_cast<int32_t>(rng.range(-10000, 10000));
        auto got = select_topk_segment(vals, 0, m, cfg);
        auto want = oracle::exact_topk_i32(vals, m);
        if (got.size() != want.size()) {
            exact = false;
            break;
        }
        std::multiset<int32_t> a, b;
        for (const auto& e : got) a.insert(e.score);
        for (int idx : want) b.insert(vals[idx]);
        if (a != b) {
            exact = false;
            break;
        }
    }
    // Exhaustive spike positions at S=128 for n in {2,4,8,16}.
    bool spikes = true;
    const int S = 128;
    for (int n : {2, 4, 8, 16}) {
        for (int pos = 0; pos < S; ++pos) {
            std::vector<int32_t> row(S);
            for (auto& v : row) v = static_cast<int32_t>(rng.range(-9000, 9000));
            row[pos] = 20000;
            SadsConfig c;
            c.num_segments = n;
            c.k = S / 4;
            FCRow fc = sads_topk(row, c);
            if (fc.top1_index != pos) spikes = false;
        }
    }
    std::ostringstream d;
    d << "10000 slices set-equal: " << (exact ? "yes" : "NO") << "; spike capture exhaustive: "
      << (spikes ? "yes" : "NO");
    return {exact && spikes, d.str()};
}

// ---------------------------------------------------------------------------
// 6. RASS golden instance + never-worse
// ---------------------------------------------------------------------------
Outcome criterion6() {
    FCSet fc(4);
    auto fill = [](FCRow& r, std::initializer_list<int> keys) {
        int32_t sc = 50;
        for (int k : keys) r.entries.push_back({k, sc--});
    };
    fill(fc[0], {0, 1, 2, 3});
    fill(fc[1], {2, 3, 4});
    fill(fc[2], {2, 3, 7});
    fill(fc[3], {5, 6});
    SchedulePlan plan = schedule_rass(build_demand_map(fc), 4);
    FetchTally rass = count_memory_access(plan, 64);
    FetchTally base = count_memory_access_baseline(fc, 64);
    bool golden = plan.phases.size() >= 1 && plan.phases[0].keys == std::vector<int>{2, 3, 5, 6} &&
                  rass.kv_fetches == 8 && base.kv_fetches == 12;

    SplitMix64 rng(0xC6);
    bool never_worse = true;
    for (int rep = 0; rep < 1000; ++rep) {
        int queries = 1 + static_cast<int>(rng.bounded(16));
        int keys = 2 + static_cast<int>(rng.bounded(64));
        FCSet demands(queries);
        for (int q = 0; q < queries; ++q) {
            std::set<int> chosen;
            int want = 1 + static_cast<int>(rng.bounded(std::max(1, keys / 2)));
            while (static_cast<int>(chosen.size()) < want)
                chosen.insert(static_cast<int>(rng.bounded(keys)));
            for (int k : chosen) demands[q].entries.push_back({k, 1});
        }
        int cap = 1 + static_cast<int>(rng.bounded(8));
        SchedulePlan p = schedule_rass(build_demand_map(demands), cap);
        if (count_memory_access(p, 16).kv_fetches >
            count_memory_access_baseline(demands, 16).kv_fetches)
            never_worse = false;
    }
    std::ostringstream d;
    d << "golden phase0 {2,3,5,6} with 8:12 fetches (2:3): " << (golden ? "yes" : "NO")
      << "; never-worse over 1000 random maps: " << (never_worse ? "yes" : "NO");
    return {golden && never_worse, d.str()};
}

// ---------------------------------------------------------------------------
// 7. DSE correctness on planted objectives
// ---------------------------------------------------------------------------
Outcome criterion7() {
    SearchSpace space;
    space.num_layers = 1;
    space.seq_len = {1024};

    // Closed-form checks first.
    LenEvaluator konst = [](const std::vector<LayerChoice>&) { return 0.0; };
    ObjectiveParts cmp_part = objective({{16, 0.25}}, space, konst, 1.0, 0.0);
    ObjectiveParts exp_part = objective({{16, 0.25}}, space, konst, 0.0, 1.0);
    bool closed = std::abs(cmp_part.cmp - 1.0 / 16.0) < 1e-12 &&
                  std::abs(exp_part.exp_penalty - 16.0) < 1e-12;

    int hits = 0;
    bool monotone = true;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        double tc_c = 4.0 + 2.0 * (seed % 14);
        double k_c = 0.05 * (1 + seed % 10);
        LenEvaluator f = [=](const std::vector<LayerChoice>& r) {
            double dt = (r[0].tc - tc_c) / 30.0;
            double dk = (r[0].k - k_c) / 0.45;
            return 0.2 + dt * dt + dk * dk;
        };
        auto truth = oracle::brute_force_grid_min(space, f, 0.1, 0.01);
        DseConfig cfg;
        cfg.seed = seed;
        cfg.alpha = 0.1;
        cfg.beta = 0.01;
        cfg.max_iter = 40;
        DseResult res = run_dse(space, cfg, f);
        if (res.best_parts.total <= truth.parts.total * 1.05) ++hits;
        for (size_t i = 1; i < res.incumbent_trace.size(); ++i)
            if (res.incumbent_trace[i] > res.incumbent_trace[i - 1]) monotone = false;
    }
    std::ostringstream d;
    d << hits << "/20 seeds within 5% of the grid minimum; trace non-increasing: "
      << (monotone ? "yes" : "NO") << "; closed forms 1/16 and 16: " << (closed ? "yes" : "NO");
    return {hits >= 19 && monotone && closed, d.str()};
}

// ---------------------------------------------------------------------------
// 8. memory-model checkpoints
// ---------------------------------------------------------------------------
Outcome criterion8() {
    MemoryModel mem;
    FootprintDims dims{512, 2048, 64, 0.25};
    uint64_t fp = standard_intermediate_footprint(dims, mem);
    bool fp_ok = fp >= 4'000'000ull && fp <= 6'000'000ull;

    double prev = -1.0;
    double mat512 = 0.0;
    bool monotone = true;
    std::ostringstream trace;
    for (int T : {32, 64, 128, 256, 512}) {
        WorkloadSpec spec;
        spec.seq_len = 2048;
        spec.head_dim = 64;
        spec.num_queries = T;
        spec.seed = 21;
        PipelineConfig cfg;
        cfg.tiling = {16, 0.25};
        cfg.dataflow = Dataflow::Standard;
        cfg.rass_enabled = false;
        cfg.with_oracles = false;
        RunSummary s = run_pipeline(cfg, generate_workload(spec));
        double mat = s.cost.latency_standard.mat;
        trace << "T=" << T << ":" << mat << " ";
        if (mat < prev - 1e-9) monotone = false;
        prev = mat;
        if (T == 512) mat512 = mat;
    }
    std::ostringstream d;
    d << "footprint(512,2048) = " << fp << " B (5MB +-20%): " << (fp_ok ? "yes" : "NO")
      << "; MAT " << trace.str() << "monotone: " << (monotone ? "yes" : "NO");
    return {fp_ok && monotone && mat512 >= 0.55, d.str()};
}

// ---------------------------------------------------------------------------
// 9. stated substitutions + monotone recall / reduction sweeps
// ---------------------------------------------------------------------------
Outcome criterion9() {
    std::puts(
        "  note: end-to-end LLM accuracy/computation-reduction figures and all\n"
        "  silicon energy/area/speedup results need real models and RTL; this\n"
        "  build substitutes criteria 1-8 plus the monotone recall-vs-k and\n"
        "  reduction-vs-k sweeps below.");
    double prev_recall = -1.0;
    double prev_reduction = 2.0;
    bool recall_monotone = true, reduction_monotone = true;
    std::ostringstream trace;
    for (int pct = 5; pct <= 50; pct += 5) {
        double recall = 0.0, reduction = 0.0;
        const int n_seeds = 10;
        for (int i = 0; i < n_seeds; ++i) {
            WorkloadSpec spec;
            spec.seq_len = 256;
            spec.head_dim = 64;
            spec.num_queries = 32;
            spec.seed = 100 + i;
            PipelineConfig cfg;
            cfg.tiling = {4, pct / 100.0};
            RunSummary s = run_pipeline(cfg, generate_workload(spec));
            recall += s.recall_mean;
            reduction += s.reduction_attention_only;
        }
        recall /= n_seeds;
        reduction /= n_seeds;
        trace << pct << "%:" << recall << " ";
        if (recall < prev_recall - 1e-9) recall_monotone = false;
        if (reduction > prev_reduction + 1e-9) reduction_monotone = false;
        prev_recall = recall;
        prev_reduction = reduction;
    }
    std::ostringstream d;
    d << "recall vs k " << trace.str() << "non-decreasing: " << (recall_monotone ? "yes" : "NO")
      << "; reduction shrinks as k grows: " << (reduction_monotone ? "yes" : "NO");
    return {recall_monotone && reduction_monotone, d.str()};
}

// ---------------------------------------------------------------------------
// 10. CLI determinism
// ---------------------------------------------------------------------------
std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Outcome criterion10(const std::string& cli) {
    if (cli.empty()) return {false, "no --cli path given"};
    fs::path work = fs::temp_directory_path() / "sofa_acceptance_cli";
    fs::remove_all(work);
    fs::create_directories(work);

    fs::path cfg = work / "run.json";
    {
        std::ofstream out(cfg);
        out << R"({"workload":{"seq_len":128,"head_dim":32,"num_queries":16,"distribution":"type2","seed":5},)"
            << R"("tiling":{"num_segments":4,"k_fraction":0.25}})" << "\n";
    }
    fs::path dse_cfg = work / "dse.json";
    {
        std::ofstream out(dse_cfg);
        out << R"({"space":{"num_layers":1,"seq_len":[256]},)"
            << R"("dse":{"alpha":0.24,"beta":0.31,"max_iter":6,"init_samples":4,"seed":3},)"
            << R"("proxy":{"seq_len":64,"head_dim":16,"num_queries":8,"seeds":[1]}})" << "\n";
    }

    auto run = [&](const std::string& args, const fs::path& out_dir) {
        std::string cmd = cli + " " + args + " --out " + out_dir.string() + " >/dev/null 2>&1";
        return std::system(cmd.c_str()) == 0;
    };
    bool ran = true;
    ran &= run("run --config " + cfg.string() + " --seed 5", work / "runA");
    ran &= run("run --config " + cfg.string() + " --seed 5", work / "runB");
    ran &= run("figdata --figure fa2_cost --seed 1", work / "figA");
    ran &= run("figdata --figure fa2_cost --seed 1", work / "figB");
    ran &= run("dse --config " + dse_cfg.string(), work / "dseA");
    ran &= run("dse --config " + dse_cfg.string(), work / "dseB");
    if (!ran) return {false, "CLI invocation failed"};

    bool identical = true;
    for (const char* f : {"run_summary.json", "cost_report.json", "schedule_plan.json"})
        identical &= slurp(work / "runA" / f) == slurp(work / "runB" / f) &&
                     !slurp(work / "runA" / f).empty();
    identical &= slurp(work / "figA" / "fa2_cost.csv") == slurp(work / "figB" / "fa2_cost.csv");
    identical &= slurp(work / "dseA" / "dse_result.json") == slurp(work / "dseB" / "dse_result.json");

    // --k 1.0 --segments 1 prunes nothing, so the reported error is round-off.
    bool lossless = false;
    if (run("run --config " + cfg.string() + " --k 1.0 --segments 1", work / "full")) {
        json j = json::parse(slurp(work / "full" / "run_summary.json"));
        lossless = j["rel_err_max"].get<double>() <= 1e-5 &&
                   j["recall_mean"].get<double>() == 1.0;
    }

    // Exit-code contract: bad figure id is a usage error (2).
    int rc = std::system((cli + " figdata --figure nope --out " + (work / "bad").string() +
                          " >/dev/null 2>&1").c_str());
    bool code_ok = WIFEXITED(rc) && WEXITSTATUS(rc) == 2;

    std::ostringstream d;
    d << "rerun outputs byte-identical: " << (identical ? "yes" : "NO")
      << "; full-k run lossless: " << (lossless ? "yes" : "NO")
      << "; config-error exit code 2: " << (code_ok ? "yes" : "NO");
    return {identical && lossless && code_ok, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
    std::string cli;
    for (int i = 1; i + 1 < argc; ++i)
        if (std::string(argv[i]) == "--cli") cli = argv[i + 1];

    struct Entry {
        const char* name;
        std::function<Outcome()> fn;
    };
    std::vector<Entry> criteria = {
        {"1 SU-FA oracle equivalence", criterion1},
        {"2 SU-FA complexity claims", criterion2},
        {"3 FA-2 cost trend", criterion3},
        {"4 DLZS scalar error bound", criterion4},
        {"5 SADS exactness + spike capture", criterion5},
        {"6 RASS golden + never-worse", criterion6},
        {"7 DSE planted optima", criterion7},
        {"8 memory-model checkpoints", criterion8},
        {"9 substitutions + monotone sweeps", criterion9},
        {"10 CLI determinism", [&cli] { return criterion10(cli); }},
    };

    int failures = 0;
    for (auto& c : criteria) {
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        std::printf("%s  criterion %s: %s\n", o.pass ? "PASS" : "FAIL", c.name, o.detail.c_str());
        if (!o.pass) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all criteria passed\n");
    return failures == 0 ? 0 : 1;
}
