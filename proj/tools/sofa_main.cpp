// Command-line front end: workload generation + pipeline runs, reference
// comparisons, design-space exploration, and figure-data emission (CSV).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "sofa/attention.hpp"
#include "sofa/oracles.hpp"
#include "sofa/pipeline.hpp"
#include "sofa/serialize.hpp"

namespace fs = std::filesystem;
using sofa::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("field '" + key + "': " + e.what());
    }
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in.good()) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
}

sofa::Distribution parse_distribution(const std::string& s) {
    if (s == "type1") return sofa::Distribution::TypeI;
    if (s == "type2") return sofa::Distribution::TypeII;
    if (s == "type3") return sofa::Distribution::TypeIII;
    throw ConfigError("unknown distribution '" + s + "' (expected type1|type2|type3)");
}

sofa::WorkloadSpec parse_workload(const json& j) {
    sofa::WorkloadSpec spec;
    spec.seq_len = get_or(j, "seq_len", spec.seq_len);
    spec.head_dim = get_or(j, "head_dim", spec.head_dim);
    spec.num_queries = get_or(j, "num_queries", spec.num_queries);
    spec.distribution = parse_distribution(get_or<std::string>(j, "distribution", "type2"));
    spec.dominant_fraction = get_or(j, "dominant_fraction", spec.dominant_fraction);
    spec.cluster_width = get_or(j, "cluster_width", spec.cluster_width);
    spec.seed = get_or<uint64_t>(j, "seed", spec.seed);
    return spec;
}

sofa::PipelineConfig parse_pipeline(const json& j) {
    sofa::PipelineConfig cfg;
    if (j.contains("tiling")) {
        cfg.tiling.num_segments = get_or(j["tiling"], "num_segments", cfg.tiling.num_segments);
        cfg.tiling.k_fraction = get_or(j["tiling"], "k_fraction", cfg.tiling.k_fraction);
    }
    std::string flow = get_or<std::string>(j, "dataflow", "tiled");
    if (flow == "tiled")
        cfg.dataflow = sofa::Dataflow::Tiled;
    else if (flow == "standard")
        cfg.dataflow = sofa::Dataflow::Standard;
    else
        throw ConfigError("dataflow must be 'tiled' or 'standard'");
    cfg.rass_enabled = get_or(j, "rass", cfg.rass_enabled);
    cfg.rass_phase_capacity = get_or(j, "rass_phase_capacity", cfg.rass_phase_capacity);
    if (j.contains("clip_radius") && !j["clip_radius"].is_null())
        cfg.clip_radius = j["clip_radius"].get<int64_t>();
    cfg.logit_target_std = get_or(j, "logit_target_std", cfg.logit_target_std);
    if (j.contains("weights")) {
        const json& w = j["weights"];
        cfg.weights.add = get_or(w, "add", cfg.weights.add);
        cfg.weights.cmp = get_or(w, "cmp", cfg.weights.cmp);
        cfg.weights.shift = get_or(w, "shift", cfg.weights.shift);
        cfg.weights.mul = get_or(w, "mul", cfg.weights.mul);
        cfg.weights.exp = get_or(w, "exp", cfg.weights.exp);
        cfg.weights.div = get_or(w, "div", cfg.weights.div);
    }
    if (j.contains("memory")) {
        const json& m = j["memory"];
        cfg.mem.sram_bytes = get_or<uint64_t>(m, "sram_bytes", cfg.mem.sram_bytes);
        cfg.mem.dram_bw_gbps = get_or(m, "dram_bw_gbps", cfg.mem.dram_bw_gbps);
        cfg.mem.sram_bw_tbps = get_or(m, "sram_bw_tbps", cfg.mem.sram_bw_tbps);
        cfg.mem.dram_energy_pj_per_bit =
            get_or(m, "dram_energy_pj_per_bit", cfg.mem.dram_energy_pj_per_bit);
        cfg.mem.sram_energy_pj_per_bit =
            get_or(m, "sram_energy_pj_per_bit", cfg.mem.sram_energy_pj_per_bit);
    }
    if (j.contains("throughput")) {
        const json& t = j["throughput"];
        cfg.throughput.parallel_units = get_or(t, "parallel_units", cfg.throughput.parallel_units);
        cfg.throughput.clock_hz = get_or(t, "clock_hz", cfg.throughput.clock_hz);
    }
    return cfg;
}

void write_manifest(const fs::path& out_dir, const std::string& subcommand,
                    const std::string& config_path, uint64_t seed) {
    json manifest{{"schema_version", sofa::kSchemaVersion},
                  {"subcommand", subcommand},
                  {"config", config_path},
                  {"seed", seed},
                  {"out_dir", out_dir.string()}};
    sofa::atomic_write_file(out_dir / "manifest.json", sofa::canonical_dump(manifest));
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

int cmd_run(const std::string& config_path, const std::string& out_dir, int64_t seed_override,
            const std::string& dataflow_override, const std::string& rass_override,
            double k_override, int segments_override) {
    json j = config_path.empty() ? json::object() : load_json(config_path);
    sofa::WorkloadSpec spec = parse_workload(j.contains("workload") ? j["workload"] : json::object());
    sofa::PipelineConfig cfg = parse_pipeline(j);
    if (seed_override >= 0) spec.seed = static_cast<uint64_t>(seed_override);
    if (dataflow_override == "tiled") cfg.dataflow = sofa::Dataflow::Tiled;
    else if (dataflow_override == "standard") cfg.dataflow = sofa::Dataflow::Standard;
    else if (!dataflow_override.empty()) throw ConfigError("bad --dataflow value");
    if (rass_override == "on") cfg.rass_enabled = true;
    else if (rass_override == "off") cfg.rass_enabled = false;
    else if (!rass_override.empty()) throw ConfigError("bad --rass value");
    if (k_override > 0.0) cfg.tiling.k_fraction = k_override;
    if (segments_override > 0) cfg.tiling.num_segments = segments_override;

    sofa::Workload w = sofa::generate_workload(spec);
    sofa::RunSummary sum = sofa::run_pipeline(cfg, w);

    fs::path out(out_dir);
    fs::create_directories(out);
    write_manifest(out, "run", config_path, spec.seed);
    json summary = sofa::to_json(sum);
    summary["seed"] = spec.seed;
    sofa::atomic_write_file(out / "run_summary.json", sofa::canonical_dump(summary));
    sofa::atomic_write_file(out / "cost_report.json", sofa::canonical_dump(sofa::to_json(sum.cost)));

    sofa::DemandMap demand = sofa::build_demand_map(sum.fc_sets);
    sofa::SchedulePlan plan = sofa::schedule_rass(demand, cfg.rass_phase_capacity);
    sofa::atomic_write_file(out / "schedule_plan.json", sofa::canonical_dump(sofa::to_json(plan)));

    std::printf("run: seed=%llu recall=%.4f rel_err=%.3e reduction(atten)=%.3f mat(std)=%.3f\n",
                static_cast<unsigned long long>(spec.seed), sum.recall_mean, sum.rel_err_mean,
                sum.reduction_attention_only, sum.cost.latency_standard.mat);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// figdata
// ---------------------------------------------------------------------------

std::string csv_fa2_cost() {
    std::ostringstream csv;
    csv << "seq_len,tile_size,tiles,vanilla_exp_count,fa2_exp_count,excess_exp_count,excess_cmp_count\n";
    for (int S : {256, 512, 1024, 2048, 4096}) {
        auto c = sofa::fa2_op_counter(S, S, 16);
        csv << S << ",16," << S / 16 << ',' << c.vanilla_exp << ',' << c.fa2_exp << ','
            << c.excess_exp() << ',' << c.excess_cmp() << '\n';
    }
    return csv.str();
}

std::string csv_mat_vs_parallelism(uint64_t seed) {
    std::ostringstream csv;
    csv << "num_queries,mat_standard,dram_bytes,compute_s,memory_s\n";
    for (int T : {32, 64, 128, 256, 512}) {
        sofa::WorkloadSpec spec;
        spec.seq_len = 2048;
        spec.head_dim = 64;
        spec.num_queries = T;
        spec.seed = seed;
        sofa::PipelineConfig cfg;
        cfg.tiling = {16, 0.25};
        cfg.dataflow = sofa::Dataflow::Standard;
        cfg.rass_enabled = false;
        cfg.with_oracles = false;
        sofa::RunSummary s = sofa::run_pipeline(cfg, sofa::generate_workload(spec));
        const auto& lat = s.cost.latency_standard;
        csv << T << ',' << lat.mat << ',' << s.cost.dram_bytes << ',' << lat.compute_s << ','
            << lat.dram_s + lat.sram_s << '\n';
    }
    return csv.str();
}

std::string csv_recall_vs_k(uint64_t seed) {
    std::ostringstream csv;
    csv << "k_fraction,mean_recall,mean_rel_err\n";
    for (int pct = 5; pct <= 50; pct += 5) {
        double recall = 0.0, err = 0.0;
        const int n_seeds = 10;
        for (int i = 0; i < n_seeds; ++i) {
            sofa::WorkloadSpec spec;
            spec.seq_len = 256;
            spec.head_dim = 64;
            spec.num_queries = 64;
            spec.seed = seed + i;
            sofa::PipelineConfig cfg;
            cfg.tiling = {4, pct / 100.0};
            sofa::RunSummary s = sofa::run_pipeline(cfg, sofa::generate_workload(spec));
            recall += s.recall_mean;
            err += s.rel_err_mean;
        }
        csv << pct / 100.0 << ',' << recall / n_seeds << ',' << err / n_seeds << '\n';
    }
    return csv.str();
}

std::string csv_complexity_reduction(uint64_t seed) {
    sofa::WorkloadSpec spec;
    spec.seq_len = 1024;
    spec.head_dim = 64;
    spec.num_queries = 64;
    spec.seed = seed;
    sofa::Workload w = sofa::generate_workload(spec);
    sofa::PipelineConfig cfg;
    cfg.tiling = {8, 0.25};
    sofa::RunSummary s = sofa::run_pipeline(cfg, w);
    const sofa::OpWeights wt = cfg.weights;

    const uint64_t T = spec.num_queries, S = spec.seq_len, d = spec.head_dim;
    // Baseline prediction: 4-bit multiply matmuls for K-hat and A-hat.
    sofa::OpTally base_pred;
    base_pred.mul = S * d * d + T * S * d;
    base_pred.add = S * d * d + T * S * d;
    // Baseline top-k: whole-row sorting, ~S log2 S comparisons per row.
    sofa::OpTally base_sort;
    base_sort.cmp = T * S * sofa::ceil_log2(S);
    // Baseline formal stage: classical tiled attention over the same FC sets.
    std::vector<std::vector<int>> rows(w.Q.rows);
    for (int r = 0; r < w.Q.rows; ++r) {
        for (const auto& e : s.fc_sets[r].entries) rows[r].push_back(e.index);
        std::sort(rows[r].begin(), rows[r].end());
    }
    sofa::RealMatrix Qr(w.Q.rows, w.Q.cols), Kr(w.K.rows, w.K.cols), Vr(w.V.rows, w.V.cols);
    for (size_t i = 0; i < w.Q.data.size(); ++i) Qr.data[i] = w.Q.data[i];
    for (size_t i = 0; i < w.K.data.size(); ++i) Kr.data[i] = w.K.data[i];
    for (size_t i = 0; i < w.V.data.size(); ++i) Vr.data[i] = w.V.data[i];
    auto fa = sofa::flash_attention_selected(Qr, Kr, Vr, rows, 16, s.scale_used);

    double pred_base = weighted_cost(base_pred, wt);
    double sort_base = weighted_cost(base_sort, wt);
    double fa_base = weighted_cost(fa.tally.total(), wt);
    double pred_dlzs = s.weighted_prediction;
    double sort_sads = s.weighted_sorting;
    double sufa = s.weighted_formal;

    std::ostringstream csv;
    csv << "configuration,prediction_ops,sorting_ops,attention_ops,total_ops,reduction_vs_baseline\n";
    double base_total = pred_base + sort_base + fa_base;
    auto emit = [&](const char* name, double p, double so, double a) {
        double tot = p + so + a;
        csv << name << ',' << p << ',' << so << ',' << a << ',' << tot << ','
            << 1.0 - tot / base_total << '\n';
    };
    emit("baseline_mul4_fullsort_fa", pred_base, sort_base, fa_base);
    emit("dlzs", pred_dlzs, sort_base, fa_base);
    emit("dlzs_sads", pred_dlzs, sort_sads, fa_base);
    emit("dlzs_sads_sufa", pred_dlzs, sort_sads, sufa);
    return csv.str();
}

int cmd_figdata(const std::string& figure, const std::string& out_dir, uint64_t seed) {
    std::string csv;
    if (figure == "fa2_cost") csv = csv_fa2_cost();
    else if (figure == "mat_vs_parallelism") csv = csv_mat_vs_parallelism(seed);
    else if (figure == "recall_vs_k") csv = csv_recall_vs_k(seed);
    else if (figure == "complexity_reduction") csv = csv_complexity_reduction(seed);
    else throw ConfigError("unknown figure id: " + figure);

    fs::path out(out_dir);
    fs::create_directories(out);
    write_manifest(out, "figdata:" + figure, "", seed);
    sofa::atomic_write_file(out / (figure + ".csv"), csv);
    std::printf("figdata: wrote %s\n", (out / (figure + ".csv")).string().c_str());
    return kExitOk;
}

// ---------------------------------------------------------------------------
// dse
// ---------------------------------------------------------------------------

int cmd_dse(const std::string& config_path, const std::string& out_dir, int64_t seed_override,
            const std::string& preset) {
    json j = config_path.empty() ? json::object() : load_json(config_path);
    sofa::SearchSpace space;
    if (j.contains("space")) {
        space.num_layers = get_or(j["space"], "num_layers", 1);
        space.seq_len = get_or<std::vector<int>>(j["space"], "seq_len", {1024});
    }
    if (static_cast<int>(space.seq_len.size()) != space.num_layers)
        throw ConfigError("space.seq_len must list one entry per layer");

    sofa::DseConfig cfg;
    if (j.contains("dse")) {
        const json& d = j["dse"];
        cfg.alpha = get_or(d, "alpha", cfg.alpha);
        cfg.beta = get_or(d, "beta", cfg.beta);
        cfg.max_iter = get_or(d, "max_iter", cfg.max_iter);
        cfg.init_samples = get_or(d, "init_samples", cfg.init_samples);
        cfg.patience = get_or(d, "patience", cfg.patience);
        cfg.seed = get_or<uint64_t>(d, "seed", cfg.seed);
        cfg.tie_k_global = get_or(d, "tie_k_global", cfg.tie_k_global);
    }
    if (!preset.empty() && !sofa::alpha_beta_preset(preset, cfg.alpha, cfg.beta))
        throw ConfigError("unknown --alpha-beta preset: " + preset);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);

    sofa::WorkloadSpec proxy;
    proxy.seq_len = 128;
    proxy.head_dim = 32;
    proxy.num_queries = 16;
    std::vector<uint64_t> proxy_seeds = {1, 2};
    if (j.contains("proxy")) {
        proxy = parse_workload(j["proxy"]);
        proxy_seeds = get_or<std::vector<uint64_t>>(j["proxy"], "seeds", proxy_seeds);
    }
    sofa::PipelineConfig pipe_cfg;
    sofa::LenEvaluator evaluator = sofa::make_len_evaluator(proxy, proxy_seeds, pipe_cfg);

    sofa::DseResult res = sofa::run_dse(space, cfg, evaluator);

    fs::path out(out_dir);
    fs::create_directories(out);
    write_manifest(out, "dse", config_path, cfg.seed);
    json result = sofa::to_json(res);
    result["alpha"] = cfg.alpha;
    result["beta"] = cfg.beta;
    sofa::atomic_write_file(out / "dse_result.json", sofa::canonical_dump(result));

    std::printf("dse: evaluations=%d best_J=%.6f alpha=%.2f beta=%.2f\n", res.evaluations,
                res.best_parts.total, cfg.alpha, cfg.beta);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

int cmd_bench(const std::string& out_dir, uint64_t seed) {
    std::ostringstream csv;
    csv << "seq_len,num_queries,head_dim,wall_ms,modeled_standard_ms,modeled_tiled_ms,mat_standard\n";
    for (int S : {256, 1024, 2048}) {
        sofa::WorkloadSpec spec;
        spec.seq_len = S;
        spec.head_dim = 64;
        spec.num_queries = 64;
        spec.seed = seed;
        sofa::PipelineConfig cfg;
        cfg.tiling = {8, 0.25};
        sofa::Workload w = sofa::generate_workload(spec);
        auto t0 = std::chrono::steady_clock::now();
        sofa::RunSummary s = sofa::run_pipeline(cfg, w);
        auto t1 = std::chrono::steady_clock::now();
        double wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        csv << S << ',' << spec.num_queries << ',' << spec.head_dim << ',' << wall_ms << ','
            << s.cost.latency_standard.total_s * 1e3 << ',' << s.cost.latency_tiled.total_s * 1e3
            << ',' << s.cost.latency_standard.mat << '\n';
        std::printf("bench S=%d: wall=%.1fms modeled std=%.3fms tiled=%.3fms\n", S, wall_ms,
                    s.cost.latency_standard.total_s * 1e3, s.cost.latency_tiled.total_s * 1e3);
    }
    if (!out_dir.empty()) {
        fs::path out(out_dir);
        fs::create_directories(out);
        write_manifest(out, "bench", "", seed);
        sofa::atomic_write_file(out / "bench.csv", csv.str());
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sofa: dynamic sparse attention pipeline, cost model and DSE"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", dataflow, rass, figure, preset;
    int64_t seed = -1;
    double k_override = 0.0;
    int segments_override = 0;

    auto* run = app.add_subcommand("run", "run the pipeline on a synthetic workload");
    run->add_option("--config", config_path, "JSON config file");
    run->add_option("--seed", seed, "workload seed override");
    run->add_option("--out", out_dir, "output directory");
    run->add_option("--dataflow", dataflow, "tiled|standard");
    run->add_option("--rass", rass, "on|off");
    run->add_option("--k", k_override, "top-k fraction override (0,1]");
    run->add_option("--segments", segments_override, "sub-segment count override");

    auto* fig = app.add_subcommand("figdata", "emit plot-ready CSV sweeps");
    fig->add_option("--figure", figure,
                    "fa2_cost|mat_vs_parallelism|complexity_reduction|recall_vs_k")
        ->required();
    fig->add_option("--seed", seed, "sweep seed");
    fig->add_option("--out", out_dir, "output directory");

    auto* dse = app.add_subcommand("dse", "Bayesian tiling/top-k search");
    dse->add_option("--config", config_path, "JSON config file");
    dse->add_option("--seed", seed, "search seed override");
    dse->add_option("--out", out_dir, "output directory");
    dse->add_option("--alpha-beta", preset, "penalty preset: bert-b|bert-l|vit|gpt2|bloom|llama");

    auto* bench = app.add_subcommand("bench", "wall-clock vs modeled latency");
    bench->add_option("--seed", seed, "workload seed");
    bench->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        uint64_t s = seed >= 0 ? static_cast<uint64_t>(seed) : 1;
        if (*run)
            return cmd_run(config_path, out_dir, seed, dataflow, rass, k_override,
                           segments_override);
        if (*fig) return cmd_figdata(figure, out_dir, s);
        if (*dse) return cmd_dse(config_path, out_dir, seed, preset);
        if (*bench) return cmd_bench(out_dir, s);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
