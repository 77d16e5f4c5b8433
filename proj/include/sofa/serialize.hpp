#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "sofa/costmodel.hpp"
#include "sofa/dse.hpp"
#include "sofa/pipeline.hpp"
#include "sofa/rass.hpp"

// JSON views of the result types. nlohmann::json orders keys alphabetically,
// which is what the golden-file comparisons rely on.

namespace sofa {

using json = nlohmann::json;

constexpr int kSchemaVersion = 1;

inline json to_json(const OpTally& t) {
    return json{{"add", t.add}, {"cmp", t.cmp},   {"shift", t.shift},
                {"mul", t.mul}, {"exp", t.exp},   {"div", t.div}};
}

inline json to_json(const LatencyReport& r) {
    return json{{"compute_s", r.compute_s}, {"dram_s", r.dram_s}, {"sram_s", r.sram_s},
                {"total_s", r.total_s},     {"mat", r.mat}};
}

inline json to_json(const CostReport& c) {
    json stages = json::array();
    for (const auto& st : c.stages)
        stages.push_back(json{{"name", st.name},
                              {"ops", to_json(st.ops)},
                              {"dram_bytes", st.dram_bytes},
                              {"sram_bytes", st.sram_bytes}});
    return json{{"schema_version", c.schema_version},
                {"stages", stages},
                {"weighted_total", c.weighted_total},
                {"dram_bytes", c.dram_bytes},
                {"sram_bytes", c.sram_bytes},
                {"energy_pj", c.energy_pj},
                {"num_tiles", c.num_tiles},
                {"latency_standard", to_json(c.latency_standard)},
                {"latency_tiled", to_json(c.latency_tiled)}};
}

inline json to_json(const SchedulePlan& plan) {
    json phases = json::array();
    for (const auto& p : plan.phases)
        phases.push_back(json{{"keys", p.keys}, {"served_mask", p.served.hex()}});
    return json{{"schema_version", kSchemaVersion},
                {"phases", phases},
                {"total_key_fetches", plan.total_key_fetches()}};
}

inline json to_json(const RunSummary& s) {
    return json{{"schema_version", kSchemaVersion},
                {"recall_mean", s.recall_mean},
                {"rel_err_mean", s.rel_err_mean},
                {"rel_err_max", s.rel_err_max},
                {"correction_events", s.correction_events},
                {"clipped_values", s.clipped_values},
                {"prediction_skipped_terms", s.prediction_skipped_terms},
                {"selected_union_keys", s.selected_union_keys},
                {"kv_fetches_rass", s.kv_fetches_rass},
                {"kv_fetches_baseline", s.kv_fetches_baseline},
                {"kv_fetch_bytes", s.kv_fetch_bytes},
                {"scale_used", s.scale_used},
                {"num_tiles", s.num_tiles},
                {"tile_spill_warning", s.tile_spill_warning},
                {"weighted", json{{"dense_attention", s.weighted_dense_attention},
                                  {"formal", s.weighted_formal},
                                  {"prediction", s.weighted_prediction},
                                  {"sorting", s.weighted_sorting},
                                  {"kv_generation", s.weighted_kv_gen},
                                  {"dense_qkv", s.weighted_dense_qkv}}},
                {"reduction_attention_only", s.reduction_attention_only},
                {"reduction_net", s.reduction_net},
                {"reduction_attention_qkv", s.reduction_attention_qkv},
                {"net_saving_weighted", s.net_saving_weighted},
                {"tallies", json{{"prediction", to_json(s.prediction_tally)},
                                 {"sorting", to_json(s.sorting_tally)},
                                 {"kv_generation", to_json(s.kv_gen_tally)},
                                 {"formal_update", to_json(s.formal_tally.update)},
                                 {"formal_mac", to_json(s.formal_tally.mac)},
                                 {"formal_normalize", to_json(s.formal_tally.normalize)}}}};
}

inline json to_json(const DseResult& r) {
    json history = json::array();
    for (const auto& s : r.history)
        history.push_back(json{{"encoded", s.encoded},
                               {"failed", s.failed},
                               {"J", s.failed ? json() : json(s.parts.total)},
                               {"len", s.parts.len},
                               {"cmp", s.parts.cmp},
                               {"exp_penalty", s.parts.exp_penalty}});
    json best = json::array();
    for (const auto& c : r.best) best.push_back(json{{"tc", c.tc}, {"k", c.k}});
    return json{{"schema_version", kSchemaVersion},
                {"best", best},
                {"best_J", r.best_parts.total},
                {"best_len", r.best_parts.len},
                {"best_cmp", r.best_parts.cmp},
                {"best_exp_penalty", r.best_parts.exp_penalty},
                {"evaluations", r.evaluations},
                {"converged_early", r.converged_early},
                {"incumbent_trace", r.incumbent_trace},
                {"history", history}};
}

// temp-file + rename so partially written outputs are never observed
inline void atomic_write_file(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        check_state(out.good(), "cannot open for write: " + tmp.string());
        out << content;
        check_state(out.good(), "write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string canonical_dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace sofa
