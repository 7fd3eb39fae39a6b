// flowcast command-line front end: ingestion, training, evaluation,
// prediction, ablation, latency benchmarking and synthetic log generation.
//
// Exit codes: 0 success, 1 user/config error, 2 data error, 3 internal error.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "flowcast/config.hpp"
#include "flowcast/error.hpp"
#include "flowcast/event_log.hpp"
#include "flowcast/pipeline.hpp"

namespace fc = flowcast;
namespace fs = std::filesystem;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::string out_dir;
    long long seed = -1;
    int threads = 0;
    std::string structure;  // forced structure override
};

fc::RunConfig load_config(const GlobalOpts& g) {
    fc::RunConfig cfg = g.config_path.empty() ? fc::RunConfig::defaults()
                                              : fc::RunConfig::from_file(g.config_path);
    if (g.seed >= 0) cfg.seed = static_cast<std::uint64_t>(g.seed);
    if (g.threads > 0) cfg.threads = g.threads;
    if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
    cfg.validate();
    return cfg;
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw fc::ConfigError("cannot create output directory " + dir + ": " + ec.message());
}

std::optional<fc::StructureId> forced_structure(const GlobalOpts& g) {
    if (g.structure.empty()) return std::nullopt;
    return fc::structure_from_name(g.structure);
}

void print_stats(const fc::LogStats& st) {
    std::cout << "cases:                 " << st.cases << '\n'
              << "activities:            " << st.distinct_activities << '\n'
              << "events:                " << st.events << '\n';
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", st.avg_case_length);
    std::cout << "avg_case_length:       " << buf << '\n'
              << "max_case_length:       " << st.max_case_length << '\n';
    std::snprintf(buf, sizeof(buf), "%.1f%%", 100.0 * st.case_repetition_ratio);
    std::cout << "case_repetition_ratio: " << buf << '\n';
}

int cmd_ingest(const std::string& path, const fc::CsvSchema& schema) {
    const fc::EventLog log = fc::parse_csv_log(path, schema);
    print_stats(fc::compute_stats(log));
    return 0;
}

template <typename T>
int run_train(const fc::RunConfig& cfg) {
    if (cfg.data_path.empty()) throw fc::ConfigError("train requires data.path in the config");
    const fc::EventLog log = fc::parse_csv_log(cfg.data_path, cfg.schema);
    ensure_out_dir(cfg.out_dir);

    const auto cv = fc::run_cv<T>(log, cfg);

    const std::string dataset = fs::path(cfg.data_path).stem().string();
    std::vector<fc::MetricsRow> rows;
    for (std::size_t f = 0; f < cv.result.per_fold.size(); ++f)
        rows.push_back({dataset, std::to_string(f), "adaptive", cv.result.per_fold[f]});
    rows.push_back({dataset, "mean", "adaptive", cv.result.averaged});
    fc::write_metrics_csv(rows, cfg.out_dir + "/metrics.csv");

    const fc::FoldAssignment folds = fc::split_folds(log, cfg.seed);
    fc::write_fold_csv(folds, log, cfg.out_dir + "/folds.csv");

    for (std::size_t f = 0; f < cv.folds.size(); ++f) {
        fc::save_artifacts(cv.folds[f].artifacts,
                           cfg.out_dir + "/artifacts_fold" + std::to_string(f) + ".fcab");
        fc::write_agent_log_csv(cv.folds[f].agent_log,
                                cfg.out_dir + "/agent_log_fold" + std::to_string(f) + ".csv");
        for (int s = 0; s < fc::kNumActions; ++s) {
            std::ofstream tl(cfg.out_dir + "/train_log_fold" + std::to_string(f) + "_" +
                             fc::structure_name(static_cast<fc::StructureId>(s)) + ".csv");
            tl << "epoch,train_loss,val_accuracy\n";
            for (const auto& row : cv.folds[f].stage1[static_cast<std::size_t>(s)].curve)
                tl << row.epoch << ',' << row.train_loss << ',' << row.val_accuracy << '\n';
        }
    }
    std::cout << fc::format_metrics_table(rows);
    std::cout << "artifacts and reports written to " << cfg.out_dir << '\n';
    return 0;
}

int cmd_train(const GlobalOpts& g) {
    const fc::RunConfig cfg = load_config(g);
    if (cfg.precision == "float64") return run_train<double>(cfg);
    return run_train<float>(cfg);
}

int cmd_evaluate(const GlobalOpts& g, const std::string& artifacts_path,
                 const std::string& data_path) {
    const fc::RunConfig cfg = load_config(g);
    const auto artifacts = fc::load_artifacts<float>(artifacts_path);
    fc::CsvSchema schema = cfg.schema;
    const fc::EventLog log = fc::parse_csv_log(data_path.empty() ? cfg.data_path : data_path, schema);

    std::vector<fc::EncodedTrace> encoded;
    encoded.reserve(log.traces.size());
    for (const auto& t : log.traces) encoded.push_back(fc::encode_trace(t, artifacts.encoders));
    std::vector<const fc::EncodedTrace*> ptrs;
    for (const auto& t : encoded) ptrs.push_back(&t);

    const auto metrics =
        fc::evaluate_policy(artifacts, ptrs, artifacts.min_k, forced_structure(g), cfg.threads);
    const std::string dataset = fs::path(data_path.empty() ? cfg.data_path : data_path).stem().string();
    std::vector<fc::MetricsRow> rows{
        {dataset, "-", g.structure.empty() ? "adaptive" : g.structure, metrics}};
    std::cout << fc::format_metrics_table(rows);
    if (!g.out_dir.empty()) {
        ensure_out_dir(g.out_dir);
        fc::write_metrics_csv(rows, g.out_dir + "/evaluate_metrics.csv");
    }
    return 0;
}

int cmd_predict(const GlobalOpts& g, const std::string& artifacts_path, const std::string& data_path,
                int top_n) {
    const fc::RunConfig cfg = load_config(g);
    const auto artifacts = fc::load_artifacts<float>(artifacts_path);
    const fc::EventLog log = fc::parse_csv_log(data_path, cfg.schema);
    const auto forced = forced_structure(g);

    for (const auto& trace : log.traces) {
        for (const auto& e : trace.events)
            if (artifacts.encoders.activity.encode(e.activity) == fc::kUnkIndex)
                std::cerr << "warning: activity '" << e.activity
                          << "' was not seen in training; mapped to the unknown token\n";

        const fc::EncodedTrace enc = fc::encode_trace(trace, artifacts.encoders);
        const std::size_t k = enc.events.size();

        const auto t0 = std::chrono::steady_clock::now();
        int action;
        if (forced) {
            action = static_cast<int>(*forced);
        } else {
            const auto state = fc::extract_state(enc, k).to_array();
            action = fc::greedy_action(artifacts.qnet->forward(artifacts.scaler.apply(state)));
        }
        std::vector<int> acts(k);
        for (std::size_t i = 0; i < k; ++i) acts[i] = enc.events[i].activity_id;
        const auto graph = fc::assemble_structure(acts, static_cast<fc::StructureId>(action));
        const auto probs =
            artifacts.predictors[static_cast<std::size_t>(action)]->predict(graph, enc, k);
        const auto t1 = std::chrono::steady_clock::now();

        std::vector<std::size_t> order(probs.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });

        std::cout << "case " << trace.case_id << ": structure "
                  << fc::structure_name(static_cast<fc::StructureId>(action))
                  << (forced ? " (forced)" : "") << ", prefix length " << k << '\n';
        for (int i = 0; i < top_n && i < static_cast<int>(order.size()); ++i) {
            const std::size_t cls = order[static_cast<std::size_t>(i)];
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", probs[cls]);
            std::cout << "  " << buf << "  "
                      << artifacts.encoders.activity.decode(static_cast<int>(cls)) << '\n';
        }
        char lat[32];
        std::snprintf(lat, sizeof(lat), "%.3f",
                      std::chrono::duration<double, std::milli>(t1 - t0).count());
        std::cout << "  latency_ms: " << lat << '\n';
    }
    return 0;
}

template <typename T>
int run_ablate(const fc::RunConfig& cfg) {
    if (cfg.data_path.empty()) throw fc::ConfigError("ablate requires data.path in the config");
    const fc::EventLog log = fc::parse_csv_log(cfg.data_path, cfg.schema);
    ensure_out_dir(cfg.out_dir);
    const auto rows = fc::ablation_run<T>(log, cfg);

    const std::string dataset = fs::path(cfg.data_path).stem().string();
    std::vector<fc::MetricsRow> mrows;
    for (const auto& r : rows) mrows.push_back({dataset, "mean", r.policy, r.metrics});
    fc::write_metrics_csv(mrows, cfg.out_dir + "/ablation.csv");
    std::cout << fc::format_metrics_table(mrows);
    return 0;
}

int cmd_ablate(const GlobalOpts& g) {
    const fc::RunConfig cfg = load_config(g);
    if (cfg.precision == "float64") return run_ablate<double>(cfg);
    return run_ablate<float>(cfg);
}

int cmd_bench(const GlobalOpts& g, const std::string& artifacts_path, const std::string& data_path) {
    const fc::RunConfig cfg = load_config(g);
    const auto artifacts = fc::load_artifacts<float>(artifacts_path);
    const fc::EventLog log = fc::parse_csv_log(data_path.empty() ? cfg.data_path : data_path,
                                               cfg.schema);
    std::vector<fc::EncodedTrace> encoded;
    encoded.reserve(log.traces.size());
    for (const auto& t : log.traces) encoded.push_back(fc::encode_trace(t, artifacts.encoders));
    std::vector<const fc::EncodedTrace*> ptrs;
    for (const auto& t : encoded) ptrs.push_back(&t);

    const auto rows =
        fc::benchmark_latency(artifacts, ptrs, artifacts.min_k, cfg.bench_repetitions);
    ensure_out_dir(cfg.out_dir);
    fc::write_bench_csv(rows, cfg.out_dir + "/latency.csv");
    for (const auto& r : rows) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%-9s mean %8.3f ms   p95 %8.3f ms   (%zu samples)\n",
                      r.policy.c_str(), r.stats.mean_ms, r.stats.p95_ms, r.stats.samples);
        std::cout << buf;
    }
    return 0;
}

int cmd_synth(const GlobalOpts& g, const std::string& out_path) {
    const fc::RunConfig cfg = load_config(g);
    const fc::EventLog log = fc::generate_synthetic_log(cfg.synth, cfg.seed);
    fc::CsvSchema schema;  // canonical columns for generated logs
    schema.resource_column = "resource";
    fc::write_csv_log(log, out_path, schema);
    print_stats(fc::compute_stats(log));
    std::cout << "synthetic log written to " << out_path << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"process event-log ingestion, next-activity model training and prediction"};
    app.require_subcommand(1);

    GlobalOpts g;
    app.add_option("--config", g.config_path, "configuration file (key = value lines)");
    app.add_option("--seed", g.seed, "override the config seed");
    app.add_option("--out", g.out_dir, "override the output directory");
    app.add_option("--threads", g.threads, "override the thread count");
    app.add_option("--structure", g.structure, "force a graph structure (G1..G4)");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse an event log and print its statistics");
    std::string ingest_path;
    fc::CsvSchema ingest_schema;
    ingest->add_option("csv", ingest_path, "event log CSV")->required();
    ingest->add_option("--case-col", ingest_schema.case_column, "case id column");
    ingest->add_option("--activity-col", ingest_schema.activity_column, "activity column");
    ingest->add_option("--timestamp-col", ingest_schema.timestamp_column, "timestamp column");
    ingest->add_option("--resource-col", ingest_schema.resource_column, "resource column");
    ingest->add_option("--ts-format", ingest_schema.timestamp_format, "timestamp format");
    std::string ingest_delim = ",";
    ingest->add_option("--delimiter", ingest_delim, "field delimiter");

    auto* train = app.add_subcommand("train", "run three-fold training and write artifacts");

    auto* evaluate = app.add_subcommand("evaluate", "evaluate an artifact bundle on an event log");
    std::string eval_artifacts, eval_data;
    evaluate->add_option("--artifacts", eval_artifacts, "artifact bundle")->required();
    evaluate->add_option("--data", eval_data, "event log CSV (defaults to config data.path)");

    auto* predict = app.add_subcommand("predict", "predict the next activity for prefix rows");
    std::string pred_artifacts, pred_data;
    int pred_top = 5;
    predict->add_option("--artifacts", pred_artifacts, "artifact bundle")->required();
    predict->add_option("--data", pred_data, "prefix rows as CSV")->required();
    predict->add_option("--top", pred_top, "how many candidates to print");

    auto* ablate = app.add_subcommand("ablate", "fixed-structure ablation plus adaptive policy");

    auto* bench = app.add_subcommand("bench", "per-prediction latency benchmark");
    std::string bench_artifacts, bench_data;
    bench->add_option("--artifacts", bench_artifacts, "artifact bundle")->required();
    bench->add_option("--data", bench_data, "event log CSV (defaults to config data.path)");

    auto* synth = app.add_subcommand("synth", "generate a synthetic event log");
    std::string synth_out;
    synth->add_option("output", synth_out, "output CSV path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ingest) {
            if (ingest_delim.size() != 1) throw fc::ConfigError("--delimiter must be one character");
            ingest_schema.delimiter = ingest_delim[0];
            return cmd_ingest(ingest_path, ingest_schema);
        }
        if (*train) return cmd_train(g);
        if (*evaluate) return cmd_evaluate(g, eval_artifacts, eval_data);
        if (*predict) return cmd_predict(g, pred_artifacts, pred_data, pred_top);
        if (*ablate) return cmd_ablate(g);
        if (*bench) return cmd_bench(g, bench_artifacts, bench_data);
        if (*synth) return cmd_synth(g, synth_out);
        throw fc::ConfigError("no subcommand given");
    } catch (const fc::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const fc::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return 3;
    }
}
