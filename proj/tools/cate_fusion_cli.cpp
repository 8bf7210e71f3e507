// Experiment runner for the RCT/OS data-fusion CATE benchmark.
//   run        execute a sweep described by a spec file
//   summarize  print mean +/- sd RMSE per grid point from a results directory
//   heatmap    emit RMSE gap tables from a mismatch_heatmap run

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "catefusion/bench.hpp"
#include "catefusion/errors.hpp"

namespace fs = std::filesystem;
using namespace catefusion;

namespace {

void handle_signal(int) { request_cancel(); }

int cmd_run(const std::string& spec_path, const std::string& out_override, int workers,
            std::int64_t seed_override) {
    ExperimentSpec spec;
    try {
        spec = load_spec(spec_path);
    } catch (const ConfigParse& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    }
    if (!out_override.empty()) spec.out_dir = out_override;
    if (workers > 0) spec.workers = workers;
    if (seed_override >= 0) spec.master_seed = static_cast<std::uint64_t>(seed_override);

    fs::create_directories(spec.out_dir);
    fs::path marker = fs::path(spec.out_dir) / ".incomplete";
    {
        std::ofstream m(marker);
        m << "run in progress\n";
    }

    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);

    // stream records as replicates complete so a cancelled run leaves a valid
    // partial CSV behind the .incomplete marker
    std::ofstream records(fs::path(spec.out_dir) / "records.csv");
    records << records_csv_header() << "\n";
    int written = 0;
    RecordSink sink = [&](const std::vector<ReplicateRecord>& rows) {
        for (const auto& r : rows) records << record_to_csv(r, spec.experiment) << "\n";
        records.flush();
        ++written;
    };

    std::cout << "running " << experiment_name(spec.experiment) << " with "
              << resolve_workers(spec) << " workers -> " << spec.out_dir << "\n";
    ExperimentResult result = run_experiment(spec, sink);
    records.close();

    if (result.cancelled) {
        std::cerr << "cancelled after " << written << " replicates; partial results left in "
                  << spec.out_dir << "\n";
        return 3;
    }

    write_outputs(result, spec.out_dir);
    fs::remove(marker);
    std::cout << summarize(result);
    std::cout << "wall time: " << result.wall_ms / 1000.0 << " s\n";
    return result.n_errors > 0 ? 3 : 0;
}

int cmd_summarize(const std::string& in_dir) {
    ExperimentResult result = read_results(in_dir);
    std::cout << summarize(result);
    return 0;
}

int cmd_heatmap(const std::string& in_dir) {
    ExperimentResult result = read_results(in_dir);
    HeatmapTables tables = emit_heatmap_table(result);
    fs::path dir(in_dir);
    {
        std::ofstream f(dir / "gap_mr_racer.csv");
        f << tables.to_csv(tables.gap_mr_racer);
    }
    {
        std::ofstream f(dir / "gap_mr_sr.csv");
        f << tables.to_csv(tables.gap_mr_sr);
    }
    std::cout << "RMSE(MR-OSCAR) - RMSE(RACER):\n" << tables.to_csv(tables.gap_mr_racer);
    std::cout << "\nRMSE(MR-OSCAR) - RMSE(SR-OSCAR):\n" << tables.to_csv(tables.gap_mr_sr);
    std::cout << "\nwrote gap_mr_racer.csv and gap_mr_sr.csv to " << in_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"RCT/OS data-fusion CATE benchmark"};
    app.require_subcommand(1);

    std::string spec_path, out_dir, in_dir;
    int workers = 0;
    std::int64_t seed = -1;

    CLI::App* run = app.add_subcommand("run", "run an experiment sweep");
    run->add_option("--spec", spec_path, "spec file (key = value format)")->required();
    run->add_option("--out", out_dir, "output directory (overrides spec)");
    run->add_option("--workers", workers, "worker count (overrides spec and env)");
    run->add_option("--seed", seed, "master seed (overrides spec)");

    CLI::App* sum = app.add_subcommand("summarize", "summarize a results directory");
    sum->add_option("--in", in_dir, "results directory")->required();

    CLI::App* heat = app.add_subcommand("heatmap", "emit RMSE gap tables");
    heat->add_option("--in", in_dir, "results directory of a mismatch_heatmap run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) return cmd_run(spec_path, out_dir, workers, seed);
        if (sum->parsed()) return cmd_summarize(in_dir);
        if (heat->parsed()) return cmd_heatmap(in_dir);
    } catch (const ConfigParse& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
