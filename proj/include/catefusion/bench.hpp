#pragma once

#include <atomic>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "catefusion/dgp.hpp"
#include "catefusion/estimators.hpp"

namespace catefusion {

enum class Experiment { v_effect_sweep, nr_sweep, mismatch_heatmap, r2_sweep, custom };

std::string experiment_name(Experiment e);
std::optional<Experiment> experiment_from_string(const std::string& s);

/// A sweep over one design axis. `grid` holds the axis values (for the
/// mismatch heatmap, the common levels of both fractions); empty means the
/// experiment's default grid. The same DgpConfig/EstimatorConfig base is used
/// at every point with the axis value substituted.
struct ExperimentSpec {
    Experiment experiment = Experiment::v_effect_sweep;
    std::vector<double> grid;
    int n_replicates = 50;
    std::vector<Method> methods = {Method::racer, Method::sr_oscar, Method::mr_oscar,
                                   Method::r_oscar};
    DgpConfig dgp;
    EstimatorConfig est;
    std::string out_dir = "results";
    std::uint64_t master_seed = 1;
    int workers = 0;  // 0 = CATE_FUSION_WORKERS env or hardware concurrency

    bool operator==(const ExperimentSpec&) const = default;
};

ExperimentSpec load_spec(const std::string& path);
ExperimentSpec parse_spec(const std::string& text);
std::string emit_spec(const ExperimentSpec& spec);

struct GridCell {
    int index = 0;
    std::string label;
    double value = 0.0;      // scalar-axis experiments
    double f1 = 0.0, f2 = 0.0;  // mismatch heatmap
    bool feasible = true;
};
std::vector<GridCell> resolve_grid(const ExperimentSpec& spec);

/// DgpConfig at one grid cell (replicate seed not yet applied).
DgpConfig dgp_at_cell(const ExperimentSpec& spec, const GridCell& cell);

struct ReplicateRecord {
    int grid_index = 0;
    std::string grid_label;
    Method method = Method::racer;
    int replicate = 0;
    std::uint64_t seed = 0;
    std::uint64_t data_digest = 0;  // identical across methods within a replicate
    double rmse = 0.0;
    double runtime_ms = 0.0;
    double final_lambda = 0.0;
    int final_support = 0;
    std::string stage_lambdas;  // per-stage-kind "name=mean_lambda:mean_support"
    std::string error;          // empty = ok; "infeasible" = expected NA cell
    bool ok = false;
};

struct AggregateRow {
    int grid_index = 0;
    std::string grid_label;
    Method method = Method::racer;
    int n_ok = 0;
    double mean_rmse = 0.0;  // NaN when n_ok = 0
    double sd_rmse = 0.0;
};

struct ExperimentResult {
    ExperimentSpec spec;
    std::vector<ReplicateRecord> records;  // (grid, replicate, method) order
    std::vector<AggregateRow> aggregates;
    int n_errors = 0;  // failures, excluding expected-infeasible cells
    bool cancelled = false;
    double wall_ms = 0.0;
};

/// Called from the coordinator in deterministic task order as replicates
/// complete; used for streaming CSV output.
using RecordSink = std::function<void(const std::vector<ReplicateRecord>&)>;

/// Runs the sweep on a worker pool. Within a (grid cell, replicate) every
/// method is fit on the identical generated sample and scored on the shared
/// evaluation set. Replicate failures become error records and never abort
/// the sweep. Honors request_cancel() between tasks.
ExperimentResult run_experiment(const ExperimentSpec& spec, const RecordSink& sink = nullptr);

void request_cancel();
bool cancel_requested();
void reset_cancel();

std::vector<AggregateRow> aggregate_records(const std::vector<ReplicateRecord>& records);

/// records.csv + aggregates.csv (+ run_meta.json) in out_dir; record files are
/// byte-identical across reruns of the same spec.
void write_outputs(const ExperimentResult& result, const std::string& out_dir);
std::string records_csv_header();
std::string record_to_csv(const ReplicateRecord& r, Experiment e);

ExperimentResult read_results(const std::string& dir);

/// RMSE gap tables over the (f1, f2) grid; infeasible cells are NaN.
struct HeatmapTables {
    std::vector<double> levels;       // common f1/f2 levels
    Matrix gap_mr_racer;              // RMSE(MR) - RMSE(RACER), rows f1 x cols f2
    Matrix gap_mr_sr;                 // RMSE(MR) - RMSE(SR)
    std::string to_csv(const Matrix& gap) const;
};
HeatmapTables emit_heatmap_table(const ExperimentResult& result);

/// Console table of mean +/- sd per grid point and method.
std::string summarize(const ExperimentResult& result);

int resolve_workers(const ExperimentSpec& spec, int cli_override = 0);

}  // namespace catefusion
