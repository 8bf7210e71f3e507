#include "catefusion/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "catefusion/errors.hpp"
#include "catefusion/rng.hpp"

namespace catefusion {

namespace fs = std::filesystem;

namespace {
std::atomic<bool> g_cancel{false};
constexpr std::uint64_t kSeedEstimator = 9;
constexpr std::uint64_t kSeedR2Lambda = 10;
constexpr const char* kVersion = "cate_fusion 0.1.0";
}  // namespace

void request_cancel() { g_cancel.store(true); }
bool cancel_requested() { return g_cancel.load(); }
void reset_cancel() { g_cancel.store(false); }

std::string experiment_name(Experiment e) {
    switch (e) {
        case Experiment::v_effect_sweep: return "v_effect_sweep";
        case Experiment::nr_sweep: return "nr_sweep";
        case Experiment::mismatch_heatmap: return "mismatch_heatmap";
        case Experiment::r2_sweep: return "r2_sweep";
        case Experiment::custom: return "custom";
    }
    return "unknown";
}

std::optional<Experiment> experiment_from_string(const std::string& s) {
    if (s == "v_effect_sweep") return Experiment::v_effect_sweep;
    if (s == "nr_sweep") return Experiment::nr_sweep;
    if (s == "mismatch_heatmap") return Experiment::mismatch_heatmap;
    if (s == "r2_sweep") return Experiment::r2_sweep;
    if (s == "custom") return Experiment::custom;
    return std::nullopt;
}

namespace {

std::vector<double> default_grid(Experiment e) {
    switch (e) {
        case Experiment::v_effect_sweep: return {0.3, 0.5, 0.7, 0.9, 1.1, 1.3};
        case Experiment::nr_sweep: return {200, 400, 600, 800, 1000};
        case Experiment::mismatch_heatmap: return {0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
        case Experiment::r2_sweep: return {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
        case Experiment::custom: return {0.0};
    }
    return {};
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r");
    auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.push_back("");
    return out;
}

}  // namespace

std::vector<GridCell> resolve_grid(const ExperimentSpec& spec) {
    std::vector<double> levels = spec.grid.empty() ? default_grid(spec.experiment) : spec.grid;
    std::vector<GridCell> cells;
    if (spec.experiment == Experiment::mismatch_heatmap) {
        int idx = 0;
        for (double f1 : levels)
            for (double f2 : levels) {
                GridCell c;
                c.index = idx++;
                c.f1 = f1;
                c.f2 = f2;
                c.feasible = f1 + f2 <= 0.8 + 1e-12;
                std::ostringstream lab;
                lab << "f1=" << format_double(f1) << ";f2=" << format_double(f2);
                c.label = lab.str();
                cells.push_back(c);
            }
        return cells;
    }
    const char* prefix = "";
    switch (spec.experiment) {
        case Experiment::v_effect_sweep: prefix = "v_effect="; break;
        case Experiment::nr_sweep: prefix = "n_r="; break;
        case Experiment::r2_sweep: prefix = "r2="; break;
        case Experiment::custom: prefix = "point="; break;
        default: break;
    }
    for (std::size_t i = 0; i < levels.size(); ++i) {
        GridCell c;
        c.index = static_cast<int>(i);
        c.value = levels[i];
        c.label = prefix + format_double(levels[i]);
        cells.push_back(c);
    }
    return cells;
}

DgpConfig dgp_at_cell(const ExperimentSpec& spec, const GridCell& cell) {
    DgpConfig dgp = spec.dgp;
    switch (spec.experiment) {
        case Experiment::v_effect_sweep:
            // this experiment is defined at the fixed (30, 40, 30) partition
            dgp.p = 100;
            dgp.f1 = 0.3;
            dgp.f2 = 0.3;
            dgp.v_coef_mag = cell.value;
            break;
        case Experiment::nr_sweep:
            dgp.n_r = static_cast<int>(std::lround(cell.value));
            break;
        case Experiment::mismatch_heatmap:
            dgp.f1 = cell.f1;
            dgp.f2 = cell.f2;
            break;
        case Experiment::r2_sweep:
            dgp.r2_target = cell.value;
            dgp.r2_lambda_seed = derive_seed(spec.master_seed, {kSeedR2Lambda});
            break;
        case Experiment::custom:
            break;
    }
    return dgp;
}

// ---------------------------------------------------------------------------
// config file parsing

namespace {

struct KeyParser {
    ExperimentSpec* spec;
    int line_no = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw ConfigParse("line " + std::to_string(line_no) + ": " + msg);
    }

    double num(const std::string& v) const {
        char* end = nullptr;
        double d = std::strtod(v.c_str(), &end);
        if (end == v.c_str() || *end != '\0') fail("cannot parse number '" + v + "'");
        return d;
    }
    int integer(const std::string& v) const {
        double d = num(v);
        if (d != std::floor(d)) fail("expected an integer, got '" + v + "'");
        return static_cast<int>(d);
    }

    void apply(const std::string& key, const std::string& value) {
        ExperimentSpec& s = *spec;
        if (key == "experiment") {
            auto e = experiment_from_string(value);
            if (!e) fail("unknown experiment '" + value + "'");
            s.experiment = *e;
        } else if (key == "grid") {
            s.grid.clear();
            for (const auto& item : split(value, ','))
                if (!item.empty()) s.grid.push_back(num(item));
        } else if (key == "n_replicates") {
            s.n_replicates = integer(value);
            if (s.n_replicates < 1) fail("n_replicates must be >= 1");
        } else if (key == "methods") {
            s.methods.clear();
            for (const auto& item : split(value, ',')) {
                if (item.empty()) continue;
                auto m = method_from_string(item);
                if (!m) fail("unknown method '" + item + "'");
                s.methods.push_back(*m);
            }
            if (s.methods.empty()) fail("methods must not be empty");
        } else if (key == "seed") {
            s.master_seed = static_cast<std::uint64_t>(num(value));
        } else if (key == "workers") {
            s.workers = integer(value);
        } else if (key == "out") {
            s.out_dir = value;
        } else if (key == "dgp.p") {
            s.dgp.p = integer(value);
        } else if (key == "dgp.f1") {
            s.dgp.f1 = num(value);
        } else if (key == "dgp.f2") {
            s.dgp.f2 = num(value);
        } else if (key == "dgp.rho") {
            s.dgp.rho = num(value);
        } else if (key == "dgp.n_r") {
            s.dgp.n_r = integer(value);
        } else if (key == "dgp.n_o") {
            s.dgp.n_o = integer(value);
        } else if (key == "dgp.signal_prop") {
            s.dgp.signal_prop = num(value);
        } else if (key == "dgp.signal_mag") {
            s.dgp.signal_mag = num(value);
        } else if (key == "dgp.cate_mag") {
            s.dgp.cate_mag = num(value);
        } else if (key == "dgp.v_coef_mag") {
            s.dgp.v_coef_mag = num(value);
        } else if (key == "dgp.perturb_prop") {
            s.dgp.perturb_prop = num(value);
        } else if (key == "dgp.perturb_mag") {
            s.dgp.perturb_mag = num(value);
        } else if (key == "dgp.noise_sd") {
            s.dgp.noise_sd = num(value);
        } else if (key == "dgp.delta_u_min") {
            s.dgp.delta_u_min = num(value);
        } else if (key == "dgp.delta_u_max") {
            s.dgp.delta_u_max = num(value);
        } else if (key == "dgp.os_active") {
            s.dgp.os_propensity_active = integer(value);
        } else if (key == "dgp.os_gamma_min") {
            s.dgp.os_gamma_min = num(value);
        } else if (key == "dgp.os_gamma_max") {
            s.dgp.os_gamma_max = num(value);
        } else if (key == "dgp.os_treated_share") {
            s.dgp.os_treated_share = num(value);
        } else if (key == "dgp.r2_target") {
            s.dgp.r2_target = num(value);
        } else if (key == "dgp.n_eval") {
            s.dgp.n_eval = integer(value);
        } else if (key == "est.k_folds") {
            s.est.crossfit_folds = integer(value);
        } else if (key == "est.cv_folds") {
            s.est.cv_folds = integer(value);
        } else if (key == "est.path_length") {
            s.est.path.length = integer(value);
        } else if (key == "est.path_eps") {
            s.est.path.eps = num(value);
        } else if (key == "est.propensity_treat") {
            s.est.propensity_treat = num(value);
        } else if (key == "est.overlap_floor") {
            s.est.overlap_floor = num(value);
        } else if (key == "est.solver_tol") {
            s.est.solver_tol = num(value);
        } else if (key == "est.solver_max_iter") {
            s.est.solver_max_iter = integer(value);
        } else {
            fail("unknown field '" + key + "'");
        }
    }
};

}  // namespace

ExperimentSpec parse_spec(const std::string& text) {
    ExperimentSpec spec;
    KeyParser parser{&spec};
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        ++parser.line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) parser.fail("expected 'key = value'");
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        parser.apply(key, value);
    }
    // per-replicate seeds are derived from the master seed at run time
    spec.dgp.seed = 0;
    spec.dgp.r2_lambda_seed = 0;
    spec.est.seed = 0;
    return spec;
}

ExperimentSpec load_spec(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigParse("cannot open spec file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_spec(ss.str());
}

std::string emit_spec(const ExperimentSpec& s) {
    std::ostringstream out;
    out << "experiment = " << experiment_name(s.experiment) << "\n";
    out << "grid = ";
    for (std::size_t i = 0; i < s.grid.size(); ++i)
        out << (i ? "," : "") << format_double(s.grid[i]);
    out << "\n";
    out << "n_replicates = " << s.n_replicates << "\n";
    out << "methods = ";
    for (std::size_t i = 0; i < s.methods.size(); ++i)
        out << (i ? "," : "") << method_name(s.methods[i]);
    out << "\n";
    out << "seed = " << s.master_seed << "\n";
    out << "workers = " << s.workers << "\n";
    out << "out = " << s.out_dir << "\n";
    const DgpConfig d;
    out << "dgp.p = " << s.dgp.p << "\n";
    out << "dgp.f1 = " << format_double(s.dgp.f1) << "\n";
    out << "dgp.f2 = " << format_double(s.dgp.f2) << "\n";
    out << "dgp.rho = " << format_double(s.dgp.rho) << "\n";
    out << "dgp.n_r = " << s.dgp.n_r << "\n";
    out << "dgp.n_o = " << s.dgp.n_o << "\n";
    out << "dgp.signal_prop = " << format_double(s.dgp.signal_prop) << "\n";
    out << "dgp.signal_mag = " << format_double(s.dgp.signal_mag) << "\n";
    out << "dgp.cate_mag = " << format_double(s.dgp.cate_mag) << "\n";
    out << "dgp.v_coef_mag = " << format_double(s.dgp.v_coef_mag) << "\n";
    out << "dgp.perturb_prop = " << format_double(s.dgp.perturb_prop) << "\n";
    out << "dgp.perturb_mag = " << format_double(s.dgp.perturb_mag) << "\n";
    out << "dgp.noise_sd = " << format_double(s.dgp.noise_sd) << "\n";
    out << "dgp.delta_u_min = " << format_double(s.dgp.delta_u_min) << "\n";
    out << "dgp.delta_u_max = " << format_double(s.dgp.delta_u_max) << "\n";
    out << "dgp.os_active = " << s.dgp.os_propensity_active << "\n";
    out << "dgp.os_gamma_min = " << format_double(s.dgp.os_gamma_min) << "\n";
    out << "dgp.os_gamma_max = " << format_double(s.dgp.os_gamma_max) << "\n";
    out << "dgp.os_treated_share = " << format_double(s.dgp.os_treated_share) << "\n";
    if (s.dgp.r2_target) out << "dgp.r2_target = " << format_double(*s.dgp.r2_target) << "\n";
    out << "dgp.n_eval = " << s.dgp.n_eval << "\n";
    out << "est.k_folds = " << s.est.crossfit_folds << "\n";
    out << "est.cv_folds = " << s.est.cv_folds << "\n";
    out << "est.path_length = " << s.est.path.length << "\n";
    out << "est.path_eps = " << format_double(s.est.path.eps) << "\n";
    out << "est.propensity_treat = " << format_double(s.est.propensity_treat) << "\n";
    out << "est.overlap_floor = " << format_double(s.est.overlap_floor) << "\n";
    out << "est.solver_tol = " << format_double(s.est.solver_tol) << "\n";
    out << "est.solver_max_iter = " << s.est.solver_max_iter << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// sweep execution

namespace {

std::string summarize_stages(const CateEstimate& est) {
    // compress per-fold stage summaries into per-kind means
    struct Acc {
        double lambda = 0.0;
        double support = 0.0;
        int n = 0;
    };
    std::map<std::string, Acc> acc;
    for (const auto& s : est.stages) {
        std::string kind = s.stage;
        auto dot = kind.find('.');
        if (dot != std::string::npos) {
            kind = kind.substr(dot + 1);
            auto arm = kind.find(".arm");
            if (arm != std::string::npos) kind = kind.substr(0, arm);
        }
        Acc& a = acc[kind];
        a.lambda += s.lambda;
        a.support += s.support_size;
        ++a.n;
    }
    std::ostringstream out;
    bool first = true;
    for (const auto& [kind, a] : acc) {
        if (!first) out << ";";
        first = false;
        out << kind << "=" << format_double(a.lambda / a.n) << ":" << format_double(a.support / a.n);
    }
    return out.str();
}

std::uint64_t fused_digest(const GeneratedData& data) {
    std::uint64_t h = hash_matrix(data.fused.rct.covariates);
    h = hash_vector(data.fused.rct.treatment, h);
    h = hash_vector(data.fused.rct.outcome, h);
    h = hash_matrix(data.fused.os.covariates, h);
    h = hash_vector(data.fused.os.treatment, h);
    h = hash_vector(data.fused.os.outcome, h);
    h = hash_matrix(data.eval.xr, h);
    return h;
}

std::vector<ReplicateRecord> run_replicate(const ExperimentSpec& spec, const GridCell& cell,
                                           int replicate) {
    std::vector<ReplicateRecord> out;
    std::uint64_t child = derive_seed(spec.master_seed,
                                      {static_cast<std::uint64_t>(cell.index),
                                       static_cast<std::uint64_t>(replicate)});
    auto base_record = [&](Method m) {
        ReplicateRecord r;
        r.grid_index = cell.index;
        r.grid_label = cell.label;
        r.method = m;
        r.replicate = replicate;
        r.seed = child;
        return r;
    };

    if (!cell.feasible) {
        for (Method m : spec.methods) {
            ReplicateRecord r = base_record(m);
            r.error = "infeasible";
            out.push_back(std::move(r));
        }
        return out;
    }

    DgpConfig dgp = dgp_at_cell(spec, cell);
    dgp.seed = child;
    GeneratedData data;
    std::string gen_error;
    try {
        data = generate(dgp);
    } catch (const std::exception& e) {
        gen_error = e.what();
    } catch (...) {
        gen_error = "worker panic (unknown exception)";
    }
    std::uint64_t digest = gen_error.empty() ? fused_digest(data) : 0;

    for (Method m : spec.methods) {
        ReplicateRecord r = base_record(m);
        r.data_digest = digest;
        if (!gen_error.empty()) {
            r.error = "generate: " + gen_error;
            out.push_back(std::move(r));
            continue;
        }
        EstimatorConfig cfg = spec.est;
        cfg.method = m;
        cfg.seed = derive_seed(child, {kSeedEstimator});
        auto t0 = std::chrono::steady_clock::now();
        try {
            CateEstimate est = fit_cate(data.fused, cfg);
            r.rmse = true_cate_rmse(est, data.eval, data.truth);
            r.final_lambda = est.final_lambda;
            r.final_support = static_cast<int>(est.final_support.size());
            r.stage_lambdas = summarize_stages(est);
            r.ok = true;
        } catch (const std::exception& e) {
            r.error = e.what();
        } catch (...) {
            r.error = "worker panic (unknown exception)";
        }
        auto t1 = std::chrono::steady_clock::now();
        r.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

std::vector<AggregateRow> aggregate_records(const std::vector<ReplicateRecord>& records) {
    std::map<std::pair<int, int>, AggregateRow> agg;  // (grid_index, method)
    std::map<std::pair<int, int>, std::vector<double>> vals;
    for (const auto& r : records) {
        auto key = std::make_pair(r.grid_index, static_cast<int>(r.method));
        auto& row = agg[key];
        row.grid_index = r.grid_index;
        row.grid_label = r.grid_label;
        row.method = r.method;
        if (r.ok) vals[key].push_back(r.rmse);
    }
    std::vector<AggregateRow> out;
    for (auto& [key, row] : agg) {
        const auto& v = vals[key];
        row.n_ok = static_cast<int>(v.size());
        if (v.empty()) {
            row.mean_rmse = std::nan("");
            row.sd_rmse = std::nan("");
        } else {
            double m = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double s = 0.0;
            for (double x : v) s += (x - m) * (x - m);
            row.mean_rmse = m;
            row.sd_rmse = v.size() > 1 ? std::sqrt(s / (static_cast<double>(v.size()) - 1.0)) : 0.0;
        }
        out.push_back(row);
    }
    return out;
}

int resolve_workers(const ExperimentSpec& spec, int cli_override) {
    if (cli_override > 0) return cli_override;
    if (spec.workers > 0) return spec.workers;
    if (const char* env = std::getenv("CATE_FUSION_WORKERS")) {
        int w = std::atoi(env);
        if (w > 0) return w;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

ExperimentResult run_experiment(const ExperimentSpec& spec, const RecordSink& sink) {
    auto t0 = std::chrono::steady_clock::now();
    ExperimentResult result;
    result.spec = spec;
    std::vector<GridCell> cells = resolve_grid(spec);

    struct Task {
        GridCell cell;
        int replicate;
    };
    std::vector<Task> tasks;
    for (const auto& cell : cells)  // declaration order for streaming progress
        for (int rep = 0; rep < spec.n_replicates; ++rep) tasks.push_back({cell, rep});

    const int n_tasks = static_cast<int>(tasks.size());
    std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(n_tasks));
    std::vector<char> done(static_cast<std::size_t>(n_tasks), 0);
    std::atomic<int> next_task{0};
    std::mutex mu;
    std::condition_variable cv;

    int n_workers = std::min(resolve_workers(spec), std::max(n_tasks, 1));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        pool.emplace_back([&]() {
            while (!cancel_requested()) {
                int t = next_task.fetch_add(1);
                if (t >= n_tasks) break;
                auto records = run_replicate(spec, tasks[(std::size_t)t].cell,
                                             tasks[(std::size_t)t].replicate);
                {
                    std::lock_guard<std::mutex> lock(mu);
                    slots[(std::size_t)t] = std::move(records);
                    done[(std::size_t)t] = 1;
                }
                cv.notify_all();
            }
            cv.notify_all();
        });
    }

    // coordinator: flush completed tasks in declaration order
    int flushed = 0;
    {
        std::unique_lock<std::mutex> lock(mu);
        while (flushed < n_tasks) {
            cv.wait(lock, [&]() {
                return done[(std::size_t)flushed] || (cancel_requested() && next_task.load() >= 0);
            });
            if (done[(std::size_t)flushed]) {
                auto& records = slots[(std::size_t)flushed];
                if (sink) {
                    lock.unlock();
                    sink(records);
                    lock.lock();
                }
                for (auto& r : records) result.records.push_back(std::move(r));
                ++flushed;
                continue;
            }
            // cancelled: wait for in-flight tasks, then flush whatever forms a prefix
            bool any_pending = false;
            for (int t = flushed; t < std::min(n_tasks, next_task.load()); ++t)
                any_pending |= !done[(std::size_t)t];
            if (!any_pending) break;
            cv.wait_for(lock, std::chrono::milliseconds(50));
        }
    }
    for (auto& th : pool) th.join();
    result.cancelled = cancel_requested() && flushed < n_tasks;

    for (const auto& r : result.records)
        if (!r.ok && r.error != "infeasible") ++result.n_errors;
    result.aggregates = aggregate_records(result.records);
    result.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

// ---------------------------------------------------------------------------
// output files

namespace {

std::string csv_escape(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c == ',' || c == '\n' || c == '"') c = ' ';
    return out;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::string records_csv_header() {
    return "experiment,grid_index,grid_label,method,replicate,seed,data_digest,rmse,"
           "runtime_ms,final_lambda,final_support,stage_lambdas,error";
}

std::string record_to_csv(const ReplicateRecord& r, Experiment e) {
    std::ostringstream out;
    out << experiment_name(e) << ',' << r.grid_index << ',' << r.grid_label << ','
        << method_name(r.method) << ',' << r.replicate << ',' << r.seed << ',' << hex64(r.data_digest)
        << ',';
    if (r.ok)
        out << format_double(r.rmse);
    else
        out << "NA";
    out << ',' << format_double(r.runtime_ms) << ',' << format_double(r.final_lambda) << ','
        << r.final_support << ',' << r.stage_lambdas << ',' << csv_escape(r.error);
    return out.str();
}

void write_outputs(const ExperimentResult& result, const std::string& out_dir) {
    fs::create_directories(out_dir);
    fs::path dir(out_dir);

    {
        fs::path tmp = dir / "records.csv.tmp";
        std::ofstream f(tmp);
        f << records_csv_header() << "\n";
        for (const auto& r : result.records) f << record_to_csv(r, result.spec.experiment) << "\n";
        f.close();
        fs::rename(tmp, dir / "records.csv");
    }
    {
        fs::path tmp = dir / "aggregates.csv.tmp";
        std::ofstream f(tmp);
        f << "experiment,grid_index,grid_label,method,n_ok,mean_rmse,sd_rmse\n";
        for (const auto& a : result.aggregates) {
            f << experiment_name(result.spec.experiment) << ',' << a.grid_index << ',' << a.grid_label
              << ',' << method_name(a.method) << ',' << a.n_ok << ',';
            if (a.n_ok == 0)
                f << "NA,NA";
            else
                f << format_double(a.mean_rmse) << ',' << format_double(a.sd_rmse);
            f << "\n";
        }
        f.close();
        fs::rename(tmp, dir / "aggregates.csv");
    }
    {
        nlohmann::ordered_json meta;
        meta["version"] = kVersion;
        meta["spec"] = emit_spec(result.spec);
        meta["n_records"] = result.records.size();
        meta["n_errors"] = result.n_errors;
        meta["cancelled"] = result.cancelled;
        meta["wall_ms"] = result.wall_ms;
        fs::path tmp = dir / "run_meta.json.tmp";
        std::ofstream f(tmp);
        f << meta.dump(2) << "\n";
        f.close();
        fs::rename(tmp, dir / "run_meta.json");
    }
}

ExperimentResult read_results(const std::string& dir) {
    fs::path p = fs::path(dir) / "records.csv";
    std::ifstream f(p);
    if (!f) throw std::runtime_error("read_results: cannot open " + p.string());
    ExperimentResult result;

    fs::path meta_path = fs::path(dir) / "run_meta.json";
    std::ifstream mf(meta_path);
    if (mf) {
        nlohmann::json meta = nlohmann::json::parse(mf);
        if (meta.contains("spec")) result.spec = parse_spec(meta["spec"].get<std::string>());
    }

    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() < 13) throw std::runtime_error("read_results: malformed row: " + line);
        ReplicateRecord r;
        auto e = experiment_from_string(cells[0]);
        if (e) result.spec.experiment = *e;
        r.grid_index = std::atoi(cells[1].c_str());
        r.grid_label = cells[2];
        auto m = method_from_string(cells[3]);
        if (!m) throw std::runtime_error("read_results: unknown method " + cells[3]);
        r.method = *m;
        r.replicate = std::atoi(cells[4].c_str());
        r.seed = std::strtoull(cells[5].c_str(), nullptr, 10);
        r.data_digest = std::strtoull(cells[6].c_str(), nullptr, 16);
        r.ok = cells[7] != "NA";
        r.rmse = r.ok ? std::strtod(cells[7].c_str(), nullptr) : std::nan("");
        r.runtime_ms = std::strtod(cells[8].c_str(), nullptr);
        r.final_lambda = std::strtod(cells[9].c_str(), nullptr);
        r.final_support = std::atoi(cells[10].c_str());
        r.stage_lambdas = cells[11];
        r.error = cells[12];
        result.records.push_back(std::move(r));
    }
    result.aggregates = aggregate_records(result.records);
    for (const auto& r : result.records)
        if (!r.ok && r.error != "infeasible") ++result.n_errors;
    return result;
}

HeatmapTables emit_heatmap_table(const ExperimentResult& result) {
    if (result.spec.experiment != Experiment::mismatch_heatmap)
        throw std::invalid_argument("emit_heatmap_table: result is not from mismatch_heatmap");
    // recover the levels from the labels
    std::map<double, int> f1s, f2s;
    std::map<std::pair<int, int>, std::map<Method, std::pair<double, int>>> sums;
    for (const auto& r : result.records) {
        double f1 = 0, f2 = 0;
        if (std::sscanf(r.grid_label.c_str(), "f1=%lf;f2=%lf", &f1, &f2) != 2)
            throw std::runtime_error("emit_heatmap_table: bad label " + r.grid_label);
        f1s.emplace(f1, 0);
        f2s.emplace(f2, 0);
    }
    int i = 0;
    for (auto& [k, v] : f1s) v = i++;
    i = 0;
    for (auto& [k, v] : f2s) v = i++;
    for (const auto& r : result.records) {
        if (!r.ok) continue;
        double f1 = 0, f2 = 0;
        std::sscanf(r.grid_label.c_str(), "f1=%lf;f2=%lf", &f1, &f2);
        auto& cell = sums[{f1s[f1], f2s[f2]}][r.method];
        cell.first += r.rmse;
        cell.second += 1;
    }

    HeatmapTables tables;
    for (const auto& [k, v] : f1s) tables.levels.push_back(k);
    const auto n1 = static_cast<Eigen::Index>(f1s.size());
    const auto n2 = static_cast<Eigen::Index>(f2s.size());
    tables.gap_mr_racer = Matrix::Constant(n1, n2, std::nan(""));
    tables.gap_mr_sr = Matrix::Constant(n1, n2, std::nan(""));
    for (auto& [idx, per_method] : sums) {
        auto mean_of = [&](Method m) -> std::optional<double> {
            auto it = per_method.find(m);
            if (it == per_method.end() || it->second.second == 0) return std::nullopt;
            return it->second.first / it->second.second;
        };
        auto mr = mean_of(Method::mr_oscar);
        auto racer = mean_of(Method::racer);
        auto sr = mean_of(Method::sr_oscar);
        if (mr && racer) tables.gap_mr_racer(idx.first, idx.second) = *mr - *racer;
        if (mr && sr) tables.gap_mr_sr(idx.first, idx.second) = *mr - *sr;
    }
    return tables;
}

std::string HeatmapTables::to_csv(const Matrix& gap) const {
    std::ostringstream out;
    out << "f1\\f2";
    for (double f2 : levels) out << ',' << format_double(f2);
    out << "\n";
    for (Eigen::Index i = 0; i < gap.rows(); ++i) {
        out << format_double(levels[(std::size_t)i]);
        for (Eigen::Index j = 0; j < gap.cols(); ++j) {
            out << ',';
            if (std::isnan(gap(i, j)))
                out << "NA";
            else
                out << format_double(gap(i, j));
        }
        out << "\n";
    }
    return out.str();
}

std::string summarize(const ExperimentResult& result) {
    std::ostringstream out;
    out << "experiment: " << experiment_name(result.spec.experiment) << "\n";
    std::map<int, std::map<Method, const AggregateRow*>> by_cell;
    std::map<int, std::string> labels;
    for (const auto& a : result.aggregates) {
        by_cell[a.grid_index][a.method] = &a;
        labels[a.grid_index] = a.grid_label;
    }
    std::vector<Method> methods = result.spec.methods;
    out << "grid point";
    for (Method m : methods) out << " | " << method_name(m);
    out << "\n";
    for (const auto& [idx, per_method] : by_cell) {
        out << labels[idx];
        for (Method m : methods) {
            auto it = per_method.find(m);
            out << " | ";
            if (it == per_method.end() || it->second->n_ok == 0) {
                out << "NA";
            } else {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "%.4f +/- %.4f", it->second->mean_rmse,
                              it->second->sd_rmse);
                out << buf;
            }
        }
        out << "\n";
    }
    if (result.n_errors > 0) out << "errors: " << result.n_errors << " replicate failures\n";
    return out.str();
}

}  // namespace catefusion
