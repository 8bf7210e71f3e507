#include "catefusion/estimators.hpp"

#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "catefusion/errors.hpp"
#include "catefusion/rng.hpp"

namespace catefusion {

std::string method_name(Method m) {
    switch (m) {
        case Method::racer: return "racer";
        case Method::sr_oscar: return "sr_oscar";
        case Method::mr_oscar: return "mr_oscar";
        case Method::r_oscar: return "r_oscar";
    }
    return "unknown";
}

std::optional<Method> method_from_string(const std::string& s) {
    if (s == "racer") return Method::racer;
    if (s == "sr_oscar") return Method::sr_oscar;
    if (s == "mr_oscar") return Method::mr_oscar;
    if (s == "r_oscar") return Method::r_oscar;
    return std::nullopt;
}

double normal_quantile(double p) {
    // Acklam's rational approximation refined by one Halley step.
    if (p <= 0.0 || p >= 1.0) throw std::invalid_argument("normal_quantile: p must be in (0,1)");
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    double q, r, x;
    if (p < 0.02425) {
        q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 0.97575) {
        q = p - 0.5;
        r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

Vector ImputationModel::predict_row(const Eigen::Ref<const Vector>& z) const {
    Vector out(p_v());
    for (int j = 0; j < p_v(); ++j) {
        double eta = fits[(std::size_t)j].predict(z);
        out[j] = kinds[(std::size_t)j] == Kind::logistic_lasso ? 1.0 / (1.0 + std::exp(-eta)) : eta;
    }
    return out;
}

Matrix ImputationModel::predict(const Matrix& z) const {
    Matrix out(z.rows(), p_v());
    for (Eigen::Index i = 0; i < z.rows(); ++i) out.row(i) = predict_row(z.row(i)).transpose();
    return out;
}

namespace {

// stage identifiers for seed derivation; deliberately method-independent so
// that pipelines coincide exactly when their stages see identical data
constexpr std::uint64_t kSeedCrossfit = 101;
constexpr std::uint64_t kSeedFinal = 102;
constexpr std::uint64_t kSeedRctOutcome = 103;
constexpr std::uint64_t kSeedOsOutcome = 104;
constexpr std::uint64_t kSeedDiscrepancy = 105;
constexpr std::uint64_t kSeedImputation = 106;

Matrix rows_of(const Matrix& x, const std::vector<int>& rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

Vector entries_of(const Vector& v, const std::vector<int>& rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[rows[i]];
    return out;
}

PenaltySpec solver_spec(const EstimatorConfig& cfg) {
    PenaltySpec sp;
    sp.tol = cfg.solver_tol;
    sp.max_iter = cfg.solver_max_iter;
    return sp;
}

struct StageOut {
    PenalizedFit fit;
    double lambda = 0.0;
};

/// One CV-tuned LASSO stage: pick lambda by K-fold CV, refit on all rows.
/// CV path fits run at a looser tolerance than the final refit; held-out
/// losses are insensitive at that level.
StageOut run_stage(const Matrix& x, const Vector& y, const EstimatorConfig& cfg,
                   std::uint64_t seed, const std::vector<int>* strata = nullptr) {
    PenaltySpec sp = solver_spec(cfg);
    StageOut out;
    if (x.cols() == 0) {
        out.fit = fit_lasso(x, y, nullptr, sp);
        out.lambda = 0.0;
        out.fit.lambda_used = 0.0;
        return out;
    }
    PenaltySpec sp_cv = sp;
    sp_cv.tol = std::max(sp.tol, 1e-5);
    CvResult cv = cv_select_lambda(x, y, nullptr, cfg.cv_folds, cfg.path.length, CvLoss::squared,
                                   seed, strata, nullptr, &sp_cv);
    sp.lambda = cv.lambda_min;
    out.fit = fit_lasso(x, y, nullptr, sp);
    out.lambda = cv.lambda_min;
    return out;
}

int arm_index(double a) { return a > 0 ? 1 : 0; }
double arm_of_index(int idx) { return idx == 1 ? 1.0 : -1.0; }

struct StageLog {
    std::vector<StageSummary>* out;
    void add(const std::string& name, const StageOut& s) {
        out->push_back({name, s.lambda, static_cast<int>(s.fit.support.size())});
    }
};

ImputationModel fit_imputation_seeded(const SourceSample& os, const BlockPartition& bp,
                                      const EstimatorConfig& cfg, std::uint64_t seed) {
    Matrix z = extract_block(os, Block::Z);
    Matrix v = extract_block(os, Block::V);
    ImputationModel model;
    PenaltySpec sp = solver_spec(cfg);
    for (int j = 0; j < bp.p_v; ++j) {
        Vector vj = v.col(j);
        bool constant = (vj.array() == vj[0]).all();
        bool binary = !constant && ((vj.array() == 0.0) || (vj.array() == 1.0)).all();
        if (constant) {
            emit_warning("fit_imputation: V coordinate " + std::to_string(j) +
                         " is constant; intercept-only fit");
            PenalizedFit fit;
            fit.coefficients = Vector::Zero(z.cols());
            fit.intercept = vj[0];
            fit.converged = true;
            model.fits.push_back(std::move(fit));
            model.kinds.push_back(ImputationModel::Kind::gaussian_lasso);
            continue;
        }
        std::uint64_t sj = derive_seed(seed, {static_cast<std::uint64_t>(j)});
        if (binary) {
            CvResult cv = cv_select_lambda(z, vj, nullptr, cfg.cv_folds, cfg.path.length,
                                           CvLoss::logistic, sj, nullptr, nullptr, &sp);
            PenaltySpec spl = sp;
            spl.lambda = cv.lambda_min;
            model.fits.push_back(fit_logistic_lasso(z, vj, spl));
            model.kinds.push_back(ImputationModel::Kind::logistic_lasso);
        } else {
            StageOut s = run_stage(z, vj, cfg, sj);
            model.fits.push_back(std::move(s.fit));
            model.kinds.push_back(ImputationModel::Kind::gaussian_lasso);
        }
    }
    return model;
}

/// Arm means evaluated through one fold's pipeline at an RCT row.
struct ArmMeans {
    double mu[2];
};

ArmMeans arm_means_at(const FoldPipeline& pipe, Method method, const BlockPartition& bp,
                      const Eigen::Ref<const Vector>& xr, const Vector* v) {
    ArmMeans out{};
    if (method == Method::racer) {
        for (int a = 0; a < 2; ++a) out.mu[a] = pipe.rct_outcome[(std::size_t)a].predict(xr);
        return out;
    }
    Vector z = xr.tail(bp.p_z);
    if (method == Method::sr_oscar) {
        for (int a = 0; a < 2; ++a)
            out.mu[a] = pipe.os_outcome[(std::size_t)a].predict(z) +
                        pipe.discrepancy[(std::size_t)a].predict(xr);
        return out;
    }
    Vector vrow = method == Method::mr_oscar ? pipe.imputation.predict_row(z) : *v;
    Vector xo(bp.p_o());
    xo.head(bp.p_z) = z;
    xo.tail(bp.p_v) = vrow;
    Vector xaug(bp.p());
    xaug.head(bp.p_r()) = xr;
    xaug.tail(bp.p_v) = vrow;
    for (int a = 0; a < 2; ++a)
        out.mu[a] = pipe.os_outcome[(std::size_t)a].predict(xo) +
                    pipe.discrepancy[(std::size_t)a].predict(xaug);
    return out;
}

double preliminary_cate(const ArmMeans& m, Method method) {
    return method == Method::racer ? 0.0 : m.mu[1] - m.mu[0];
}

FoldPipeline train_fold(const FusedSample& fused, const EstimatorConfig& cfg, int fold,
                        const std::vector<int>& train_rows, StageLog& log) {
    const BlockPartition& bp = fused.partition;
    const SourceSample& rct = fused.rct;
    const auto k = static_cast<std::uint64_t>(fold);
    FoldPipeline pipe;

    std::array<std::vector<int>, 2> rct_arm_rows;
    for (int i : train_rows) rct_arm_rows[(std::size_t)arm_index(rct.treatment[i])].push_back(i);

    if (cfg.method == Method::racer) {
        for (int a = 0; a < 2; ++a) {
            const auto& rows = rct_arm_rows[(std::size_t)a];
            StageOut s = run_stage(rows_of(rct.covariates, rows), entries_of(rct.outcome, rows),
                                   cfg, derive_seed(cfg.seed, {kSeedRctOutcome, k, (std::uint64_t)a}));
            log.add("fold" + std::to_string(fold) + ".rct_outcome.arm" + (a ? "+1" : "-1"), s);
            pipe.rct_outcome[(std::size_t)a] = std::move(s.fit);
        }
        return pipe;
    }

    const SourceSample& os = fused.os;
    const bool shared_only = cfg.method == Method::sr_oscar;

    // OS nuisances are refit per fold complement with a fold-specific CV seed
    if (cfg.method == Method::mr_oscar)
        pipe.imputation = fit_imputation_seeded(os, bp, cfg, derive_seed(cfg.seed, {kSeedImputation, k}));

    Matrix os_design = shared_only ? extract_block(os, Block::Z) : os.covariates;
    for (int a = 0; a < 2; ++a) {
        std::vector<int> rows = os.arm_rows(arm_of_index(a));
        StageOut s = run_stage(rows_of(os_design, rows), entries_of(os.outcome, rows), cfg,
                               derive_seed(cfg.seed, {kSeedOsOutcome, k, (std::uint64_t)a}));
        log.add("fold" + std::to_string(fold) + ".os_outcome.arm" + (a ? "+1" : "-1"), s);
        pipe.os_outcome[(std::size_t)a] = std::move(s.fit);
    }

    // RCT discrepancy: residuals against the OS prediction, per arm
    Matrix z_rct = extract_block(rct, Block::Z);
    Matrix vhat;
    if (cfg.method == Method::mr_oscar)
        vhat = pipe.imputation.predict(z_rct);
    else if (cfg.method == Method::r_oscar)
        vhat = *rct.attached_v;

    for (int a = 0; a < 2; ++a) {
        const auto& rows = rct_arm_rows[(std::size_t)a];
        Matrix design;
        Vector resid(static_cast<Eigen::Index>(rows.size()));
        if (shared_only) {
            design = rows_of(rct.covariates, rows);
            for (std::size_t i = 0; i < rows.size(); ++i)
                resid[(Eigen::Index)i] = rct.outcome[rows[i]] -
                                         pipe.os_outcome[(std::size_t)a].predict(z_rct.row(rows[i]));
        } else {
            design.resize(static_cast<Eigen::Index>(rows.size()), bp.p());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                int r = rows[i];
                Vector xo(bp.p_o());
                xo.head(bp.p_z) = z_rct.row(r);
                xo.tail(bp.p_v) = vhat.row(r);
                design.row((Eigen::Index)i).head(bp.p_r()) = rct.covariates.row(r);
                design.row((Eigen::Index)i).tail(bp.p_v) = vhat.row(r);
                resid[(Eigen::Index)i] = rct.outcome[r] - pipe.os_outcome[(std::size_t)a].predict(xo);
            }
        }
        StageOut s = run_stage(design, resid, cfg,
                               derive_seed(cfg.seed, {kSeedDiscrepancy, k, (std::uint64_t)a}));
        log.add("fold" + std::to_string(fold) + ".discrepancy.arm" + (a ? "+1" : "-1"), s);
        pipe.discrepancy[(std::size_t)a] = std::move(s.fit);
    }
    return pipe;
}

void validate_inputs(const FusedSample& fused, const EstimatorConfig& cfg) {
    auto violations = validate(fused);
    if (!violations.empty())
        throw std::invalid_argument("fit_cate: invalid FusedSample: " + violations.front().code +
                                    " (" + violations.front().detail + ")");
    if (cfg.crossfit_folds < 2) throw std::invalid_argument("fit_cate: crossfit_folds must be >= 2");
    if (cfg.cv_folds < 2) throw std::invalid_argument("fit_cate: cv_folds must be >= 2");

    const SourceSample& rct = fused.rct;
    int n_treat = static_cast<int>(rct.arm_rows(1.0).size());
    int n_control = static_cast<int>(rct.arm_rows(-1.0).size());
    if (cfg.crossfit_folds > std::min(n_treat, n_control))
        throw ArmTooSmall("fit_cate: K exceeds the smaller RCT arm");

    if (cfg.method != Method::racer) {
        const SourceSample& os = fused.os;
        int os_treat = static_cast<int>(os.arm_rows(1.0).size());
        int os_control = static_cast<int>(os.arm_rows(-1.0).size());
        if (os.n() == 0 || os_treat == 0 || os_control == 0)
            throw OsArmMissing("fit_cate: " + method_name(cfg.method) +
                               " needs OS data with both arms");
        int need = std::max(5, cfg.cv_folds);
        if (os_treat < need || os_control < need)
            throw ArmTooSmall("fit_cate: OS arm smaller than " + std::to_string(need));
    }
    if (cfg.method == Method::r_oscar && !rct.attached_v)
        throw BlockUnavailable("fit_r_oscar: RCT sample carries no true V");
    if (cfg.method == Method::mr_oscar && fused.partition.p_v > 0 &&
        fused.os.covariates.cols() != fused.partition.p_o())
        throw ImputationUnavailable("fit_mr_oscar: OS sample lacks the V block");
}

}  // namespace

ImputationModel fit_imputation(const SourceSample& os, const BlockPartition& partition,
                               const EstimatorConfig& cfg) {
    if (os.source != Source::os || os.covariates.cols() != partition.p_o())
        throw ImputationUnavailable("fit_imputation: OS sample lacks the V block");
    return fit_imputation_seeded(os, partition, cfg, derive_seed(cfg.seed, {kSeedImputation}));
}

CateEstimate fit_cate(const FusedSample& fused, const EstimatorConfig& cfg) {
    validate_inputs(fused, cfg);
    const SourceSample& rct = fused.rct;
    const BlockPartition& bp = fused.partition;
    const int n = rct.n();
    const int K = cfg.crossfit_folds;

    std::vector<int> arm_strata(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) arm_strata[(std::size_t)i] = arm_index(rct.treatment[i]);
    std::vector<int> fold_of = make_folds(n, K, derive_seed(cfg.seed, {kSeedCrossfit}), &arm_strata);

    std::vector<std::vector<int>> cell(static_cast<std::size_t>(2 * K));
    for (int i = 0; i < n; ++i)
        cell[(std::size_t)(2 * fold_of[(std::size_t)i] + arm_strata[(std::size_t)i])].push_back(i);
    for (const auto& c : cell)
        if (static_cast<int>(c.size()) < 5)
            throw ArmTooSmall("fit_cate: a cross-fit fold-arm cell has fewer than 5 units");

    Propensity prop = Propensity::constant(cfg.propensity_treat, cfg.overlap_floor);

    CateEstimate est;
    est.method = cfg.method;
    est.config = cfg;
    est.partition = bp;
    est.fold_of = fold_of;
    est.xr_train = rct.covariates;
    if (rct.attached_v) est.v_train = rct.attached_v;
    est.psi.resize(n);
    est.offset.resize(n);
    StageLog log{&est.stages};

    double abs_disc_sum = 0.0;
    int abs_disc_n = 0;
    for (int k = 0; k < K; ++k) {
        std::vector<int> train_rows, eval_rows;
        for (int i = 0; i < n; ++i)
            (fold_of[(std::size_t)i] == k ? eval_rows : train_rows).push_back(i);
        FoldPipeline pipe = train_fold(fused, cfg, k, train_rows, log);
        for (int i : eval_rows) {
            const Vector* vptr = nullptr;
            Vector vrow;
            if (cfg.method == Method::r_oscar) {
                vrow = rct.attached_v->row(i);
                vptr = &vrow;
            }
            ArmMeans m = arm_means_at(pipe, cfg.method, bp, rct.covariates.row(i), vptr);
            double m_cmo = prop.prob(rct.covariates.row(i), -1.0) * m.mu[1] +
                           prop.prob(rct.covariates.row(i), 1.0) * m.mu[0];
            est.psi[i] = pseudo_outcome_value(rct.treatment[i], rct.outcome[i], m_cmo,
                                              rct.covariates.row(i), prop);
            est.offset[i] = preliminary_cate(m, cfg.method);
        }
        // discrepancy magnitude diagnostic, evaluated off-fold
        if (cfg.method != Method::racer) {
            for (int i : eval_rows) {
                for (int a = 0; a < 2; ++a) {
                    double d;
                    if (cfg.method == Method::sr_oscar) {
                        d = pipe.discrepancy[(std::size_t)a].predict(rct.covariates.row(i));
                    } else {
                        Vector z = rct.covariates.row(i).tail(bp.p_z);
                        Vector vrow = cfg.method == Method::mr_oscar ? pipe.imputation.predict_row(z)
                                                                     : Vector(rct.attached_v->row(i));
                        Vector xaug(bp.p());
                        xaug.head(bp.p_r()) = rct.covariates.row(i);
                        xaug.tail(bp.p_v) = vrow;
                        d = pipe.discrepancy[(std::size_t)a].predict(xaug);
                    }
                    abs_disc_sum += std::abs(d);
                    ++abs_disc_n;
                }
            }
        }
        est.fold_train_rows.push_back(std::move(train_rows));
        est.folds.push_back(std::move(pipe));
    }
    est.mean_abs_discrepancy = abs_disc_n ? abs_disc_sum / abs_disc_n : 0.0;

    Vector response = est.psi - est.offset;
    StageOut fin = run_stage(rct.covariates, response, cfg, derive_seed(cfg.seed, {kSeedFinal}),
                             &arm_strata);
    log.add("final", fin);
    est.eta_intercept = fin.fit.intercept;
    est.eta_hat = fin.fit.coefficients;
    est.final_lambda = fin.lambda;
    est.final_support = fin.fit.support;

    est.tau_hat = predict_cate(est, rct.covariates, rct.attached_v ? &*rct.attached_v : nullptr);
    return est;
}

CateEstimate fit_racer(const FusedSample& fused, EstimatorConfig cfg) {
    cfg.method = Method::racer;
    return fit_cate(fused, cfg);
}
CateEstimate fit_sr_oscar(const FusedSample& fused, EstimatorConfig cfg) {
    cfg.method = Method::sr_oscar;
    return fit_cate(fused, cfg);
}
CateEstimate fit_mr_oscar(const FusedSample& fused, EstimatorConfig cfg) {
    cfg.method = Method::mr_oscar;
    return fit_cate(fused, cfg);
}
CateEstimate fit_r_oscar(const FusedSample& fused, EstimatorConfig cfg) {
    cfg.method = Method::r_oscar;
    return fit_cate(fused, cfg);
}

Vector predict_cate(const CateEstimate& est, const Matrix& xr_new, const Matrix* v_new) {
    const BlockPartition& bp = est.partition;
    if (xr_new.cols() != bp.p_r()) throw DimensionMismatch("predict_cate: X^r column mismatch");
    if (est.method == Method::r_oscar) {
        if (!v_new || v_new->cols() != bp.p_v || v_new->rows() != xr_new.rows())
            throw BlockUnavailable("predict_cate: r_oscar needs the rows' true V");
    }
    const auto n = xr_new.rows();
    Vector out = Vector::Zero(n);
    if (est.method != Method::racer) {
        const double kinv = 1.0 / static_cast<double>(est.folds.size());
        for (const FoldPipeline& pipe : est.folds) {
            for (Eigen::Index i = 0; i < n; ++i) {
                const Vector* vptr = nullptr;
                Vector vrow;
                if (est.method == Method::r_oscar) {
                    vrow = v_new->row(i);
                    vptr = &vrow;
                }
                ArmMeans m = arm_means_at(pipe, est.method, bp, xr_new.row(i), vptr);
                out[i] += kinv * preliminary_cate(m, est.method);
            }
        }
    }
    if (est.final_ols) {
        for (Eigen::Index i = 0; i < n; ++i) out[i] += est.final_ols->predict(xr_new.row(i));
    } else {
        out += (xr_new * est.eta_hat).array().matrix();
        out.array() += est.eta_intercept;
    }
    return out;
}

CateEstimate cate_confidence_intervals(const CateEstimate& est, double level) {
    if (level <= 0.0 || level >= 1.0)
        throw std::invalid_argument("cate_confidence_intervals: level must be in (0,1)");
    CateEstimate out = est;
    Vector response = est.psi - est.offset;
    out.final_ols = post_lasso_ols(est.xr_train, response, nullptr, est.final_support);
    out.ci_level = level;
    out.tau_hat = predict_cate(out, est.xr_train, est.v_train ? &*est.v_train : nullptr);
    const double z = normal_quantile(0.5 + level / 2.0);
    const auto n = est.xr_train.rows();
    Vector lo(n), hi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double se = out.final_ols->standard_error(est.xr_train.row(i));
        lo[i] = out.tau_hat[i] - z * se;
        hi[i] = out.tau_hat[i] + z * se;
    }
    out.ci_lower = std::move(lo);
    out.ci_upper = std::move(hi);
    return out;
}

std::string cate_estimate_to_json(const CateEstimate& est) {
    nlohmann::ordered_json j;
    j["method"] = method_name(est.method);
    j["eta_intercept"] = est.eta_intercept;
    j["eta_hat"] = std::vector<double>(est.eta_hat.begin(), est.eta_hat.end());
    j["final_lambda"] = est.final_lambda;
    j["final_support"] = est.final_support;
    nlohmann::ordered_json stages = nlohmann::ordered_json::array();
    for (const auto& s : est.stages)
        stages.push_back({{"stage", s.stage}, {"lambda", s.lambda}, {"support_size", s.support_size}});
    j["stages"] = stages;
    j["tau_hat"] = std::vector<double>(est.tau_hat.begin(), est.tau_hat.end());
    if (est.ci_lower && est.ci_upper) {
        j["ci_level"] = est.ci_level;
        j["ci_lower"] = std::vector<double>(est.ci_lower->begin(), est.ci_lower->end());
        j["ci_upper"] = std::vector<double>(est.ci_upper->begin(), est.ci_upper->end());
    }
    return j.dump();
}

}  // namespace catefusion
