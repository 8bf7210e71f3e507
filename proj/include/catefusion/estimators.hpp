#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "catefusion/data_model.hpp"
#include "catefusion/pseudo_outcome.hpp"
#include "catefusion/solver.hpp"

namespace catefusion {

enum class Method { racer, sr_oscar, mr_oscar, r_oscar };

std::string method_name(Method m);
std::optional<Method> method_from_string(const std::string& s);

struct PathParams {
    int length = 100;
    double eps = 1e-3;
    bool operator==(const PathParams&) const = default;
};

struct EstimatorConfig {
    Method method = Method::mr_oscar;
    int crossfit_folds = 5;  // K
    int cv_folds = 5;
    std::uint64_t seed = 0;
    PathParams path;
    double propensity_treat = 0.5;  // known RCT randomization probability
    double overlap_floor = 0.01;
    double solver_tol = 1e-7;
    int solver_max_iter = 10000;

    bool operator==(const EstimatorConfig&) const = default;
};

/// Coordinate-wise imputation map g: Z -> V fit in the OS. Continuous
/// coordinates use squared-error LASSO; binary {0,1} coordinates use logistic
/// LASSO and predict the probability, not a hard label.
struct ImputationModel {
    enum class Kind { gaussian_lasso, logistic_lasso };
    std::vector<PenalizedFit> fits;  // one per V coordinate
    std::vector<Kind> kinds;

    int p_v() const { return static_cast<int>(fits.size()); }
    Vector predict_row(const Eigen::Ref<const Vector>& z) const;
    Matrix predict(const Matrix& z) const;
};

/// Nuisance models trained on one cross-fit fold complement. Which members
/// are populated depends on the method.
struct FoldPipeline {
    std::array<PenalizedFit, 2> rct_outcome;  // RACER arm means on X^r     [0]=-1, [1]=+1
    std::array<PenalizedFit, 2> os_outcome;   // SR: on Z; MR/R: on (Z, V)
    std::array<PenalizedFit, 2> discrepancy;  // SR: on X^r; MR/R: on (X^r, V)
    ImputationModel imputation;               // MR only
};

struct StageSummary {
    std::string stage;
    double lambda = 0.0;
    int support_size = 0;
};

struct CateEstimate {
    Method method = Method::racer;
    Vector tau_hat;         // per training RCT unit
    double eta_intercept = 0.0;
    Vector eta_hat;         // final-stage coefficients on X^r
    std::optional<Vector> ci_lower, ci_upper;
    double ci_level = 0.95;
    std::vector<StageSummary> stages;
    double final_lambda = 0.0;
    std::vector<int> final_support;
    double mean_abs_discrepancy = 0.0;  // diagnostic; 0 for RACER

    // cross-fit bookkeeping and the fitted pipelines, kept for prediction,
    // interval construction and the fold-separation audit
    EstimatorConfig config;
    BlockPartition partition;
    std::vector<int> fold_of;
    std::vector<std::vector<int>> fold_train_rows;
    std::vector<FoldPipeline> folds;
    Vector psi;     // cross-fit pseudo-outcomes at training rows
    Vector offset;  // cross-fit preliminary CATE at training rows
    Matrix xr_train;
    std::optional<Matrix> v_train;
    std::optional<OlsFit> final_ols;  // set once intervals are attached
};

/// Full pipeline dispatch on cfg.method.
CateEstimate fit_cate(const FusedSample& fused, const EstimatorConfig& cfg);

CateEstimate fit_racer(const FusedSample& fused, EstimatorConfig cfg);
CateEstimate fit_sr_oscar(const FusedSample& fused, EstimatorConfig cfg);
CateEstimate fit_mr_oscar(const FusedSample& fused, EstimatorConfig cfg);
/// Oracle variant: the RCT sample must carry true V (attached_v).
CateEstimate fit_r_oscar(const FusedSample& fused, EstimatorConfig cfg);

/// Imputation map fit on the OS sample (all arms pooled), one CV-tuned fit
/// per V coordinate. Constant coordinates fall back to an intercept-only fit.
ImputationModel fit_imputation(const SourceSample& os, const BlockPartition& partition,
                               const EstimatorConfig& cfg);

/// tau_hat(x) = preliminary(x) + final-stage prediction, with the preliminary
/// component averaged over the cross-fit fold pipelines. r_oscar requires the
/// rows' true V; mr_oscar imputes it from the stored fold imputation models.
Vector predict_cate(const CateEstimate& est, const Matrix& xr_new, const Matrix* v_new = nullptr);

/// Post-LASSO OLS intervals for the final stage. Returns a copy of the
/// estimate with ci_lower/ci_upper attached and tau_hat re-centered on the
/// OLS refit so that the intervals bracket the reported point estimates.
CateEstimate cate_confidence_intervals(const CateEstimate& est, double level = 0.95);

/// JSON serialization: method, final-stage coefficients, per-stage lambdas
/// and support sizes, tau_hat and intervals when present.
std::string cate_estimate_to_json(const CateEstimate& est);

double normal_quantile(double p);

}  // namespace catefusion
