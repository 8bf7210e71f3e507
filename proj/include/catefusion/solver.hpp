#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "catefusion/types.hpp"

namespace catefusion {

/// L1 penalty and solver controls. The intercept is never penalized.
struct PenaltySpec {
    double lambda = 0.0;
    bool standardize = true;
    int max_iter = 10000;    // total coordinate-descent sweeps
    double tol = 1e-7;       // max absolute coefficient change per sweep
};

struct PenalizedFit {
    double intercept = 0.0;
    Vector coefficients;           // original scale, length = #features
    std::vector<int> support;      // indices with nonzero coefficient
    double lambda_used = 0.0;
    double objective_value = 0.0;  // penalized objective on the (standardized) problem
    bool converged = false;
    bool separation_warning = false;  // logistic only: fitted probability within 1e-8 of {0,1}

    double predict(const Eigen::Ref<const Vector>& x) const {
        return intercept + coefficients.dot(x);
    }
    Vector predict_matrix(const Matrix& x) const {
        return (x * coefficients).array() + intercept;
    }
};

/// Optional per-sweep trace, used by property tests.
struct FitDiagnostics {
    std::vector<double> objective_per_sweep;
    int sweeps = 0;
};

enum class CvLoss { squared, logistic };

struct CvResult {
    Vector lambda_path;   // descending, positive
    Vector cv_mean_loss;  // pooled held-out loss per path point
    double lambda_min = 0.0;
    std::vector<int> fold_assignments;
};

/// Squared-error LASSO: minimizes (1/n)*sum_i (y_i - offset_i - b0 - x_i'b)^2 + lambda*||b||_1
/// by cyclic coordinate descent with soft-thresholding and an active-set inner
/// loop. With standardize=true the problem is solved on centered unit-variance
/// columns and coefficients are mapped back to the original scale. Constant
/// columns get coefficient zero.
PenalizedFit fit_lasso(const Matrix& x, const Vector& y, const Vector* offset,
                       const PenaltySpec& spec, FitDiagnostics* diag = nullptr);

/// Warm-started fits along a descending lambda path; column j of the result
/// pair holds the fit for lambdas[j].
struct LassoPath {
    Vector lambdas;
    Matrix coefficients;  // p x path length, original scale
    Vector intercepts;
};
LassoPath fit_lasso_path(const Matrix& x, const Vector& y, const Vector* offset,
                         const Vector& lambdas, const PenaltySpec& spec);

/// Penalized logistic regression, y in {0,1}: minimizes
/// (1/n)*NLL(b0, b) + lambda*||b||_1 via iteratively reweighted coordinate descent.
PenalizedFit fit_logistic_lasso(const Matrix& x, const Vector& y, const PenaltySpec& spec);

/// Smallest lambda at which every slope is zero, for the objective above.
double lasso_lambda_max(const Matrix& x, const Vector& y, const Vector* offset, bool standardize);
double logistic_lambda_max(const Matrix& x, const Vector& y, bool standardize);

/// Log-spaced descending path from lambda_max to eps*lambda_max.
Vector make_lambda_path(double lambda_max, int length, double eps = 1e-3);

/// K-fold cross-validation over a lambda path. The path is built once from the
/// full data (or taken from `path` when supplied) and shared by all folds.
/// Held-out losses are pooled per observation; lambda_min is the smallest
/// lambda among loss ties. Folds are deterministic in `seed` and stratified by
/// `strata` labels when given.
CvResult cv_select_lambda(const Matrix& x, const Vector& y, const Vector* offset,
                          int n_folds, int path_length, CvLoss loss, std::uint64_t seed,
                          const std::vector<int>* strata = nullptr,
                          const Vector* path = nullptr,
                          const PenaltySpec* solver_spec = nullptr);

/// OLS refit on a selected support plus intercept, with the homoscedastic
/// covariance sigma2 * (Xs'Xs)^-1 where sigma2 = RSS/(n - |support| - 1).
/// Collinear support columns are dropped deterministically by index order.
struct OlsFit {
    double intercept = 0.0;
    Vector coefficients;             // on kept support columns, original scale
    std::vector<int> support;        // kept columns, ascending
    Matrix covariance;               // (1+|support|) square; row/col 0 is the intercept
    double sigma2 = 0.0;
    std::vector<int> dropped;        // support columns removed as collinear

    /// Prediction at a full covariate row (only support columns are read).
    double predict(const Eigen::Ref<const Vector>& x) const;
    /// Standard error of the predicted mean at a full covariate row.
    double standard_error(const Eigen::Ref<const Vector>& x) const;
};
OlsFit post_lasso_ols(const Matrix& x, const Vector& y, const Vector* offset,
                      const std::vector<int>& support);

/// Deterministic fold labels in [0, n_folds), optionally stratified.
std::vector<int> make_folds(int n, int n_folds, std::uint64_t seed,
                            const std::vector<int>* strata = nullptr);

}  // namespace catefusion
