#pragma once

#include <cstdint>
#include <optional>
#include <tuple>

#include "catefusion/data_model.hpp"
#include "catefusion/types.hpp"

namespace catefusion {

struct CateEstimate;  // estimators.hpp

/// Simulation design. Defaults reproduce the base benchmark scenario:
/// p = 100 equicorrelated Gaussian covariates (rho = 0.4) split
/// (p_u, p_z, p_v) = (30, 40, 30), n_r = 300, n_o = 1000, sparse linear
/// outcomes with 5% X^r signal of magnitude 2/3 and V coefficients of
/// magnitude 1, a U mean shift and a 2% coefficient perturbation in the RCT,
/// OS treatment from a sparse logistic model targeting a 1/3 treated share,
/// and Gaussian noise with sd 0.5.
struct DgpConfig {
    int p = 100;
    double f1 = 0.3;  // p_u = floor(f1 * p)
    double f2 = 0.3;  // p_v = floor(f2 * p)
    double rho = 0.4;
    int n_r = 300;
    int n_o = 1000;
    double signal_prop = 0.05;
    double signal_mag = 2.0 / 3.0;
    double cate_mag = 2.0 / 3.0;  // treated-arm contrast magnitude
    double v_coef_mag = 1.0;
    double perturb_prop = 0.02;
    double perturb_mag = 0.25;
    double noise_sd = 0.5;
    double delta_u_min = 0.25;
    double delta_u_max = 0.5;
    int os_propensity_active = 10;  // |S| active Z indices
    double os_gamma_min = 0.25;
    double os_gamma_max = 0.5;
    double os_treated_share = 1.0 / 3.0;
    std::optional<double> r2_target;   // enables the R^2-controlled V | Z design
    std::uint64_t r2_lambda_seed = 0;  // sweep-level seed for Lambda; 0 = use `seed`
    int n_eval = 2000;
    std::uint64_t seed = 0;

    bool operator==(const DgpConfig&) const = default;
};

/// Ground truth of one generated dataset.
struct DgpTruth {
    BlockPartition partition;
    double rho = 0.0;
    Vector beta_control, beta_treat;          // OS coefficient vectors, length p
    Vector beta_control_rct, beta_treat_rct;  // RCT vectors (perturbation applied)
    Vector delta_u;                           // RCT mean shift on U
    std::vector<int> os_propensity_support;
    Vector gamma;
    double alpha0 = 0.0;
    Matrix lambda;            // p_v x p_z population map E[V | Z] = Lambda Z
    Matrix sigma_v_given_z;   // p_v x p_v conditional covariance of V | Z
    Matrix sigma_zz;          // p_z x p_z covariance of Z (same in both sources)
    double noise_sd = 0.0;

    /// tau^r(x^r) = (beta_treat_rct - beta_control_rct) restricted to (U, Z).
    double true_cate(const Eigen::Ref<const Vector>& xr) const;
};

/// Fresh RCT-distributed rows used to score estimators; v carries the true
/// OS-only block of each row (needed by the oracle method).
struct EvalSet {
    Matrix xr;
    Matrix v;
    Vector tau_true;
};

struct GeneratedData {
    FusedSample fused;
    DgpTruth truth;
    EvalSet eval;
};

/// Draws one replicate. The RCT view carries the true V as attached oracle V.
GeneratedData generate(const DgpConfig& cfg);

/// R^2-controlled variant: V = Lambda Z + eps with per-coordinate noise
/// variance Var(lambda_j' Z) * (1 - R^2) / R^2, Lambda held fixed across a
/// sweep via `r2_lambda_seed`.
GeneratedData generate_r2_controlled(const DgpConfig& cfg);

/// Root-mean-squared error of an estimator's predictions against the true
/// CATE over an evaluation set.
double true_cate_rmse(const CateEstimate& est, const EvalSet& eval, const DgpTruth& truth);

/// Population covariance of the latent X under the equicorrelated design.
Matrix equicorrelated_sigma(int p, double rho);

}  // namespace catefusion
