#pragma once

#include <cstdint>

#include "catefusion/types.hpp"

namespace catefusion {

struct DgpTruth;  // dgp.hpp

/// Linear-Gaussian imputation setting V = Lambda_s Z + eps_s for s in {o, r}.
/// `lambda_o` and `sigma_zz_o` are only needed for the estimation term and
/// the transfer factor; they default to the RCT quantities.
struct LinearGaussianSpec {
    Matrix lambda_r;         // p_v x p_z
    Matrix sigma_zz_r;       // p_z x p_z, SPD
    Matrix sigma_v_given_z_r;  // p_v x p_v, PSD
    Matrix lambda_o;
    Matrix sigma_zz_o;
};

struct ImputationRiskReport {
    double r_im_sq_empirical = 0.0;  // Monte-Carlo E||Lambda_hat Z - V||^2 under the RCT law
    double mc_standard_error = 0.0;
    double shift_term = 0.0;       // tr((Lambda_hat - Lambda_r) Sigma_zz_r (...)^T)
    double noise_term = 0.0;       // tr(Sigma_{V|Z}^r)
    double estimation_term = 0.0;  // tr((Lambda_hat - Lambda_o) Sigma_zz_o (...)^T)
    double kappa = 0.0;            // ||Sigma_zz_r (Sigma_zz_o)^{-1}||_op
    double gap() const { return r_im_sq_empirical - (shift_term + noise_term); }
};

/// Exact decomposition r_im^2 = shift + noise, checked against a fresh
/// Monte-Carlo draw of (Z, V) under the RCT law.
ImputationRiskReport imputation_risk_decompose(const Matrix& lambda_hat,
                                               const LinearGaussianSpec& spec, int n_mc,
                                               std::uint64_t seed);

ImputationRiskReport imputation_risk_decompose(const Matrix& lambda_hat, const DgpTruth& truth,
                                               int n_mc, std::uint64_t seed);

/// Operator norm of the symmetrized form (Sigma_o)^{-1/2} Sigma_r
/// (Sigma_o)^{-1/2}, computed by power iteration to 1e-8 relative tolerance.
double transfer_factor(const Matrix& sigma_zz_r, const Matrix& sigma_zz_o);

std::string imputation_risk_report_to_json(const ImputationRiskReport& report);

}  // namespace catefusion
