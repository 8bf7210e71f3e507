#include "catefusion/theory.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "catefusion/dgp.hpp"
#include "catefusion/errors.hpp"
#include "catefusion/rng.hpp"

namespace catefusion {

namespace {

Matrix cholesky_or_throw(const Matrix& s, const char* what) {
    Eigen::LLT<Matrix> llt(s);
    if (llt.info() != Eigen::Success) throw SingularCovariance(std::string(what) + ": not positive definite");
    return llt.matrixL();
}

/// PSD square root via eigendecomposition (PSD inputs may be singular).
Matrix psd_sqrt(const Matrix& s) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(s);
    Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

ImputationRiskReport imputation_risk_decompose(const Matrix& lambda_hat,
                                               const LinearGaussianSpec& spec, int n_mc,
                                               std::uint64_t seed) {
    const auto p_v = lambda_hat.rows();
    const auto p_z = lambda_hat.cols();
    if (spec.lambda_r.rows() != p_v || spec.lambda_r.cols() != p_z)
        throw DimensionMismatch("imputation_risk_decompose: Lambda shape mismatch");
    if (spec.sigma_zz_r.rows() != p_z || spec.sigma_v_given_z_r.rows() != p_v)
        throw DimensionMismatch("imputation_risk_decompose: covariance shape mismatch");

    const Matrix& lambda_o = spec.lambda_o.size() ? spec.lambda_o : spec.lambda_r;
    const Matrix& sigma_zz_o = spec.sigma_zz_o.size() ? spec.sigma_zz_o : spec.sigma_zz_r;

    ImputationRiskReport rep;
    Matrix d_r = lambda_hat - spec.lambda_r;
    rep.shift_term = (d_r * spec.sigma_zz_r * d_r.transpose()).trace();
    rep.noise_term = spec.sigma_v_given_z_r.trace();
    Matrix d_o = lambda_hat - lambda_o;
    rep.estimation_term = (d_o * sigma_zz_o * d_o.transpose()).trace();
    rep.kappa = transfer_factor(spec.sigma_zz_r, sigma_zz_o);

    // Monte-Carlo E||Lambda_hat Z - V||^2 with Z ~ N(0, Sigma_zz_r),
    // V = Lambda_r Z + eps, eps ~ N(0, Sigma_{V|Z}^r)
    Matrix lz = cholesky_or_throw(spec.sigma_zz_r, "sigma_zz_r");
    Matrix le = psd_sqrt(spec.sigma_v_given_z_r);
    Rng rng(derive_seed(seed, {0x7269736bull}));  // "risk"
    double sum = 0.0, sum_sq = 0.0;
    Vector w(p_z), e(p_v);
    for (int i = 0; i < n_mc; ++i) {
        for (Eigen::Index j = 0; j < p_z; ++j) w[j] = rng.normal();
        for (Eigen::Index j = 0; j < p_v; ++j) e[j] = rng.normal();
        Vector z = lz * w;
        Vector v = spec.lambda_r * z + le * e;
        double err = (lambda_hat * z - v).squaredNorm();
        sum += err;
        sum_sq += err * err;
    }
    rep.r_im_sq_empirical = sum / n_mc;
    double var = (sum_sq - sum * sum / n_mc) / (n_mc - 1.0);
    rep.mc_standard_error = std::sqrt(std::max(var, 0.0) / n_mc);
    return rep;
}

ImputationRiskReport imputation_risk_decompose(const Matrix& lambda_hat, const DgpTruth& truth,
                                               int n_mc, std::uint64_t seed) {
    LinearGaussianSpec spec;
    spec.lambda_r = truth.lambda;
    spec.sigma_zz_r = truth.sigma_zz;
    spec.sigma_v_given_z_r = truth.sigma_v_given_z;
    return imputation_risk_decompose(lambda_hat, spec, n_mc, seed);
}

double transfer_factor(const Matrix& sigma_zz_r, const Matrix& sigma_zz_o) {
    if (sigma_zz_r.rows() != sigma_zz_o.rows())
        throw DimensionMismatch("transfer_factor: dimension mismatch");
    Eigen::LLT<Matrix> llt(sigma_zz_o);
    if (llt.info() != Eigen::Success)
        throw SingularCovariance("transfer_factor: Sigma_zz_o not positive definite");
    Matrix l = llt.matrixL();
    // C = L^-1 Sigma_r L^-T shares the spectrum of Sigma_r Sigma_o^-1 and is symmetric
    Matrix c = l.triangularView<Eigen::Lower>().solve(sigma_zz_r);
    c = l.triangularView<Eigen::Lower>().solve(Matrix(c.transpose()));

    const auto p = c.rows();
    Rng rng(12345);
    Vector v(p);
    for (Eigen::Index j = 0; j < p; ++j) v[j] = rng.normal();
    v.normalize();
    double eig = 0.0;
    for (int it = 0; it < 100000; ++it) {
        Vector w = c * v;
        double next = v.dot(w);
        w.normalize();
        if (it > 0 && std::abs(next - eig) <= 1e-8 * std::abs(next)) {
            eig = next;
            break;
        }
        eig = next;
        v = w;
    }
    return eig;
}

std::string imputation_risk_report_to_json(const ImputationRiskReport& rep) {
    nlohmann::ordered_json j;
    j["r_im_sq_empirical"] = rep.r_im_sq_empirical;
    j["mc_standard_error"] = rep.mc_standard_error;
    j["shift_term"] = rep.shift_term;
    j["noise_term"] = rep.noise_term;
    j["estimation_term"] = rep.estimation_term;
    j["kappa"] = rep.kappa;
    j["gap"] = rep.gap();
    return j.dump();
}

}  // namespace catefusion
