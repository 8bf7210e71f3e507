#pragma once

// Test-only oracles, independent of the library's solver path.

#include <cmath>

#include "catefusion/rng.hpp"
#include "catefusion/types.hpp"

namespace catefusion::testing {

/// Design with exactly orthonormal, mean-zero columns scaled so X'X/n = I:
/// QR of [1 | G] for Gaussian G, discarding the constant direction.
inline Matrix orthonormal_design(int n, int p, Rng& rng) {
    Matrix g(n, p + 1);
    g.col(0).setOnes();
    for (int i = 0; i < n; ++i)
        for (int j = 1; j <= p; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, p + 1);
    return q.rightCols(p) * std::sqrt(static_cast<double>(n));
}

/// Closed-form LASSO solution on an orthonormal design (X'X/n = I, columns
/// mean zero) for the objective (1/n)||y - b0 - Xb||^2 + lambda ||b||_1:
/// b_j = sign(rho_j) * max(|rho_j| - lambda/2, 0) with rho_j = x_j'y / n.
inline Vector orthonormal_lasso_oracle(const Matrix& x, const Vector& y, double lambda) {
    const double n = static_cast<double>(x.rows());
    Vector rho = x.transpose() * (y.array() - y.mean()).matrix() / n;
    Vector b(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double a = std::abs(rho[j]) - lambda / 2.0;
        b[j] = a > 0.0 ? (rho[j] > 0 ? a : -a) : 0.0;
    }
    return b;
}

/// OLS with intercept via the normal equations (direct linear solve).
inline Vector ols_oracle(const Matrix& x, const Vector& y, double& intercept) {
    Matrix d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    Vector beta = (d.transpose() * d).ldlt().solve(d.transpose() * y);
    intercept = beta[0];
    return beta.tail(x.cols());
}

/// Max KKT violation of a squared-error LASSO fit, recomputed from scratch in
/// the standardized coordinates the solver optimizes in.
inline double lasso_kkt_violation(const Matrix& x, const Vector& y, const Vector* offset,
                                  double lambda, bool standardized_fit,
                                  double intercept, const Vector& coef) {
    const double n = static_cast<double>(x.rows());
    Vector yw = offset ? Vector(y - *offset) : y;
    Vector resid = yw - (x * coef).array().matrix();
    resid.array() -= intercept;
    double worst = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        double m = x.col(j).mean();
        Vector c = x.col(j).array() - m;
        double sd = std::sqrt(c.squaredNorm() / n);
        if (sd < 1e-12) continue;  // constant column: excluded by convention
        Vector xs = standardized_fit ? Vector(c / sd) : std::move(c);
        double g = 2.0 * xs.dot(resid) / n;
        double internal_coef = standardized_fit ? coef[j] * sd : coef[j];
        if (internal_coef != 0.0)
            worst = std::max(worst, std::abs(std::abs(g) - lambda));
        else
            worst = std::max(worst, std::max(0.0, std::abs(g) - lambda));
    }
    return worst;
}

/// Penalized logistic regression by FISTA proximal gradient on the raw design
/// (no standardization): (1/n) NLL(b0, b) + lambda ||b||_1, intercept free.
inline Vector logistic_fista_oracle(const Matrix& x, const Vector& y, double lambda,
                                    double& intercept, int iters = 200000) {
    const auto n = x.rows();
    const auto p = x.cols();
    Matrix d(n, p + 1);
    d.col(0).setOnes();
    d.rightCols(p) = x;
    // Lipschitz bound for (1/n) NLL: lmax(D'D) / (4n)
    Eigen::SelfAdjointEigenSolver<Matrix> es(d.transpose() * d);
    double step = 1.0 / (es.eigenvalues().maxCoeff() / (4.0 * static_cast<double>(n)));
    Vector beta = Vector::Zero(p + 1), z = beta, beta_prev = beta;
    double t = 1.0;
    for (int it = 0; it < iters; ++it) {
        Vector eta = d * z;
        Vector grad = Vector::Zero(p + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            double pi = 1.0 / (1.0 + std::exp(-eta[i]));
            grad += (pi - y[i]) * d.row(i).transpose();
        }
        grad /= static_cast<double>(n);
        Vector next = z - step * grad;
        for (Eigen::Index j = 1; j <= p; ++j) {
            double v = next[j], thr = step * lambda;
            next[j] = v > thr ? v - thr : (v < -thr ? v + thr : 0.0);
        }
        double tn = (1.0 + std::sqrt(1.0 + 4.0 * t * t)) / 2.0;
        z = next + ((t - 1.0) / tn) * (next - beta);
        beta_prev = beta;
        beta = next;
        t = tn;
        if ((beta - beta_prev).lpNorm<Eigen::Infinity>() < 1e-11 && it > 10) break;
    }
    intercept = beta[0];
    return beta.tail(p);
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double sample_sd(const std::vector<double>& v) {
    double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace catefusion::testing
