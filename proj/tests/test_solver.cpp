#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "catefusion/errors.hpp"
#include "catefusion/rng.hpp"
#include "catefusion/solver.hpp"
#include "support/oracles.hpp"

using namespace catefusion;
namespace tst = catefusion::testing;

namespace {

Matrix gaussian_design(int n, int p, Rng& rng, double corr = 0.0) {
    Matrix x(n, p);
    for (int i = 0; i < n; ++i) {
        double shared = rng.normal();
        for (int j = 0; j < p; ++j)
            x(i, j) = std::sqrt(1.0 - corr) * rng.normal() + std::sqrt(corr) * shared;
    }
    return x;
}

}  // namespace

TEST_CASE("lasso matches the closed-form solution on orthonormal designs") {
    Rng rng(71);
    for (int rep = 0; rep < 5; ++rep) {
        Matrix x = tst::orthonormal_design(200, 12, rng);
        Vector truth = Vector::Zero(12);
        truth[1] = 1.0;
        truth[4] = -0.6;
        truth[7] = 0.08;
        Vector y = x * truth;
        for (int i = 0; i < 200; ++i) y[i] += 1.5 + 0.3 * rng.normal();

        PenaltySpec spec;
        spec.lambda = 0.1;
        PenalizedFit fit = fit_lasso(x, y, nullptr, spec);
        Vector oracle = tst::orthonormal_lasso_oracle(x, y, 0.1);
        CHECK(fit.converged);
        CHECK((fit.coefficients - oracle).lpNorm<Eigen::Infinity>() < 1e-10);
        for (Eigen::Index j = 0; j < 12; ++j) {
            bool in_support = std::find(fit.support.begin(), fit.support.end(), (int)j) != fit.support.end();
            CHECK(in_support == (fit.coefficients[j] != 0.0));
        }
    }
}

TEST_CASE("lasso at lambda=0 equals the normal-equations OLS solve") {
    Rng rng(72);
    Matrix x = gaussian_design(150, 8, rng, 0.3);
    Vector y(150);
    for (int i = 0; i < 150; ++i) y[i] = 0.7 * x(i, 0) - 1.2 * x(i, 5) + rng.normal();

    PenaltySpec spec;
    spec.lambda = 0.0;
    spec.tol = 1e-12;
    spec.max_iter = 100000;
    PenalizedFit fit = fit_lasso(x, y, nullptr, spec);
    double icpt;
    Vector ols = tst::ols_oracle(x, y, icpt);
    CHECK(fit.converged);
    CHECK((fit.coefficients - ols).lpNorm<Eigen::Infinity>() < 1e-8);
    CHECK(fit.intercept == doctest::Approx(icpt).epsilon(1e-8));
}

TEST_CASE("lambda >= lambda_max forces an all-zero slope solution") {
    Rng rng(73);
    Matrix x = gaussian_design(80, 10, rng, 0.2);
    Vector y(80), offset(80);
    for (int i = 0; i < 80; ++i) {
        y[i] = 0.5 * x(i, 2) + rng.normal();
        offset[i] = 0.3 * rng.normal();
    }
    double lmax = lasso_lambda_max(x, y, &offset, true);

    PenaltySpec spec;
    spec.lambda = lmax;
    PenalizedFit fit = fit_lasso(x, y, &offset, spec);
    CHECK(fit.support.empty());
    CHECK(fit.coefficients.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(fit.intercept == doctest::Approx((y - offset).mean()).epsilon(1e-12));

    spec.lambda = 1.1 * lmax;
    fit = fit_lasso(x, y, &offset, spec);
    CHECK(fit.support.empty());

    // just below lambda_max at least one slope activates
    spec.lambda = 0.98 * lmax;
    fit = fit_lasso(x, y, &offset, spec);
    CHECK(!fit.support.empty());
}

TEST_CASE("KKT stationarity holds at every returned fit") {
    Rng rng(74);
    PenaltySpec spec;
    for (int rep = 0; rep < 20; ++rep) {
        int n = 60 + (int)(rng.uniform() * 100);
        int p = 5 + (int)(rng.uniform() * 30);
        Matrix x = gaussian_design(n, p, rng, 0.4);
        Vector y(n);
        for (int i = 0; i < n; ++i) y[i] = x(i, 0) - 0.5 * x(i, p - 1) + 0.8 * rng.normal();
        spec.lambda = rng.uniform(0.01, 0.5);
        PenalizedFit fit = fit_lasso(x, y, nullptr, spec);
        CHECK(fit.converged);
        double viol = tst::lasso_kkt_violation(x, y, nullptr, spec.lambda, true,
                                               fit.intercept, fit.coefficients);
        CHECK(viol <= 10.0 * spec.tol);
    }
}

TEST_CASE("penalized objective is non-increasing across sweeps") {
    Rng rng(75);
    Matrix x = gaussian_design(120, 25, rng, 0.5);
    Vector y(120);
    for (int i = 0; i < 120; ++i) y[i] = x(i, 3) + rng.normal();
    PenaltySpec spec;
    spec.lambda = 0.05;
    FitDiagnostics diag;
    fit_lasso(x, y, nullptr, spec, &diag);
    REQUIRE(diag.sweeps > 1);
    for (std::size_t k = 1; k < diag.objective_per_sweep.size(); ++k)
        CHECK(diag.objective_per_sweep[k] <= diag.objective_per_sweep[k - 1] + 1e-12);
}

TEST_CASE("supports are exactly nested along the path on orthonormal designs") {
    Rng rng(76);
    Matrix x = tst::orthonormal_design(300, 15, rng);
    Vector y(300);
    for (int i = 0; i < 300; ++i)
        y[i] = 1.2 * x(i, 0) + 0.8 * x(i, 5) - 0.4 * x(i, 9) + 0.2 * x(i, 12) + rng.normal();
    Vector path = make_lambda_path(lasso_lambda_max(x, y, nullptr, true), 40);
    PenaltySpec spec;
    LassoPath fits = fit_lasso_path(x, y, nullptr, path, spec);
    for (Eigen::Index k = 1; k < path.size(); ++k)
        for (Eigen::Index j = 0; j < 15; ++j)
            if (fits.coefficients(j, k - 1) != 0.0) CHECK(fits.coefficients(j, k) != 0.0);
}

TEST_CASE("rescaling a column leaves fitted values unchanged when standardizing") {
    Rng rng(77);
    Matrix x = gaussian_design(100, 6, rng, 0.2);
    Vector y(100);
    for (int i = 0; i < 100; ++i) y[i] = x(i, 1) - x(i, 4) + 0.5 * rng.normal();
    PenaltySpec spec;
    spec.lambda = 0.08;
    PenalizedFit base = fit_lasso(x, y, nullptr, spec);
    Matrix x2 = x;
    x2.col(1) *= 37.5;
    PenalizedFit scaled = fit_lasso(x2, y, nullptr, spec);
    Vector yhat1 = base.predict_matrix(x);
    Vector yhat2 = scaled.predict_matrix(x2);
    CHECK((yhat1 - yhat2).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("constant columns get coefficient zero; bad shapes throw") {
    Rng rng(78);
    Matrix x = gaussian_design(50, 4, rng);
    x.col(2).setConstant(3.0);
    Vector y(50);
    for (int i = 0; i < 50; ++i) y[i] = x(i, 0) + rng.normal();
    PenaltySpec spec;
    spec.lambda = 0.01;
    PenalizedFit fit = fit_lasso(x, y, nullptr, spec);
    CHECK(fit.coefficients[2] == 0.0);

    Vector yshort(10);
    CHECK_THROWS_AS(fit_lasso(x, yshort, nullptr, spec), DimensionMismatch);
    Vector off(12);
    CHECK_THROWS_AS(fit_lasso(x, y, &off, spec), DimensionMismatch);
}

TEST_CASE("offset enters the squared-error fit as a fixed shift") {
    Rng rng(79);
    Matrix x = gaussian_design(90, 5, rng);
    Vector y(90), off(90);
    for (int i = 0; i < 90; ++i) {
        off[i] = 2.0 * rng.normal();
        y[i] = off[i] + 0.9 * x(i, 2) + 0.3 * rng.normal();
    }
    PenaltySpec spec;
    spec.lambda = 0.05;
    PenalizedFit with_off = fit_lasso(x, y, &off, spec);
    Vector resid = y - off;
    PenalizedFit direct = fit_lasso(x, resid, nullptr, spec);
    CHECK((with_off.coefficients - direct.coefficients).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(with_off.intercept == doctest::Approx(direct.intercept).epsilon(1e-12));
}

TEST_CASE("logistic lasso: no-signal design gives logit(mean) intercept and zero slopes") {
    int n = 60;
    Matrix x = Matrix::Zero(n, 3);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = i % 2 == 0 ? 1.0 : 0.0;
    PenaltySpec spec;
    spec.lambda = 0.0;
    PenalizedFit fit = fit_logistic_lasso(x, y, spec);
    CHECK(fit.coefficients.lpNorm<Eigen::Infinity>() == 0.0);
    CHECK(fit.intercept == doctest::Approx(std::log(0.5 / 0.5)).epsilon(1e-8));

    Vector y2 = y;
    y2[0] = 0.0;  // 29/60 ones
    double pbar = y2.mean();
    fit = fit_logistic_lasso(x, y2, spec);
    CHECK(fit.intercept == doctest::Approx(std::log(pbar / (1 - pbar))).epsilon(1e-6));
}

TEST_CASE("logistic lasso: lambda at lambda_max zeroes every slope") {
    Rng rng(80);
    Matrix x = gaussian_design(120, 6, rng);
    Vector y(120);
    for (int i = 0; i < 120; ++i) y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-x(i, 1)))) ? 1.0 : 0.0;
    double lmax = logistic_lambda_max(x, y, true);
    PenaltySpec spec;
    spec.lambda = lmax * 1.0000001;
    PenalizedFit fit = fit_logistic_lasso(x, y, spec);
    CHECK(fit.support.empty());
    spec.lambda = 0.8 * lmax;
    fit = fit_logistic_lasso(x, y, spec);
    CHECK(!fit.support.empty());
}

TEST_CASE("logistic lasso agrees with an independent proximal-gradient solver") {
    Rng rng(81);
    int n = 200;
    Matrix x(n, 1);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = rng.normal();
        y[i] = rng.bernoulli(1.0 / (1.0 + std::exp(-2.5 * x(i, 0)))) ? 1.0 : 0.0;
    }
    PenaltySpec spec;
    spec.lambda = 0.05;
    spec.standardize = false;
    spec.tol = 1e-10;
    PenalizedFit fit = fit_logistic_lasso(x, y, spec);
    double icpt;
    Vector oracle = tst::logistic_fista_oracle(x, y, 0.05, icpt);
    CHECK(std::abs(fit.coefficients[0] - oracle[0]) < 1e-4);
    CHECK(std::abs(fit.intercept - icpt) < 1e-4);
}

TEST_CASE("logistic lasso flags separation and validates labels") {
    int n = 40;
    Matrix x(n, 1);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = i < 20 ? -1.0 - 0.05 * i : 1.0 + 0.05 * i;
        y[i] = i < 20 ? 0.0 : 1.0;
    }
    PenaltySpec spec;
    spec.lambda = 0.0;
    PenalizedFit fit = fit_logistic_lasso(x, y, spec);
    CHECK(fit.separation_warning);

    Vector bad = y;
    bad[3] = 2.0;
    CHECK_THROWS(fit_logistic_lasso(x, bad, spec));
    Vector ones = Vector::Ones(n);
    CHECK_THROWS(fit_logistic_lasso(x, ones, spec));
}

TEST_CASE("cv on pure noise chooses heavy shrinkage") {
    int in_top_quartile = 0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        Matrix x = gaussian_design(200, 40, rng);
        Vector y(200);
        for (int i = 0; i < 200; ++i) y[i] = rng.normal();
        CvResult cv = cv_select_lambda(x, y, nullptr, 5, 100, CvLoss::squared, 1000 + seed);
        Eigen::Index idx = 0;
        for (Eigen::Index k = 0; k < cv.lambda_path.size(); ++k)
            if (cv.lambda_path[k] == cv.lambda_min) idx = k;
        if (idx < cv.lambda_path.size() / 4) ++in_top_quartile;
    }
    CHECK(in_top_quartile >= 16);
}

TEST_CASE("cv recovers a strong 1-sparse signal") {
    int hits = 0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(2000 + seed);
        Matrix x = gaussian_design(500, 20, rng, 0.2);
        Vector y(500);
        for (int i = 0; i < 500; ++i) y[i] = 2.0 * x(i, 3) + 0.5 * rng.normal();
        CvResult cv = cv_select_lambda(x, y, nullptr, 5, 100, CvLoss::squared, 2000 + seed);
        PenaltySpec spec;
        spec.lambda = cv.lambda_min;
        PenalizedFit fit = fit_lasso(x, y, nullptr, spec);
        if (std::find(fit.support.begin(), fit.support.end(), 3) != fit.support.end()) ++hits;
    }
    CHECK(hits >= 19);
}

TEST_CASE("cv boundary and validity properties") {
    Rng rng(82);
    Matrix x = gaussian_design(10, 3, rng);
    Vector y(10);
    for (int i = 0; i < 10; ++i) y[i] = x(i, 0) + 0.2 * rng.normal();

    // leave-one-out
    CvResult loo = cv_select_lambda(x, y, nullptr, 10, 30, CvLoss::squared, 9);
    CHECK(loo.lambda_path.size() == 30);
    CHECK(loo.cv_mean_loss.size() == 30);
    bool in_path = false;
    double min_loss = loo.cv_mean_loss.minCoeff();
    for (Eigen::Index k = 0; k < 30; ++k) {
        if (loo.lambda_path[k] == loo.lambda_min) {
            in_path = true;
            CHECK(loo.cv_mean_loss[k] == doctest::Approx(min_loss));
        }
        if (k > 0) CHECK(loo.lambda_path[k] < loo.lambda_path[k - 1]);
    }
    CHECK(in_path);

    CHECK_THROWS(cv_select_lambda(x, y, nullptr, 11, 30, CvLoss::squared, 9));

    CvResult again = cv_select_lambda(x, y, nullptr, 10, 30, CvLoss::squared, 9);
    CHECK(again.lambda_min == loo.lambda_min);
    CHECK(again.fold_assignments == loo.fold_assignments);
}

TEST_CASE("stratified folds keep both arms in every fold") {
    std::vector<int> strata(40);
    for (int i = 0; i < 40; ++i) strata[i] = i < 28 ? 1 : -1;
    std::vector<int> folds = make_folds(40, 4, 77, &strata);
    for (int f = 0; f < 4; ++f) {
        int a = 0, b = 0;
        for (int i = 0; i < 40; ++i)
            if (folds[(std::size_t)i] == f) (strata[(std::size_t)i] == 1 ? a : b)++;
        CHECK(a == 7);
        CHECK(b == 3);
    }
}

TEST_CASE("post-lasso ols: empty support reduces to intercept-only inference") {
    Rng rng(83);
    int n = 64;
    Matrix x = gaussian_design(n, 5, rng);
    Vector y(n);
    for (int i = 0; i < n; ++i) y[i] = 2.0 + rng.normal();
    OlsFit fit = post_lasso_ols(x, y, nullptr, {});
    CHECK(fit.support.empty());
    CHECK(fit.intercept == doctest::Approx(y.mean()).epsilon(1e-12));
    double sd = std::sqrt((y.array() - y.mean()).square().sum() / (n - 1));
    double half = 1.96 * fit.standard_error(x.row(0));
    CHECK(half == doctest::Approx(1.96 * sd / std::sqrt((double)n)).epsilon(1e-10));
}

TEST_CASE("post-lasso ols on the full support equals plain OLS") {
    Rng rng(84);
    Matrix x = gaussian_design(70, 4, rng, 0.3);
    Vector y(70);
    for (int i = 0; i < 70; ++i) y[i] = 1.0 + x(i, 0) - 0.5 * x(i, 3) + 0.4 * rng.normal();
    OlsFit fit = post_lasso_ols(x, y, nullptr, {0, 1, 2, 3});
    double icpt;
    Vector ols = tst::ols_oracle(x, y, icpt);
    CHECK((fit.coefficients - ols).lpNorm<Eigen::Infinity>() < 1e-9);
    CHECK(fit.intercept == doctest::Approx(icpt).epsilon(1e-9));
}

TEST_CASE("post-lasso ols confidence intervals cover on a 2-sparse truth") {
    int covered = 0, total = 0;
    for (int seed = 0; seed < 100; ++seed) {
        Rng rng(3000 + seed);
        int n = 1000;
        Matrix x = gaussian_design(n, 10, rng);
        Vector y(n);
        for (int i = 0; i < n; ++i) y[i] = 1.5 * x(i, 2) - 0.8 * x(i, 7) + 0.1 * rng.normal();
        OlsFit fit = post_lasso_ols(x, y, nullptr, {2, 7});
        Matrix cov = fit.covariance;
        double truth[2] = {1.5, -0.8};
        for (int k = 0; k < 2; ++k) {
            double se = std::sqrt(cov(k + 1, k + 1));
            double est = fit.coefficients[k];
            if (std::abs(est - truth[k]) <= 1.96 * se) ++covered;
            ++total;
        }
    }
    CHECK((double)covered / total >= 0.90);
}

TEST_CASE("post-lasso ols drops collinear columns by index order") {
    Rng rng(85);
    Matrix x = gaussian_design(50, 4, rng);
    x.col(3) = 2.0 * x.col(1);
    Vector y(50);
    for (int i = 0; i < 50; ++i) y[i] = x(i, 1) + 0.3 * rng.normal();
    OlsFit fit = post_lasso_ols(x, y, nullptr, {1, 3});
    CHECK(fit.support == std::vector<int>{1});
    CHECK(fit.dropped == std::vector<int>{3});

    // near-singular but not exactly collinear support triggers the guard
    Matrix x2 = x;
    x2.col(2) = x2.col(1) + 1e-7 * x2.col(0);
    CHECK_THROWS_AS(post_lasso_ols(x2, y, nullptr, std::vector<int>{1, 2}), RankDeficient);
}
