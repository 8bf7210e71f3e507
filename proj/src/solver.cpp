#include "catefusion/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <set>

#include "catefusion/errors.hpp"
#include "catefusion/rng.hpp"

namespace catefusion {

std::string format_double(double x) {
    char buf[40];
    for (int prec = 1; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, x);
        if (std::strtod(buf, nullptr) == x) return buf;
    }
    return buf;
}

namespace {

double soft_threshold(double z, double lambda) {
    if (z > lambda) return z - lambda;
    if (z < -lambda) return z + lambda;
    return 0.0;
}

bool has_nan(const Matrix& m) { return !m.allFinite(); }
bool has_nan(const Vector& v) { return !v.allFinite(); }

/// Centered (and optionally scaled) copy of the design, with per-column
/// statistics. Constant columns are flagged and excluded from descent.
struct Standardized {
    Matrix xs;
    Vector mean;
    Vector scale;           // 1.0 when standardize=false or column constant
    Vector vj;              // (1/n) * ||xs_j||^2
    std::vector<char> skip; // constant columns
};

Standardized standardize(const Matrix& x, bool standardize_cols) {
    const auto n = x.rows();
    const auto p = x.cols();
    Standardized s;
    s.xs.resize(n, p);
    s.mean.resize(p);
    s.scale = Vector::Ones(p);
    s.vj.resize(p);
    s.skip.assign(static_cast<std::size_t>(p), 0);
    for (Eigen::Index j = 0; j < p; ++j) {
        double m = x.col(j).mean();
        s.mean[j] = m;
        Vector c = x.col(j).array() - m;
        double var = c.squaredNorm() / static_cast<double>(n);
        if (var < 1e-24) {
            s.skip[static_cast<std::size_t>(j)] = 1;
            s.xs.col(j).setZero();
            s.vj[j] = 0.0;
            continue;
        }
        if (standardize_cols) {
            double sd = std::sqrt(var);
            s.scale[j] = sd;
            s.xs.col(j) = c / sd;
            s.vj[j] = 1.0;
        } else {
            s.xs.col(j) = c;
            s.vj[j] = var;
        }
    }
    return s;
}

/// Shared state for coordinate descent over one standardized design. When
/// n >= p the Gram matrix is precomputed once per design and sweeps track
/// q = (X'X/n) b, making untouched coordinates O(1); otherwise descent tracks
/// the n-vector residual directly.
struct CdWorkspace {
    const Standardized* s = nullptr;
    const Vector* yc = nullptr;
    bool use_gram = false;
    Matrix gram;    // X'X / n
    Vector xy_n;    // X'yc / n (gram mode)
    double ycc_n = 0.0;
    Vector q;       // gram * b
    Vector r;       // residual (naive mode)

    CdWorkspace(const Standardized& std_design, const Vector& y_centered)
        : s(&std_design), yc(&y_centered) {
        const auto n = s->xs.rows();
        const auto p = s->xs.cols();
        use_gram = n >= p || p <= 512;  // untouched coordinates cost O(1)
        if (use_gram) {
            gram.noalias() = s->xs.transpose() * s->xs / static_cast<double>(n);
            xy_n.noalias() = s->xs.transpose() * y_centered / static_cast<double>(n);
            ycc_n = y_centered.squaredNorm() / static_cast<double>(n);
            q = Vector::Zero(p);
        } else {
            r = y_centered;
        }
    }

    void sync(const Vector& b) {
        if (use_gram)
            q.noalias() = gram * b;
        else
            r = *yc - s->xs * b;
    }

    // smooth-part gradient factor: z_j = (1/n) x_j'(yc - Xb) + v_j b_j
    double partial(Eigen::Index j, const Vector& b) const {
        if (use_gram) return xy_n[j] - q[j] + s->vj[j] * b[j];
        return s->xs.col(j).dot(r) / static_cast<double>(s->xs.rows()) + s->vj[j] * b[j];
    }

    void apply_delta(Eigen::Index j, double delta) {
        if (use_gram)
            q.noalias() += gram.col(j) * delta;
        else
            r.noalias() -= s->xs.col(j) * delta;
    }

    double gradient(Eigen::Index j, const Vector& b) const {
        if (use_gram) return 2.0 * (xy_n[j] - q[j]);
        (void)b;
        return 2.0 * s->xs.col(j).dot(r) / static_cast<double>(s->xs.rows());
    }

    double rss_over_n(const Vector& b) const {
        if (use_gram) return std::max(0.0, ycc_n - 2.0 * b.dot(xy_n) + b.dot(q));
        return r.squaredNorm() / static_cast<double>(s->xs.rows());
    }
};

/// Cyclic coordinate descent on the centered problem
///   (1/n) ||yc - Xs b||^2 + lambda ||b||_1.
/// After each full sweep converges in coefficient change, KKT stationarity is
/// verified and descent continues if any condition is violated beyond 5*tol.
bool coordinate_descent(CdWorkspace& ws, double lambda, const PenaltySpec& spec, Vector& b,
                        FitDiagnostics* diag) {
    const Standardized& s = *ws.s;
    const auto p = s.xs.cols();

    auto sweep = [&](const std::vector<int>* subset) {
        double max_delta = 0.0;
        auto update = [&](Eigen::Index j) {
            if (s.skip[static_cast<std::size_t>(j)]) return;
            double bj = b[j];
            double zj = ws.partial(j, b);
            double bnew = soft_threshold(2.0 * zj, lambda) / (2.0 * s.vj[j]);
            if (bnew != bj) {
                ws.apply_delta(j, bnew - bj);
                b[j] = bnew;
                max_delta = std::max(max_delta, std::abs(bnew - bj));
            }
        };
        if (subset) {
            for (int j : *subset) update(j);
        } else {
            for (Eigen::Index j = 0; j < p; ++j) update(j);
        }
        return max_delta;
    };

    auto kkt_ok = [&]() {
        const double slack = 5.0 * spec.tol;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (s.skip[static_cast<std::size_t>(j)]) continue;
            double g = ws.gradient(j, b);
            if (b[j] != 0.0) {
                if (std::abs(std::abs(g) - lambda) > slack) return false;
            } else if (std::abs(g) > lambda + slack) {
                return false;
            }
        }
        return true;
    };

    auto record = [&]() {
        if (diag) {
            diag->objective_per_sweep.push_back(ws.rss_over_n(b) + lambda * b.lpNorm<1>());
            ++diag->sweeps;
        }
    };

    int iter = 0;
    bool converged = false;
    while (iter < spec.max_iter) {
        double delta = sweep(nullptr);
        ++iter;
        record();
        if (delta >= spec.tol) {
            // inner loop over the active set
            std::vector<int> active;
            active.reserve(static_cast<std::size_t>(p));
            for (Eigen::Index j = 0; j < p; ++j)
                if (b[j] != 0.0) active.push_back(static_cast<int>(j));
            while (iter < spec.max_iter) {
                double d = sweep(&active);
                ++iter;
                record();
                if (d < spec.tol) break;
            }
            continue;  // full sweep again to admit new coordinates
        }
        if (kkt_ok()) {
            converged = true;
            break;
        }
    }
    return converged;
}

struct CenteredProblem {
    Standardized s;
    Vector yw;      // y - offset
    double ybar;    // mean(yw)
    Vector yc;      // yw - ybar
};

CenteredProblem center_problem(const Matrix& x, const Vector& y, const Vector* offset,
                               bool standardize_cols) {
    if (x.rows() != y.size())
        throw DimensionMismatch("fit_lasso: rows(x) != len(y)");
    if (offset && offset->size() != y.size())
        throw DimensionMismatch("fit_lasso: offset length mismatch");
    if (x.rows() < 2) throw DimensionMismatch("fit_lasso: need at least 2 rows");
    if (has_nan(x) || has_nan(y) || (offset && has_nan(*offset)))
        throw std::invalid_argument("fit_lasso: non-finite values in inputs");
    CenteredProblem cp;
    cp.s = standardize(x, standardize_cols);
    cp.yw = offset ? Vector(y - *offset) : y;
    cp.ybar = cp.yw.mean();
    cp.yc = cp.yw.array() - cp.ybar;
    return cp;
}

PenalizedFit assemble_fit(const CenteredProblem& cp, const Vector& b_internal,
                          double lambda, bool converged) {
    const auto p = b_internal.size();
    PenalizedFit fit;
    fit.coefficients.resize(p);
    for (Eigen::Index j = 0; j < p; ++j)
        fit.coefficients[j] = cp.s.skip[static_cast<std::size_t>(j)] ? 0.0
                                                                     : b_internal[j] / cp.s.scale[j];
    fit.intercept = cp.ybar;
    for (Eigen::Index j = 0; j < p; ++j) fit.intercept -= fit.coefficients[j] * cp.s.mean[j];
    for (Eigen::Index j = 0; j < p; ++j)
        if (fit.coefficients[j] != 0.0) fit.support.push_back(static_cast<int>(j));
    fit.lambda_used = lambda;
    Vector r = cp.yc - cp.s.xs * b_internal;
    fit.objective_value = r.squaredNorm() / static_cast<double>(cp.s.xs.rows())
                          + lambda * b_internal.lpNorm<1>();
    fit.converged = converged;
    return fit;
}

}  // namespace

PenalizedFit fit_lasso(const Matrix& x, const Vector& y, const Vector* offset,
                       const PenaltySpec& spec, FitDiagnostics* diag) {
    if (spec.lambda < 0.0 || spec.tol <= 0.0 || spec.max_iter <= 0)
        throw std::invalid_argument("fit_lasso: invalid PenaltySpec");
    CenteredProblem cp = center_problem(x, y, offset, spec.standardize);
    Vector b = Vector::Zero(x.cols());
    bool converged = true;
    if (x.cols() > 0) {
        CdWorkspace ws(cp.s, cp.yc);
        converged = coordinate_descent(ws, spec.lambda, spec, b, diag);
    }
    return assemble_fit(cp, b, spec.lambda, converged);
}

LassoPath fit_lasso_path(const Matrix& x, const Vector& y, const Vector* offset,
                         const Vector& lambdas, const PenaltySpec& spec) {
    CenteredProblem cp = center_problem(x, y, offset, spec.standardize);
    const auto p = x.cols();
    LassoPath path;
    path.lambdas = lambdas;
    path.coefficients.resize(p, lambdas.size());
    path.intercepts.resize(lambdas.size());
    Vector b = Vector::Zero(p);
    std::optional<CdWorkspace> ws;
    if (p > 0) ws.emplace(cp.s, cp.yc);
    const double rss0 = cp.yc.squaredNorm() / std::max<double>(1.0, static_cast<double>(x.rows()));
    bool saturated = rss0 < 1e-30;
    // warm starts let each path point finish in a bounded sweep budget; the
    // deep tail beyond near-saturation is frozen (glmnet-style stop)
    PenaltySpec step = spec;
    step.max_iter = std::min(spec.max_iter, 300);
    for (Eigen::Index k = 0; k < lambdas.size(); ++k) {
        if (p > 0 && !saturated) {
            coordinate_descent(*ws, lambdas[k], step, b, nullptr);
            if (ws->rss_over_n(b) < 1e-3 * rss0) saturated = true;
        }
        PenalizedFit fit = assemble_fit(cp, b, lambdas[k], true);
        path.coefficients.col(k) = fit.coefficients;
        path.intercepts[k] = fit.intercept;
    }
    return path;
}

double lasso_lambda_max(const Matrix& x, const Vector& y, const Vector* offset,
                        bool standardize_cols) {
    CenteredProblem cp = center_problem(x, y, offset, standardize_cols);
    double m = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (cp.s.skip[static_cast<std::size_t>(j)]) continue;
        m = std::max(m, 2.0 * std::abs(cp.s.xs.col(j).dot(cp.yc)) / static_cast<double>(x.rows()));
    }
    return m;
}

Vector make_lambda_path(double lambda_max, int length, double eps) {
    if (length < 1) throw std::invalid_argument("make_lambda_path: length must be positive");
    double lmax = std::max(lambda_max, 1e-12);
    Vector path(length);
    if (length == 1) {
        path[0] = lmax;
        return path;
    }
    double log_max = std::log(lmax);
    double log_min = std::log(lmax * eps);
    for (int i = 0; i < length; ++i)
        path[i] = std::exp(log_max + (log_min - log_max) * static_cast<double>(i) / (length - 1));
    return path;
}

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double softplus(double t) { return t > 30.0 ? t : std::log1p(std::exp(t)); }

/// One IRLS solve at a fixed lambda; b0/b are internal-scale warm starts.
bool logistic_irls(const Standardized& s, const Vector& y, double lambda,
                   const PenaltySpec& spec, double& b0, Vector& b) {
    const auto n = s.xs.rows();
    const auto p = s.xs.cols();
    const double dn = static_cast<double>(n);
    const double pmin = 1e-5;
    const int max_outer = 100;
    for (int outer = 0; outer < max_outer; ++outer) {
        Vector eta = (s.xs * b).array() + b0;
        Vector w(n), z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double pi = std::clamp(expit(eta[i]), pmin, 1.0 - pmin);
            w[i] = pi * (1.0 - pi);
            z[i] = eta[i] + (y[i] - pi) / w[i];
        }
        double wsum = w.sum();
        double outer_delta = 0.0;
        // weighted coordinate descent on (1/(2n)) sum w (z - b0 - xs b)^2 + lambda ||b||_1
        Vector r = z - s.xs * b;
        r.array() -= b0;
        for (int inner = 0; inner < 1000; ++inner) {
            double max_delta = 0.0;
            double b0_new = b0 + w.dot(r) / wsum;
            if (b0_new != b0) {
                r.array() -= (b0_new - b0);
                max_delta = std::max(max_delta, std::abs(b0_new - b0));
                outer_delta = std::max(outer_delta, std::abs(b0_new - b0));
                b0 = b0_new;
            }
            for (Eigen::Index j = 0; j < p; ++j) {
                if (s.skip[static_cast<std::size_t>(j)]) continue;
                double wv = (w.array() * s.xs.col(j).array().square()).sum() / dn;
                if (wv < 1e-20) continue;
                double bj = b[j];
                double zj = (w.array() * s.xs.col(j).array() * r.array()).sum() / dn + wv * bj;
                double bnew = soft_threshold(zj, lambda) / wv;
                if (bnew != bj) {
                    r.noalias() -= s.xs.col(j) * (bnew - bj);
                    b[j] = bnew;
                    max_delta = std::max(max_delta, std::abs(bnew - bj));
                    outer_delta = std::max(outer_delta, std::abs(bnew - bj));
                }
            }
            if (max_delta < spec.tol) break;
        }
        if (outer_delta < spec.tol) return true;
    }
    return false;
}

}  // namespace

double logistic_lambda_max(const Matrix& x, const Vector& y, bool standardize_cols) {
    CenteredProblem cp = center_problem(x, y, nullptr, standardize_cols);
    double ybar = y.mean();
    double m = 0.0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        if (cp.s.skip[static_cast<std::size_t>(j)]) continue;
        double g = std::abs(cp.s.xs.col(j).dot((y.array() - ybar).matrix())) / static_cast<double>(x.rows());
        m = std::max(m, g);
    }
    return m;
}

PenalizedFit fit_logistic_lasso(const Matrix& x, const Vector& y, const PenaltySpec& spec) {
    if (x.rows() != y.size()) throw DimensionMismatch("fit_logistic_lasso: rows(x) != len(y)");
    if (has_nan(x) || has_nan(y))
        throw std::invalid_argument("fit_logistic_lasso: non-finite values in inputs");
    int n1 = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        if (y[i] != 0.0 && y[i] != 1.0)
            throw std::invalid_argument("fit_logistic_lasso: y must be in {0,1}");
        n1 += y[i] == 1.0;
    }
    if (n1 == 0 || n1 == y.size())
        throw std::invalid_argument("fit_logistic_lasso: both classes must be present");

    Standardized s = standardize(x, spec.standardize);
    double ybar = y.mean();
    double b0 = std::log(ybar / (1.0 - ybar));
    Vector b = Vector::Zero(x.cols());
    bool converged = logistic_irls(s, y, spec.lambda, spec, b0, b);

    PenalizedFit fit;
    fit.coefficients.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        fit.coefficients[j] = s.skip[static_cast<std::size_t>(j)] ? 0.0 : b[j] / s.scale[j];
    fit.intercept = b0;
    for (Eigen::Index j = 0; j < x.cols(); ++j) fit.intercept -= fit.coefficients[j] * s.mean[j];
    for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (fit.coefficients[j] != 0.0) fit.support.push_back(static_cast<int>(j));
    fit.lambda_used = spec.lambda;
    fit.converged = converged;

    double nll = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        double eta = fit.intercept + fit.coefficients.dot(x.row(i));
        nll += softplus(eta) - y[i] * eta;
        double pi = expit(eta);
        if (pi < 1e-8 || pi > 1.0 - 1e-8) fit.separation_warning = true;
    }
    fit.objective_value = nll / static_cast<double>(y.size()) + spec.lambda * b.lpNorm<1>();
    return fit;
}

std::vector<int> make_folds(int n, int n_folds, std::uint64_t seed, const std::vector<int>* strata) {
    if (n_folds < 2) throw std::invalid_argument("make_folds: n_folds must be >= 2");
    if (n < n_folds) throw std::invalid_argument("make_folds: fewer rows than folds");
    if (strata && static_cast<int>(strata->size()) != n)
        throw DimensionMismatch("make_folds: strata length mismatch");
    Rng rng(derive_seed(seed, {0x666f6c64ull}));  // "fold"
    std::vector<std::vector<int>> groups;
    if (strata) {
        std::set<int> labels(strata->begin(), strata->end());
        for (int lab : labels) {
            std::vector<int> g;
            for (int i = 0; i < n; ++i)
                if ((*strata)[static_cast<std::size_t>(i)] == lab) g.push_back(i);
            groups.push_back(std::move(g));
        }
    } else {
        std::vector<int> g(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = i;
        groups.push_back(std::move(g));
    }
    std::vector<int> fold(static_cast<std::size_t>(n), -1);
    int counter = 0;
    for (auto& g : groups) {
        rng.shuffle(g);
        for (int idx : g) fold[static_cast<std::size_t>(idx)] = counter++ % n_folds;
    }
    return fold;
}

CvResult cv_select_lambda(const Matrix& x, const Vector& y, const Vector* offset,
                          int n_folds, int path_length, CvLoss loss, std::uint64_t seed,
                          const std::vector<int>* strata, const Vector* path,
                          const PenaltySpec* solver_spec) {
    const int n = static_cast<int>(x.rows());
    if (n_folds < 2) throw std::invalid_argument("cv_select_lambda: n_folds must be >= 2");
    if (n < n_folds) throw std::invalid_argument("cv_select_lambda: fewer rows than folds");
    PenaltySpec spec = solver_spec ? *solver_spec : PenaltySpec{};

    CvResult cv;
    if (path) {
        cv.lambda_path = *path;
    } else {
        double lmax = loss == CvLoss::squared ? lasso_lambda_max(x, y, offset, spec.standardize)
                                              : logistic_lambda_max(x, y, spec.standardize);
        cv.lambda_path = make_lambda_path(lmax, path_length);
    }
    const auto npath = cv.lambda_path.size();
    cv.fold_assignments = make_folds(n, n_folds, seed, strata);
    std::vector<int> fold_sizes(static_cast<std::size_t>(n_folds), 0);
    for (int f : cv.fold_assignments) ++fold_sizes[static_cast<std::size_t>(f)];
    for (int f = 0; f < n_folds; ++f)
        if (fold_sizes[static_cast<std::size_t>(f)] == 0)
            throw EmptyFold("cv_select_lambda: fold " + std::to_string(f) + " is empty");

    Vector total_loss = Vector::Zero(npath);
    for (int f = 0; f < n_folds; ++f) {
        const int n_held = fold_sizes[static_cast<std::size_t>(f)];
        const int n_train = n - n_held;
        Matrix xtr(n_train, x.cols()), xhe(n_held, x.cols());
        Vector ytr(n_train), yhe(n_held), otr, ohe;
        if (offset) {
            otr.resize(n_train);
            ohe.resize(n_held);
        }
        int it = 0, ih = 0;
        for (int i = 0; i < n; ++i) {
            if (cv.fold_assignments[static_cast<std::size_t>(i)] == f) {
                xhe.row(ih) = x.row(i);
                yhe[ih] = y[i];
                if (offset) ohe[ih] = (*offset)[i];
                ++ih;
            } else {
                xtr.row(it) = x.row(i);
                ytr[it] = y[i];
                if (offset) otr[it] = (*offset)[i];
                ++it;
            }
        }
        if (loss == CvLoss::squared) {
            LassoPath fits = fit_lasso_path(xtr, ytr, offset ? &otr : nullptr, cv.lambda_path, spec);
            for (Eigen::Index k = 0; k < npath; ++k) {
                Vector pred = (xhe * fits.coefficients.col(k)).array() + fits.intercepts[k];
                if (offset) pred += ohe;
                total_loss[k] += (yhe - pred).squaredNorm();
            }
        } else {
            // warm-started logistic path (internal coordinates move along the path)
            Standardized st = standardize(xtr, spec.standardize);
            double ybar = ytr.mean();
            double b0 = (ybar <= 0.0 || ybar >= 1.0) ? 0.0 : std::log(ybar / (1.0 - ybar));
            Vector b = Vector::Zero(xtr.cols());
            for (Eigen::Index k = 0; k < npath; ++k) {
                logistic_irls(st, ytr, cv.lambda_path[k], spec, b0, b);
                // map back for held-out evaluation
                Vector coef(xtr.cols());
                for (Eigen::Index j = 0; j < xtr.cols(); ++j)
                    coef[j] = st.skip[static_cast<std::size_t>(j)] ? 0.0 : b[j] / st.scale[j];
                double icpt = b0;
                for (Eigen::Index j = 0; j < xtr.cols(); ++j) icpt -= coef[j] * st.mean[j];
                for (int i = 0; i < n_held; ++i) {
                    double eta = icpt + coef.dot(xhe.row(i));
                    total_loss[k] += softplus(eta) - yhe[i] * eta;
                }
            }
        }
    }
    cv.cv_mean_loss = total_loss / static_cast<double>(n);

    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < npath; ++k)
        if (cv.cv_mean_loss[k] <= cv.cv_mean_loss[best]) best = k;  // ties: smaller lambda
    cv.lambda_min = cv.lambda_path[best];
    return cv;
}

double OlsFit::predict(const Eigen::Ref<const Vector>& x) const {
    double out = intercept;
    for (std::size_t k = 0; k < support.size(); ++k)
        out += coefficients[static_cast<Eigen::Index>(k)] * x[support[k]];
    return out;
}

double OlsFit::standard_error(const Eigen::Ref<const Vector>& x) const {
    Vector xt(static_cast<Eigen::Index>(support.size()) + 1);
    xt[0] = 1.0;
    for (std::size_t k = 0; k < support.size(); ++k)
        xt[static_cast<Eigen::Index>(k) + 1] = x[support[k]];
    double v = xt.dot(covariance * xt);
    return std::sqrt(std::max(v, 0.0));
}

OlsFit post_lasso_ols(const Matrix& x, const Vector& y, const Vector* offset,
                      const std::vector<int>& support) {
    const auto n = x.rows();
    if (x.rows() != y.size()) throw DimensionMismatch("post_lasso_ols: rows(x) != len(y)");
    if (offset && offset->size() != y.size())
        throw DimensionMismatch("post_lasso_ols: offset length mismatch");
    std::vector<int> sup = support;
    std::sort(sup.begin(), sup.end());
    sup.erase(std::unique(sup.begin(), sup.end()), sup.end());
    for (int j : sup)
        if (j < 0 || j >= x.cols()) throw std::invalid_argument("post_lasso_ols: support index out of range");
    if (static_cast<Eigen::Index>(sup.size()) >= n)
        throw std::invalid_argument("post_lasso_ols: |support| must be < rows");

    Vector yw = offset ? Vector(y - *offset) : y;

    // drop collinear columns deterministically by index order (Gram-Schmidt)
    OlsFit fit;
    std::vector<Vector> basis;  // orthonormal, spans intercept + kept columns
    Vector ones = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
    basis.push_back(ones);
    for (int j : sup) {
        Vector c = x.col(j);
        double norm0 = c.norm();
        for (const auto& q : basis) c -= q.dot(c) * q;
        for (const auto& q : basis) c -= q.dot(c) * q;  // second pass for stability
        if (c.norm() <= 1e-10 * std::max(1.0, norm0)) {
            fit.dropped.push_back(j);
        } else {
            fit.support.push_back(j);
            basis.push_back(c / c.norm());
        }
    }

    const auto q = static_cast<Eigen::Index>(fit.support.size());
    Matrix d(n, q + 1);
    d.col(0).setOnes();
    for (Eigen::Index k = 0; k < q; ++k) d.col(k + 1) = x.col(fit.support[static_cast<std::size_t>(k)]);
    Matrix gram = d.transpose() * d;
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    double emin = es.eigenvalues().minCoeff();
    double emax = es.eigenvalues().maxCoeff();
    if (emin <= 0.0 || emax / emin > 1e10)
        throw RankDeficient("post_lasso_ols: ill-conditioned support (cond > 1e10)");
    const auto dof = n - q - 1;
    if (dof <= 0) throw RankDeficient("post_lasso_ols: no residual degrees of freedom");

    Matrix gram_inv = es.operatorInverseSqrt() * es.operatorInverseSqrt();
    Vector beta = gram.ldlt().solve(d.transpose() * yw);
    Vector resid = yw - d * beta;
    fit.sigma2 = resid.squaredNorm() / static_cast<double>(dof);
    fit.intercept = beta[0];
    fit.coefficients = beta.tail(q);
    fit.covariance = fit.sigma2 * gram_inv;
    return fit;
}

}  // namespace catefusion
