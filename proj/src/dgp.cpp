#include "catefusion/dgp.hpp"

#include <cmath>

#include "catefusion/errors.hpp"
#include "catefusion/estimators.hpp"
#include "catefusion/rng.hpp"

namespace catefusion {

double DgpTruth::true_cate(const Eigen::Ref<const Vector>& xr) const {
    const int pr = partition.p_r();
    double out = 0.0;
    for (int j = 0; j < pr; ++j) out += (beta_treat_rct[j] - beta_control_rct[j]) * xr[j];
    return out;
}

Matrix equicorrelated_sigma(int p, double rho) {
    Matrix s = Matrix::Constant(p, p, rho);
    s.diagonal().setOnes();
    return s;
}

namespace {

double expit(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// Latent equicorrelated Gaussian rows with unit marginal variances.
/// For rho >= 0 uses the shared-factor representation
/// x = sqrt(rho) g 1 + sqrt(1-rho) w; otherwise a Cholesky factor.
Matrix draw_equicorrelated(int n, int p, double rho, Rng& rng) {
    Matrix x(n, p);
    if (rho >= 0.0) {
        double sr = std::sqrt(rho), sw = std::sqrt(1.0 - rho);
        for (int i = 0; i < n; ++i) {
            double g = sr == 0.0 ? 0.0 : rng.normal();
            for (int j = 0; j < p; ++j) x(i, j) = sr * g + sw * rng.normal();
        }
        return x;
    }
    if (1.0 + (p - 1) * rho <= 0.0)
        throw std::invalid_argument("draw_equicorrelated: rho below -1/(p-1)");
    Eigen::LLT<Matrix> llt(equicorrelated_sigma(p, rho));
    Matrix l = llt.matrixL();
    Vector w(p);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) w[j] = rng.normal();
        x.row(i) = (l * w).transpose();
    }
    return x;
}

BlockPartition make_partition(const DgpConfig& cfg) {
    if (cfg.p <= 0) throw InfeasiblePartition("p must be positive");
    if (cfg.f1 < 0.0 || cfg.f2 < 0.0 || cfg.f1 + cfg.f2 > 0.8)
        throw InfeasiblePartition("require f1, f2 >= 0 and f1 + f2 <= 0.8");
    BlockPartition bp;
    bp.p_u = static_cast<int>(std::floor(cfg.f1 * cfg.p));
    bp.p_v = static_cast<int>(std::floor(cfg.f2 * cfg.p));
    bp.p_z = cfg.p - bp.p_u - bp.p_v;
    if (bp.p_z < 1) throw InfeasiblePartition("partition leaves no shared block");
    return bp;
}

/// Sparse coefficient vectors for both arms plus the RCT-perturbed variants.
void draw_coefficients(const DgpConfig& cfg, const BlockPartition& bp, Rng& rng, DgpTruth& truth) {
    const int p = bp.p(), pr = bp.p_r(), pv = bp.p_v;
    truth.beta_control = Vector::Zero(p);

    int s_r = std::max(1, static_cast<int>(std::lround(cfg.signal_prop * pr)));
    for (int j : rng.sample_without_replacement(pr, s_r))
        truth.beta_control[j] = rng.rademacher() * cfg.signal_mag;

    if (pv > 0 && cfg.v_coef_mag != 0.0) {
        int s_v = std::max(1, static_cast<int>(std::lround(cfg.signal_prop * pv)));
        for (int j : rng.sample_without_replacement(pv, s_v))
            truth.beta_control[pr + j] = rng.rademacher() * cfg.v_coef_mag;
    }

    // treated arm shares the prognostic structure and adds a sparse contrast
    // on X^r only, so the CATE never depends on V
    truth.beta_treat = truth.beta_control;
    if (cfg.cate_mag != 0.0) {
        int s_tau = std::max(1, static_cast<int>(std::floor(cfg.signal_prop * pr)));
        for (int j : rng.sample_without_replacement(pr, s_tau))
            truth.beta_treat[j] += rng.rademacher() * cfg.cate_mag;
    }

    // outcome shift: the same perturbation in both RCT arm means
    truth.beta_control_rct = truth.beta_control;
    truth.beta_treat_rct = truth.beta_treat;
    if (cfg.perturb_prop > 0.0 && cfg.perturb_mag != 0.0) {
        int n_pert = std::max(1, static_cast<int>(std::lround(cfg.perturb_prop * pr)));
        for (int j : rng.sample_without_replacement(pr, n_pert)) {
            double shift = rng.rademacher() * cfg.perturb_mag;
            truth.beta_control_rct[j] += shift;
            truth.beta_treat_rct[j] += shift;
        }
    }
}

/// Intercept of the OS assignment model, calibrated by bisection against a
/// Monte-Carlo estimate of E[expit(alpha0 + s*T)], T ~ N(0,1).
double calibrate_alpha0(double linear_sd, double target, Rng& rng) {
    const int n_mc = 100000;
    Vector t(n_mc);
    for (int i = 0; i < n_mc; ++i) t[i] = rng.normal();
    auto share = [&](double alpha0) {
        double s = 0.0;
        for (int i = 0; i < n_mc; ++i) s += expit(alpha0 + linear_sd * t[i]);
        return s / n_mc - target;
    };
    double lo = -30.0, hi = 30.0;
    if (share(lo) > 0.0 || share(hi) < 0.0)
        throw CalibrationFailure("calibrate_alpha0: target share not bracketed");
    for (int it = 0; it < 200 && hi - lo > 1e-10; ++it) {
        double mid = 0.5 * (lo + hi);
        (share(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

void draw_os_propensity(const DgpConfig& cfg, const BlockPartition& bp, Rng& rng_prop,
                        Rng& rng_mc, DgpTruth& truth) {
    int n_active = std::min(cfg.os_propensity_active, bp.p_z);
    truth.os_propensity_support = rng_prop.sample_without_replacement(bp.p_z, n_active);
    std::sort(truth.os_propensity_support.begin(), truth.os_propensity_support.end());
    truth.gamma = Vector::Zero(bp.p_z);
    for (int j : truth.os_propensity_support)
        truth.gamma[j] = rng_prop.rademacher() * rng_prop.uniform(cfg.os_gamma_min, cfg.os_gamma_max);
    // Var(gamma'Z) under the equicorrelated Z block
    double sum = truth.gamma.sum();
    double var = (1.0 - cfg.rho) * truth.gamma.squaredNorm() + cfg.rho * sum * sum;
    truth.alpha0 = calibrate_alpha0(std::sqrt(std::max(var, 0.0)), cfg.os_treated_share, rng_mc);
}

struct CovariateDraws {
    Matrix rct_x, os_x, eval_x;  // full latent (U, Z, V) rows
};

GeneratedData assemble(const DgpConfig& cfg, const BlockPartition& bp, DgpTruth truth,
                       CovariateDraws draws, Rng& rng_rct, Rng& rng_os) {
    const int pr = bp.p_r(), pu = bp.p_u;

    // RCT mean shift on U
    for (int j = 0; j < pu; ++j) {
        draws.rct_x.col(j).array() += truth.delta_u[j];
        draws.eval_x.col(j).array() += truth.delta_u[j];
    }

    FusedSample fused;
    fused.partition = bp;

    SourceSample& rct = fused.rct;
    rct.source = Source::rct;
    rct.partition = bp;
    rct.covariates = draws.rct_x.leftCols(pr);
    rct.attached_v = Matrix(draws.rct_x.rightCols(bp.p_v));
    rct.treatment.resize(cfg.n_r);
    rct.outcome.resize(cfg.n_r);
    for (int i = 0; i < cfg.n_r; ++i) {
        double a = rng_rct.bernoulli(0.5) ? 1.0 : -1.0;
        const Vector& beta = a == 1.0 ? truth.beta_treat_rct : truth.beta_control_rct;
        rct.treatment[i] = a;
        rct.outcome[i] = beta.dot(draws.rct_x.row(i)) + cfg.noise_sd * rng_rct.normal();
    }

    SourceSample& os = fused.os;
    os.source = Source::os;
    os.partition = bp;
    os.covariates = draws.os_x.rightCols(bp.p_o());
    os.treatment.resize(cfg.n_o);
    os.outcome.resize(cfg.n_o);
    for (int i = 0; i < cfg.n_o; ++i) {
        double eta = truth.alpha0;
        for (int j : truth.os_propensity_support) eta += truth.gamma[j] * draws.os_x(i, pu + j);
        double a = rng_os.bernoulli(expit(eta)) ? 1.0 : -1.0;
        const Vector& beta = a == 1.0 ? truth.beta_treat : truth.beta_control;
        os.treatment[i] = a;
        os.outcome[i] = beta.dot(draws.os_x.row(i)) + cfg.noise_sd * rng_os.normal();
    }

    EvalSet eval;
    eval.xr = draws.eval_x.leftCols(pr);
    eval.v = draws.eval_x.rightCols(bp.p_v);
    eval.tau_true.resize(cfg.n_eval);
    for (int i = 0; i < cfg.n_eval; ++i) eval.tau_true[i] = truth.true_cate(eval.xr.row(i));

    return GeneratedData{std::move(fused), std::move(truth), std::move(eval)};
}

}  // namespace

GeneratedData generate(const DgpConfig& cfg) {
    if (cfg.r2_target) return generate_r2_controlled(cfg);
    BlockPartition bp = make_partition(cfg);
    if (cfg.n_r < 2 || cfg.n_o < 0 || cfg.n_eval < 1)
        throw std::invalid_argument("generate: invalid sample sizes");

    DgpTruth truth;
    truth.partition = bp;
    truth.rho = cfg.rho;
    truth.noise_sd = cfg.noise_sd;

    Rng rng_coef(derive_seed(cfg.seed, {1}));
    draw_coefficients(cfg, bp, rng_coef, truth);

    Rng rng_shift(derive_seed(cfg.seed, {2}));
    truth.delta_u.resize(bp.p_u);
    for (int j = 0; j < bp.p_u; ++j)
        truth.delta_u[j] = rng_shift.rademacher() * rng_shift.uniform(cfg.delta_u_min, cfg.delta_u_max);

    Rng rng_prop(derive_seed(cfg.seed, {3}));
    Rng rng_mc(derive_seed(cfg.seed, {4}));
    draw_os_propensity(cfg, bp, rng_prop, rng_mc, truth);

    // population V | Z relation implied by the equicorrelated design:
    // E[V|Z] = c 11' Z with c = rho / (1 - rho + rho p_z)
    double c = bp.p_z > 0 ? cfg.rho / (1.0 - cfg.rho + cfg.rho * bp.p_z) : 0.0;
    truth.lambda = Matrix::Constant(bp.p_v, bp.p_z, c);
    truth.sigma_zz = equicorrelated_sigma(bp.p_z, cfg.rho);
    truth.sigma_v_given_z =
        Matrix::Constant(bp.p_v, bp.p_v, cfg.rho * (1.0 - cfg.rho) / (1.0 - cfg.rho + cfg.rho * bp.p_z));
    truth.sigma_v_given_z.diagonal().array() += 1.0 - cfg.rho;

    Rng rng_rct(derive_seed(cfg.seed, {5}));
    Rng rng_os(derive_seed(cfg.seed, {6}));
    Rng rng_eval(derive_seed(cfg.seed, {7}));
    CovariateDraws draws;
    draws.rct_x = draw_equicorrelated(cfg.n_r, bp.p(), cfg.rho, rng_rct);
    draws.os_x = draw_equicorrelated(cfg.n_o, bp.p(), cfg.rho, rng_os);
    draws.eval_x = draw_equicorrelated(cfg.n_eval, bp.p(), cfg.rho, rng_eval);

    return assemble(cfg, bp, std::move(truth), std::move(draws), rng_rct, rng_os);
}

GeneratedData generate_r2_controlled(const DgpConfig& cfg) {
    if (!cfg.r2_target || *cfg.r2_target <= 0.0 || *cfg.r2_target >= 1.0)
        throw std::invalid_argument("generate_r2_controlled: r2_target must lie in (0,1)");
    BlockPartition bp = make_partition(cfg);
    if (bp.p_v < 1) throw InfeasiblePartition("generate_r2_controlled: needs a nonempty V block");
    const double r2 = *cfg.r2_target;

    DgpTruth truth;
    truth.partition = bp;
    truth.rho = cfg.rho;
    truth.noise_sd = cfg.noise_sd;

    Rng rng_coef(derive_seed(cfg.seed, {1}));
    draw_coefficients(cfg, bp, rng_coef, truth);

    Rng rng_shift(derive_seed(cfg.seed, {2}));
    truth.delta_u.resize(bp.p_u);
    for (int j = 0; j < bp.p_u; ++j)
        truth.delta_u[j] = rng_shift.rademacher() * rng_shift.uniform(cfg.delta_u_min, cfg.delta_u_max);

    Rng rng_prop(derive_seed(cfg.seed, {3}));
    Rng rng_mc(derive_seed(cfg.seed, {4}));
    draw_os_propensity(cfg, bp, rng_prop, rng_mc, truth);

    // Lambda is fixed across a sweep: seeded independently of the replicate
    // and of the target R^2. Rows are 3-sparse, normalized to unit
    // Var(lambda_j'Z) so each coordinate hits the target exactly.
    truth.sigma_zz = equicorrelated_sigma(bp.p_z, cfg.rho);
    std::uint64_t lambda_seed = cfg.r2_lambda_seed ? cfg.r2_lambda_seed : cfg.seed;
    Rng rng_lambda(derive_seed(lambda_seed, {8}));
    truth.lambda = Matrix::Zero(bp.p_v, bp.p_z);
    int row_nnz = std::min(3, bp.p_z);
    for (int j = 0; j < bp.p_v; ++j) {
        Vector row = Vector::Zero(bp.p_z);
        double quad = 0.0;
        do {  // resample a row whose predictable variance degenerates
            row.setZero();
            for (int k : rng_lambda.sample_without_replacement(bp.p_z, row_nnz))
                row[k] = rng_lambda.rademacher() * rng_lambda.uniform(0.5, 1.0);
            quad = row.dot(truth.sigma_zz * row);
        } while (quad < 1e-12);
        truth.lambda.row(j) = row / std::sqrt(quad);
    }
    double sigma2 = (1.0 - r2) / r2;  // Var(lambda_j'Z) = 1 by normalization
    truth.sigma_v_given_z = sigma2 * Matrix::Identity(bp.p_v, bp.p_v);

    Rng rng_rct(derive_seed(cfg.seed, {5}));
    Rng rng_os(derive_seed(cfg.seed, {6}));
    Rng rng_eval(derive_seed(cfg.seed, {7}));
    auto draw_uzv = [&](int n, Rng& rng) {
        Matrix uz = draw_equicorrelated(n, bp.p_r(), cfg.rho, rng);
        Matrix x(n, bp.p());
        x.leftCols(bp.p_r()) = uz;
        double sd = std::sqrt(sigma2);
        for (int i = 0; i < n; ++i) {
            Vector z = uz.row(i).tail(bp.p_z);
            Vector v = truth.lambda * z;
            for (int j = 0; j < bp.p_v; ++j) x(i, bp.p_r() + j) = v[j] + sd * rng.normal();
        }
        return x;
    };
    CovariateDraws draws;
    draws.rct_x = draw_uzv(cfg.n_r, rng_rct);
    draws.os_x = draw_uzv(cfg.n_o, rng_os);
    draws.eval_x = draw_uzv(cfg.n_eval, rng_eval);

    return assemble(cfg, bp, std::move(truth), std::move(draws), rng_rct, rng_os);
}

double true_cate_rmse(const CateEstimate& est, const EvalSet& eval, const DgpTruth&) {
    Vector pred = predict_cate(est, eval.xr, eval.v.cols() > 0 ? &eval.v : nullptr);
    return std::sqrt((pred - eval.tau_true).squaredNorm() / static_cast<double>(eval.tau_true.size()));
}

}  // namespace catefusion
