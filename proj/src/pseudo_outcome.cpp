#include "catefusion/pseudo_outcome.hpp"

#include <algorithm>
#include <cmath>

#include "catefusion/dgp.hpp"
#include "catefusion/errors.hpp"

namespace catefusion {

Propensity Propensity::constant(double p_treat, double overlap_floor) {
    if (overlap_floor <= 0.0 || overlap_floor > 0.5)
        throw std::invalid_argument("Propensity: overlap floor must be in (0, 0.5]");
    Propensity p;
    p.kind_ = Kind::known_constant;
    p.p_treat_ = p_treat;
    p.floor_ = overlap_floor;
    return p;
}

Propensity Propensity::logistic(double intercept, Vector coefficients, double overlap_floor) {
    if (overlap_floor <= 0.0 || overlap_floor > 0.5)
        throw std::invalid_argument("Propensity: overlap floor must be in (0, 0.5]");
    Propensity p;
    p.kind_ = Kind::fitted_logistic;
    p.intercept_ = intercept;
    p.coefficients_ = std::move(coefficients);
    p.floor_ = overlap_floor;
    return p;
}

double Propensity::prob_raw(const Eigen::Ref<const Vector>& x, double arm) const {
    double pt = p_treat_;
    if (kind_ == Kind::fitted_logistic)
        pt = 1.0 / (1.0 + std::exp(-(intercept_ + coefficients_.dot(x))));
    return arm == 1.0 ? pt : 1.0 - pt;
}

double Propensity::prob(const Eigen::Ref<const Vector>& x, double arm) const {
    return std::clamp(prob_raw(x, arm), floor_, 1.0 - floor_);
}

double Propensity::prob_treat(const Eigen::Ref<const Vector>& x) const { return prob(x, 1.0); }

double cmo(const CmoModel& model, const Propensity& prop, const Eigen::Ref<const Vector>& x) {
    return prop.prob(x, -1.0) * model.mu_treat(x) + prop.prob(x, 1.0) * model.mu_control(x);
}

double pseudo_outcome_value(double a, double y, double m_at_x,
                            const Eigen::Ref<const Vector>& x, const Propensity& prop,
                            bool strict) {
    if (a != 1.0 && a != -1.0) throw std::invalid_argument("pseudo_outcome: arm must be +1 or -1");
    if (strict && prop.prob_raw(x, a) < prop.floor())
        throw OverlapViolation("pseudo_outcome: arm probability below the overlap floor");
    return a * (y - m_at_x) / prop.prob(x, a);
}

double pseudo_outcome(const Eigen::Ref<const Vector>& x, double a, double y,
                      const std::function<double(const Eigen::Ref<const Vector>&)>& m,
                      const Propensity& prop, bool strict) {
    return pseudo_outcome_value(a, y, m(x), x, prop, strict);
}

double marginalized_cmo_oracle(const DgpTruth& truth, const Eigen::Ref<const Vector>& xr,
                               double p_treat) {
    const BlockPartition& bp = truth.partition;
    if (xr.size() != bp.p_r())
        throw std::invalid_argument("marginalized_cmo_oracle: x^r width mismatch");
    Vector z = xr.tail(bp.p_z);
    Vector x_full(bp.p());
    x_full.head(bp.p_r()) = xr;
    if (bp.p_v > 0) x_full.tail(bp.p_v) = truth.lambda * z;  // E[V | Z = z]
    double mu_treat = truth.beta_treat_rct.dot(x_full);
    double mu_control = truth.beta_control_rct.dot(x_full);
    return (1.0 - p_treat) * mu_treat + p_treat * mu_control;
}

}  // namespace catefusion
