#pragma once

#include <functional>
#include <optional>

#include "catefusion/types.hpp"

namespace catefusion {

struct DgpTruth;  // dgp.hpp

/// RCT treatment-probability model. Either the known randomization constant
/// or a fitted logistic model over X^r. Probabilities are clipped to
/// [floor, 1 - floor].
class Propensity {
public:
    static Propensity constant(double p_treat, double overlap_floor = 0.01);
    static Propensity logistic(double intercept, Vector coefficients, double overlap_floor = 0.01);

    /// P(A = +1 | x), clipped.
    double prob_treat(const Eigen::Ref<const Vector>& x) const;
    /// P(A = a | x) for a in {-1, +1}, clipped.
    double prob(const Eigen::Ref<const Vector>& x, double arm) const;
    /// Unclipped probability of arm `arm`, for strict-mode checks.
    double prob_raw(const Eigen::Ref<const Vector>& x, double arm) const;

    double floor() const { return floor_; }
    bool is_constant() const { return kind_ == Kind::known_constant; }

private:
    enum class Kind { known_constant, fitted_logistic };
    Kind kind_ = Kind::known_constant;
    double p_treat_ = 0.5;
    double intercept_ = 0.0;
    Vector coefficients_;
    double floor_ = 0.01;
};

/// Arm-mean pair over some covariate view; the swapped-weight average below
/// is the counterfactual mean outcome.
struct CmoModel {
    std::function<double(const Eigen::Ref<const Vector>&)> mu_treat;
    std::function<double(const Eigen::Ref<const Vector>&)> mu_control;
};

/// Swapped-weight average: pi_{-1}(x) * mu_{+1}(x) + pi_{+1}(x) * mu_{-1}(x).
double cmo(const CmoModel& model, const Propensity& prop, const Eigen::Ref<const Vector>& x);

/// a * (y - m(x)) / pi_a(x). In strict mode an unclipped arm probability
/// below the overlap floor raises OverlapViolation.
double pseudo_outcome(const Eigen::Ref<const Vector>& x, double a, double y,
                      const std::function<double(const Eigen::Ref<const Vector>&)>& m,
                      const Propensity& prop, bool strict = false);

/// Same transform with a precomputed augmentation value m(x).
double pseudo_outcome_value(double a, double y, double m_at_x,
                            const Eigen::Ref<const Vector>& x, const Propensity& prop,
                            bool strict = false);

/// Analytic marginalized CMO for the linear-Gaussian simulation truth:
/// E[mu^r(X) | X^r = x^r, S = r] with E[V | Z = z] = Lambda z substituted in
/// the linear arm means. Test oracle only; never used in estimation.
double marginalized_cmo_oracle(const DgpTruth& truth, const Eigen::Ref<const Vector>& xr,
                               double p_treat = 0.5);

}  // namespace catefusion
