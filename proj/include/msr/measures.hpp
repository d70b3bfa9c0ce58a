#pragma once

#include "msr/structures.hpp"

namespace msr {

/// Query for the conditional threshold-count probability: at horizon T, at
/// least h components sit at their target coordinate z_i, conditional on the
/// joint state x at time t.
struct MeasureQuery {
    std::vector<int> z;
    int h = 0;
    double T = 0.0;
    double t = 0.0;
    std::vector<int> x;

    void validate(const StateSpace& sp) const {
        require(static_cast<int>(z.size()) == sp.components(), "query: z arity mismatch");
        require(static_cast<int>(x.size()) == sp.components(), "query: x arity mismatch");
        require(h >= 1 && h <= sp.components(), "query: h out of range");
        require(t >= 0.0 && t <= T, "query: need 0 <= t <= T");
        for (int i = 0; i < sp.components(); ++i) {
            require(z[i] >= 0 && z[i] < sp.component_size(i), "query: z coordinate out of range");
            require(x[i] >= 0 && x[i] < sp.component_size(i), "query: x coordinate out of range");
        }
    }
};

/// P(at least h components at their target at T | state x at t).
inline double systemic_risk(const MarkovStructureSpec& spec, const MeasureQuery& q) {
    const StateSpace& sp = spec.generator.space();
    q.validate(sp);
    const Matrix P = transition_matrix(spec.generator, q.t, q.T).entries;
    const int row = sp.flat_index(q.x);
    double nu = 0.0;
    for (int y = 0; y < sp.size(); ++y) {
        int count = 0;
        for (int i = 0; i < sp.components(); ++i)
            if (sp.coordinate(y, i) == q.z[i]) ++count;
        if (count >= q.h) nu += P(row, y);
    }
    return nu;
}

/// The comparison baseline is only meaningful against the tensor sum of the
/// structure's own prescribed marginals; anything else is rejected.
inline void require_independence_basis(const MarkovStructureSpec& spec_dep,
                                       const MarkovStructureSpec& spec_ind) {
    const PiecewiseConstantGenerator expected =
        independence_generator(spec_dep.prescribed_marginals);
    const auto& got = spec_ind.generator;
    bool same = got.space() == expected.space() &&
                got.breakpoints().size() == expected.breakpoints().size();
    if (same)
        for (size_t k = 0; k < got.breakpoints().size(); ++k)
            same = same && std::abs(got.breakpoints()[k] - expected.breakpoints()[k]) <= 1e-12;
    if (same)
        for (size_t k = 0; k < got.segments().size(); ++k)
            same = same && ((got.segments()[k] - expected.segments()[k]).cwiseAbs().maxCoeff() <=
                            1e-14);
    require(same, "normalization basis is not the tensor-sum of the prescribed marginals");
}

/// nu under the dependence structure minus nu under independence.
inline double systemic_dependence(const MarkovStructureSpec& spec_dep,
                                  const MarkovStructureSpec& spec_ind, const MeasureQuery& q) {
    require_independence_basis(spec_dep, spec_ind);
    return systemic_risk(spec_dep, q) - systemic_risk(spec_ind, q);
}

/// Relative entropy sum p log(p/q) in nats, with 0 log(0/0) = 0. Requires p
/// absolutely continuous with respect to q and reports the offending state
/// otherwise.
inline double kl_divergence(const Distribution& p, const Distribution& q) {
    require(p.space == q.space, "kl_divergence: state space mismatch");
    double kl = 0.0;
    for (int y = 0; y < p.space.size(); ++y) {
        if (p.probs[y] <= 1e-15) continue;
        require(q.probs[y] > 0.0,
                "kl_divergence: absolute continuity violated at state " + p.space.label(y));
        kl += p.probs[y] * std::log(p.probs[y] / q.probs[y]);
    }
    return std::max(kl, 0.0);
}

/// rho scaled by the divergence between the two time-t laws. Both structures
/// must share the initial distribution.
inline double systemic_instability(const MarkovStructureSpec& spec_dep,
                                   const MarkovStructureSpec& spec_ind, const MeasureQuery& q) {
    require((spec_dep.initial.probs - spec_ind.initial.probs).cwiseAbs().maxCoeff() <= 1e-15,
            "systemic_instability: structures must share the initial distribution");
    const double rho = systemic_dependence(spec_dep, spec_ind, q);
    const Distribution law_dep = propagate(spec_dep.initial, spec_dep.generator, q.t);
    const Distribution law_ind = propagate(spec_ind.initial, spec_ind.generator, q.t);
    return rho * kl_divergence(law_dep, law_ind);
}

enum class DependenceLabel { Unfavorable, Neutral, Favorable };
enum class InstabilityLabel { SystemicRisk, SystemicIndifference, SystemicBenefit };

inline const char* to_string(DependenceLabel l) {
    switch (l) {
        case DependenceLabel::Unfavorable: return "unfavorable";
        case DependenceLabel::Neutral: return "neutral";
        case DependenceLabel::Favorable: return "favorable";
    }
    return "?";
}

inline const char* to_string(InstabilityLabel l) {
    switch (l) {
        case InstabilityLabel::SystemicRisk: return "systemic_risk";
        case InstabilityLabel::SystemicIndifference: return "systemic_indifference";
        case InstabilityLabel::SystemicBenefit: return "systemic_benefit";
    }
    return "?";
}

/// Sign classification with a dead band against roundoff flapping.
inline DependenceLabel classify_dependence(double rho, double deadband = 1e-12) {
    if (std::abs(rho) < deadband) return DependenceLabel::Neutral;
    return rho > 0.0 ? DependenceLabel::Unfavorable : DependenceLabel::Favorable;
}

inline InstabilityLabel classify_instability(double kappa, double deadband = 1e-12) {
    if (std::abs(kappa) < deadband) return InstabilityLabel::SystemicIndifference;
    return kappa > 0.0 ? InstabilityLabel::SystemicRisk : InstabilityLabel::SystemicBenefit;
}

// ---------------------------------------------------------------------------
// time series
// ---------------------------------------------------------------------------

enum class HorizonMode { FixedT, Rolling };

struct SeriesPoint {
    double t = 0.0;
    double nu_dep = 0.0;
    double nu_ind = 0.0;
    double rho = 0.0;
    double kl = 0.0;
    double kappa = 0.0;
    DependenceLabel dependence = DependenceLabel::Neutral;
    InstabilityLabel instability = InstabilityLabel::SystemicIndifference;
};

struct MeasureSeries {
    HorizonMode mode = HorizonMode::FixedT;
    double horizon = 0.0;  // T for FixedT, the window width for Rolling
    std::vector<SeriesPoint> points;
};

namespace detail {

/// Transition matrices between query times of one generator, assembled from
/// cached per-cell exponentials.
class TransitionEvaluator {
public:
    TransitionEvaluator(const PiecewiseConstantGenerator& g, std::vector<double> times)
        : g_(&g) {
        std::sort(times.begin(), times.end());
        for (double t : times)
            if (times_.empty() || t - times_.back() > 1e-12) times_.push_back(t);
        for (size_t k = 0; k + 1 < times_.size(); ++k)
            cells_.push_back(transition_matrix(*g_, times_[k], times_[k + 1]).entries);
    }

    Matrix between(double t, double s) const {
        const size_t a = index_of(t);
        const size_t b = index_of(s);
        const int n = g_->space().size();
        Matrix P = Matrix::Identity(n, n);
        for (size_t k = a; k < b; ++k) P = P * cells_[k];
        return P;
    }

private:
    size_t index_of(double t) const {
        auto it = std::lower_bound(times_.begin(), times_.end(), t - 1e-9);
        require(it != times_.end() && std::abs(*it - t) < 1e-9,
                "TransitionEvaluator: time not in the prepared set");
        return static_cast<size_t>(it - times_.begin());
    }

    const PiecewiseConstantGenerator* g_;
    std::vector<double> times_;
    std::vector<Matrix> cells_;
};

}  // namespace detail

struct SeriesRequest {
    HorizonMode mode = HorizonMode::FixedT;
    double fixed_T = 30.0;
    double window = 3.0;    // rolling
    double t_end = 30.0;    // rolling: last evaluation time
    double grid_step = 0.2;
    std::vector<int> z;
    int h = 2;
    std::vector<int> x;
};

/// Evaluates (nu_dep, nu_ind, rho, KL, kappa, labels) on a uniform time
/// grid. Fixed mode uses one horizon T for every t <= T; rolling mode uses
/// T = t + window.
inline MeasureSeries measure_series(const MarkovStructureSpec& spec_dep,
                                    const MarkovStructureSpec& spec_ind,
                                    const SeriesRequest& req) {
    require(req.grid_step > 0.0, "measure_series: grid step must be positive");
    require_independence_basis(spec_dep, spec_ind);
    require((spec_dep.initial.probs - spec_ind.initial.probs).cwiseAbs().maxCoeff() <= 1e-15,
            "measure_series: structures must share the initial distribution");
    const StateSpace& sp = spec_dep.generator.space();
    const double t_end = req.mode == HorizonMode::FixedT ? req.fixed_T : req.t_end;

    const std::vector<double> grid = uniform_grid(req.grid_step, t_end);

    std::vector<double> query_times = grid;
    if (req.mode == HorizonMode::FixedT) {
        query_times.push_back(req.fixed_T);
    } else {
        for (double t : grid) query_times.push_back(snap_time(t + req.window));
    }
    detail::TransitionEvaluator dep_eval(spec_dep.generator, query_times);
    detail::TransitionEvaluator ind_eval(spec_ind.generator, query_times);
    LawTrajectory dep_laws(spec_dep.initial, spec_dep.generator, grid);
    LawTrajectory ind_laws(spec_ind.initial, spec_ind.generator, grid);

    const int row = sp.flat_index(req.x);
    std::vector<int> count_ok;
    for (int y = 0; y < sp.size(); ++y) {
        int count = 0;
        for (int i = 0; i < sp.components(); ++i)
            if (sp.coordinate(y, i) == req.z[i]) ++count;
        count_ok.push_back(count >= req.h);
    }

    MeasureSeries out;
    out.mode = req.mode;
    out.horizon = req.mode == HorizonMode::FixedT ? req.fixed_T : req.window;
    for (double t : grid) {
        const double T = req.mode == HorizonMode::FixedT ? req.fixed_T : snap_time(t + req.window);
        SeriesPoint pt;
        pt.t = t;
        const Matrix Pd = dep_eval.between(t, T);
        const Matrix Pi = ind_eval.between(t, T);
        for (int y = 0; y < sp.size(); ++y) {
            if (!count_ok[y]) continue;
            pt.nu_dep += Pd(row, y);
            pt.nu_ind += Pi(row, y);
        }
        pt.rho = pt.nu_dep - pt.nu_ind;
        pt.kl = kl_divergence(Distribution(sp, dep_laws.at(t), 1e-9),
                              Distribution(sp, ind_laws.at(t), 1e-9));
        pt.kappa = pt.rho * pt.kl;
        pt.dependence = classify_dependence(pt.rho);
        pt.instability = classify_instability(pt.kappa);
        out.points.push_back(pt);
    }
    return out;
}

struct AbsoluteContinuityViolation {
    double t = 0.0;
    int state = 0;
};

struct AbsoluteContinuityReport {
    std::vector<AbsoluteContinuityViolation> violations;
    bool ok() const { return violations.empty(); }
};

/// Verifies supp(law_dep(t)) is contained in supp(law_ind(t)) on the grid; a
/// violation indicates an upstream marginal-law mismatch.
inline AbsoluteContinuityReport check_absolute_continuity(const MarkovStructureSpec& spec_dep,
                                                          const MarkovStructureSpec& spec_ind,
                                                          const std::vector<double>& grid) {
    require((spec_dep.initial.probs - spec_ind.initial.probs).cwiseAbs().maxCoeff() <= 1e-15,
            "check_absolute_continuity: structures must share the initial distribution");
    AbsoluteContinuityReport rep;
    LawTrajectory dep(spec_dep.initial, spec_dep.generator, grid);
    LawTrajectory ind(spec_ind.initial, spec_ind.generator, grid);
    for (double t : grid) {
        const RowVector& p = dep.at(t);
        const RowVector& q = ind.at(t);
        for (int y = 0; y < p.size(); ++y)
            if (p[y] > 1e-15 && !(q[y] > 0.0)) rep.violations.push_back({t, y});
    }
    return rep;
}

/// Independence structure rebuilt from a dependence structure's own
/// prescribed marginals, sharing its initial distribution.
inline MarkovStructureSpec independence_baseline(const MarkovStructureSpec& spec) {
    MarkovStructureSpec out{
        spec.label + "__independence",
        independence_generator(spec.prescribed_marginals),
        spec.initial,
        spec.prescribed_marginals,
        spec.marginal_models,
        "strong",
    };
    return out;
}

}  // namespace msr
