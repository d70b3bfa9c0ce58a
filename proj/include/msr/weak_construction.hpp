#pragma once

#include "msr/structures.hpp"

#include <limits>

namespace msr {

/// Pattern for the unknown joint rates of one construction step. Off-diagonal
/// entries labeled -1 are structurally zero; entries sharing a nonnegative
/// label share one rate parameter. Distinct labels everywhere reduce to a
/// plain sparsity mask.
struct StepMask {
    Eigen::MatrixXi labels;

    static StepMask dense(int n) {
        StepMask m;
        m.labels = Eigen::MatrixXi::Constant(n, n, -1);
        int id = 0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (r != c) m.labels(r, c) = id++;
        return m;
    }

    /// Nonzero off-diagonal entries of the pattern become independent
    /// parameters.
    static StepMask from_sparsity(const Matrix& pattern) {
        StepMask m;
        const int n = static_cast<int>(pattern.rows());
        m.labels = Eigen::MatrixXi::Constant(n, n, -1);
        int id = 0;
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                if (r != c && pattern(r, c) != 0.0) m.labels(r, c) = id++;
        return m;
    }

    int param_count() const {
        int mx = -1;
        for (int r = 0; r < labels.rows(); ++r)
            for (int c = 0; c < labels.cols(); ++c) mx = std::max(mx, labels(r, c));
        return mx + 1;
    }

    Matrix build(const Vector& params) const {
        const int n = static_cast<int>(labels.rows());
        Matrix out = Matrix::Zero(n, n);
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c)
                if (r != c && labels(r, c) >= 0) out(r, c) = params[labels(r, c)];
            out(r, r) = -out.row(r).sum();
        }
        return out;
    }
};

struct StepSolveOptions {
    double residual_tol = 1e-8;  // on the per-rate scale; survival rows are scaled by 1/dt
    int max_iterations = 120;
    int max_starts = 9;
    bool require_positive = true;
};

struct StepResult {
    bool feasible = false;
    Matrix rates;
    Vector params;
    double residual = std::numeric_limits<double>::infinity();
    int iterations = 0;
    std::string message;
};

namespace detail {

/// Residual stack of one construction step: the candidate joint rates must
/// reproduce the component rates at both step endpoints and the component
/// transition over the step. Component rows conditioning on zero-probability
/// states are dropped.
class StepSystem {
public:
    StepSystem(const StateSpace& sp, const RowVector& d_n, double t_n,
               const std::vector<MarginalModelPtr>& marginals, double dt, StepMask mask)
        : sp_(sp), d_n_(d_n), dt_(dt), mask_(std::move(mask)) {
        const int m = sp.components();
        for (int i = 0; i < m; ++i) thetas_.push_back(theta_from_law(sp, d_n, i, t_n));
        for (int i = 0; i < m; ++i) {
            rate_start_.push_back(marginals[i]->rate(t_n));
            rate_end_.push_back(marginals[i]->rate_left(t_n + dt));
            step_transition_.push_back(marginals[i]->transition(t_n, t_n + dt));
            phi_.push_back(phi(sp, i).entries);
        }
    }

    int equation_count() const {
        int n = 0;
        for (int i = 0; i < sp_.components(); ++i) {
            const int ni = sp_.component_size(i);
            int defined = 0;
            for (char d : thetas_[i].defined) defined += d;
            n += defined * (ni - 1) * 3;
        }
        return n;
    }

    Vector residual(const Vector& params) const {
        const Matrix lambda = mask_.build(params);
        const Matrix P = matrix_exponential(lambda, dt_);
        const RowVector d_next = d_n_ * P;
        Vector f(equation_count());
        int row = 0;
        for (int i = 0; i < sp_.components(); ++i) {
            const int ni = sp_.component_size(i);
            const ThetaOperator& thn = thetas_[i];
            const ThetaOperator ths = theta_from_law(sp_, d_next, i, 0.0);
            const Matrix start = thn.entries * lambda * phi_[i];
            const Matrix end = ths.entries * lambda * phi_[i];
            const Matrix step = thn.entries * P * phi_[i];
            for (int xi = 0; xi < ni; ++xi) {
                if (!thn.defined[xi]) continue;
                for (int yi = 0; yi < ni; ++yi) {
                    if (yi == xi) continue;
                    f[row++] = start(xi, yi) - rate_start_[i](xi, yi);
                    f[row++] = ths.defined[xi]
                                   ? end(xi, yi) - rate_end_[i](xi, yi)
                                   : 0.0;
                    f[row++] = (step(xi, yi) - step_transition_[i](xi, yi)) / dt_;
                }
            }
        }
        return f;
    }

    const StepMask& mask() const { return mask_; }
    double dt() const { return dt_; }

private:
    StateSpace sp_;
    RowVector d_n_;
    double dt_;
    StepMask mask_;
    std::vector<ThetaOperator> thetas_;
    std::vector<Matrix> rate_start_, rate_end_, step_transition_, phi_;
};

inline Vector clamp_nonnegative(Vector v) {
    for (int i = 0; i < v.size(); ++i) v[i] = std::max(v[i], 0.0);
    return v;
}

/// Damped Gauss-Newton descent on the residual stack, parameters kept
/// nonnegative by clamping.
inline StepResult levenberg_solve(const StepSystem& sys, const Vector& start,
                                  const StepSolveOptions& opts) {
    StepResult res;
    Vector x = clamp_nonnegative(start);
    Vector f = sys.residual(x);
    double fn = f.norm();
    double reg = 1e-8;
    int it = 0;
    for (; it < opts.max_iterations; ++it) {
        if (f.cwiseAbs().maxCoeff() < 1e-13) break;
        const int np = static_cast<int>(x.size());
        Matrix J(f.size(), np);
        for (int j = 0; j < np; ++j) {
            Vector xp = x;
            const double h = 1e-8 * std::max(1.0, std::abs(x[j]));
            xp[j] += h;
            J.col(j) = (sys.residual(xp) - f) / h;
        }
        bool improved = false;
        for (int tries = 0; tries < 40; ++tries) {
            const Matrix M = J.transpose() * J + reg * Matrix::Identity(np, np);
            const Vector dx = M.ldlt().solve(-J.transpose() * f);
            const Vector xn = clamp_nonnegative(x + dx);
            const Vector f2 = sys.residual(xn);
            if (f2.norm() < fn) {
                x = xn;
                f = f2;
                fn = f2.norm();
                reg = std::max(reg * 0.3, 1e-12);
                improved = true;
                break;
            }
            reg *= 10.0;
        }
        if (!improved) break;
    }
    res.params = x;
    res.rates = sys.mask().build(x);
    res.residual = f.cwiseAbs().maxCoeff();
    res.iterations = it;
    res.feasible = res.residual < opts.residual_tol;
    return res;
}

/// Minimum-norm nonnegative solution of the residual stack linearized at a
/// point: negative rates are projected to zero and the reduced system is
/// re-solved on the active set.
inline Vector projected_linear_start(const StepSystem& sys, const Vector& at) {
    const Vector f0 = sys.residual(at);
    const int np = static_cast<int>(at.size());
    Matrix J(f0.size(), np);
    for (int j = 0; j < np; ++j) {
        Vector xp = at;
        const double h = 1e-7 * std::max(1.0, std::abs(at[j]));
        xp[j] += h;
        J.col(j) = (sys.residual(xp) - f0) / h;
    }
    std::vector<int> free;
    for (int j = 0; j < np; ++j) free.push_back(j);
    Vector x = Vector::Zero(np);
    for (int pass = 0; pass < 500 && !free.empty(); ++pass) {
        Matrix Jf(f0.size(), free.size());
        for (size_t k = 0; k < free.size(); ++k) Jf.col(k) = J.col(free[k]);
        const Vector rhs = -(f0 - J * at);
        const Vector sol = Jf.completeOrthogonalDecomposition().solve(rhs);
        x.setZero();
        std::vector<int> keep;
        bool any_negative = false;
        for (size_t k = 0; k < free.size(); ++k) {
            if (sol[k] < -1e-14) {
                any_negative = true;
            } else {
                keep.push_back(free[k]);
            }
            x[free[k]] = std::max(sol[k], 0.0);
        }
        if (!any_negative) break;
        free = keep;
    }
    return x;
}

}  // namespace detail

/// Max-norm residual of the step system at a given parameter vector. Lets
/// callers check whether a candidate rate assignment solves the step.
inline double step_residual(const Distribution& d_n, double t_n,
                            const std::vector<MarginalModelPtr>& marginals, double dt,
                            const StepMask& mask, const Vector& params) {
    detail::StepSystem sys(d_n.space, d_n.probs, t_n, marginals, dt, mask);
    return sys.residual(params).cwiseAbs().maxCoeff();
}

/// One step of the discrete-time construction of a dependence structure with
/// prescribed component laws: finds nonnegative joint rates, constant over
/// [t_n, t_n + dt), that reproduce the component rates at both step
/// endpoints and the component transition over the step, under an optional
/// sparsity/tie mask. The system is typically underdetermined without a
/// mask; the solver then settles on the minimum-norm start. Multiple descent
/// starts cover the rate-tradeoff direction along which the equations are
/// nearly flat.
inline StepResult solve_weak_structure_step(const Distribution& d_n, double t_n,
                                            const std::vector<MarginalModelPtr>& marginals,
                                            double dt,
                                            const std::optional<StepMask>& mask = std::nullopt,
                                            const StepSolveOptions& opts = {},
                                            const std::optional<Vector>& warm_start = std::nullopt) {
    const StateSpace& sp = d_n.space;
    require(dt > 0.0, "solve_weak_structure_step: dt must be positive");
    require(static_cast<int>(marginals.size()) == sp.components(),
            "solve_weak_structure_step: one marginal model per component required");

    StepResult out;
    if (opts.require_positive) {
        for (int x = 0; x < sp.size(); ++x)
            if (!(d_n.probs[x] > 0.0)) {
                out.message = "one-dimensional law is not strictly positive at state " +
                              sp.label(x);
                throw std::invalid_argument("solve_weak_structure_step: " + out.message);
            }
    }
    double max_marginal_rate = 0.0;
    for (int i = 0; i < sp.components(); ++i) {
        const Matrix r = marginals[i]->rate(t_n);
        for (int xi = 0; xi < r.rows(); ++xi)
            max_marginal_rate = std::max(max_marginal_rate, -r(xi, xi));
    }
    require(max_marginal_rate * dt <= 1.0,
            "solve_weak_structure_step: dt too large for the component rates (rate*dt > 1)");

    const StepMask effective_mask = mask ? *mask : StepMask::dense(sp.size());
    require(effective_mask.labels.rows() == sp.size(), "solve_weak_structure_step: mask shape");
    const int np = effective_mask.param_count();
    require(np > 0, "solve_weak_structure_step: mask leaves no free rates");

    detail::StepSystem sys(sp, d_n.probs, t_n, marginals, dt, effective_mask);

    std::vector<Vector> starts;
    if (warm_start && warm_start->size() == np) starts.push_back(*warm_start);
    const Vector base = detail::projected_linear_start(sys, Vector::Zero(np));
    starts.push_back(base);
    {
        // spread along the flattest direction of the system at the base point
        const Vector f0 = sys.residual(base);
        Matrix J(f0.size(), np);
        for (int j = 0; j < np; ++j) {
            Vector xp = base;
            const double h = 1e-7 * std::max(1.0, std::abs(base[j]));
            xp[j] += h;
            J.col(j) = (sys.residual(xp) - f0) / h;
        }
        Eigen::JacobiSVD<Matrix> svd(J, Eigen::ComputeFullV);
        const Vector v = svd.matrixV().col(np - 1);
        const double scale = std::max(base.norm(), max_marginal_rate);
        for (double tshift : {-1.0, -0.5, 0.5, 1.0, 2.0})
            starts.push_back(detail::clamp_nonnegative(base + tshift * scale * v));
    }

    StepResult best;
    int tried = 0;
    for (const Vector& s : starts) {
        if (tried++ >= opts.max_starts) break;
        StepResult r = detail::levenberg_solve(sys, s, opts);
        if (r.residual < best.residual) best = r;
        if (best.residual < 1e-12) break;
    }
    best.feasible = best.residual < opts.residual_tol;
    if (!best.feasible && best.message.empty())
        best.message = "no candidate reached the residual tolerance";
    double max_solved_rate = 0.0;
    for (int r = 0; r < best.rates.rows(); ++r)
        max_solved_rate = std::max(max_solved_rate, -best.rates(r, r));
    if (max_solved_rate * dt > 1.0) {
        best.feasible = false;
        best.message = "solved rates violate the step-size bound (rate*dt > 1)";
    }
    return best;
}

struct ChainResult {
    std::optional<MarkovStructureSpec> spec;
    std::vector<double> step_residuals;
    double max_step_residual = 0.0;
    /// max over components and step times of the gap between the built
    /// chain's component law and the prescribed one
    double law_matching_residual = 0.0;
    std::optional<int> failed_step;
    std::string message;
};

/// Runs the step construction recursively over [0, n_steps*dt], propagating
/// the one-dimensional law with the solved rates, and assembles the result
/// into a piecewise-constant structure. Per-step solutions compose: matching
/// the component transition on every step yields matching on the whole grid.
inline ChainResult chain_steps(const Distribution& initial,
                               const std::vector<MarginalModelPtr>& marginals, double dt,
                               int n_steps, const std::optional<StepMask>& mask = std::nullopt,
                               const StepSolveOptions& opts = {},
                               double marginal_sample_step = 0.01) {
    require(n_steps >= 1, "chain_steps: need at least one step");
    ChainResult out;
    const StateSpace& sp = initial.space;
    Distribution d = initial;
    std::optional<Vector> warm;
    std::vector<Matrix> segments;
    std::vector<double> bps;

    for (int k = 0; k < n_steps; ++k) {
        const double t_n = snap_time(k * dt);
        StepSolveOptions step_opts = opts;
        if (k == 0) step_opts.require_positive = false;  // a point-mass start is allowed
        StepResult r;
        try {
            r = solve_weak_structure_step(d, t_n, marginals, dt, mask, step_opts, warm);
        } catch (const std::exception& e) {
            out.failed_step = k;
            out.message = e.what();
            break;
        }
        out.step_residuals.push_back(r.residual);
        out.max_step_residual = std::max(out.max_step_residual, r.residual);
        if (!r.feasible) {
            out.failed_step = k;
            out.message = "step " + std::to_string(k) + ": " + r.message +
                          " (residual " + std::to_string(r.residual) + ")";
            break;
        }
        segments.push_back(r.rates);
        if (k > 0) bps.push_back(t_n);
        warm = r.params;
        d = Distribution(sp, d.probs * matrix_exponential(r.rates, dt), 1e-9);
    }
    if (segments.empty()) return out;

    PiecewiseConstantGenerator joint(sp, bps, segments);
    MarkovStructureSpec spec{
        "weak_structure_chain", joint, initial, {}, marginals, "unclassified"};
    const double horizon = snap_time(static_cast<double>(segments.size()) * dt);
    for (int i = 0; i < sp.components(); ++i)
        spec.prescribed_marginals.push_back(
            sample_marginal(*marginals[i], std::min(marginal_sample_step, dt), horizon));

    // end-to-end law matching on the step grid
    std::vector<double> grid;
    for (size_t k = 1; k <= segments.size(); ++k) grid.push_back(snap_time(k * dt));
    LawTrajectory laws(initial, joint, grid);
    for (double t : grid) {
        Distribution joint_law(sp, laws.at(t), 1e-9);
        for (int i = 0; i < sp.components(); ++i) {
            const RowVector got = marginal_distribution(joint_law, i).probs;
            const RowVector want =
                marginal_distribution(initial, i).probs * marginals[i]->transition(0.0, t);
            out.law_matching_residual =
                std::max(out.law_matching_residual, (got - want).cwiseAbs().maxCoeff());
        }
    }
    out.spec = std::move(spec);
    return out;
}

}  // namespace msr
