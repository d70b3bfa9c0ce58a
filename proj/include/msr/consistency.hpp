#pragma once

#include "msr/marginal_model.hpp"

#include <optional>
#include <set>

namespace msr {

/// Conditional-law projection at one time: row x^i holds P(X_t = x | X_t^i = x^i).
/// Rows conditioning on a zero-probability component state are flagged
/// undefined rather than filled by convention.
struct ThetaOperator {
    int component = 0;
    double t = 0.0;
    Matrix entries;               // |E_i| x |E|
    std::vector<char> defined;    // per row

    bool all_defined() const {
        for (char d : defined)
            if (!d) return false;
        return true;
    }
};

inline ThetaOperator theta_from_law(const StateSpace& sp, const RowVector& law, int i,
                                    double t) {
    require(i >= 0 && i < sp.components(), "theta: component index out of range");
    const int ni = sp.component_size(i);
    ThetaOperator th;
    th.component = i;
    th.t = t;
    th.entries = Matrix::Zero(ni, sp.size());
    th.defined.assign(ni, 0);
    for (int xi = 0; xi < ni; ++xi) {
        double mass = 0.0;
        for (int x : sp.hyperplane(i, xi)) mass += law[x];
        if (mass > 0.0) {
            th.defined[xi] = 1;
            for (int x : sp.hyperplane(i, xi)) th.entries(xi, x) = law[x] / mass;
        }
    }
    return th;
}

inline ThetaOperator theta(const PiecewiseConstantGenerator& g, const Distribution& d0, int i,
                           double t) {
    return theta_from_law(g.space(), propagate(d0, g, t).probs, i, t);
}

/// Coordinate-extension operator: 0/1 matrix with one 1 per row, mapping a
/// function on E_i to a function on the product space.
struct PhiOperator {
    int component = 0;
    Matrix entries;  // |E| x |E_i|
};

inline PhiOperator phi(const StateSpace& sp, int i) {
    require(i >= 0 && i < sp.components(), "phi: component index out of range");
    PhiOperator ph;
    ph.component = i;
    ph.entries = Matrix::Zero(sp.size(), sp.component_size(i));
    for (int x = 0; x < sp.size(); ++x) ph.entries(x, sp.coordinate(x, i)) = 1.0;
    return ph;
}

/// Theta_t Lambda_t Phi: the component generator implied by the joint one.
/// Throws when a required conditioning row is undefined at t.
inline Matrix marginal_generator(const PiecewiseConstantGenerator& g, const Distribution& d0,
                                 int i, double t) {
    const ThetaOperator th = theta(g, d0, i, t);
    for (int xi = 0; xi < th.entries.rows(); ++xi)
        require(th.defined[xi],
                "marginal generator undefined at t=" + std::to_string(t) + ": component state " +
                    std::to_string(xi) + " has zero probability");
    return th.entries * g.evaluate(t) * phi(g.space(), i).entries;
}

// ---------------------------------------------------------------------------
// hyperplane-sum rate conditions
// ---------------------------------------------------------------------------

struct ConditionMWitness {
    int segment = 0;
    int component = 0;
    int x = 0;      // flat index
    int x_hat = 0;  // flat index, same i-th coordinate as x
    int target = 0; // y^i != x^i
    double lhs = 0.0;
    double rhs = 0.0;
};

struct ConditionMReport {
    std::vector<char> holds;  // per component
    std::vector<std::optional<ConditionMWitness>> witness;

    bool all() const {
        for (char h : holds)
            if (!h) return false;
        return true;
    }
};

namespace detail {

inline double hyperplane_rate(const Matrix& m, const StateSpace& sp, int x, int i, int yi) {
    double r = 0.0;
    for (int y : sp.hyperplane(i, yi)) r += m(x, y);
    return r;
}

}  // namespace detail

/// For every segment and component, the summed rate into each target
/// hyperplane must not depend on the coordinates of the other components.
inline ConditionMReport check_condition_M(const PiecewiseConstantGenerator& g,
                                          double tol = 1e-12) {
    const StateSpace& sp = g.space();
    ConditionMReport rep;
    rep.holds.assign(sp.components(), 1);
    rep.witness.assign(sp.components(), std::nullopt);
    for (int i = 0; i < sp.components(); ++i) {
        for (size_t seg = 0; seg < g.segments().size() && rep.holds[i]; ++seg) {
            const Matrix& m = g.segments()[seg];
            for (int xi = 0; xi < sp.component_size(i) && rep.holds[i]; ++xi) {
                const auto plane = sp.hyperplane(i, xi);
                for (int yi = 0; yi < sp.component_size(i) && rep.holds[i]; ++yi) {
                    if (yi == xi) continue;
                    const double ref = detail::hyperplane_rate(m, sp, plane[0], i, yi);
                    for (size_t k = 1; k < plane.size(); ++k) {
                        const double v = detail::hyperplane_rate(m, sp, plane[k], i, yi);
                        if (std::abs(v - ref) > tol) {
                            rep.holds[i] = 0;
                            rep.witness[i] = ConditionMWitness{static_cast<int>(seg), i, plane[0],
                                                               plane[k], yi, ref, v};
                            break;
                        }
                    }
                }
            }
        }
    }
    return rep;
}

/// Same hyperplane-sum equalities applied to the transition matrix P_{t,s}.
inline std::vector<char> check_condition_P(const PiecewiseConstantGenerator& g, double t,
                                           double s, double tol = 1e-9) {
    const StateSpace& sp = g.space();
    const Matrix P = transition_matrix(g, t, s).entries;
    std::vector<char> holds(sp.components(), 1);
    for (int i = 0; i < sp.components(); ++i) {
        for (int xi = 0; xi < sp.component_size(i) && holds[i]; ++xi) {
            const auto plane = sp.hyperplane(i, xi);
            for (int yi = 0; yi < sp.component_size(i) && holds[i]; ++yi) {
                if (yi == xi) continue;
                const double ref = detail::hyperplane_rate(P, sp, plane[0], i, yi);
                for (size_t k = 1; k < plane.size(); ++k) {
                    if (std::abs(detail::hyperplane_rate(P, sp, plane[k], i, yi) - ref) > tol) {
                        holds[i] = 0;
                        break;
                    }
                }
            }
        }
    }
    return holds;
}

// ---------------------------------------------------------------------------
// intertwining of the joint and component semigroups
// ---------------------------------------------------------------------------

struct IntertwiningReport {
    std::vector<double> max_residual;              // per component
    std::vector<std::pair<int, double>> excluded;  // (component, time) with undefined rows
    double threshold = 1e-8;

    bool holds() const {
        for (double r : max_residual)
            if (!(r < threshold)) return false;
        return true;
    }
    double worst() const {
        double w = 0.0;
        for (double r : max_residual) w = std::max(w, r);
        return w;
    }
};

/// Residuals of Theta_t P_{t,s} = Phat_{t,s} Theta_s over all ordered grid
/// pairs. Rows conditioning on zero-probability states are excluded and
/// reported.
inline IntertwiningReport check_intertwining(const PiecewiseConstantGenerator& g,
                                             const Distribution& d0,
                                             const std::vector<MarginalModelPtr>& marginals,
                                             std::vector<double> grid, double threshold = 1e-8) {
    const StateSpace& sp = g.space();
    require(static_cast<int>(marginals.size()) == sp.components(),
            "check_intertwining: one marginal model per component required");
    for (int i = 0; i < sp.components(); ++i)
        require(marginals[i]->state_count() == sp.component_size(i),
                "check_intertwining: marginal dimension mismatch");
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    LawTrajectory laws(d0, g, grid);
    std::vector<std::vector<ThetaOperator>> thetas(sp.components());
    for (int i = 0; i < sp.components(); ++i)
        for (double t : grid) thetas[i].push_back(theta_from_law(sp, laws.at(t), i, t));

    IntertwiningReport rep;
    rep.threshold = threshold;
    rep.max_residual.assign(sp.components(), 0.0);
    std::set<std::pair<int, double>> excluded;

    for (size_t a = 0; a < grid.size(); ++a) {
        // forward-accumulated products P_{t_a, t_b}
        Matrix P = Matrix::Identity(sp.size(), sp.size());
        for (size_t b = a; b < grid.size(); ++b) {
            if (b > a) P = P * transition_matrix(g, grid[b - 1], grid[b]).entries;
            for (int i = 0; i < sp.components(); ++i) {
                const ThetaOperator& tht = thetas[i][a];
                const ThetaOperator& ths = thetas[i][b];
                if (!ths.all_defined()) {
                    excluded.insert({i, grid[b]});
                    continue;
                }
                const Matrix rhs = marginals[i]->transition(grid[a], grid[b]) * ths.entries;
                const Matrix lhs = tht.entries * P;
                for (int xi = 0; xi < tht.entries.rows(); ++xi) {
                    if (!tht.defined[xi]) {
                        excluded.insert({i, grid[a]});
                        continue;
                    }
                    rep.max_residual[i] = std::max(
                        rep.max_residual[i], (lhs.row(xi) - rhs.row(xi)).cwiseAbs().maxCoeff());
                }
            }
        }
    }
    rep.excluded.assign(excluded.begin(), excluded.end());
    return rep;
}

/// Marginal models read off the joint chain itself: the component generator
/// function Theta_t Lambda_t Phi and its semigroup. When the component is
/// absorbing (no flow back from a trap coordinate) the semigroup is computed
/// exactly from occupation-mass ratios; otherwise a fine-step RK4 integration
/// of the component forward equation is used.
class ExtractedMarginalModel final : public MarginalModel {
public:
    ExtractedMarginalModel(PiecewiseConstantGenerator g, Distribution d0, int i,
                           double t_max, double substep = 1.0 / 256.0)
        : g_(std::move(g)), d0_(std::move(d0)), i_(i), substep_(substep) {
        const StateSpace& sp = g_.space();
        ni_ = sp.component_size(i);
        std::vector<double> times;
        for (double t = 0.0; t < t_max + substep_; t += substep_ / 2.0) times.push_back(t);
        for (double v : g_.breakpoints())
            if (v <= t_max + substep_) times.push_back(v);
        traj_ = std::make_shared<LawTrajectory>(d0_, g_, times);
        grid_times_ = std::move(times);
        std::sort(grid_times_.begin(), grid_times_.end());
        grid_times_.erase(std::unique(grid_times_.begin(), grid_times_.end()), grid_times_.end());
        absorbing_ = detect_absorbing();
    }

    int state_count() const override { return ni_; }

    Matrix rate(double t) const override { return extracted_rate(t, g_.evaluate(t)); }

    Matrix rate_left(double t) const override {
        require(t > 0.0, "rate_left: needs t > 0");
        int k = g_.segment_index(t);
        const auto& bp = g_.breakpoints();
        if (k > 0 && t - bp[k - 1] < 1e-15) --k;
        return extracted_rate(t, g_.segments()[k]);
    }

    Matrix transition(double t, double s) const override {
        require(s >= t, "ExtractedMarginalModel: end time before start time");
        if (absorbing_) return absorbing_transition(t, s);
        return rk4_transition(t, s);
    }

private:
    RowVector law_at(double t) const {
        // largest precomputed time <= t; the gap contains no breakpoint because
        // breakpoints are themselves grid times
        auto it = std::upper_bound(grid_times_.begin(), grid_times_.end(), t + 1e-15);
        const double base = (it == grid_times_.begin()) ? 0.0 : *(it - 1);
        RowVector v = traj_->at(base);
        if (t > base + 1e-15)
            v = v * matrix_exponential(g_.evaluate(base), t - base);
        return v;
    }

    Matrix extracted_rate(double t, const Matrix& lambda) const {
        // rows conditioning on zero-probability states are frozen: they carry
        // no mass in any identity this model feeds
        const StateSpace& sp = g_.space();
        const ThetaOperator th = theta_from_law(sp, law_at(t), i_, t);
        Matrix out = th.entries * lambda * phi(sp, i_).entries;
        for (int xi = 0; xi < ni_; ++xi)
            if (!th.defined[xi]) out.row(xi).setZero();
        return out;
    }

    bool detect_absorbing() const {
        // a coordinate value is a trap when no segment moves mass out of its hyperplane
        const StateSpace& sp = g_.space();
        trap_.assign(ni_, 1);
        for (int xi = 0; xi < ni_; ++xi)
            for (const Matrix& m : g_.segments())
                for (int x : sp.hyperplane(i_, xi))
                    for (int y = 0; y < sp.size(); ++y)
                        if (sp.coordinate(y, i_) != xi && m(x, y) > 0.0) trap_[xi] = 0;
        // exact-ratio route applies to the 2-state case with state 1 a trap
        return ni_ == 2 && trap_[1] == 1;
    }

    Matrix absorbing_transition(double t, double s) const {
        const StateSpace& sp = g_.space();
        auto mass0 = [&](double u) {
            double m = 0.0;
            const RowVector law = law_at(u);
            for (int x : sp.hyperplane(i_, 0)) m += law[x];
            return m;
        };
        const double mt = mass0(t);
        require(mt > 0.0, "extracted marginal transition: conditioning on an exhausted state");
        const double p = mass0(s) / mt;
        Matrix m(2, 2);
        m << p, 1.0 - p, 0.0, 1.0;
        return m;
    }

    Matrix rk4_transition(double t, double s) const {
        Matrix M = Matrix::Identity(ni_, ni_);
        double u = t;
        while (u < s - 1e-15) {
            double h = std::min(substep_, s - u);
            // stop at generator breakpoints so the rate stays smooth inside a step
            for (double v : g_.breakpoints())
                if (v > u + 1e-15 && v < u + h - 1e-15) h = v - u;
            const Matrix k1 = M * rate(u);
            const Matrix k2 = (M + 0.5 * h * k1) * rate(u + 0.5 * h);
            const Matrix k3 = (M + 0.5 * h * k2) * rate(u + 0.5 * h);
            const Matrix k4 = (M + h * k3) * rate_for_end(u + h);
            M += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            u += h;
        }
        return M;
    }

    Matrix rate_for_end(double u) const {
        // right at a breakpoint the step belongs to the left segment
        return rate_left(u);
    }

    PiecewiseConstantGenerator g_;
    Distribution d0_;
    int i_ = 0;
    int ni_ = 0;
    double substep_;
    std::shared_ptr<LawTrajectory> traj_;
    std::vector<double> grid_times_;
    mutable std::vector<char> trap_;
    bool absorbing_ = false;
};

// ---------------------------------------------------------------------------
// natural-filtration Markov property, checked by exact path enumeration
// ---------------------------------------------------------------------------

struct MarkovIdentityWitness {
    int partition_index = 0;
    std::vector<int> component_path;
    int terminal_state = 0;
    double value = 0.0;
};

struct MarkovIdentityReport {
    bool falsified = false;
    std::optional<MarkovIdentityWitness> witness;
    double max_violation = 0.0;
    int skipped_paths = 0;  // zero-probability conditioning paths
};

/// Exhaustively checks, for each sampled partition of [0,t], that
/// conditioning the joint law on the full component path and on the terminal
/// component state alike leads to the same component forecast at s. A
/// violation is a concrete witness that the component is not Markov in its
/// own filtration; absence of violations on the sampled partitions does not
/// prove the converse.
inline MarkovIdentityReport check_markov_identity_sampled(
    const PiecewiseConstantGenerator& g, const Distribution& d0, int i,
    const std::vector<std::vector<double>>& partitions, double s, double tol = 1e-8) {
    const StateSpace& sp = g.space();
    require(i >= 0 && i < sp.components(), "markov identity: component index out of range");
    const int ni = sp.component_size(i);
    MarkovIdentityReport rep;

    for (size_t pi = 0; pi < partitions.size(); ++pi) {
        const auto& part = partitions[pi];
        require(part.size() >= 1 && part.size() <= 5,
                "markov identity: partitions must have 1..5 points");
        for (size_t k = 0; k + 1 < part.size(); ++k)
            require(part[k] < part[k + 1], "markov identity: partition not increasing");
        const double t = part.back();
        require(s >= t, "markov identity: horizon before the partition end");

        std::vector<Matrix> steps;
        for (size_t k = 0; k + 1 < part.size(); ++k)
            steps.push_back(transition_matrix(g, part[k], part[k + 1]).entries);
        const Matrix Pts = transition_matrix(g, t, s).entries;
        const RowVector law_t = propagate(d0, g, t).probs;

        const int n_pts = static_cast<int>(part.size());
        std::vector<int> psi(n_pts, 0);
        const long total = static_cast<long>(std::pow(ni, n_pts));
        for (long code = 0; code < total; ++code) {
            long c = code;
            for (int k = 0; k < n_pts; ++k) {
                psi[k] = static_cast<int>(c % ni);
                c /= ni;
            }
            // forward filtering restricted to the observed component path
            RowVector alpha = RowVector::Zero(sp.size());
            if (part.front() == 0.0) {
                for (int x : sp.hyperplane(i, psi[0])) alpha[x] = d0.probs[x];
            } else {
                const RowVector l0 = propagate(d0, g, part.front()).probs;
                for (int x : sp.hyperplane(i, psi[0])) alpha[x] = l0[x];
            }
            for (size_t k = 0; k + 1 < part.size(); ++k) {
                alpha = alpha * steps[k];
                for (int x = 0; x < sp.size(); ++x)
                    if (sp.coordinate(x, i) != psi[k + 1]) alpha[x] = 0.0;
            }
            const double mass = alpha.sum();
            if (mass <= 1e-300) {
                ++rep.skipped_paths;
                continue;
            }
            const int xti = psi.back();
            double plane_mass = 0.0;
            for (int x : sp.hyperplane(i, xti)) plane_mass += law_t[x];
            if (plane_mass <= 0.0) {
                ++rep.skipped_paths;
                continue;
            }
            for (int xsi = 0; xsi < ni; ++xsi) {
                double val = 0.0;
                for (int x : sp.hyperplane(i, xti)) {
                    const double xi_term = alpha[x] / mass - law_t[x] / plane_mass;
                    double fwd = 0.0;
                    for (int y : sp.hyperplane(i, xsi)) fwd += Pts(x, y);
                    val += xi_term * fwd;
                }
                if (std::abs(val) > rep.max_violation) {
                    rep.max_violation = std::abs(val);
                    if (std::abs(val) > tol) {
                        rep.falsified = true;
                        rep.witness = MarkovIdentityWitness{static_cast<int>(pi), psi, xsi, val};
                    }
                }
            }
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// contagion rates
// ---------------------------------------------------------------------------

/// Aggregate transition rates of component i at time t with the other
/// components frozen at `conditioning` (its i-th coordinate is ignored).
/// Entry (from, to) is the summed rate into the target hyperplane. Contagion
/// is present exactly when this matrix depends on the conditioning state.
inline Matrix contagion_rates(const PiecewiseConstantGenerator& g, double t, int i,
                              std::vector<int> conditioning) {
    const StateSpace& sp = g.space();
    require(static_cast<int>(conditioning.size()) == sp.components(),
            "contagion_rates: conditioning tuple arity mismatch");
    const Matrix& m = g.evaluate(t);
    const int ni = sp.component_size(i);
    Matrix out = Matrix::Zero(ni, ni);
    for (int from = 0; from < ni; ++from) {
        conditioning[i] = from;
        const int x = sp.flat_index(conditioning);
        for (int to = 0; to < ni; ++to) {
            if (to == from) continue;
            out(from, to) = detail::hyperplane_rate(m, sp, x, i, to);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// classification
// ---------------------------------------------------------------------------

enum class Consistency { Strong, WeakOnly, Weak, NotWeak, Undetermined };

inline const char* to_string(Consistency c) {
    switch (c) {
        case Consistency::Strong: return "strong";
        case Consistency::WeakOnly: return "weak-only";
        case Consistency::Weak: return "weak";
        case Consistency::NotWeak: return "not-weak";
        case Consistency::Undetermined: return "undetermined";
    }
    return "?";
}

struct ComponentVerdict {
    Consistency classification = Consistency::Undetermined;
    bool condition_m = false;
    std::optional<ConditionMWitness> m_witness;
    bool condition_p = false;
    double intertwining_residual = 0.0;
    bool intertwining_holds = false;
    bool identity_falsified = false;
    double identity_max_violation = 0.0;
    std::string certificate;  // which check supported the verdict
};

struct ConsistencyReport {
    std::vector<ComponentVerdict> component;
    bool positivity = false;  // law strictly positive at all grid times > 0
    Consistency overall = Consistency::Undetermined;
};

struct ClassifyOptions {
    double intertwining_threshold = 1e-8;
    double identity_tol = 1e-8;
    // partitions for the sampled falsifier are built from the grid span
    int falsifier_points = 3;
};

/// Strong when condition (M) holds on every segment. Otherwise the chain is
/// certified weakly consistent either by the semigroup intertwining
/// identity (sufficient) or, failing that, by the sampled natural-filtration
/// identity not being falsified; in that case strict positivity of the law
/// on the grid separates weak-only from weak. A falsified identity yields
/// not-weak with a witness.
inline ConsistencyReport classify(const PiecewiseConstantGenerator& g, const Distribution& d0,
                                  const std::vector<double>& grid,
                                  const ClassifyOptions& opts = {}) {
    const StateSpace& sp = g.space();
    require(!grid.empty(), "classify: empty grid");
    ConsistencyReport rep;
    rep.component.resize(sp.components());

    const ConditionMReport m_rep = check_condition_M(g);
    const double t_end = *std::max_element(grid.begin(), grid.end());

    // positivity of the propagated law for t > 0
    rep.positivity = true;
    {
        LawTrajectory laws(d0, g, grid);
        for (double t : grid) {
            if (t <= 0.0) continue;
            const RowVector& l = laws.at(t);
            for (int x = 0; x < sp.size(); ++x)
                if (!(l[x] > 0.0)) rep.positivity = false;
        }
    }

    // intertwining against the chain's own extracted marginals
    std::vector<MarginalModelPtr> extracted;
    for (int i = 0; i < sp.components(); ++i)
        extracted.push_back(std::make_shared<ExtractedMarginalModel>(g, d0, i, t_end));
    const IntertwiningReport itw = check_intertwining(g, d0, extracted, grid,
                                                      opts.intertwining_threshold);

    // sampled falsifier partitions spread over the grid span
    std::vector<std::vector<double>> partitions;
    if (t_end > 0.0) {
        partitions.push_back({0.0, t_end / 3.0, 2.0 * t_end / 3.0});
        partitions.push_back({0.0, t_end / 2.0});
    } else {
        partitions.push_back({0.0});
    }
    const double s_horizon = t_end > 0.0 ? t_end * 4.0 / 3.0 : 1.0;

    for (int i = 0; i < sp.components(); ++i) {
        ComponentVerdict& v = rep.component[i];
        v.condition_m = m_rep.holds[i];
        v.m_witness = m_rep.witness[i];
        v.condition_p = true;
        for (size_t a = 0; a + 1 < grid.size(); a += 2)
            if (!check_condition_P(g, grid[a], grid[a + 1])[i]) v.condition_p = false;
        v.intertwining_residual = itw.max_residual[i];
        v.intertwining_holds = itw.max_residual[i] < opts.intertwining_threshold;

        const MarkovIdentityReport idr =
            check_markov_identity_sampled(g, d0, i, partitions, s_horizon, opts.identity_tol);
        v.identity_falsified = idr.falsified;
        v.identity_max_violation = idr.max_violation;

        if (v.condition_m) {
            v.classification = Consistency::Strong;
            v.certificate = "condition (M)";
        } else if (v.intertwining_holds || !idr.falsified) {
            v.certificate = v.intertwining_holds ? "intertwining identity"
                                                 : "sampled natural-filtration identity";
            v.classification = rep.positivity ? Consistency::WeakOnly : Consistency::Weak;
        } else if (idr.falsified) {
            v.classification = Consistency::NotWeak;
            v.certificate = "natural-filtration identity falsified";
        }
    }

    bool all_strong = true, any_not_weak = false, any_undetermined = false, any_only = false;
    for (const auto& v : rep.component) {
        all_strong = all_strong && v.classification == Consistency::Strong;
        any_not_weak = any_not_weak || v.classification == Consistency::NotWeak;
        any_undetermined = any_undetermined || v.classification == Consistency::Undetermined;
        any_only = any_only ||
                   v.classification == Consistency::WeakOnly ||
                   v.classification == Consistency::Weak;
    }
    if (all_strong)
        rep.overall = Consistency::Strong;
    else if (any_not_weak)
        rep.overall = Consistency::NotWeak;
    else if (any_undetermined)
        rep.overall = Consistency::Undetermined;
    else if (any_only)
        rep.overall = rep.positivity ? Consistency::WeakOnly : Consistency::Weak;
    return rep;
}

}  // namespace msr
