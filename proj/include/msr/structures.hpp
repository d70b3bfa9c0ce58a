#pragma once

#include "msr/consistency.hpp"

#include <map>
#include <random>

namespace msr {

inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Kronecker sum of one-component generators on the product space; the joint
/// chain it generates has independent components. Satisfies condition (M) by
/// construction.
inline PiecewiseConstantGenerator independence_generator(
    const std::vector<PiecewiseConstantGenerator>& marginals) {
    require(!marginals.empty(), "independence_generator: no marginals");
    std::vector<int> sizes;
    std::vector<std::vector<double>> bps;
    for (const auto& m : marginals) {
        require(m.space().components() == 1, "independence_generator: marginals must be 1-component");
        sizes.push_back(m.space().size());
        bps.push_back(m.breakpoints());
    }
    StateSpace sp(sizes);
    const std::vector<double> merged = merge_breakpoints(bps);
    std::vector<Matrix> segments;
    std::vector<double> probes{0.0};
    for (double v : merged) probes.push_back(v);
    for (double t : probes) {
        Matrix sum = Matrix::Zero(sp.size(), sp.size());
        for (size_t j = 0; j < marginals.size(); ++j) {
            Matrix term = Matrix::Identity(1, 1);
            for (size_t k = 0; k < marginals.size(); ++k) {
                const int nk = sizes[k];
                term = kron(term, k == j ? marginals[k].evaluate(t) : Matrix::Identity(nk, nk));
            }
            sum += term;
        }
        segments.push_back(std::move(sum));
    }
    return PiecewiseConstantGenerator(sp, merged, std::move(segments));
}

// ---------------------------------------------------------------------------
// Markov structure container
// ---------------------------------------------------------------------------

struct MarkovStructureSpec {
    std::string label;
    PiecewiseConstantGenerator generator;
    Distribution initial;
    /// Piecewise-constant representations of the component laws, sampled from
    /// the exact models below; they agree with the extracted component rates
    /// at every sampling knot.
    std::vector<PiecewiseConstantGenerator> prescribed_marginals;
    /// Exact component models (closed-form where available).
    std::vector<MarginalModelPtr> marginal_models;
    std::string classification = "unclassified";
};

/// Runs the consistency classifier and stores the verdict on the spec.
inline ConsistencyReport classify_structure(MarkovStructureSpec& spec,
                                            const std::vector<double>& grid) {
    ConsistencyReport rep = classify(spec.generator, spec.initial, grid);
    spec.classification = to_string(rep.overall);
    return rep;
}

/// Samples a marginal model into a piecewise-constant one-component
/// generator: right-continuous, value at each knot equal to the model's rate
/// there.
inline PiecewiseConstantGenerator sample_marginal(const MarginalModel& model, double step,
                                                  double horizon,
                                                  const std::vector<double>& extra_knots = {}) {
    require(step > 0.0 && horizon > 0.0, "sample_marginal: bad sampling parameters");
    // the explicit knots (typically rate breakpoints) win over nearby lattice
    // points so that jumps in the model land on exact knot values
    std::vector<double> knots{0.0};
    for (double v : extra_knots)
        if (v > 0.0 && v < horizon + step) knots.push_back(v);
    std::sort(knots.begin(), knots.end());
    for (double t : uniform_grid(step, horizon)) {
        auto it = std::lower_bound(knots.begin(), knots.end(), t - 1e-9);
        if (it == knots.end() || std::abs(*it - t) > 1e-9) knots.insert(it, t);
    }
    std::vector<double> bps(knots.begin() + 1, knots.end());
    std::vector<Matrix> segs;
    for (double t : knots) segs.push_back(model.rate(t));
    return PiecewiseConstantGenerator(StateSpace({model.state_count()}), std::move(bps),
                                      std::move(segs));
}

// ---------------------------------------------------------------------------
// two-name example families with absorbing default states
// ---------------------------------------------------------------------------

enum class Family {
    CommonJumps,
    ExtremeContagion,
    ExtremeAntiContagion,
    SystemicImportance,
    SymmetricCommonJumps,
};

inline const char* to_string(Family f) {
    switch (f) {
        case Family::CommonJumps: return "common_jumps";
        case Family::ExtremeContagion: return "extreme_contagion";
        case Family::ExtremeAntiContagion: return "extreme_anti_contagion";
        case Family::SystemicImportance: return "systemic_importance";
        case Family::SymmetricCommonJumps: return "symmetric_common_jumps";
    }
    return "?";
}

inline Family family_from_string(const std::string& s) {
    for (Family f : {Family::CommonJumps, Family::ExtremeContagion, Family::ExtremeAntiContagion,
                     Family::SystemicImportance, Family::SymmetricCommonJumps})
        if (s == to_string(f)) return f;
    throw std::invalid_argument("unknown family: " + s);
}

using FamilyParams = std::map<std::string, PiecewiseConstantFn>;

namespace detail {

inline const PiecewiseConstantFn& family_param(const FamilyParams& p, const std::string& name) {
    auto it = p.find(name);
    require(it != p.end(), std::string("missing family parameter: ") + name);
    return it->second;
}

inline void require_positive_fn(const PiecewiseConstantFn& f, const std::string& name) {
    for (double v : f.values())
        require(v > 0.0, "parameter " + name + " must be strictly positive on every interval");
}

}  // namespace detail

/// Exact law of the four-state single-direction flow shared by the example
/// families: mass leaves (0,0) into (0,1), (1,0), (1,1); the off states feed
/// only (1,1); (1,1) is absorbing. Solved segment by segment in closed form,
/// with continuity across breakpoints.
class AbsorbingFamilyLaw {
public:
    explicit AbsorbingFamilyLaw(const PiecewiseConstantGenerator& g) : g_(&g) {
        const StateSpace& sp = g.space();
        require(sp.components() == 2 && sp.size() == 4,
                "AbsorbingFamilyLaw: needs a 2x2 product space");
        for (const Matrix& m : g.segments()) {
            require(m(1, 0) == 0.0 && m(1, 2) == 0.0 && m(2, 0) == 0.0 && m(2, 1) == 0.0 &&
                        m.row(3).isZero(0.0),
                    "AbsorbingFamilyLaw: generator does not have the one-directional flow shape");
        }
        // states at segment starts
        const auto& bp = g.breakpoints();
        starts_.push_back({1.0, 0.0, 0.0});
        for (size_t k = 0; k < bp.size(); ++k) {
            const double t0 = k == 0 ? 0.0 : bp[k - 1];
            starts_.push_back(advance(starts_.back(), g.segments()[k], bp[k] - t0));
        }
    }

    struct State {
        double p00, p01, p10;
    };

    State at(double t) const {
        require(t >= 0.0, "AbsorbingFamilyLaw: negative time");
        const int k = g_->segment_index(t);
        const double t0 = k == 0 ? 0.0 : g_->breakpoints()[k - 1];
        return advance(starts_[k], g_->segments()[k], t - t0);
    }

    double survival(int i, double t) const {
        const State s = at(t);
        return i == 0 ? s.p00 + s.p01 : s.p00 + s.p10;
    }

    /// Aggregate default hazard of component i given survival, with the rate
    /// matrix in force given explicitly (so callers can take left limits).
    double hazard(int i, double t, const Matrix& m) const {
        const State s = at(t);
        if (i == 0) {
            const double from00 = m(0, 2) + m(0, 3);
            const double from01 = m(1, 2) + m(1, 3);
            return (s.p00 * from00 + s.p01 * from01) / (s.p00 + s.p01);
        }
        const double from00 = m(0, 1) + m(0, 3);
        const double from10 = m(2, 1) + m(2, 3);
        return (s.p00 * from00 + s.p10 * from10) / (s.p00 + s.p10);
    }

private:
    static State advance(const State& s0, const Matrix& m, double tau) {
        const double r00 = -m(0, 0);
        const double a01 = m(0, 1), r01 = -m(1, 1);
        const double a10 = m(0, 2), r10 = -m(2, 2);
        auto bridge = [tau](double r, double d) {
            // int_0^tau e^{-r u} e^{-d (tau-u)} du
            if (std::abs(r - d) < 1e-13) return tau * std::exp(-r * tau);
            return (std::exp(-d * tau) - std::exp(-r * tau)) / (r - d);
        };
        State s;
        s.p00 = s0.p00 * std::exp(-r00 * tau);
        s.p01 = s0.p01 * std::exp(-r01 * tau) + a01 * s0.p00 * bridge(r00, r01);
        s.p10 = s0.p10 * std::exp(-r10 * tau) + a10 * s0.p00 * bridge(r00, r10);
        return s;
    }

    const PiecewiseConstantGenerator* g_;
    std::vector<State> starts_;
};

struct FamilyOptions {
    double marginal_sample_step = 0.01;
    double marginal_sample_horizon = 36.0;
    std::string label;
};

namespace detail {

inline PiecewiseConstantGenerator family_joint_generator(Family f, const FamilyParams& p) {
    std::vector<std::vector<double>> bps;
    for (const auto& [name, fn] : p) bps.push_back(fn.breakpoints());
    const std::vector<double> merged = merge_breakpoints(bps);
    std::vector<double> probes{0.0};
    for (double v : merged) probes.push_back(v);

    StateSpace sp({2, 2});
    std::vector<Matrix> segs;
    for (double t : probes) {
        Matrix m = Matrix::Zero(4, 4);
        switch (f) {
            case Family::CommonJumps: {
                const double a = family_param(p, "a").value(t);
                const double b = family_param(p, "b").value(t);
                const double c = family_param(p, "c").value(t);
                m(0, 1) = a; m(0, 2) = b; m(0, 3) = c;
                m(1, 3) = b; m(2, 3) = a;
                break;
            }
            case Family::SymmetricCommonJumps: {
                const double a = family_param(p, "a").value(t);
                const double c = family_param(p, "c").value(t);
                m(0, 1) = a; m(0, 2) = a; m(0, 3) = c;
                m(1, 3) = a; m(2, 3) = a;
                break;
            }
            case Family::ExtremeContagion: {
                m(0, 3) = family_param(p, "c").value(t);
                break;
            }
            case Family::ExtremeAntiContagion: {
                m(0, 1) = family_param(p, "a").value(t);
                m(0, 2) = family_param(p, "b").value(t);
                break;
            }
            case Family::SystemicImportance: {
                const double a = family_param(p, "a").value(t);
                const double c = family_param(p, "c").value(t);
                const double d = family_param(p, "d").value(t);
                m(0, 1) = a; m(0, 3) = c;
                m(1, 3) = d;
                m(2, 3) = a + c;
                break;
            }
        }
        for (int r = 0; r < 4; ++r) m(r, r) = -m.row(r).sum();
        segs.push_back(std::move(m));
    }
    return PiecewiseConstantGenerator(sp, merged, std::move(segs));
}

inline void validate_family_params(Family f, const FamilyParams& p) {
    switch (f) {
        case Family::CommonJumps:
            require_positive_fn(family_param(p, "a"), "a");
            require_positive_fn(family_param(p, "b"), "b");
            require_positive_fn(family_param(p, "c"), "c");
            break;
        case Family::SymmetricCommonJumps:
            require_positive_fn(family_param(p, "a"), "a");
            require_positive_fn(family_param(p, "c"), "c");
            break;
        case Family::ExtremeContagion:
            require_positive_fn(family_param(p, "c"), "c");
            break;
        case Family::ExtremeAntiContagion:
            require_positive_fn(family_param(p, "a"), "a");
            require_positive_fn(family_param(p, "b"), "b");
            break;
        case Family::SystemicImportance: {
            require_positive_fn(family_param(p, "a"), "a");
            require_positive_fn(family_param(p, "c"), "c");
            require_positive_fn(family_param(p, "d"), "d");
            const auto& c = family_param(p, "c");
            const auto& d = family_param(p, "d");
            const std::vector<double> merged = merge_breakpoints({c.breakpoints(), d.breakpoints()});
            std::vector<double> probes{0.0};
            for (double v : merged) probes.push_back(v);
            for (double t : probes)
                require(std::abs(c.value(t) - d.value(t)) > 1e-15,
                        "parameter c must differ from d on every interval");
            break;
        }
    }
}

}  // namespace detail

/// Builds the joint generator template of a named family together with the
/// matching component laws: exact closed-form marginal models plus their
/// piecewise-constant samplings.
inline MarkovStructureSpec example_family(Family f, const FamilyParams& params,
                                          const FamilyOptions& opts = {}) {
    detail::validate_family_params(f, params);
    // the law and the marginal lambdas reference the generator; a shared copy
    // keeps it alive for their lifetime
    auto joint_holder =
        std::make_shared<PiecewiseConstantGenerator>(detail::family_joint_generator(f, params));
    auto law = std::make_shared<AbsorbingFamilyLaw>(*joint_holder);

    std::vector<MarginalModelPtr> models;
    for (int i = 0; i < 2; ++i) {
        auto survival = [law, joint_holder, i](double t) { return law->survival(i, t); };
        auto hazard = [law, joint_holder, i](double t) {
            return law->hazard(i, t, joint_holder->evaluate(t));
        };
        auto hazard_left = [law, joint_holder, i](double t) {
            int k = joint_holder->segment_index(t);
            const auto& bp = joint_holder->breakpoints();
            if (k > 0 && t - bp[k - 1] < 1e-15) --k;
            return law->hazard(i, t, joint_holder->segments()[k]);
        };
        models.push_back(std::make_shared<AbsorbingBinaryMarginal>(survival, hazard, hazard_left));
    }

    MarkovStructureSpec spec{
        opts.label.empty() ? to_string(f) : opts.label,
        *joint_holder,
        Distribution::point_mass(StateSpace({2, 2}), {0, 0}),
        {},
        models,
    };
    for (int i = 0; i < 2; ++i)
        spec.prescribed_marginals.push_back(sample_marginal(*models[i], opts.marginal_sample_step,
                                                            opts.marginal_sample_horizon,
                                                            spec.generator.breakpoints()));
    return spec;
}

/// Strong structure pairing two absorbing single-default marginals by a
/// common-jump rate g = eta * min(rate1, rate2) per interval. Preserves both
/// marginals exactly and satisfies condition (M).
inline MarkovStructureSpec strong_common_jump(const PiecewiseConstantGenerator& marginal1,
                                              const PiecewiseConstantGenerator& marginal2,
                                              double eta) {
    require(eta >= 0.0 && eta <= 1.0, "strong_common_jump: eta must lie in [0,1]");
    for (const auto* m : {&marginal1, &marginal2}) {
        require(m->space().components() == 1 && m->space().size() == 2,
                "strong_common_jump: marginals must be 2-state");
        for (const Matrix& seg : m->segments())
            require(seg.row(1).isZero(0.0), "strong_common_jump: marginals must absorb in state 1");
    }
    const std::vector<double> merged =
        merge_breakpoints({marginal1.breakpoints(), marginal2.breakpoints()});
    std::vector<double> probes{0.0};
    for (double v : merged) probes.push_back(v);
    std::vector<Matrix> segs;
    for (double t : probes) {
        const double l1 = marginal1.evaluate(t)(0, 1);
        const double l2 = marginal2.evaluate(t)(0, 1);
        const double g = eta * std::min(l1, l2);
        Matrix m = Matrix::Zero(4, 4);
        m(0, 1) = l2 - g; m(0, 2) = l1 - g; m(0, 3) = g;
        m(1, 3) = l1;
        m(2, 3) = l2;
        for (int r = 0; r < 4; ++r) m(r, r) = -m.row(r).sum();
        segs.push_back(std::move(m));
    }
    MarkovStructureSpec spec{
        "strong_common_jump",
        PiecewiseConstantGenerator(StateSpace({2, 2}), merged, std::move(segs)),
        Distribution::point_mass(StateSpace({2, 2}), {0, 0}),
        {marginal1, marginal2},
        {std::make_shared<PiecewiseConstantMarginal>(marginal1),
         std::make_shared<PiecewiseConstantMarginal>(marginal2)},
    };
    return spec;
}

// ---------------------------------------------------------------------------
// component and state permutations
// ---------------------------------------------------------------------------

namespace detail {

inline void require_permutation(const std::vector<int>& p, int n, const std::string& what) {
    require(static_cast<int>(p.size()) == n, what + ": wrong length");
    std::vector<char> seen(n, 0);
    for (int v : p) {
        require(v >= 0 && v < n && !seen[v], what + ": not a permutation");
        seen[v] = 1;
    }
}

}  // namespace detail

/// Conjugates a structure by a relabeling of components and of each
/// component's states. component_perm[j] names the old component that moves
/// to position j; state_perms applies per old component (old value -> new
/// value). Closed-form marginal models are carried over only when the state
/// relabelings are trivial.
inline MarkovStructureSpec permute_structure(const MarkovStructureSpec& spec,
                                             const std::vector<int>& component_perm,
                                             const std::vector<std::vector<int>>& state_perms) {
    const StateSpace& sp = spec.generator.space();
    const int m = sp.components();
    detail::require_permutation(component_perm, m, "component permutation");
    require(static_cast<int>(state_perms.size()) == m, "state permutations: wrong count");
    for (int i = 0; i < m; ++i)
        detail::require_permutation(state_perms[i], sp.component_size(i), "state permutation");

    std::vector<int> new_sizes(m);
    for (int j = 0; j < m; ++j) new_sizes[j] = sp.component_size(component_perm[j]);
    StateSpace new_sp(new_sizes);

    std::vector<int> index_map(sp.size());
    for (int x = 0; x < sp.size(); ++x) {
        const auto t = sp.state_tuple(x);
        std::vector<int> nt(m);
        for (int j = 0; j < m; ++j) nt[j] = state_perms[component_perm[j]][t[component_perm[j]]];
        index_map[x] = new_sp.flat_index(nt);
    }

    std::vector<Matrix> segs;
    for (const Matrix& seg : spec.generator.segments()) {
        Matrix ns = Matrix::Zero(sp.size(), sp.size());
        for (int x = 0; x < sp.size(); ++x)
            for (int y = 0; y < sp.size(); ++y) ns(index_map[x], index_map[y]) = seg(x, y);
        segs.push_back(std::move(ns));
    }
    RowVector probs = RowVector::Zero(sp.size());
    for (int x = 0; x < sp.size(); ++x) probs[index_map[x]] = spec.initial.probs[x];

    bool trivial_states = true;
    for (int i = 0; i < m; ++i)
        for (int v = 0; v < sp.component_size(i); ++v)
            if (state_perms[i][v] != v) trivial_states = false;

    MarkovStructureSpec out{
        spec.label + "__permuted",
        PiecewiseConstantGenerator(new_sp, spec.generator.breakpoints(), std::move(segs)),
        Distribution(new_sp, std::move(probs)),
        {},
        {},
    };
    for (int j = 0; j < m; ++j) {
        const int old_i = component_perm[j];
        if (old_i < static_cast<int>(spec.prescribed_marginals.size())) {
            const auto& pm = spec.prescribed_marginals[old_i];
            std::vector<Matrix> msegs;
            const auto& perm = state_perms[old_i];
            for (const Matrix& seg : pm.segments()) {
                Matrix ns = Matrix::Zero(seg.rows(), seg.cols());
                for (int x = 0; x < seg.rows(); ++x)
                    for (int y = 0; y < seg.cols(); ++y) ns(perm[x], perm[y]) = seg(x, y);
                msegs.push_back(std::move(ns));
            }
            out.prescribed_marginals.emplace_back(pm.space(), pm.breakpoints(), std::move(msegs));
        }
        if (trivial_states && old_i < static_cast<int>(spec.marginal_models.size()))
            out.marginal_models.push_back(spec.marginal_models[old_i]);
    }
    return out;
}

}  // namespace msr
