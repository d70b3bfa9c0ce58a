#pragma once

#include "msr/semigroup.hpp"

#include <functional>
#include <memory>

namespace msr {

/// One-component generator model: a time-dependent rate matrix together with
/// its exact transition semigroup. Piecewise-constant marginals use
/// uniformization; families with smoothly varying rates supply closed forms.
class MarginalModel {
public:
    virtual ~MarginalModel() = default;
    virtual int state_count() const = 0;
    virtual Matrix rate(double t) const = 0;       // right-continuous
    virtual Matrix rate_left(double t) const = 0;  // limit from below, t > 0
    virtual Matrix transition(double t, double s) const = 0;
};

using MarginalModelPtr = std::shared_ptr<const MarginalModel>;

class PiecewiseConstantMarginal final : public MarginalModel {
public:
    explicit PiecewiseConstantMarginal(PiecewiseConstantGenerator g) : g_(std::move(g)) {
        require(g_.space().components() == 1, "PiecewiseConstantMarginal: needs a 1-component space");
    }

    int state_count() const override { return g_.space().size(); }
    Matrix rate(double t) const override { return g_.evaluate(t); }
    Matrix rate_left(double t) const override {
        require(t > 0.0, "rate_left: needs t > 0");
        int k = g_.segment_index(t);
        const auto& bp = g_.breakpoints();
        // step back when t sits exactly on a breakpoint
        if (k > 0 && t - bp[k - 1] < 1e-15) --k;
        return g_.segments()[k];
    }
    Matrix transition(double t, double s) const override {
        return transition_matrix(g_, t, s).entries;
    }

    const PiecewiseConstantGenerator& generator() const { return g_; }

private:
    PiecewiseConstantGenerator g_;
};

/// Two-state marginal with state 1 absorbing, defined by its survival
/// function S(t) = P(state 0 at t) and hazard h(t) = -S'(t)/S(t). The
/// semigroup is exact: P^{00}_{t,s} = S(s)/S(t).
class AbsorbingBinaryMarginal final : public MarginalModel {
public:
    AbsorbingBinaryMarginal(std::function<double(double)> survival,
                            std::function<double(double)> hazard,
                            std::function<double(double)> hazard_left)
        : survival_(std::move(survival)),
          hazard_(std::move(hazard)),
          hazard_left_(std::move(hazard_left)) {}

    int state_count() const override { return 2; }

    Matrix rate(double t) const override { return rate_matrix(hazard_(t)); }
    Matrix rate_left(double t) const override { return rate_matrix(hazard_left_(t)); }

    Matrix transition(double t, double s) const override {
        require(s >= t, "AbsorbingBinaryMarginal: end time before start time");
        const double st = survival_(t);
        require(st > 0.0, "AbsorbingBinaryMarginal: conditioning on an exhausted state");
        const double p = survival_(s) / st;
        Matrix m(2, 2);
        m << p, 1.0 - p, 0.0, 1.0;
        return m;
    }

    double survival(double t) const { return survival_(t); }
    double hazard(double t) const { return hazard_(t); }

private:
    static Matrix rate_matrix(double h) {
        Matrix m(2, 2);
        m << -h, h, 0.0, 0.0;
        return m;
    }

    std::function<double(double)> survival_;
    std::function<double(double)> hazard_;
    std::function<double(double)> hazard_left_;
};

}  // namespace msr
