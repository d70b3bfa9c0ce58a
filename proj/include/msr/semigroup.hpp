#pragma once

#include "msr/chain.hpp"

#include <cmath>
#include <map>

namespace msr {

/// exp(A*dt) for a conservative rate matrix A, by uniformization: the
/// Poisson-weighted power series in I + A/q with q = max_x |A^{x,x}|.
/// Preserves nonnegativity and row sums exactly up to the tail truncation
/// (tail mass below 1e-14), which the stochasticity checks downstream
/// rely on. Large q*dt is handled by splitting the interval.
inline Matrix matrix_exponential(const Matrix& A, double dt) {
    require(dt >= 0.0, "matrix_exponential: negative duration");
    const int n = static_cast<int>(A.rows());
    const Matrix id = Matrix::Identity(n, n);
    double q = 0.0;
    for (int i = 0; i < n; ++i) q = std::max(q, std::abs(A(i, i)));
    if (q * dt == 0.0) return id;

    if (q * dt > 16.0) {
        const int pieces = static_cast<int>(std::ceil(q * dt / 16.0));
        const Matrix half = matrix_exponential(A, dt / pieces);
        Matrix out = half;
        for (int k = 1; k < pieces; ++k) out = out * half;
        return out;
    }

    const double a = q * dt;
    const Matrix W = id + A / q;
    Matrix term = id;            // W^k
    Matrix sum = Matrix::Zero(n, n);
    double weight = std::exp(-a);  // Poisson pmf at k
    double cum = 0.0;
    for (int k = 0; k < 2048; ++k) {
        sum += weight * term;
        cum += weight;
        if (1.0 - cum < 1e-14) break;
        term = term * W;
        weight *= a / (k + 1);
    }
    // scaling out the truncated tail keeps rows stochastic exactly
    return sum / cum;
}

/// Row-stochastic conditional-probability matrix between two times.
struct TransitionMatrix {
    StateSpace space;
    double t = 0.0;
    double s = 0.0;
    Matrix entries;
};

namespace detail {

/// Cut [t,s] at the generator's interior breakpoints.
inline std::vector<std::pair<double, double>> constant_pieces(
    const PiecewiseConstantGenerator& g, double t, double s) {
    std::vector<double> pts{t};
    for (double v : g.breakpoints())
        if (v > t && v < s) pts.push_back(v);
    pts.push_back(s);
    std::vector<std::pair<double, double>> out;
    for (size_t k = 0; k + 1 < pts.size(); ++k) out.emplace_back(pts[k], pts[k + 1]);
    return out;
}

}  // namespace detail

/// P_{t,s} as the ordered product of segment exponentials. Segment
/// boundaries inside [t,s] are split exactly.
inline TransitionMatrix transition_matrix(const PiecewiseConstantGenerator& g, double t,
                                          double s) {
    require(t >= 0.0, "transition_matrix: negative start time");
    require(s >= t, "transition_matrix: end time before start time");
    const int n = g.space().size();
    Matrix P = Matrix::Identity(n, n);
    for (auto [u0, u1] : detail::constant_pieces(g, t, s))
        if (u1 > u0) P = P * matrix_exponential(g.evaluate(u0), u1 - u0);
    return TransitionMatrix{g.space(), t, s, std::move(P)};
}

/// One-dimensional law at time t from the initial law: d0 * P_{0,t}.
inline Distribution propagate(const Distribution& d0, const PiecewiseConstantGenerator& g,
                              double t) {
    require(d0.space == g.space(), "propagate: state space mismatch");
    require(t >= 0.0, "propagate: negative time");
    RowVector v = d0.probs;
    for (auto [u0, u1] : detail::constant_pieces(g, 0.0, t))
        if (u1 > u0) v = v * matrix_exponential(g.evaluate(u0), u1 - u0);
    return Distribution(g.space(), std::move(v), 1e-9);
}

/// Laws of one chain at many times, built once by incremental propagation.
/// Query times must come from the `times` list given at construction.
class LawTrajectory {
public:
    LawTrajectory(const Distribution& d0, const PiecewiseConstantGenerator& g,
                  std::vector<double> times)
        : space_(g.space()) {
        require(d0.space == g.space(), "LawTrajectory: state space mismatch");
        std::sort(times.begin(), times.end());
        times.erase(std::unique(times.begin(), times.end()), times.end());
        require(!times.empty() && times.front() >= 0.0, "LawTrajectory: bad time grid");
        RowVector v = d0.probs;
        double prev = 0.0;
        for (double t : times) {
            for (auto [u0, u1] : detail::constant_pieces(g, prev, t))
                if (u1 > u0) v = v * matrix_exponential(g.evaluate(u0), u1 - u0);
            prev = t;
            laws_[t] = v;
        }
    }

    const RowVector& at(double t) const {
        auto it = laws_.find(t);
        if (it == laws_.end()) {
            // tolerate grid times recreated with rounding noise
            it = laws_.lower_bound(t - 1e-9);
            require(it != laws_.end() && std::abs(it->first - t) < 1e-9,
                    "LawTrajectory: time not on the precomputed grid");
        }
        return it->second;
    }

    const StateSpace& space() const { return space_; }

private:
    StateSpace space_;
    std::map<double, RowVector> laws_;
};

}  // namespace msr
