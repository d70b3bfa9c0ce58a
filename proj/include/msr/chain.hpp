#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace msr {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;
using Vector = Eigen::VectorXd;

inline void require(bool cond, const std::string& what) {
    if (!cond) throw std::invalid_argument(what);
}

/// Product of finite component state sets with a fixed flat enumeration.
/// The enumeration is lexicographic with component 0 most significant, so a
/// Kronecker product over components lands on matching indices.
class StateSpace {
public:
    explicit StateSpace(std::vector<int> component_sizes)
        : sizes_(std::move(component_sizes)) {
        require(!sizes_.empty(), "StateSpace: no components");
        for (int n : sizes_) require(n >= 1, "StateSpace: component size must be positive");
        strides_.assign(sizes_.size(), 1);
        for (int i = static_cast<int>(sizes_.size()) - 2; i >= 0; --i)
            strides_[i] = strides_[i + 1] * sizes_[i + 1];
        total_ = strides_[0] * sizes_[0];
    }

    int components() const { return static_cast<int>(sizes_.size()); }
    int component_size(int i) const {
        require(i >= 0 && i < components(), "StateSpace: component index out of range");
        return sizes_[i];
    }
    int size() const { return total_; }

    int flat_index(const std::vector<int>& tuple) const {
        require(static_cast<int>(tuple.size()) == components(), "StateSpace: tuple arity mismatch");
        int idx = 0;
        for (int i = 0; i < components(); ++i) {
            require(tuple[i] >= 0 && tuple[i] < sizes_[i], "StateSpace: coordinate out of range");
            idx += tuple[i] * strides_[i];
        }
        return idx;
    }

    std::vector<int> state_tuple(int index) const {
        require(index >= 0 && index < total_, "StateSpace: flat index out of range");
        std::vector<int> t(components());
        for (int i = 0; i < components(); ++i) {
            t[i] = index / strides_[i];
            index %= strides_[i];
        }
        return t;
    }

    int coordinate(int index, int i) const {
        return (index / strides_[i]) % sizes_[i];
    }

    /// All flat indices whose i-th coordinate equals xi.
    std::vector<int> hyperplane(int i, int xi) const {
        require(i >= 0 && i < components(), "StateSpace: component index out of range");
        require(xi >= 0 && xi < sizes_[i], "StateSpace: coordinate out of range");
        std::vector<int> out;
        out.reserve(total_ / sizes_[i]);
        for (int x = 0; x < total_; ++x)
            if (coordinate(x, i) == xi) out.push_back(x);
        return out;
    }

    bool operator==(const StateSpace& o) const { return sizes_ == o.sizes_; }
    bool operator!=(const StateSpace& o) const { return !(*this == o); }

    std::string label(int index) const {
        auto t = state_tuple(index);
        std::string s = "(";
        for (size_t k = 0; k < t.size(); ++k) {
            if (k) s += ",";
            s += std::to_string(t[k]);
        }
        return s + ")";
    }

private:
    std::vector<int> sizes_;
    std::vector<int> strides_;
    int total_ = 0;
};

/// Scalar function of time, constant on [v_k, v_{k+1}) and on [v_n, inf).
/// Right-continuous; `value_left` gives the limit from below.
class PiecewiseConstantFn {
public:
    PiecewiseConstantFn() : values_{0.0} {}

    PiecewiseConstantFn(std::vector<double> breakpoints, std::vector<double> values)
        : breakpoints_(std::move(breakpoints)), values_(std::move(values)) {
        require(values_.size() == breakpoints_.size() + 1,
                "PiecewiseConstantFn: need one more value than breakpoints");
        double prev = 0.0;
        for (double v : breakpoints_) {
            require(v > prev, "PiecewiseConstantFn: breakpoints must be strictly increasing and positive");
            prev = v;
        }
    }

    static PiecewiseConstantFn constant(double v) { return PiecewiseConstantFn({}, {v}); }

    int segment_index(double t) const {
        require(t >= 0.0, "PiecewiseConstantFn: negative time");
        return static_cast<int>(std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t) -
                                breakpoints_.begin());
    }

    /// Segment whose interval contains the left neighborhood of t (t > 0).
    int segment_index_left(double t) const {
        require(t > 0.0, "PiecewiseConstantFn: left limit needs t > 0");
        return static_cast<int>(std::lower_bound(breakpoints_.begin(), breakpoints_.end(), t) -
                                breakpoints_.begin());
    }

    double value(double t) const { return values_[segment_index(t)]; }
    double value_left(double t) const { return values_[segment_index_left(t)]; }

    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<double>& values() const { return values_; }

private:
    std::vector<double> breakpoints_;
    std::vector<double> values_;
};

/// Nearest point on the picosecond lattice. Time grids synthesized from
/// decimal steps are snapped so that k*step lands exactly on the double a
/// decimal literal parses to, instead of drifting by accumulated rounding.
inline double snap_time(double t) { return std::nearbyint(t * 1e12) / 1e12; }

/// {0, step, 2 step, ...} up to and including t_end (when reachable), on the
/// snapped lattice.
inline std::vector<double> uniform_grid(double step, double t_end) {
    require(step > 0.0, "uniform_grid: step must be positive");
    std::vector<double> out;
    for (long k = 0;; ++k) {
        const double t = snap_time(static_cast<double>(k) * step);
        if (t > t_end + 1e-9) break;
        out.push_back(t);
    }
    return out;
}

/// Union of several breakpoint lists, deduplicated with a small tolerance.
inline std::vector<double> merge_breakpoints(const std::vector<std::vector<double>>& lists,
                                             double tol = 1e-12) {
    std::vector<double> all;
    for (const auto& l : lists) all.insert(all.end(), l.begin(), l.end());
    std::sort(all.begin(), all.end());
    std::vector<double> out;
    for (double v : all)
        if (out.empty() || v - out.back() > tol) out.push_back(v);
    return out;
}

/// Time-dependent rate matrix over a product state space, constant on
/// intervals. Segment k applies on [v_k, v_{k+1}), the last on [v_n, inf).
class PiecewiseConstantGenerator {
public:
    PiecewiseConstantGenerator(StateSpace space, std::vector<double> breakpoints,
                               std::vector<Matrix> segments)
        : space_(std::move(space)),
          breakpoints_(std::move(breakpoints)),
          segments_(std::move(segments)) {
        require(segments_.size() == breakpoints_.size() + 1,
                "PiecewiseConstantGenerator: need one more segment than breakpoints");
        double prev = 0.0;
        for (double v : breakpoints_) {
            require(v > prev, "PiecewiseConstantGenerator: breakpoints must be strictly increasing");
            prev = v;
        }
        const int n = space_.size();
        for (const auto& m : segments_)
            require(m.rows() == n && m.cols() == n, "PiecewiseConstantGenerator: segment shape mismatch");
    }

    static PiecewiseConstantGenerator constant(StateSpace space, Matrix m) {
        return PiecewiseConstantGenerator(std::move(space), {}, {std::move(m)});
    }

    const StateSpace& space() const { return space_; }
    const std::vector<double>& breakpoints() const { return breakpoints_; }
    const std::vector<Matrix>& segments() const { return segments_; }

    int segment_index(double t) const {
        require(t >= 0.0, "evaluate_generator: negative time");
        return static_cast<int>(std::upper_bound(breakpoints_.begin(), breakpoints_.end(), t) -
                                breakpoints_.begin());
    }

    const Matrix& evaluate(double t) const { return segments_[segment_index(t)]; }

private:
    StateSpace space_;
    std::vector<double> breakpoints_;
    std::vector<Matrix> segments_;
};

/// Right-continuous lookup of the rate matrix in force at time t.
inline const Matrix& evaluate_generator(const PiecewiseConstantGenerator& g, double t) {
    return g.evaluate(t);
}

struct GeneratorViolation {
    int segment = 0;
    int row = 0;
    std::string what;
};

struct ValidationReport {
    bool ok = true;
    std::vector<GeneratorViolation> violations;

    std::string to_string() const {
        if (ok) return "ok";
        std::ostringstream os;
        for (const auto& v : violations)
            os << "segment " << v.segment << ", row " << v.row << ": " << v.what << "\n";
        return os.str();
    }
};

/// Checks each segment for the rate-matrix invariants: nonnegative
/// off-diagonals, nonpositive diagonal, zero row sums.
inline ValidationReport validate_generator(const PiecewiseConstantGenerator& g,
                                           double tol = 1e-12) {
    ValidationReport rep;
    const int n = g.space().size();
    for (size_t k = 0; k < g.segments().size(); ++k) {
        const Matrix& m = g.segments()[k];
        for (int r = 0; r < n; ++r) {
            for (int c = 0; c < n; ++c) {
                if (r != c && m(r, c) < 0.0) {
                    rep.ok = false;
                    rep.violations.push_back({static_cast<int>(k), r,
                                              "negative off-diagonal at column " + std::to_string(c)});
                }
            }
            if (m(r, r) > tol) {
                rep.ok = false;
                rep.violations.push_back({static_cast<int>(k), r, "positive diagonal"});
            }
            const double rs = m.row(r).sum();
            if (std::abs(rs) > tol) {
                rep.ok = false;
                rep.violations.push_back({static_cast<int>(k), r,
                                          "row sum " + std::to_string(rs) + " exceeds tolerance"});
            }
        }
    }
    return rep;
}

/// Probability vector over a state space. Entries are validated on
/// construction; inputs off by more than the tolerance are rejected rather
/// than renormalized.
struct Distribution {
    StateSpace space;
    RowVector probs;

    Distribution(StateSpace s, RowVector p, double tol = 1e-12)
        : space(std::move(s)), probs(std::move(p)) {
        require(probs.size() == space.size(), "Distribution: length mismatch");
        double sum = 0.0;
        for (int i = 0; i < probs.size(); ++i) {
            require(probs[i] >= -tol, "Distribution: negative entry");
            if (probs[i] < 0.0) probs[i] = 0.0;
            sum += probs[i];
        }
        require(std::abs(sum - 1.0) <= tol, "Distribution: probabilities do not sum to 1");
    }

    static Distribution point_mass(StateSpace s, const std::vector<int>& state) {
        RowVector p = RowVector::Zero(s.size());
        p[s.flat_index(state)] = 1.0;
        return Distribution(std::move(s), std::move(p));
    }
};

/// Projection of a joint law onto component i by summing over hyperplanes.
inline Distribution marginal_distribution(const Distribution& d, int i) {
    const StateSpace& sp = d.space;
    require(i >= 0 && i < sp.components(), "marginal_distribution: component index out of range");
    const int ni = sp.component_size(i);
    RowVector out = RowVector::Zero(ni);
    for (int x = 0; x < sp.size(); ++x) out[sp.coordinate(x, i)] += d.probs[x];
    return Distribution(StateSpace({ni}), std::move(out), 1e-9);
}

}  // namespace msr
