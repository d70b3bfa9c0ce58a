#pragma once

#include "msr/chain.hpp"

#include <cstdint>

namespace msr {

/// Deterministic counter-based generator. Per-path streams are derived by
/// mixing the base seed with the path index, so paths are independent and
/// reproducible regardless of scheduling.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// uniform in [0, 1) with 53-bit resolution
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// uniform in (0, 1], safe as a log argument
    double next_positive() { return 1.0 - next_double(); }

    static SplitMix64 for_path(std::uint64_t seed, std::uint64_t path_index) {
        SplitMix64 mixer(seed ^ (0x517cc1b727220a95ull * (path_index + 1)));
        return SplitMix64(mixer.next_u64());
    }

private:
    std::uint64_t state_;
};

/// One realized trajectory: strictly increasing jump times and the states
/// entered at them. The initial state applies on [0, first jump).
struct SamplePath {
    int initial_state = 0;
    std::vector<double> jump_times;
    std::vector<int> states;
    double terminal_time = 0.0;

    int state_at(double t) const {
        int s = initial_state;
        for (size_t k = 0; k < jump_times.size() && jump_times[k] <= t; ++k) s = states[k];
        return s;
    }
};

/// Exact simulation for piecewise-constant rates: within each constant
/// segment the holding time is exponential; at a segment boundary the clock
/// is redrawn with the new rate, which is exact by memorylessness.
inline SamplePath simulate(const PiecewiseConstantGenerator& g, const Distribution& d0,
                           double horizon, std::uint64_t seed) {
    require(horizon >= 0.0, "simulate: negative horizon");
    require(d0.space == g.space(), "simulate: state space mismatch");
    SplitMix64 rng(seed);

    SamplePath path;
    path.terminal_time = horizon;
    // initial draw
    {
        double u = rng.next_double();
        int s = 0;
        double acc = 0.0;
        for (int x = 0; x < g.space().size(); ++x) {
            acc += d0.probs[x];
            if (u < acc) {
                s = x;
                break;
            }
            s = x;  // guards against acc rounding below 1
        }
        path.initial_state = s;
    }

    int x = path.initial_state;
    double t = 0.0;
    const auto& bps = g.breakpoints();
    while (t < horizon) {
        const Matrix& m = g.evaluate(t);
        const double rate = -m(x, x);
        // end of the current constant segment
        double seg_end = horizon;
        auto it = std::upper_bound(bps.begin(), bps.end(), t);
        if (it != bps.end() && *it < seg_end) seg_end = *it;
        if (rate <= 0.0) {
            t = seg_end;
            continue;
        }
        const double hold = -std::log(rng.next_positive()) / rate;
        if (t + hold >= seg_end) {
            t = seg_end;
            continue;
        }
        t += hold;
        // jump target proportional to off-diagonal rates
        double u = rng.next_double() * rate;
        int y = -1;
        double acc = 0.0;
        for (int c = 0; c < g.space().size(); ++c) {
            if (c == x) continue;
            acc += m(x, c);
            if (u < acc) {
                y = c;
                break;
            }
        }
        if (y < 0) {
            for (int c = g.space().size() - 1; c >= 0; --c)
                if (c != x && m(x, c) > 0.0) {
                    y = c;
                    break;
                }
        }
        path.jump_times.push_back(t);
        path.states.push_back(y);
        x = y;
    }
    return path;
}

struct EventEstimate {
    double estimate = 0.0;
    double standard_error = 0.0;
    long hits = 0;
    long paths = 0;
};

/// Empirical counterpart of the threshold-count probability at the horizon,
/// with the binomial standard error.
inline EventEstimate estimate_event(const PiecewiseConstantGenerator& g, const Distribution& d0,
                                    double horizon, const std::vector<int>& z, int h,
                                    long n_paths, std::uint64_t seed) {
    const StateSpace& sp = g.space();
    require(n_paths >= 1, "estimate_event: need at least one path");
    require(static_cast<int>(z.size()) == sp.components(), "estimate_event: z arity mismatch");
    long hits = 0;
    for (long p = 0; p < n_paths; ++p) {
        SplitMix64 rng = SplitMix64::for_path(seed, static_cast<std::uint64_t>(p));
        const SamplePath path = simulate(g, d0, horizon, rng.next_u64());
        const int x = path.state_at(horizon);
        int count = 0;
        for (int i = 0; i < sp.components(); ++i)
            if (sp.coordinate(x, i) == z[i]) ++count;
        if (count >= h) ++hits;
    }
    EventEstimate est;
    est.hits = hits;
    est.paths = n_paths;
    est.estimate = static_cast<double>(hits) / static_cast<double>(n_paths);
    est.standard_error =
        std::sqrt(std::max(est.estimate * (1.0 - est.estimate), 1e-300) / n_paths);
    return est;
}

/// Empirical law of one component at each requested time, from a common set
/// of simulated paths.
inline std::vector<RowVector> empirical_marginal_law(const PiecewiseConstantGenerator& g,
                                                     const Distribution& d0, int i,
                                                     const std::vector<double>& times,
                                                     long n_paths, std::uint64_t seed) {
    const StateSpace& sp = g.space();
    require(i >= 0 && i < sp.components(), "empirical_marginal_law: component out of range");
    require(n_paths >= 1, "empirical_marginal_law: need at least one path");
    double horizon = 0.0;
    for (double t : times) horizon = std::max(horizon, t);
    std::vector<RowVector> counts(times.size(), RowVector::Zero(sp.component_size(i)));
    for (long p = 0; p < n_paths; ++p) {
        SplitMix64 rng = SplitMix64::for_path(seed, static_cast<std::uint64_t>(p));
        const SamplePath path = simulate(g, d0, horizon, rng.next_u64());
        for (size_t k = 0; k < times.size(); ++k)
            counts[k][sp.coordinate(path.state_at(times[k]), i)] += 1.0;
    }
    for (auto& c : counts) c /= static_cast<double>(n_paths);
    return counts;
}

}  // namespace msr
