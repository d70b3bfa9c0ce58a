#pragma once

// Parameter schedules of the bundled example scenarios, used directly by the
// unit and acceptance suites.

#include "msr/structures.hpp"

namespace tables {

using msr::Family;
using msr::FamilyParams;
using msr::PiecewiseConstantFn;

inline const std::vector<double> kDefaultBreaks{6.0, 10.0, 20.0, 26.0, 30.0};

inline PiecewiseConstantFn on_default_breaks(std::vector<double> values) {
    return PiecewiseConstantFn(kDefaultBreaks, std::move(values));
}

/// Contagious common jumps, fixed-horizon study: increasing / decreasing
/// joint-jump schedules over [0,3), [3,10), [10,30), [30,inf).
inline FamilyParams common_jumps_fixed(int scenario) {
    FamilyParams p;
    p.emplace("a", PiecewiseConstantFn::constant(0.01));
    p.emplace("b", PiecewiseConstantFn::constant(0.02));
    std::vector<double> c = scenario == 1 ? std::vector<double>{0.08, 0.15, 0.2, 0.2}
                                          : std::vector<double>{0.08, 0.03, 0.003, 0.003};
    p.emplace("c", PiecewiseConstantFn({3.0, 10.0, 30.0}, std::move(c)));
    return p;
}

/// Contagious common jumps, rolling-window study on the default periods.
inline FamilyParams common_jumps_rolling(int scenario) {
    FamilyParams p;
    p.emplace("a", PiecewiseConstantFn::constant(0.01));
    p.emplace("b", PiecewiseConstantFn::constant(0.02));
    std::vector<double> c = scenario == 1
                                ? std::vector<double>{0.01, 0.09, 0.03, 0.12, 0.04, 0.04}
                                : std::vector<double>{0.12, 0.09, 0.03, 0.09, 0.05, 0.05};
    p.emplace("c", on_default_breaks(std::move(c)));
    return p;
}

inline FamilyParams extreme_contagion(int scenario) {
    FamilyParams p;
    std::vector<double> c = scenario == 1
                                ? std::vector<double>{0.01, 0.1, 0.08, 0.05, 0.03, 0.03}
                                : std::vector<double>{0.08, 0.03, 0.02, 0.04, 0.03, 0.03};
    p.emplace("c", on_default_breaks(std::move(c)));
    return p;
}

inline FamilyParams anti_contagion(int scenario) {
    FamilyParams p;
    std::vector<double> ab = scenario == 1
                                 ? std::vector<double>{0.01, 0.08, 0.05, 0.03, 0.01, 0.01}
                                 : std::vector<double>{0.05, 0.02, 0.03, 0.07, 0.05, 0.05};
    p.emplace("a", on_default_breaks(ab));
    p.emplace("b", on_default_breaks(std::move(ab)));
    return p;
}

inline FamilyParams systemic_importance(int scenario, bool alt_periods = false) {
    FamilyParams p;
    p.emplace("a", PiecewiseConstantFn::constant(0.02));
    p.emplace("d", PiecewiseConstantFn::constant(0.01));
    std::vector<double> c = scenario == 1
                                ? std::vector<double>{0.02, 0.09, 0.06, 0.02, 0.09, 0.09}
                                : std::vector<double>{0.09, 0.06, 0.02, 0.09, 0.02, 0.02};
    if (alt_periods)
        p.emplace("c", PiecewiseConstantFn({6.0, 8.0, 10.0, 12.0, 15.0}, std::move(c)));
    else
        p.emplace("c", on_default_breaks(std::move(c)));
    return p;
}

inline FamilyParams two_weak_only(int scenario) {
    FamilyParams p;
    p.emplace("a", PiecewiseConstantFn::constant(0.01));
    std::vector<double> c = scenario == 1
                                ? std::vector<double>{0.02, 0.09, 0.06, 0.02, 0.09, 0.09}
                                : std::vector<double>{0.09, 0.06, 0.02, 0.09, 0.02, 0.02};
    p.emplace("c", on_default_breaks(std::move(c)));
    return p;
}

/// Every bundled dependence structure, for sweep-style suites.
inline std::vector<std::pair<std::string, msr::MarkovStructureSpec>> all_example_structures(
    const msr::FamilyOptions& opts = {}) {
    std::vector<std::pair<std::string, msr::MarkovStructureSpec>> out;
    for (int s : {1, 2}) {
        out.emplace_back("common_jumps_fixed_s" + std::to_string(s),
                         msr::example_family(Family::CommonJumps, common_jumps_fixed(s), opts));
        out.emplace_back("common_jumps_rolling_s" + std::to_string(s),
                         msr::example_family(Family::CommonJumps, common_jumps_rolling(s), opts));
        out.emplace_back("extreme_contagion_s" + std::to_string(s),
                         msr::example_family(Family::ExtremeContagion, extreme_contagion(s), opts));
        out.emplace_back(
            "anti_contagion_s" + std::to_string(s),
            msr::example_family(Family::ExtremeAntiContagion, anti_contagion(s), opts));
        out.emplace_back(
            "systemic_importance_s" + std::to_string(s),
            msr::example_family(Family::SystemicImportance, systemic_importance(s), opts));
        out.emplace_back(
            "two_weak_only_s" + std::to_string(s),
            msr::example_family(Family::SymmetricCommonJumps, two_weak_only(s), opts));
    }
    out.emplace_back("systemic_importance_s1_alt",
                     msr::example_family(Family::SystemicImportance,
                                         systemic_importance(1, true), opts));
    return out;
}

}  // namespace tables
