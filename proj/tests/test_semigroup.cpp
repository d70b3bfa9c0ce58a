#include "msr/semigroup.hpp"
#include "msr/monte_carlo.hpp"
#include "msr/structures.hpp"

#include "support/oracles.hpp"
#include "support/tables.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace msr;

TEST_CASE("matrix exponential basics") {
    SECTION("zero rate matrix and zero duration give the identity") {
        Matrix z = Matrix::Zero(3, 3);
        REQUIRE((matrix_exponential(z, 2.5) - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
        Matrix a(2, 2);
        a << -1, 1, 0, 0;
        REQUIRE((matrix_exponential(a, 0.0) - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("2x2 absorbing closed form") {
        Matrix a(2, 2);
        a << -1, 1, 0, 0;
        const Matrix e = matrix_exponential(a, 1.0);
        REQUIRE(e(0, 0) == Catch::Approx(std::exp(-1.0)).epsilon(1e-13));
        REQUIRE(e(0, 1) == Catch::Approx(1.0 - std::exp(-1.0)).epsilon(1e-13));
        REQUIRE(e(1, 0) == 0.0);
        REQUIRE(e(1, 1) == 1.0);
    }
    SECTION("rows stay stochastic within 1e-12") {
        SplitMix64 rng(7);
        for (int trial = 0; trial < 25; ++trial) {
            const int n = 2 + static_cast<int>(rng.next_u64() % 4);
            Matrix m = Matrix::Zero(n, n);
            for (int r = 0; r < n; ++r) {
                for (int c = 0; c < n; ++c)
                    if (r != c) m(r, c) = 2.0 * rng.next_double();
                m(r, r) = -m.row(r).sum();
            }
            const double dt = 40.0 * rng.next_double();  // exercises the splitting path
            const Matrix e = matrix_exponential(m, dt);
            for (int r = 0; r < n; ++r) {
                REQUIRE(std::abs(e.row(r).sum() - 1.0) < 1e-12);
                for (int c = 0; c < n; ++c) REQUIRE(e(r, c) >= 0.0);
            }
        }
    }
}

TEST_CASE("transition matrices") {
    SECTION("2-state absorbing generator, constant rate") {
        StateSpace sp({2});
        Matrix a(2, 2);
        a << -0.1, 0.1, 0, 0;
        auto g = PiecewiseConstantGenerator::constant(sp, a);
        const auto P = transition_matrix(g, 0.0, 3.0);
        REQUIRE(P.entries(0, 0) == Catch::Approx(std::exp(-0.3)).epsilon(1e-13));
        REQUIRE(P.entries(0, 1) == Catch::Approx(1.0 - std::exp(-0.3)).epsilon(1e-13));
        REQUIRE(P.entries(1, 1) == 1.0);
    }
    SECTION("s = t gives the identity") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        const auto P = transition_matrix(spec.generator, 4.2, 4.2);
        REQUIRE((P.entries - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("t > s is rejected") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        REQUIRE_THROWS(transition_matrix(spec.generator, 2.0, 1.0));
    }
    SECTION("matches the dense RK4 forward integration across breakpoints") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        const Matrix uni = transition_matrix(spec.generator, 0.0, 30.0).entries;
        const Matrix rk = oracle::rk4_transition(spec.generator, 0.0, 30.0, 1e-3);
        REQUIRE((uni - rk).cwiseAbs().maxCoeff() < 1e-8);
        REQUIRE(uni(0, 3) == Catch::Approx(rk(0, 3)).margin(1e-8));
    }
}

TEST_CASE("propagation of one-dimensional laws") {
    auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
    SECTION("t = 0 returns the initial law") {
        const auto d = propagate(spec.initial, spec.generator, 0.0);
        REQUIRE((d.probs - spec.initial.probs).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("a point mass at the absorbing state stays put") {
        auto d0 = Distribution::point_mass(StateSpace({2, 2}), {1, 1});
        for (double t : {0.5, 3.0, 12.0, 30.0}) {
            const auto d = propagate(d0, spec.generator, t);
            REQUIRE(d.probs[3] == Catch::Approx(1.0).margin(1e-14));
        }
    }
    SECTION("pure joint-jump structure has a two-state closed form") {
        auto ext = example_family(Family::ExtremeContagion, tables::extreme_contagion(1));
        const auto d = propagate(ext.initial, ext.generator, 6.0);
        // total joint-jump exposure over [0,6) is 0.01 * 6
        REQUIRE(d.probs[0] == Catch::Approx(std::exp(-0.06)).epsilon(1e-12));
        REQUIRE(d.probs[1] == 0.0);
        REQUIRE(d.probs[2] == 0.0);
        REQUIRE(d.probs[3] == Catch::Approx(1.0 - std::exp(-0.06)).epsilon(1e-12));
    }
    SECTION("law sums to one along the horizon") {
        for (double t : {0.1, 1.0, 7.7, 29.9}) {
            const auto d = propagate(spec.initial, spec.generator, t);
            REQUIRE(std::abs(d.probs.sum() - 1.0) < 1e-10);
        }
    }
}

TEST_CASE("semigroup property on a grid", "[property]") {
    auto spec = example_family(Family::CommonJumps, tables::common_jumps_rolling(2));
    const std::vector<double> grid{0.0, 2.0, 6.0, 9.0, 15.5, 23.0, 30.0};
    for (size_t a = 0; a < grid.size(); ++a)
        for (size_t b = a; b < grid.size(); ++b)
            for (size_t c = b; c < grid.size(); ++c) {
                const Matrix lhs = transition_matrix(spec.generator, grid[a], grid[c]).entries;
                const Matrix rhs = transition_matrix(spec.generator, grid[a], grid[b]).entries *
                                   transition_matrix(spec.generator, grid[b], grid[c]).entries;
                REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() < 1e-9);
            }
}

TEST_CASE("absorption probability is nondecreasing in time") {
    auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
    double prev = 0.0;
    for (double t = 0.0; t <= 30.0; t += 0.5) {
        const double p = transition_matrix(spec.generator, 0.0, t).entries(0, 3);
        REQUIRE(p >= prev - 1e-13);
        prev = p;
    }
}

TEST_CASE("uniformization matches RK4 on every bundled structure") {
    for (const auto& [name, spec] : tables::all_example_structures()) {
        const Matrix uni = transition_matrix(spec.generator, 0.0, 30.0).entries;
        const Matrix rk = oracle::rk4_transition(spec.generator, 0.0, 30.0, 1e-3);
        INFO(name);
        REQUIRE((uni - rk).cwiseAbs().maxCoeff() < 1e-8);
    }
}
