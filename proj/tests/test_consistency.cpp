#include "msr/consistency.hpp"
#include "msr/structures.hpp"
#include "msr/monte_carlo.hpp"

#include "support/oracles.hpp"
#include "support/tables.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace msr;

namespace {

// two-name chain where every jump rate of one component may depend on the
// other's state; the template of the contagion discussion
Matrix two_name_full(double a, double b, double c, double d, double f) {
    Matrix m(4, 4);
    m << -(a + c + d), d, a, c,
         f, -(a + f), 0, a,
         b, 0, -(b + d), d,
         0, b, f, -(b + f);
    return m;
}

PiecewiseConstantGenerator common_jumps_constant(double a, double b, double c) {
    Matrix m(4, 4);
    m << -(a + b + c), a, b, c,
         0, -b, 0, b,
         0, 0, -a, a,
         0, 0, 0, 0;
    return PiecewiseConstantGenerator::constant(StateSpace({2, 2}), m);
}

PiecewiseConstantGenerator absorbing_marginal(double rate) {
    Matrix m(2, 2);
    m << -rate, rate, 0, 0;
    return PiecewiseConstantGenerator::constant(StateSpace({2}), m);
}

}  // namespace

TEST_CASE("theta operator") {
    StateSpace sp({2, 2});
    SECTION("point-mass conditioning at t = 0") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        const auto th = theta(spec.generator, spec.initial, 0, 0.0);
        REQUIRE(th.defined[0]);
        REQUIRE_FALSE(th.defined[1]);
        REQUIRE(th.entries(0, 0) == 1.0);
    }
    SECTION("independent product law factorizes") {
        RowVector p(4);
        const double p1 = 0.7, q1 = 0.4;  // survival probs of the two names
        p << p1 * q1, p1 * (1 - q1), (1 - p1) * q1, (1 - p1) * (1 - q1);
        const auto th = theta_from_law(sp, p, 0, 1.0);
        REQUIRE(th.all_defined());
        REQUIRE(th.entries(0, 0) == Catch::Approx(q1));
        REQUIRE(th.entries(0, 1) == Catch::Approx(1 - q1));
        REQUIRE(th.entries(1, 2) == Catch::Approx(q1));
        REQUIRE(th.entries(1, 3) == Catch::Approx(1 - q1));
    }
    SECTION("matches direct conditioning of an RK4-propagated law") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        const double t = 5.0;
        const RowVector law =
            spec.initial.probs * oracle::rk4_transition(spec.generator, 0.0, t, 1e-3);
        const auto th = theta(spec.generator, spec.initial, 0, t);
        for (int xi = 0; xi < 2; ++xi) {
            double mass = 0.0;
            for (int x : sp.hyperplane(0, xi)) mass += law[x];
            for (int x : sp.hyperplane(0, xi))
                REQUIRE(th.entries(xi, x) == Catch::Approx(law[x] / mass).margin(1e-8));
        }
    }
    SECTION("defined rows are probability vectors on their hyperplane", "[property]") {
        auto spec = example_family(Family::SystemicImportance, tables::systemic_importance(1));
        for (double t : {0.5, 2.0, 11.0, 28.0}) {
            for (int i = 0; i < 2; ++i) {
                const auto th = theta(spec.generator, spec.initial, i, t);
                for (int xi = 0; xi < 2; ++xi) {
                    if (!th.defined[xi]) continue;
                    REQUIRE(th.entries.row(xi).sum() == Catch::Approx(1.0).margin(1e-10));
                    for (int x = 0; x < 4; ++x)
                        if (sp.coordinate(x, i) != xi) REQUIRE(th.entries(xi, x) == 0.0);
                }
            }
        }
    }
}

TEST_CASE("phi operator") {
    SECTION("single component gives the identity") {
        const auto ph = phi(StateSpace({3}), 0);
        REQUIRE((ph.entries - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("coordinate readout on the 2x2 space") {
        StateSpace sp({2, 2});
        const auto ph1 = phi(sp, 1);
        for (int x = 0; x < 4; ++x) {
            REQUIRE(ph1.entries.row(x).sum() == 1.0);
            REQUIRE(ph1.entries(x, sp.coordinate(x, 1)) == 1.0);
        }
        const auto ph0 = phi(sp, 0);
        REQUIRE(ph0.entries(0, 0) == 1.0);
        REQUIRE(ph0.entries(1, 0) == 1.0);
        REQUIRE(ph0.entries(2, 1) == 1.0);
        REQUIRE(ph0.entries(3, 1) == 1.0);
    }
    SECTION("invalid component") { REQUIRE_THROWS(phi(StateSpace({2, 2}), 5)); }
}

TEST_CASE("extracted component generators") {
    StateSpace sp({2, 2});
    auto d0 = Distribution::point_mass(sp, {0, 0});
    SECTION("contagious common jumps with constant rates match the closed form") {
        const double a = 0.01, b = 0.02, c = 0.08;
        auto g = common_jumps_constant(a, b, c);
        const auto cfn = PiecewiseConstantFn::constant(c);
        for (double t : {0.5, 2.0, 9.0, 25.0}) {
            const Matrix m0 = marginal_generator(g, d0, 0, t);
            REQUIRE(m0(0, 1) ==
                    Catch::Approx(oracle::common_jumps_hazard(0, a, b, cfn, t)).margin(1e-8));
            REQUIRE(std::abs(m0.row(0).sum()) < 1e-10);
            REQUIRE(std::abs(m0.row(1).sum()) < 1e-10);
            const Matrix m1 = marginal_generator(g, d0, 1, t);
            REQUIRE(m1(0, 1) ==
                    Catch::Approx(oracle::common_jumps_hazard(1, a, b, cfn, t)).margin(1e-8));
        }
    }
    SECTION("tensor-sum generators marginalize back to their factors") {
        auto m1 = absorbing_marginal(0.05);
        auto m2 = absorbing_marginal(0.11);
        auto g = independence_generator({m1, m2});
        RowVector p(4);
        p << 0.4, 0.3, 0.2, 0.1;  // correlated law; extraction is still exact
        auto d = Distribution(sp, p);
        for (double t : {0.0, 1.0, 10.0}) {
            REQUIRE((marginal_generator(g, d, 0, t) - m1.evaluate(t)).cwiseAbs().maxCoeff() <
                    1e-12);
            REQUIRE((marginal_generator(g, d, 1, t) - m2.evaluate(t)).cwiseAbs().maxCoeff() <
                    1e-12);
        }
    }
    SECTION("symmetric no-joint-jump structure matches its closed form") {
        auto spec = example_family(Family::ExtremeAntiContagion, tables::anti_contagion(1));
        const auto alpha = tables::anti_contagion(1).at("a");
        const double t = 1.0;
        const Matrix m1 = marginal_generator(spec.generator, spec.initial, 1, t);
        REQUIRE(m1(0, 1) ==
                Catch::Approx(oracle::anti_contagion_hazard_symmetric(alpha, t)).margin(1e-8));
    }
    SECTION("undefined conditioning rows raise") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        REQUIRE_THROWS_WITH(marginal_generator(spec.generator, spec.initial, 0, 0.0),
                            Catch::Matchers::ContainsSubstring("undefined"));
    }
}

TEST_CASE("condition (M)") {
    SECTION("tensor sums satisfy it") {
        auto g = independence_generator({absorbing_marginal(0.1), absorbing_marginal(0.2)});
        REQUIRE(check_condition_M(g).all());
    }
    SECTION("joint jumps from the common factor break it, with a witness") {
        auto g = common_jumps_constant(0.01, 0.02, 0.08);
        const auto rep = check_condition_M(g);
        REQUIRE_FALSE(rep.holds[0]);
        REQUIRE(rep.witness[0].has_value());
        const auto& w = *rep.witness[0];
        REQUIRE(w.component == 0);
        REQUIRE(w.target == 1);
        // the aggregate rates differ by exactly the joint-jump intensity
        REQUIRE(std::abs(w.lhs - w.rhs) == Catch::Approx(0.08));
    }
    SECTION("common-jump coupling of two marginals keeps it for every eta") {
        auto m1 = absorbing_marginal(0.1);
        auto m2 = absorbing_marginal(0.07);
        for (double eta : {0.0, 0.25, 0.5, 0.75, 1.0}) {
            auto spec = strong_common_jump(m1, m2, eta);
            REQUIRE(check_condition_M(spec.generator).all());
        }
    }
}

TEST_CASE("condition (P)") {
    SECTION("tensor sums satisfy it at any pair") {
        auto g = independence_generator({absorbing_marginal(0.1), absorbing_marginal(0.2)});
        for (auto [t, s] : std::vector<std::pair<double, double>>{{0, 3}, {1, 8}, {5, 5}}) {
            const auto holds = check_condition_P(g, t, s);
            REQUIRE(holds[0]);
            REQUIRE(holds[1]);
        }
    }
    SECTION("joint jumps break it over a window") {
        auto g = common_jumps_constant(0.01, 0.02, 0.08);
        const auto holds = check_condition_P(g, 0.0, 3.0);
        REQUIRE_FALSE(holds[0]);
        REQUIRE_FALSE(holds[1]);
    }
    SECTION("the identity matrix at s = t always satisfies it") {
        auto g = common_jumps_constant(0.01, 0.02, 0.08);
        const auto holds = check_condition_P(g, 2.0, 2.0);
        REQUIRE(holds[0]);
        REQUIRE(holds[1]);
    }
}

TEST_CASE("conditions (M) and (P) agree on random generators", "[property]") {
    SplitMix64 rng(987654321);
    const std::vector<std::pair<double, double>> pairs{{0.0, 1.0}, {0.5, 4.0}, {2.0, 9.0}};
    for (int trial = 0; trial < 20; ++trial) {
        Matrix m = Matrix::Zero(4, 4);
        const bool make_consistent = trial % 4 == 0;
        for (int r = 0; r < 4; ++r)
            for (int c = 0; c < 4; ++c)
                if (r != c) m(r, c) = 0.3 * rng.next_double();
        if (make_consistent) {
            Matrix a(2, 2), b(2, 2);
            a << -0.1, 0.1, 0.05, -0.05;
            b << -0.2, 0.2, 0.15, -0.15;
            m = kron(a, Matrix::Identity(2, 2)) + kron(Matrix::Identity(2, 2), b);
        }
        for (int r = 0; r < 4; ++r) {
            m(r, r) = 0.0;
            m(r, r) = -m.row(r).sum();
        }
        auto g = PiecewiseConstantGenerator::constant(StateSpace({2, 2}), m);
        const auto mrep = check_condition_M(g);
        for (int i = 0; i < 2; ++i) {
            bool p_all = true;
            for (auto [t, s] : pairs)
                if (!check_condition_P(g, t, s)[i]) p_all = false;
            INFO("trial " << trial << " component " << i);
            REQUIRE(static_cast<bool>(mrep.holds[i]) == p_all);
        }
    }
}

TEST_CASE("intertwining check") {
    auto m1 = absorbing_marginal(0.1);
    auto m2 = absorbing_marginal(0.07);
    const std::vector<double> grid{0.0, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0};

    SECTION("a tensor sum intertwines with its own factors") {
        auto g = independence_generator({m1, m2});
        auto d0 = Distribution::point_mass(g.space(), {0, 0});
        const auto rep = check_intertwining(
            g, d0,
            {std::make_shared<PiecewiseConstantMarginal>(m1),
             std::make_shared<PiecewiseConstantMarginal>(m2)},
            grid);
        REQUIRE(rep.holds());
        REQUIRE(rep.worst() < 1e-10);
    }
    SECTION("degenerate conditionals: pure joint jumps intertwine exactly") {
        auto spec = example_family(Family::ExtremeContagion, tables::extreme_contagion(1));
        const auto rep =
            check_intertwining(spec.generator, spec.initial, spec.marginal_models, grid);
        REQUIRE(rep.holds());
        REQUIRE(rep.worst() < 1e-10);
    }
    SECTION("common-jump couplings fail the identity from a point-mass start") {
        // Conditioning on a component's default by s plus survival past t
        // narrows the common-shock window, so the component's past stays
        // informative about the neighbor. Strong consistency holds anyway,
        // via the rate condition; the identity is only sufficient.
        auto spec = strong_common_jump(m1, m2, 0.8);
        const auto rep =
            check_intertwining(spec.generator, spec.initial, spec.marginal_models, grid);
        REQUIRE_FALSE(rep.holds());
        REQUIRE(classify(spec.generator, spec.initial, grid).overall == Consistency::Strong);
    }
    SECTION("interior-time conditioning breaks the identity for contagious common jumps") {
        // The sufficient condition genuinely fails for this structure even
        // though each component is Markov in its own filtration; the
        // classifier therefore falls back to the path-identity check.
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        const auto rep =
            check_intertwining(spec.generator, spec.initial, spec.marginal_models, grid);
        REQUIRE_FALSE(rep.holds());
        REQUIRE(rep.worst() > 1e-4);
    }
    SECTION("wrong marginals are flagged loudly") {
        auto g = independence_generator({m1, m2});
        auto d0 = Distribution::point_mass(g.space(), {0, 0});
        auto wrong = std::make_shared<PiecewiseConstantMarginal>(absorbing_marginal(0.5));
        const auto rep = check_intertwining(
            g, d0, {wrong, std::make_shared<PiecewiseConstantMarginal>(m2)}, grid);
        REQUIRE_FALSE(rep.holds());
        REQUIRE(rep.max_residual[0] > 1e-2);
    }
    SECTION("structures passing the check marginalize onto the given semigroups") {
        auto spec = strong_common_jump(m1, m2, 0.5);
        auto d0 = spec.initial;
        for (double t : {0.0, 2.0, 8.0}) {
            for (double s : {12.0, 25.0}) {
                const Matrix P = transition_matrix(spec.generator, t, s).entries;
                for (int i = 0; i < 2; ++i) {
                    const auto tht = theta(spec.generator, d0, i, t);
                    const Matrix marg = tht.entries * P * phi(spec.generator.space(), i).entries;
                    const Matrix want = spec.marginal_models[i]->transition(t, s);
                    for (int xi = 0; xi < 2; ++xi)
                        if (tht.defined[xi])
                            REQUIRE((marg.row(xi) - want.row(xi)).cwiseAbs().maxCoeff() < 1e-8);
                }
            }
        }
    }
}

TEST_CASE("sampled natural-filtration identity") {
    StateSpace sp({2, 2});
    const std::vector<std::vector<double>> partitions{{0.0, 5.0, 10.0}, {0.0, 4.0, 8.0}};
    SECTION("strong structures are never falsified") {
        auto g = independence_generator({absorbing_marginal(0.1), absorbing_marginal(0.2)});
        auto d0 = Distribution::point_mass(sp, {0, 0});
        for (int i = 0; i < 2; ++i) {
            const auto rep = check_markov_identity_sampled(g, d0, i, partitions, 15.0);
            REQUIRE_FALSE(rep.falsified);
            REQUIRE(rep.max_violation < 1e-12);
        }
    }
    SECTION("contagious common jumps pass: absorbing components hide their past") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        for (int i = 0; i < 2; ++i) {
            const auto rep =
                check_markov_identity_sampled(spec.generator, spec.initial, i, partitions, 15.0);
            REQUIRE_FALSE(rep.falsified);
            REQUIRE(rep.max_violation < 1e-12);
        }
    }
    SECTION("a generator with history-sensitive components is falsified with a witness") {
        auto g = PiecewiseConstantGenerator::constant(sp, two_name_full(0.1, 0.2, 0.3, 0.1, 0.2));
        RowVector p(4);
        p << 0.4, 0.3, 0.2, 0.1;
        auto d0 = Distribution(sp, p);
        const auto rep = check_markov_identity_sampled(g, d0, 0, partitions, 15.0);
        REQUIRE(rep.falsified);
        REQUIRE(rep.witness.has_value());
        REQUIRE(rep.max_violation > 1e-4);
    }
    SECTION("zero-probability conditioning paths are skipped, not fatal") {
        auto spec = example_family(Family::ExtremeContagion, tables::extreme_contagion(1));
        const auto rep =
            check_markov_identity_sampled(spec.generator, spec.initial, 0, partitions, 15.0);
        REQUIRE_FALSE(rep.falsified);
        REQUIRE(rep.skipped_paths > 0);  // e.g. recovered-from-default paths
    }
}

TEST_CASE("contagion rates") {
    StateSpace sp({2, 2});
    SECTION("joint-jump intensity shows up only while the neighbor is sound") {
        auto g = PiecewiseConstantGenerator::constant(sp, two_name_full(0.1, 0.2, 0.3, 0.1, 0.2));
        const Matrix sound = contagion_rates(g, 0.0, 0, {0, 0});
        const Matrix defaulted = contagion_rates(g, 0.0, 0, {0, 1});
        REQUIRE(sound(0, 1) == Catch::Approx(0.1 + 0.3));  // a + c
        REQUIRE(defaulted(0, 1) == Catch::Approx(0.1));    // a
    }
    SECTION("no joint jumps, no contagion") {
        auto g = PiecewiseConstantGenerator::constant(sp, two_name_full(0.1, 0.2, 0.0, 0.1, 0.2));
        const Matrix sound = contagion_rates(g, 0.0, 0, {0, 0});
        const Matrix defaulted = contagion_rates(g, 0.0, 0, {0, 1});
        REQUIRE((sound - defaulted).cwiseAbs().maxCoeff() < 1e-15);
    }
    SECTION("tensor sums never depend on the conditioning state") {
        auto g = independence_generator({absorbing_marginal(0.1), absorbing_marginal(0.2)});
        for (int i = 0; i < 2; ++i) {
            const Matrix r0 = contagion_rates(g, 1.0, i, {0, 0});
            const Matrix r1 = contagion_rates(g, 1.0, i, {1, 1});
            REQUIRE((r0 - r1).cwiseAbs().maxCoeff() < 1e-15);
        }
    }
}

TEST_CASE("consistency classification") {
    const std::vector<double> grid{0.0, 1.5, 3.0, 6.5, 10.0, 20.0, 30.0};
    SECTION("tensor sums classify strong") {
        auto g = independence_generator({absorbing_marginal(0.1), absorbing_marginal(0.2)});
        auto d0 = Distribution::point_mass(g.space(), {0, 0});
        const auto rep = classify(g, d0, grid);
        REQUIRE(rep.overall == Consistency::Strong);
    }
    SECTION("contagious common jumps classify weak-only with a witness") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        const auto rep = classify(spec.generator, spec.initial, grid);
        REQUIRE(rep.overall == Consistency::WeakOnly);
        REQUIRE(rep.positivity);
        REQUIRE(rep.component[0].m_witness.has_value());
        REQUIRE_FALSE(rep.component[0].condition_m);
    }
    SECTION("common-jump couplings classify strong for any admissible eta") {
        auto spec = example_family(Family::CommonJumps, tables::common_jumps_fixed(1));
        for (double eta : {0.5, 0.8, 1.0}) {
            auto strong = strong_common_jump(spec.prescribed_marginals[0],
                                             spec.prescribed_marginals[1], eta);
            const auto rep = classify(strong.generator, strong.initial, grid);
            REQUIRE(rep.overall == Consistency::Strong);
        }
    }
    SECTION("pure joint jumps classify weak: positivity cannot be certified") {
        auto spec = example_family(Family::ExtremeContagion, tables::extreme_contagion(1));
        const auto rep = classify(spec.generator, spec.initial, grid);
        REQUIRE(rep.overall == Consistency::Weak);
        REQUIRE_FALSE(rep.positivity);
    }
    SECTION("history-sensitive generators classify not-weak") {
        StateSpace sp({2, 2});
        auto g = PiecewiseConstantGenerator::constant(sp, two_name_full(0.1, 0.2, 0.3, 0.1, 0.2));
        RowVector p(4);
        p << 0.4, 0.3, 0.2, 0.1;
        const auto rep = classify(g, Distribution(sp, p), grid);
        REQUIRE(rep.overall == Consistency::NotWeak);
    }
}
