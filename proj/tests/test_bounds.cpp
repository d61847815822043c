#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "amtnn/alpha.hpp"
#include "amtnn/bounds.hpp"
#include "amtnn/rng.hpp"

using namespace amtnn;

TEST_CASE("coefficient regularizer closed forms", "[bounds]") {
    // Uniform alpha and uniform beta: each row contributes
    // sqrt(sum_i (1/T^2)/(1/T)) = 1, so the total is T.
    for (std::size_t t : {2UL, 3UL, 5UL}) {
        RelationMatrix u = RelationMatrix::uniform(t);
        std::vector<real> beta(t, real(1) / real(t));
        REQUIRE(coefficient_regularizer(u, beta) == Catch::Approx(real(t)).margin(1e-12));

        // Unit rows with uniform beta: each row gives sqrt(T), total T*sqrt(T).
        RelationMatrix id = RelationMatrix::identity(t);
        REQUIRE(coefficient_regularizer(id, beta) ==
                Catch::Approx(real(t) * std::sqrt(real(t))).margin(1e-12));
    }

    // Scaling every sample count by a constant leaves beta (and the term)
    // unchanged.
    RelationMatrix a(2);
    a.at(0, 0) = 0.7; a.at(0, 1) = 0.3; a.at(1, 0) = 0.1; a.at(1, 1) = 0.9;
    REQUIRE(coefficient_regularizer(a, beta_weights({100, 300})) ==
            Catch::Approx(coefficient_regularizer(a, beta_weights({700, 2100}))).margin(1e-12));

    REQUIRE_THROWS_AS(coefficient_regularizer(a, {0.0, 1.0}), ConfigError);
}

TEST_CASE("uniform rows minimize the regularizer at uniform beta", "[bounds]") {
    // Grid check over the simplex for one row of a T=3 matrix.
    std::vector<real> beta(3, real(1) / real(3));
    auto row_term = [&](const std::vector<real>& row) {
        real s = 0;
        for (std::size_t i = 0; i < 3; ++i) s += row[i] * row[i] / beta[i];
        return std::sqrt(s);
    };
    real uniform_val = row_term({1.0 / 3, 1.0 / 3, 1.0 / 3});
    const std::size_t n = 100;
    for (std::size_t i = 0; i <= n; ++i)
        for (std::size_t j = 0; j + i <= n; ++j) {
            std::vector<real> row = {real(i) / n, real(j) / n, real(n - i - j) / n};
            REQUIRE(row_term(row) >= uniform_val - 1e-12);
        }
}

TEST_CASE("c1 closed form, monotonicity, and pinned oracle value", "[bounds]") {
    // Frozen from a 50-digit evaluation of the closed form.
    REQUIRE(c1_constant(10, 1000, 3, 0.1) ==
            Catch::Approx(0.74381158780638691197).epsilon(1e-12));

    REQUIRE(c1_constant(10, 2000, 3, 0.1) < c1_constant(10, 1000, 3, 0.1));
    REQUIRE(c1_constant(10, 1000, 3, 0.01) > c1_constant(10, 1000, 3, 0.1));

    REQUIRE_THROWS_AS(c1_constant(10, 10, 3, 0.1), ConfigError);   // m must exceed d
    REQUIRE_THROWS_AS(c1_constant(0.5, 100, 3, 0.1), ConfigError);  // d >= 1
    REQUIRE_THROWS_AS(c1_constant(10, 100, 3, 1.5), ConfigError);   // delta in (0,1)
}

TEST_CASE("c2 closed form over the minimizing pair", "[bounds]") {
    // Frozen from a 50-digit evaluation.
    REQUIRE(c2_constant_thm1({40, 60, 100}, 3, 3, 0.05) ==
            Catch::Approx(1.5553141359376911674).epsilon(1e-12));

    // Equal counts: the pair minimum is just the common count.
    real equal = c2_constant_thm1({50, 50, 50}, 2, 3, 0.1);
    real direct = 2 * std::sqrt((2 * 2 * std::log(2.0 * 50) + std::log(32 * 3 / 0.1)) / 50);
    REQUIRE(equal == Catch::Approx(direct).margin(1e-12));

    // Min structure: adding a task only grows the candidate set of pairwise
    // minima, so C2 can never increase. T also enters through log(32T/delta);
    // inflating delta by the same factor cancels that shift and isolates the
    // candidate structure: log(32*3/0.05) == log(32*4/(0.05*4/3)).
    real three = c2_constant_thm1({40, 60, 100}, 3, 3, 0.05);
    real four = c2_constant_thm1({40, 60, 100, 100}, 3, 4, 0.05 * 4.0 / 3.0);
    REQUIRE(four <= three + 1e-12);
    // The value depends only on the multiset of pairwise minima: permuting
    // the tasks changes nothing.
    REQUIRE(c2_constant_thm1({100, 40, 60}, 3, 3, 0.05) == Catch::Approx(three).margin(1e-15));

    REQUIRE_THROWS_AS(c2_constant_thm1({40, 60}, 3, 3, 0.05), ConfigError);
}

TEST_CASE("bound decomposition assembles its parts exactly", "[bounds]") {
    Rng rng(99);
    BoundInputs in;
    in.alpha = RelationMatrix(3);
    // A generic feasible alpha.
    in.alpha.at(0, 0) = 0.5; in.alpha.at(0, 1) = 0.3; in.alpha.at(0, 2) = 0.2;
    in.alpha.at(1, 0) = 0.1; in.alpha.at(1, 1) = 0.8; in.alpha.at(1, 2) = 0.1;
    in.alpha.at(2, 0) = 0.25; in.alpha.at(2, 1) = 0.25; in.alpha.at(2, 2) = 0.5;
    in.r_hat = LossMatrix(3);
    for (real& v : in.r_hat.data()) v = rng.uniform(0, 2);
    in.d_hat = DistanceMatrix(3);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) {
            real v = rng.uniform(0, 1);
            in.d_hat.at(a, b) = v;
            in.d_hat.at(b, a) = v;
        }
    in.m = {120, 80, 100};
    in.vc_dim = 7;
    in.delta = 0.1;
    in.metric = Metric::hdiv;

    BoundReport rep = bound_decomposition(in);

    // Each part recomputed independently.
    WeightedTaskLoss wl = weighted_task_loss(in.r_hat, in.alpha);
    real c1 = c1_constant(7, 300, 3, 0.1);
    real reg = c1 * coefficient_regularizer(in.alpha, beta_weights(in.m));
    real dist = 0;
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t i = 0; i < 3; ++i) dist += in.alpha.at(t, i) * in.d_hat.at(t, i);
    dist /= 3;
    real c2 = c2_constant_thm1(in.m, 7, 3, 0.1);

    REQUIRE(rep.weighted_empirical_loss == Catch::Approx(wl.total / 3).margin(1e-12));
    REQUIRE(rep.coefficient_regularization == Catch::Approx(reg).margin(1e-12));
    REQUIRE(rep.empirical_distance_term == Catch::Approx(dist).margin(1e-12));
    REQUIRE(rep.c2_available);
    REQUIRE(rep.total_computable ==
            Catch::Approx(wl.total / 3 + reg + dist + c2).margin(1e-12));
    for (real part : {rep.weighted_empirical_loss, rep.coefficient_regularization,
                      rep.empirical_distance_term, rep.c1, rep.c2})
        REQUIRE(part >= 0.0);

    // Diagonal alpha kills the distance term through the zero diagonal.
    BoundInputs diag = in;
    diag.alpha = RelationMatrix::identity(3);
    REQUIRE(bound_decomposition(diag).empirical_distance_term == 0.0);

    // w1 variant: distance scaled by 2K, C2 not computable.
    BoundInputs w = in;
    w.metric = Metric::w1;
    w.lipschitz_k = 2.5;
    BoundReport wrep = bound_decomposition(w);
    REQUIRE(wrep.empirical_distance_term == Catch::Approx(2 * 2.5 * dist).margin(1e-12));
    REQUIRE_FALSE(wrep.c2_available);
    REQUIRE(wrep.total_computable ==
            Catch::Approx(wl.total / 3 + reg + 2 * 2.5 * dist).margin(1e-12));
}

TEST_CASE("single-task bound keeps every surviving term", "[bounds]") {
    BoundInputs in;
    in.alpha = RelationMatrix::identity(1);
    in.r_hat = LossMatrix(1);
    in.r_hat.at(0, 0) = 0.42;
    in.d_hat = DistanceMatrix(1);
    in.m = {500};
    in.vc_dim = 5;
    in.delta = 0.2;
    in.metric = Metric::hdiv;
    BoundReport rep = bound_decomposition(in);
    REQUIRE(rep.weighted_empirical_loss == Catch::Approx(0.42).margin(1e-12));
    // beta_1 = 1, so the regularizer row is sqrt(1/1) = 1 and the term is C1.
    REQUIRE(rep.coefficient_regularization == Catch::Approx(rep.c1).margin(1e-12));
    REQUIRE(rep.empirical_distance_term == 0.0);
    REQUIRE(rep.c2_available);
    REQUIRE(rep.total_computable ==
            Catch::Approx(0.42 + rep.c1 + rep.c2).margin(1e-12));
}
