#include "langunits/probe.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace langunits;

namespace {

struct RandomProbe {
    ProbingDesign design;
    TypologyMatrix typ;
};

RandomProbe random_probe(std::uint64_t seed, std::size_t L, std::size_t U, std::size_t F, double lambda = 1.0) {
    StableRng rng(seed);
    RandomProbe p;
    p.design.mean_activations = Matrix<double>(L, U);
    for (auto& v : p.design.mean_activations.flat()) v = rng.uniform() * 2 - 1;
    for (std::size_t u = 0; u < U; ++u) p.design.unit_ids.push_back({0, static_cast<std::uint32_t>(u), UnitKind::raw});
    p.design.lambda = lambda;
    p.design.folds = 5;
    p.design.seed = seed;
    const auto& fam = typology_families();
    p.typ.values = Matrix<double>(L, F);
    for (std::size_t f = 0; f < F; ++f) {
        p.typ.features.push_back(fam[f % fam.size()] + "_f" + std::to_string(f));
        p.typ.families.push_back(fam[f % fam.size()]);
    }
    for (std::size_t k = 0; k < L; ++k) p.typ.languages.push_back("l" + std::to_string(k));
    for (auto& v : p.typ.values.flat()) v = rng.below(3) == 0 ? 1.0 : (rng.below(2) ? rng.uniform() : 0.0);
    return p;
}

std::vector<double> column(const Matrix<double>& m, std::size_t c) {
    std::vector<double> out(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) out[r] = m(r, c);
    return out;
}

void expect_matches_oracle(const RandomProbe& p, const ProbeResult& r) {
    for (std::size_t u = 0; u < p.design.unit_ids.size(); ++u) {
        const auto x = column(p.design.mean_activations, u);
        for (std::size_t j = 0; j < p.typ.features.size(); ++j) {
            const auto o = oracle::cv_r2(x, column(p.typ.values, j), r.fold_assignment, p.design.folds,
                                         p.design.lambda);
            ASSERT_EQ(o.has_value(), r.defined(u, j)) << u << "," << j;
            if (o) {
                ASSERT_NEAR(r.r2(u, j), *o, 1e-9) << u << "," << j;
            }
        }
    }
}

} // namespace

TEST(Ridge, NormalEquationExample) {
    const std::vector<double> x{1, -1}, y{1, -1};
    const auto fit = fit_ridge_univariate(x, y, 1.0);
    ASSERT_TRUE(fit);
    EXPECT_DOUBLE_EQ(fit->beta, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(fit->predict(1.0), 2.0 / 3.0);
}

TEST(Ridge, ConstantTargetGivesZeroSlope) {
    const std::vector<double> x{0.3, 1.2, -0.7, 2.0}, y{4, 4, 4, 4};
    const auto fit = fit_ridge_univariate(x, y, 1.0);
    EXPECT_EQ(fit->beta, 0.0);
    EXPECT_EQ(fit->predict(10.0), 4.0);
}

TEST(Ridge, ZeroLambdaIsOrdinaryLeastSquares) {
    StableRng rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> x(3 + rng.below(20)), y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            x[i] = rng.uniform() * 4 - 2;
            y[i] = 0.7 * x[i] + rng.uniform();
        }
        const auto fit = fit_ridge_univariate(x, y, 0.0);
        const auto ols = oracle::ridge_line(x, y, 0.0);
        ASSERT_TRUE(fit && ols);
        EXPECT_NEAR(fit->beta, ols->b, 1e-12);
        EXPECT_NEAR(fit->predict(0.0), ols->a, 1e-12);
    }
}

TEST(Ridge, UndefinedWhenDenominatorVanishes) {
    const std::vector<double> x{2, 2, 2}, y{1, 2, 3};
    EXPECT_FALSE(fit_ridge_univariate(x, y, 0.0));
    EXPECT_TRUE(fit_ridge_univariate(x, y, 1.0));
    EXPECT_THROW(fit_ridge_univariate(x, y, -1.0), ValidationError);
}

TEST(Ridge, ShrinksMonotonicallyInLambda) {
    StableRng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> x(12), y(12);
        for (std::size_t i = 0; i < 12; ++i) {
            x[i] = rng.uniform();
            y[i] = rng.uniform() - 0.5 * x[i];
        }
        double prev = std::numeric_limits<double>::infinity();
        for (double lambda : {0.0, 0.01, 0.1, 1.0, 10.0, 100.0, 1e6}) {
            const double b = std::fabs(fit_ridge_univariate(x, y, lambda)->beta);
            EXPECT_LE(b, prev);
            prev = b;
        }
        EXPECT_LT(std::fabs(fit_ridge_univariate(x, y, 1e12)->beta), 1e-6);
    }
}

TEST(Ridge, UncenteredModelHasNoIntercept) {
    const std::vector<double> x{1, 2}, y{2, 4};
    const auto fit = fit_ridge_univariate(x, y, 0.0, false);
    EXPECT_DOUBLE_EQ(fit->beta, 2.0);
    EXPECT_DOUBLE_EQ(fit->predict(3.0), 6.0);
}

TEST(CvR2, PerfectLinearFitScoresOne) {
    RandomProbe p = random_probe(3, 10, 1, 1, 0.0);
    for (std::size_t k = 0; k < 10; ++k) p.typ.values(k, 0) = p.design.mean_activations(k, 0);
    const auto r = cv_r2(p.design, p.typ);
    EXPECT_NEAR(r.r2(0, 0), 1.0, 1e-12);
}

TEST(CvR2, MatchesBruteForceOracle) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = random_probe(seed, 12, 60, 20);
        const auto r = cv_r2(p.design, p.typ);
        expect_matches_oracle(p, r);
        for (auto v : r.r2.flat())
            if (!std::isnan(v)) {
                EXPECT_LE(v, 1.0 + 1e-9);
            }
    }
}

TEST(CvR2, NoiseTargetsAverageBelowZero) {
    const auto p = random_probe(17, 12, 200, 10);
    const auto r = cv_r2(p.design, p.typ);
    double sum = 0;
    std::size_t n = 0;
    for (auto v : r.r2.flat())
        if (!std::isnan(v)) { sum += v; ++n; }
    EXPECT_LT(sum / static_cast<double>(n), 0.0);
}

TEST(CvR2, ConstantTestFoldIsExcluded) {
    RandomProbe p = random_probe(4, 10, 3, 1);
    p.design.folds = 2;
    const auto folds = assign_folds(10, 2, p.design.seed);
    // Constant target within fold 0, varying within fold 1.
    for (std::size_t k = 0; k < 10; ++k) p.typ.values(k, 0) = folds[k] == 0 ? 3.0 : static_cast<double>(k);
    const auto r = cv_r2(p.design, p.typ);
    for (std::size_t u = 0; u < 3; ++u) {
        EXPECT_EQ(r.defined_folds(u, 0), 1u);
        EXPECT_TRUE(r.defined(u, 0));
    }
    EXPECT_EQ(r.partial_pairs(), 3u);
    expect_matches_oracle(p, r);
}

TEST(CvR2, EveryFoldConstantIsUndefined) {
    RandomProbe p = random_probe(5, 10, 2, 1);
    p.design.folds = 2;
    const auto folds = assign_folds(10, 2, p.design.seed);
    for (std::size_t k = 0; k < 10; ++k) p.typ.values(k, 0) = folds[k] == 0 ? 3.0 : 7.0;
    const auto r = cv_r2(p.design, p.typ);
    EXPECT_FALSE(r.defined(0, 0));
    EXPECT_FALSE(r.defined(1, 0));
}

TEST(CvR2, BlockSizeAndThreadsHaveNoNumericalEffect) {
    const auto p = random_probe(6, 12, 37, 11);
    const auto base = cv_r2(p.design, p.typ);
    for (std::size_t ub : {1u, 5u, 64u}) {
        for (std::size_t fb : {1u, 3u, 64u}) {
            for (unsigned threads : {1u, 3u}) {
                const auto r = cv_r2(p.design, p.typ, {true, ub, fb, threads});
                EXPECT_EQ(r.r2, base.r2);
            }
        }
    }
}

TEST(CvR2, FoldAssignmentIsSeededAndBalanced) {
    const auto a = assign_folds(12, 5, 77);
    EXPECT_EQ(a, assign_folds(12, 5, 77));
    std::vector<int> sizes(5);
    for (auto f : a) ++sizes[f];
    for (int s : sizes) EXPECT_TRUE(s == 2 || s == 3);
    const auto p = random_probe(7, 12, 10, 5);
    EXPECT_EQ(cv_r2(p.design, p.typ).r2, cv_r2(p.design, p.typ).r2);
}

TEST(CvR2, FewerLanguagesThanFoldsIsAnError) {
    const auto p = random_probe(8, 4, 2, 2);
    EXPECT_THROW(cv_r2(p.design, p.typ), ValidationError);
}

TEST(CvR2, LargeLambdaApproachesMeanBaseline) {
    const auto p = random_probe(9, 12, 5, 5, 1e12);
    const auto r = cv_r2(p.design, p.typ);
    // beta ~ 0, so predictions are the train mean of y.
    for (std::size_t j = 0; j < 5; ++j) {
        const auto o = oracle::cv_r2(std::vector<double>(12, 0.0), column(p.typ.values, j), r.fold_assignment, 5, 1.0);
        if (o) {
            EXPECT_NEAR(r.r2(0, j), *o, 1e-9);
        }
    }
}

TEST(Familywise, ExampleValues) {
    ProbeResult r;
    r.unit_ids = {{0, 0, UnitKind::raw}, {0, 1, UnitKind::raw}};
    r.features = {"fam_a", "fam_b"};
    r.families = {"fam", "fam"};
    r.folds = 5;
    r.r2 = Matrix<double>(2, 2);
    r.r2(0, 0) = 0.2;
    r.r2(0, 1) = 0.8;
    r.r2(1, 0) = 0.6;
    r.r2(1, 1) = std::numeric_limits<double>::quiet_NaN();
    auto s = familywise_summary(r, {{0, 0, UnitKind::raw}});
    ASSERT_EQ(s.size(), 1u);
    EXPECT_DOUBLE_EQ(s[0].mean_max_r2, 0.8);
    r.r2(0, 1) = 0.4;
    s = familywise_summary(r, {{0, 0, UnitKind::raw}, {0, 1, UnitKind::raw}});
    EXPECT_DOUBLE_EQ(s[0].mean_max_r2, 0.5);
    EXPECT_THROW(familywise_summary(r, {{3, 3, UnitKind::raw}}), ValidationError);
}

TEST(Familywise, MatchesRecomputationOnSeededFixture) {
    const auto p = random_probe(10, 12, 50, 15);
    const auto r = cv_r2(p.design, p.typ);
    UnitSet all(p.design.unit_ids.begin(), p.design.unit_ids.end());
    for (const auto& s : familywise_summary(r, all)) {
        double total = 0;
        std::size_t n = 0;
        for (std::size_t u = 0; u < 50; ++u) {
            double best = -INFINITY;
            for (std::size_t j = 0; j < 15; ++j)
                if (p.typ.families[j] == s.family && !std::isnan(r.r2(u, j))) best = std::max(best, r.r2(u, j));
            if (best > -INFINITY) {
                total += best;
                ++n;
            }
        }
        EXPECT_NEAR(s.mean_max_r2, total / static_cast<double>(n), 1e-12);
    }
}

TEST(Familywise, NoiselessFamilyBeatsNoisyPhonology) {
    StableRng rng(11);
    constexpr std::size_t L = 15, U = 30;
    RandomProbe p = random_probe(11, L, U, 4);
    p.typ.features = {"fam_a", "fam_b", "phonology_a", "phonology_b"};
    p.typ.families = {"fam", "fam", "phonology", "phonology"};
    for (std::size_t k = 0; k < L; ++k) {
        const double a = p.design.mean_activations(k, 0), b = p.design.mean_activations(k, 1);
        p.typ.values(k, 0) = 3 * a;
        p.typ.values(k, 1) = -2 * b;
        p.typ.values(k, 2) = 0.1 * a + 5 * (rng.uniform() - 0.5);
        p.typ.values(k, 3) = 0.1 * b + 5 * (rng.uniform() - 0.5);
    }
    const auto r = cv_r2(p.design, p.typ);
    // Only units 0 and 1 drive the fam features.
    const auto s = familywise_summary(r, UnitSet{p.design.unit_ids[0], p.design.unit_ids[1]});
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].family, "fam");
    EXPECT_GT(s[0].mean_max_r2, s[1].mean_max_r2);
}

TEST(Typology, ConstantColumnDroppedAndInventoryRestricts) {
    std::ostringstream csv;
    csv << "lang,fam_a,syntax_b,phonology_c,geo_d,inventory_e\n";
    for (int k = 0; k < 10; ++k)
        csv << "l" << k << "," << k % 2 << "," << k << ",1," << k * 0.5 << "," << (k % 3) << "\n";
    std::istringstream in(csv.str());
    const auto t = load_typology(in);
    EXPECT_EQ(t.languages.size(), 10u);
    EXPECT_EQ(t.features.size(), 4u);
    EXPECT_EQ(t.dropped_zero_variance, 1u);
    EXPECT_EQ(t.features, (std::vector<std::string>{"fam_a", "syntax_b", "geo_d", "inventory_e"}));

    std::istringstream in2(csv.str());
    const auto sub = load_typology(in2, {"l2", "l0"});
    EXPECT_EQ(sub.languages, (std::vector<std::string>{"l2", "l0"}));
    EXPECT_EQ(sub.values(0, 0), 2.0);
    // fam_a is 0 for both even languages and inventory_e differs.
    EXPECT_EQ(sub.features, (std::vector<std::string>{"syntax_b", "geo_d", "inventory_e"}));
}

TEST(Typology, Errors) {
    std::istringstream unknown("lang,fam_a\nen,1\nhi,0\n");
    EXPECT_THROW(load_typology(unknown, {"fr"}), ValidationError);
    std::istringstream constant("lang,fam_a\nen,1\nhi,1\n");
    EXPECT_THROW(load_typology(constant), ValidationError);
    std::istringstream bad_prefix("lang,color_a\nen,1\n");
    EXPECT_THROW(load_typology(bad_prefix), FormatError);
    std::istringstream bad_header("language,fam_a\nen,1\n");
    EXPECT_THROW(load_typology(bad_header), FormatError);
    std::istringstream bad_cell("lang,fam_a\nen,x\n");
    EXPECT_THROW(load_typology(bad_cell), FormatError);
}

TEST(Design, MeanActivationIsSumOverTokens) {
    auto m = langunits::testing::small_manifest(2, 3, 4);
    auto agg = ActivationAggregate::zeros(m);
    agg.layers[1].activation_sum(2, 3) = 50.0;
    const auto d = make_design(agg, {"l2", "l0"}, {{1, 3, UnitKind::raw}}, 1.0, 2, 0);
    EXPECT_EQ(d.mean_activations(0, 0), 0.5);
    EXPECT_EQ(d.mean_activations(1, 0), 0.0);
    EXPECT_THROW(make_design(agg, {"xx"}, {}, 1.0, 2, 0), ValidationError);
    EXPECT_THROW(make_design(agg, {"l0"}, {{2, 0, UnitKind::raw}}, 1.0, 2, 0), ValidationError);
}
