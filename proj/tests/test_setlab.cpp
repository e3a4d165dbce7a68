#include "langunits/setlab.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace langunits;
using fixtures::make_selection;

namespace {

UnitId raw(std::uint32_t layer, std::uint32_t index) { return {layer, index, UnitKind::raw}; }

const std::vector<std::string> kTwo{"en", "hi"};

} // namespace

TEST(Jaccard, DefinitionExamples) {
    const UnitSet a{raw(0, 1), raw(0, 2), raw(0, 3)};
    const UnitSet b{raw(0, 2), raw(0, 3), raw(0, 4)};
    EXPECT_EQ(jaccard(a, a), 1.0);
    EXPECT_EQ(jaccard(a, UnitSet{raw(1, 1)}), 0.0);
    EXPECT_EQ(jaccard(a, b), 0.5);
}

TEST(Jaccard, EmptyPairIsZeroWithWarning) {
    std::vector<std::string> seen;
    ScopedWarningSink sink([&](std::string_view m) { seen.emplace_back(m); });
    EXPECT_EQ(jaccard({}, {}), 0.0);
    EXPECT_EQ(seen.size(), 1u);
}

TEST(Jaccard, SymmetricAndBounded) {
    StableRng rng(1);
    ScopedWarningSink quiet(nullptr);
    for (int i = 0; i < 300; ++i) {
        const auto a = fixtures::random_set(rng, 2, 20, rng.uniform());
        const auto b = fixtures::random_set(rng, 2, 20, rng.uniform());
        const double j = jaccard(a, b);
        EXPECT_EQ(j, jaccard(b, a));
        EXPECT_GE(j, 0.0);
        EXPECT_LE(j, 1.0);
    }
}

TEST(Jaccard, GrowingTheIntersectionNeverLowersIt) {
    StableRng rng(2);
    for (int i = 0; i < 200; ++i) {
        auto a = fixtures::random_set(rng, 1, 30, 0.3);
        const auto b = fixtures::random_set(rng, 1, 30, 0.3);
        const double before = jaccard(a, b);
        for (const auto& u : b) {
            if (a.insert(u).second) break;  // add one element of b to a
        }
        EXPECT_GE(jaccard(a, b), before);
    }
}

TEST(Partition, IdenticalAndDisjoint) {
    const UnitSet a{raw(0, 1), raw(1, 2)};
    auto p = partition(a, a);
    EXPECT_TRUE(p.only_a.empty());
    EXPECT_TRUE(p.only_b.empty());
    EXPECT_EQ(p.overlap, a);
    p = partition(a, UnitSet{raw(2, 0)});
    EXPECT_TRUE(p.overlap.empty());
    EXPECT_EQ(p.only_a, a);
}

TEST(Partition, MatchesBruteForceOnRandomPairs) {
    StableRng rng(3);
    constexpr std::uint32_t L = 3, U = 16;
    for (int trial = 0; trial < 1000; ++trial) {
        const auto a = fixtures::random_set(rng, L, U, rng.uniform());
        const auto b = fixtures::random_set(rng, L, U, rng.uniform());
        const auto p = partition(a, b, {"x", "y"});
        UnitSet oa, ob, ov;
        for (std::uint32_t l = 0; l < L; ++l) {
            for (std::uint32_t u = 0; u < U; ++u) {
                const bool ia = a.count(raw(l, u)) > 0, ib = b.count(raw(l, u)) > 0;
                if (ia && ib) ov.insert(raw(l, u));
                else if (ia) oa.insert(raw(l, u));
                else if (ib) ob.insert(raw(l, u));
            }
        }
        ASSERT_EQ(p.only_a, oa);
        ASSERT_EQ(p.only_b, ob);
        ASSERT_EQ(p.overlap, ov);
        EXPECT_EQ(p.labels.first, "x");
    }
}

TEST(Partition, UniverseMismatchIsAnError) {
    const UnitSet mixed{raw(0, 1), UnitId{0, 2, UnitKind::sae}};
    EXPECT_THROW(partition(mixed, UnitSet{}), ValidationError);
    EXPECT_THROW(partition(UnitSet{raw(0, 1)}, UnitSet{UnitId{0, 1, UnitKind::sae}}), ValidationError);
    const auto a = make_selection("native", kTwo, {{raw(0, 1)}, {}});
    auto b = make_selection("romanized", kTwo, {{raw(0, 1)}, {}}, 4, 64, "other-model");
    EXPECT_THROW(langunits::partition(a, b), ValidationError);
    b = make_selection("romanized", kTwo, {{raw(0, 1)}, {}});
    b.kind = UnitKind::sae;
    EXPECT_THROW(langunits::partition(a, b), ValidationError);
}

TEST(Partition, PerLanguageAndPooled) {
    const auto a = make_selection("native", kTwo, {{raw(0, 1), raw(0, 2)}, {raw(1, 1)}});
    const auto b = make_selection("romanized", kTwo, {{raw(0, 2)}, {raw(0, 1)}});
    const auto en = langunits::partition(a, b, std::string("en"));
    EXPECT_EQ(en.only_a, UnitSet{raw(0, 1)});
    EXPECT_EQ(en.overlap, UnitSet{raw(0, 2)});
    const auto all = langunits::partition(a, b);
    EXPECT_EQ(all.only_a, UnitSet{raw(1, 1)});
    EXPECT_EQ(all.overlap, (UnitSet{raw(0, 1), raw(0, 2)}));
    EXPECT_EQ(all.labels, std::make_pair(std::string("native"), std::string("romanized")));
}

TEST(DegreeRegions, IdenticalSelectionsFillTripleIntersection) {
    const std::vector<UnitSet> sets{{raw(0, 1), raw(0, 2)}, {raw(1, 3)}};
    const std::vector<SelectionResult> sel{make_selection("native", kTwo, sets),
                                           make_selection("romanized", kTwo, sets),
                                           make_selection("shuffled", kTwo, sets)};
    const auto t = degree_regions(sel, 1);
    EXPECT_EQ(t.regions.size(), 7u);
    EXPECT_EQ(t.regions.at(7), 3u);
    EXPECT_EQ(t.total(), 3u);
    EXPECT_EQ(t.region_name(7), "native&romanized&shuffled");
}

TEST(DegreeRegions, HighDegreeUnitsAreExcluded) {
    const std::vector<std::string> langs{"a", "b", "c", "d"};
    const UnitId u = raw(0, 0);
    const std::vector<UnitSet> sets{{u}, {u}, {u}, {u}};
    const std::vector<SelectionResult> sel{make_selection("x", langs, sets), make_selection("y", langs, sets),
                                           make_selection("z", langs, sets)};
    EXPECT_EQ(degree_regions(sel, 3).total(), 0u);
    EXPECT_EQ(degree_regions(sel, 4).total(), 1u);
}

TEST(DegreeRegions, MatchesExhaustiveEnumeration) {
    StableRng rng(4);
    constexpr std::uint32_t L = 2, U = 24;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 2 + rng.below(2);
        const std::size_t langs = 1 + rng.below(4);
        std::vector<SelectionResult> sel;
        for (std::size_t c = 0; c < n; ++c)
            sel.push_back(fixtures::random_selection(rng, "c" + std::to_string(c), langs, L, U));
        const std::size_t max_degree = 1 + rng.below(langs);
        const auto t = degree_regions(sel, max_degree);
        std::map<unsigned, std::size_t> expect;
        for (unsigned m = 1; m < (1u << n); ++m) expect[m] = 0;
        for (std::uint32_t l = 0; l < L; ++l) {
            for (std::uint32_t u = 0; u < U; ++u) {
                unsigned mask = 0;
                for (std::size_t c = 0; c < n; ++c) {
                    std::size_t deg = 0;
                    for (const auto& s : sel[c].per_language) deg += s.count(raw(l, u));
                    if (deg >= 1 && deg <= max_degree) mask |= 1u << c;
                }
                if (mask) ++expect[mask];
            }
        }
        ASSERT_EQ(t.regions, expect) << "trial " << trial;
    }
}

TEST(DegreeRegions, RejectsUnsupportedConditionCounts) {
    const auto a = make_selection("a", kTwo, {{}, {}});
    EXPECT_THROW(degree_regions({a}, 1), ValidationError);
    EXPECT_THROW(degree_regions({a, a, a, a}, 1), ValidationError);
    EXPECT_THROW(degree_regions({a, a}, 0), ValidationError);
}

TEST(Alignment, IdenticalSelectionsGiveOneAndZero) {
    const auto a = make_selection("n", kTwo, {{raw(0, 1), raw(2, 1)}, {raw(0, 3)}});
    const auto c = layerwise_alignment(a, a, true);
    ASSERT_EQ(c.per_layer.size(), 2u);
    for (const auto& p : c.per_layer) {
        EXPECT_EQ(p.mean_jaccard, 1.0);
        EXPECT_EQ(p.std_jaccard, 0.0);
    }
}

TEST(Alignment, DisjointLayersGiveZero) {
    const auto a = make_selection("n", kTwo, {{raw(0, 1)}, {raw(0, 2)}});
    const auto b = make_selection("r", kTwo, {{raw(0, 3)}, {raw(0, 4)}});
    const auto c = layerwise_alignment(a, b);
    ASSERT_EQ(c.per_layer.size(), 1u);
    EXPECT_EQ(c.per_layer[0].mean_jaccard, 0.0);
}

TEST(Alignment, TwoLanguageFixtureMeanAndStd) {
    // Layer 1: en identical (J = 1), hi shares 1 of 2 units (J = 0.5).
    const auto a = make_selection("n", kTwo, {{raw(1, 0), raw(1, 1)}, {raw(1, 2), raw(1, 3)}});
    const auto b = make_selection("r", kTwo, {{raw(1, 0), raw(1, 1)}, {raw(1, 2)}});
    const auto c = layerwise_alignment(a, b);
    ASSERT_EQ(c.per_layer.size(), 1u);
    EXPECT_DOUBLE_EQ(c.per_layer[0].mean_jaccard, 0.75);
    EXPECT_DOUBLE_EQ(c.per_layer[0].std_jaccard, 0.25);
    // Brute force over the cells.
    double sum = 0;
    for (const auto& cell : c.cells) sum += cell.jaccard;
    EXPECT_DOUBLE_EQ(sum / 2, 0.75);
}

TEST(Alignment, EmptyUnionHandling) {
    // hi has no units at layer 0 in either input.
    const auto a = make_selection("n", kTwo, {{raw(0, 0)}, {}});
    const auto counted = layerwise_alignment(a, a, false);
    EXPECT_EQ(counted.per_layer[0].mean_jaccard, 0.5);
    EXPECT_EQ(counted.per_layer[0].empty_unions, 1u);
    const auto skipped = layerwise_alignment(a, a, true);
    EXPECT_EQ(skipped.per_layer[0].mean_jaccard, 1.0);
    EXPECT_EQ(skipped.per_layer[0].languages_counted, 1u);
}

TEST(Alignment, NoCommonLayersIsAnError) {
    const auto a = make_selection("n", kTwo, {{raw(0, 0)}, {}});
    const auto b = make_selection("r", kTwo, {{raw(1, 0)}, {}});
    EXPECT_THROW(layerwise_alignment(a, b), ValidationError);
}

TEST(Alignment, LanguageInventoryMismatchIsAnError) {
    const auto a = make_selection("n", kTwo, {{raw(0, 0)}, {}});
    const auto b = make_selection("r", {"en", "fr"}, {{raw(0, 0)}, {}});
    EXPECT_THROW(layerwise_alignment(a, b), ValidationError);
    EXPECT_THROW(jaccard_by_language(a, b), ValidationError);
}

TEST(Alignment, StatisticsMatchRecomputationOnRandomInputs) {
    StableRng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = fixtures::random_selection(rng, "a", 4, 3, 20);
        const auto b = fixtures::random_selection(rng, "b", 4, 3, 20);
        const auto c = layerwise_alignment(a, b);
        for (const auto& p : c.per_layer) {
            EXPECT_GE(p.mean_jaccard, 0.0);
            EXPECT_LE(p.mean_jaccard, 1.0);
            EXPECT_GE(p.std_jaccard, 0.0);
            std::vector<double> js;
            for (std::size_t k = 0; k < 4; ++k) {
                std::size_t inter = 0, uni = 0;
                for (std::uint32_t u = 0; u < 20; ++u) {
                    const bool ia = a.per_language[k].count(raw(p.layer, u)) > 0;
                    const bool ib = b.per_language[k].count(raw(p.layer, u)) > 0;
                    inter += ia && ib;
                    uni += ia || ib;
                }
                js.push_back(uni ? static_cast<double>(inter) / uni : 0.0);
            }
            double m = 0;
            for (double j : js) m += j;
            m /= 4;
            double v = 0;
            for (double j : js) v += (j - m) * (j - m);
            EXPECT_NEAR(p.mean_jaccard, m, 1e-15);
            EXPECT_NEAR(p.std_jaccard, std::sqrt(v / 4), 1e-15);
        }
    }
}

TEST(Tables, RegionAndAlignmentTablesHaveHeaders) {
    const auto a = make_selection("n", kTwo, {{raw(0, 0)}, {}});
    const auto t = region_table(degree_regions({a, a}, 1));
    EXPECT_EQ(t.header, (std::vector<std::string>{"max_degree", "region", "count"}));
    EXPECT_EQ(t.rows.size(), 3u);
    EXPECT_EQ(alignment_table({}).rows.size(), 0u);
}
