#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "nlsys/gnineq.hpp"

using namespace nlsys;
using std::numbers::pi;

namespace {

ScalarField bump(const GridPtr& g, double amp, double center, double width = 1.0) {
    return ScalarField::from_function(g, [=](const Vec3& x) {
        double r2 = 0.0;
        for (int a = 0; a < g->dim(); ++a) {
            const double y = x[static_cast<std::size_t>(a)] - (a == 0 ? center : 0.0);
            r2 += y * y;
        }
        return cplx(amp * std::exp(-r2 / (2 * width * width)));
    });
}

ScalarField scaled(const ScalarField& f, double c) {
    ScalarField out = f;
    for (auto& v : out.values()) v *= c;
    return out;
}

ScalarField shifted_cells(const ScalarField& f, int cells) {
    const auto& g = *f.grid();
    ScalarField out(f.grid());
    for (std::size_t j = 0; j < g.size(); ++j) {
        auto idx = g.unravel(j);
        idx[0] = (idx[0] + cells) % g.points();
        out[g.ravel(idx)] = f[j];
    }
    return out;
}

} // namespace

TEST(GNRatio, GaussianClosedForm) {
    // h = 1/9, so unit cubes are 9 cells wide and the best one is centered on the peak.
    const auto g = Grid::create({1, 144, 8.0});
    const std::vector<ScalarField> phi{bump(g, 1.0, 0.0)};
    const double cube = std::sqrt(pi) * std::erf(0.5);
    const double h1 = 1.5 * std::sqrt(pi);
    EXPECT_NEAR(gn_ratio(phi, GNVariant::main) / (std::sqrt(pi / 3) / (cube * cube * h1)), 1.0, 2e-3);
    EXPECT_NEAR(gn_ratio(phi, GNVariant::cubic) / (std::sqrt(2 * pi / 3) / (std::sqrt(cube) * h1)), 1.0, 2e-3);
}

TEST(GNRatio, FrozenRegressionValue) {
    const auto g = Grid::create({1, 144, 8.0});
    EXPECT_NEAR(gn_ratio({bump(g, 1.0, 0.0)}, GNVariant::main), 0.45144160730736271, 1e-12);
}

TEST(GNRatio, InvariantUnderAmplitudeScaling) {
    for (int d : {1, 2}) {
        const auto g = Grid::create({d, 64, 8.0});
        const auto phi = corpus_sample(g, CorpusGenerator::mixed, 7, 3);
        const std::vector<ScalarField> big{scaled(phi[0], 3.7), scaled(phi[1], 3.7)};
        for (auto v : {GNVariant::main, GNVariant::cubic})
            EXPECT_NEAR(gn_ratio(big, v) / gn_ratio(phi, v), 1.0, 1e-10) << "d = " << d;
    }
}

TEST(GNRatio, InvariantUnderCellTranslation) {
    const auto g = Grid::create({2, 64, 8.0});
    const std::vector<ScalarField> phi{bump(g, 1.0, -1.0), bump(g, 0.5, 1.0, 0.7)};
    const std::vector<ScalarField> moved{shifted_cells(phi[0], 5), shifted_cells(phi[1], 5)};
    EXPECT_NEAR(gn_ratio(moved, GNVariant::main) / gn_ratio(phi, GNVariant::main), 1.0, 1e-10);
}

TEST(GNRatio, ZeroComponentDoesNotChangeRatio) {
    const auto g = Grid::create({1, 144, 8.0});
    const auto f = bump(g, 1.3, 0.4);
    EXPECT_NEAR(gn_ratio({f, ScalarField(g)}, GNVariant::main), gn_ratio({f}, GNVariant::main), 1e-14);
    EXPECT_THROW(gn_ratio({ScalarField(g)}, GNVariant::main), UsageError);
    EXPECT_THROW(gn_ratio({}, GNVariant::main), UsageError);
}

TEST(GNRatio, SplittingMassAcrossDistantBumps) {
    // Two far-apart copies with squared amplitudes a^2 + b^2 = 1: the ratio is (a^2 + b^2 (b/a)^4) times the single-bump ratio.
    const auto g = Grid::create({1, 288, 16.0});
    const double single = gn_ratio({bump(g, 1.0, 0.0)}, GNVariant::main);
    for (double a2 : {0.5, 0.6, 0.8, 0.95}) {
        const double a = std::sqrt(a2), b = std::sqrt(1 - a2);
        ScalarField two = bump(g, a, -6.0);
        const auto other = bump(g, b, 6.0);
        for (std::size_t j = 0; j < two.size(); ++j) two[j] += other[j];
        const double split = gn_ratio({two}, GNVariant::main);
        EXPECT_NEAR(split / single, a2 + (1 - a2) * std::pow(b / a, 4), 1e-8) << "a^2 = " << a2;
        EXPECT_LE(split, single * (1 + 1e-12));
    }
}

TEST(GNRatio, ConcentratedBumpFillsOneCube) {
    const auto g = Grid::create({1, 288, 8.0});
    const auto f = bump(g, 1.0, 0.0, 0.08);
    RealArray dens(g->size());
    for (std::size_t j = 0; j < dens.size(); ++j) dens[j] = std::norm(f[j]);
    EXPECT_NEAR(max_cube_mass(*g, dens) / physical_norm_squared(f), 1.0, 1e-12);
}

TEST(Corpus, DeterministicPerSeedAndIndex) {
    const auto g = Grid::create({2, 48, 8.0});
    const auto a = corpus_sup_ratio(g, CorpusGenerator::mixed, 11, 12, GNVariant::main);
    const auto b = corpus_sup_ratio(g, CorpusGenerator::mixed, 11, 12, GNVariant::main);
    EXPECT_EQ(a.ratios, b.ratios);
    const auto c = corpus_sup_ratio(g, CorpusGenerator::mixed, 12, 12, GNVariant::main);
    EXPECT_NE(a.ratios, c.ratios);
    // A sample does not depend on how many were drawn before it.
    const auto s5 = corpus_sample(g, CorpusGenerator::mixed, 11, 5);
    EXPECT_DOUBLE_EQ(gn_ratio(s5, GNVariant::main), a.ratios[5]);
}

TEST(Corpus, SummaryStatistics) {
    const auto g = Grid::create({1, 128, 8.0});
    const auto one = corpus_sup_ratio(g, CorpusGenerator::bumps, 3, 1, GNVariant::cubic);
    EXPECT_EQ(one.count(), 1u);
    EXPECT_EQ(one.sup, one.ratios[0]);
    EXPECT_EQ(one.median, one.ratios[0]);
    EXPECT_THROW(corpus_sup_ratio(g, CorpusGenerator::bumps, 3, 0, GNVariant::cubic), UsageError);
    for (auto gen : {CorpusGenerator::band_limited, CorpusGenerator::bumps, CorpusGenerator::trains, CorpusGenerator::mixed}) {
        const auto r = corpus_sup_ratio(g, gen, 5, 20, GNVariant::main);
        EXPECT_TRUE(r.all_finite);
        EXPECT_GE(r.sup, r.median);
        EXPECT_EQ(r.sup, *std::max_element(r.ratios.begin(), r.ratios.end()));
    }
}

TEST(Corpus, ParseNames) {
    EXPECT_EQ(parse_variant("cubic"), GNVariant::cubic);
    EXPECT_EQ(parse_generator("band-limited"), CorpusGenerator::band_limited);
    EXPECT_THROW(parse_variant("quartic"), UsageError);
    EXPECT_THROW(parse_generator("noise"), UsageError);
}
