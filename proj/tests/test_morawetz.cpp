#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "nlsys/initial_data.hpp"
#include "nlsys/integrator.hpp"
#include "nlsys/morawetz.hpp"

using namespace nlsys;
using std::numbers::pi;

namespace {

SystemState gaussians(const GridPtr& g, const CouplingSpec& c, std::vector<double> amp, std::vector<Vec3> centers,
                      double width = 1.0, std::vector<Vec3> vel = {{0, 0, 0}}) {
    InitialDataSpec spec;
    spec.amplitude = std::move(amp);
    spec.width = {width};
    spec.center = std::move(centers);
    spec.velocity = std::move(vel);
    return make_state(g, c, spec);
}

/// Cartesian central-difference Laplacian of a scalar function of x.
template <class F>
double fd_laplacian(F f, Vec3 x, int dim, double h = 1e-3) {
    double acc = 0.0;
    for (int a = 0; a < dim; ++a) {
        Vec3 xp = x, xm = x;
        xp[static_cast<std::size_t>(a)] += h;
        xm[static_cast<std::size_t>(a)] -= h;
        acc += (f(xp) - 2.0 * f(x) + f(xm)) / (h * h);
    }
    return acc;
}

std::vector<IdentitySample> trajectory(const SystemState& s0, const MorawetzWeight& vw, const MorawetzWeight& iw,
                                       double dt, double T, int stride) {
    std::vector<IdentitySample> out;
    evolve(s0, StepParams{dt, T, stride}, [&](const SystemState& s, int) {
        IdentitySample x;
        x.t = s.time;
        x.V = virial_V(s, vw);
        x.Vdot = virial_Vdot(s, vw);
        x.Vddot = virial_Vddot(s, vw).total;
        const auto r = interaction_report(s, iw);
        x.I = r.I;
        x.Idot = r.Idot;
        x.rhs_lower = r.rhs_lower;
        x.N_term = r.N_term;
        x.rhs_lower_alt = r.rhs_lower_alt;
        out.push_back(x);
    });
    return out;
}

} // namespace

TEST(Weight, RadialDerivativesMatchFiniteDifferences) {
    for (const auto& w : {MorawetzWeight::quadratic(), MorawetzWeight::bracket(), MorawetzWeight::erf_smoothed(0.7)}) {
        const auto& p = w.profile;
        const double h = 1e-4;
        for (double r : {0.3, 0.9, 1.7, 3.1}) {
            EXPECT_NEAR(p.d1(r), (p.f(r + h) - p.f(r - h)) / (2 * h), 1e-7) << w.name();
            EXPECT_NEAR(p.d2(r), (p.d1(r + h) - p.d1(r - h)) / (2 * h), 1e-7) << w.name();
            EXPECT_NEAR(p.d3(r), (p.d2(r + h) - p.d2(r - h)) / (2 * h), 1e-7) << w.name();
            EXPECT_NEAR(p.d4(r), (p.d3(r + h) - p.d3(r - h)) / (2 * h), 1e-7) << w.name();
        }
    }
}

TEST(Weight, LaplacianAndBilaplacianMatchCartesianDifferences) {
    for (int d : {1, 2, 3}) {
        const auto w = MorawetzWeight::bracket();
        for (const Vec3& x : {Vec3{0.4, 0.0, 0.0}, Vec3{0.7, -0.5, 0.3}, Vec3{1.5, 1.0, -2.0}}) {
            Vec3 y = x;
            for (int a = d; a < 3; ++a) y[static_cast<std::size_t>(a)] = 0.0;
            const auto val = [&](const Vec3& z) { return w.value(z); };
            const auto lap = [&](const Vec3& z) { return w.laplacian(z, d); };
            EXPECT_NEAR(w.laplacian(y, d), fd_laplacian(val, y, d), 1e-5) << "d = " << d;
            EXPECT_NEAR(w.bilaplacian(y, d), fd_laplacian(lap, y, d), 1e-4) << "d = " << d;
        }
        EXPECT_NEAR(MorawetzWeight::quadratic().laplacian({0.3, 0.2, 0.1}, d), 2.0 * d, 1e-12);
        EXPECT_EQ(MorawetzWeight::quadratic().bilaplacian({0.3, 0.2, 0.1}, d), 0.0);
    }
}

TEST(Weight, ConvexityAndDistributionalGuards) {
    for (int d : {1, 2, 3}) {
        EXPECT_TRUE(MorawetzWeight::quadratic().convex_on_samples(d, 10.0));
        EXPECT_TRUE(MorawetzWeight::bracket().convex_on_samples(d, 10.0));
    }
    EXPECT_TRUE(MorawetzWeight::erf_smoothed(0.3).convex_on_samples(1, 10.0));
    const auto a = MorawetzWeight::abs_distance();
    EXPECT_THROW(a.laplacian({1, 0, 0}, 3), UsageError);
    EXPECT_THROW(MorawetzWeight::erf_smoothed(0.0), UsageError);
}

TEST(Virial, QuadraticMomentOfGaussian) {
    const auto g = Grid::create({1, 256, 16.0});
    const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, {{0, 0, 0}});
    // int x^2 e^{-x^2} dx.
    EXPECT_NEAR(virial_V(s, MorawetzWeight::quadratic()), std::sqrt(pi) / 2, 1e-10);
    EXPECT_NEAR(virial_Vdot(s, MorawetzWeight::quadratic()), 0.0, 1e-12);
}

TEST(Virial, FreeSecondDerivativeIsEightTimesKinetic) {
    for (int d : {1, 2}) {
        const auto g = Grid::create({d, 128, 12.0});
        const auto s = gaussians(g, CouplingSpec{1, {0.0}, 1.0, d}, {1.0}, {{0.5, -0.3, 0}}, 1.0, {{0.7, 0.2, 0}});
        const auto t = virial_Vddot(s, MorawetzWeight::quadratic());
        EXPECT_NEAR(t.total, 8.0 * gradient_norm_squared(s.field(0)), 1e-9);
        EXPECT_NEAR(t.hessian_imag, 0.0, 1e-10);
        EXPECT_EQ(t.nonlinear_term, 0.0);
    }
}

TEST(Virial, AbsWeightRejected) {
    const auto g = Grid::create({1, 64, 8.0});
    const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, {{0, 0, 0}});
    EXPECT_THROW(virial_Vddot(s, MorawetzWeight::abs_distance()), UsageError);
}

TEST(Interaction, ConstantWeightGivesSquaredMass) {
    const auto g = Grid::create({2, 64, 8.0});
    const auto s = gaussians(g, CouplingSpec{2, {1, 0.3, 0.3, 1}, 1.0, 2}, {1.0, 0.6}, {{-1, 0, 0}, {1, 1, 0}});
    const auto r = interaction_report(s, MorawetzWeight::constant(2.5));
    EXPECT_NEAR(r.I, 2.5 * std::pow(total_mass(s), 2), 1e-10);
    EXPECT_EQ(r.Idot, 0.0);
}

TEST(Interaction, AbsWeightOneDimensionalGaussian) {
    // M = e^{-x^2}: I = pi E|X - Y| with X - Y standard normal.
    const auto g = Grid::create({1, 512, 16.0});
    const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, {{0, 0, 0}});
    const auto r = interaction_report(s, MorawetzWeight::abs_distance());
    EXPECT_NEAR(r.I, std::sqrt(2 * pi), 1e-8);
    EXPECT_NEAR(r.Idot, 0.0, 1e-10);
}

TEST(Interaction, AbsWeightThreeDimensionalGaussian) {
    // Per-axis variance of X - Y is 1, so E|X - Y| = 2 sqrt(2/pi).
    const auto g = Grid::create({3, 48, 12.0});
    const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 3), {1.0}, {{0, 0, 0}});
    const auto r = interaction_report(s, MorawetzWeight::abs_distance());
    const double mass = std::pow(pi, 1.5);
    EXPECT_NEAR(r.I / (mass * mass * 2 * std::sqrt(2 / pi)), 1.0, 1e-4);
}

TEST(Interaction, AbsWeightAgreesWithMonteCarloForOffsetPair) {
    const auto g = Grid::create({2, 128, 12.0});
    const auto s = gaussians(g, CouplingSpec{2, {0, 0, 0, 0}, 1.0, 2}, {1.0, 0.5}, {{-1.5, 0, 0}, {1.0, 1.0, 0}});
    const auto r = interaction_report(s, MorawetzWeight::abs_distance());
    // Sample x, y from the normalized total density (a two-Gaussian mixture).
    SplitMix64 rng(42);
    const double w0 = 1.0, w1 = 0.25;
    const double m0 = w0 * pi, m1 = w1 * pi, mt = m0 + m1;
    auto draw = [&] {
        const bool first = rng.uniform() < m0 / mt;
        const Vec3 c = first ? Vec3{-1.5, 0, 0} : Vec3{1.0, 1.0, 0};
        return Vec3{c[0] + rng.normal() / std::sqrt(2.0), c[1] + rng.normal() / std::sqrt(2.0), 0};
    };
    const int n = 400000;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto x = draw(), y = draw();
        acc += std::hypot(x[0] - y[0], x[1] - y[1]);
    }
    EXPECT_NEAR(r.I / (mt * mt * acc / n), 1.0, 5e-3);
}

TEST(Interaction, GradientPairingMatchesFourierSymbols) {
    {
        const auto g = Grid::create({1, 256, 16.0});
        const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, {{0.4, 0, 0}});
        const auto r = interaction_report(s, MorawetzWeight::abs_distance());
        EXPECT_NEAR(r.gradient_pairing / r.gradient_pairing_spectral, 1.0, 1e-10);
    }
    {
        const auto g = Grid::create({2, 128, 12.0});
        const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 2), {1.0}, {{0.4, -0.2, 0}});
        const auto r = interaction_report(s, MorawetzWeight::abs_distance());
        EXPECT_NEAR(r.gradient_pairing / r.gradient_pairing_spectral, 1.0, 1e-6);
    }
    {
        const auto g = Grid::create({3, 48, 12.0});
        const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 3), {1.0}, {{0, 0, 0}});
        const auto r = interaction_report(s, MorawetzWeight::abs_distance());
        EXPECT_NEAR(r.gradient_pairing / r.gradient_pairing_spectral, 1.0, 1e-3);
        ASSERT_TRUE(r.rhs_lower_alt.has_value());
        EXPECT_NEAR(*r.rhs_lower_alt / r.rhs_lower, 1.0, 1e-3);
    }
}

TEST(Interaction, NonlinearTermNonnegativeAndSymmetric) {
    const auto g = Grid::create({1, 256, 16.0});
    const CouplingSpec c{2, {1.0, 0.4, 0.4, 2.0}, 1.5, 1};
    const auto s = gaussians(g, c, {1.0, 0.7}, {{-1, 0, 0}, {1.5, 0, 0}});
    auto swapped = s;
    std::swap(swapped.fields[0], swapped.fields[1]);
    swapped.coupling.beta = {2.0, 0.4, 0.4, 1.0};
    const auto a = interaction_report(s, MorawetzWeight::abs_distance());
    const auto b = interaction_report(swapped, MorawetzWeight::abs_distance());
    EXPECT_GT(a.N_term, 0.0);
    EXPECT_NEAR(a.N_term, b.N_term, 1e-12 * a.N_term);
    EXPECT_NEAR(a.I, b.I, 1e-12 * a.I);
    auto free = s;
    free.coupling.beta = {0, 0, 0, 0};
    EXPECT_EQ(interaction_report(free, MorawetzWeight::abs_distance()).N_term, 0.0);
}

TEST(Interaction, SmoothedWeightConvergesToAbs) {
    const auto g = Grid::create({1, 512, 16.0});
    const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, {{0.3, 0, 0}}, 1.0, {{0.5, 0, 0}});
    const auto a = interaction_report(s, MorawetzWeight::abs_distance());
    const double m = total_mass(s);
    for (double eps : {0.2, 0.1, 0.05}) {
        const auto e = interaction_report(s, MorawetzWeight::erf_smoothed(eps));
        // 0 <= phi_eps(r) - r <= eps / sqrt(pi).
        EXPECT_GE(e.I, a.I);
        EXPECT_LE(e.I - a.I, m * m * eps / std::sqrt(pi) + 1e-10);
        EXPECT_NEAR(e.Idot, a.Idot, 2 * eps * m * m);
    }
}

TEST(Interaction, UnsupportedPairsRejected) {
    const auto g = Grid::create({2, 32, 6.0});
    const auto s = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 2), {1.0}, {{0, 0, 0}});
    EXPECT_THROW(interaction_report(s, MorawetzWeight::quadratic()), UsageError);
    EXPECT_THROW(interaction_report(s, MorawetzWeight::erf_smoothed(0.5)), UsageError);
}

TEST(Interaction, TranslationInvariant) {
    const auto g = Grid::create({2, 96, 12.0});
    const double h = g->spacing();
    const auto a = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 2), {1.0}, {{0.0, 0.0, 0}}, 1.0, {{0.6, 0.0, 0}});
    const auto b = gaussians(g, CouplingSpec::diagonal(1, 1, 1, 2), {1.0}, {{6 * h, -4 * h, 0}}, 1.0, {{0.6, 0.0, 0}});
    const auto ra = interaction_report(a, MorawetzWeight::abs_distance());
    const auto rb = interaction_report(b, MorawetzWeight::abs_distance());
    EXPECT_NEAR(rb.I / ra.I, 1.0, 1e-9);
    EXPECT_NEAR(rb.Idot, ra.Idot, 1e-8 * std::abs(ra.Idot) + 1e-12);
}

TEST(Identities, FiniteDifferencesAgreeOnCoupledRun) {
    const auto g = Grid::create({1, 512, 32.0});
    const auto s = gaussians(g, CouplingSpec{2, {1.0, 0.5, 0.5, 1.0}, 2.0, 1}, {0.8, 0.6}, {{-1.5, 0, 0}, {1.5, 0, 0}},
                             1.0, {{0.5, 0, 0}, {-0.5, 0, 0}});
    const auto vw = MorawetzWeight::bracket(), iw = MorawetzWeight::erf_smoothed(0.5);
    const double dt = 2e-3;
    const auto coarse = trajectory(s, vw, iw, 2 * dt, 1.0, 10);
    const auto fine = trajectory(s, vw, iw, dt, 1.0, 10);
    const auto cal = FdCalibration::from_coarse(identity_errors(coarse), 2 * dt);
    const auto chk = check_identities(fine, cal, dt);
    EXPECT_TRUE(chk.vdot_ok) << chk.errors.vdot << " vs " << chk.vdot_tol;
    EXPECT_TRUE(chk.vddot_ok) << chk.errors.vddot << " vs " << chk.vddot_tol;
    EXPECT_TRUE(chk.idot_ok) << chk.errors.idot << " vs " << chk.idot_tol;
    // The fine snapshot spacing is half the coarse spacing, so the raw errors should shrink.
    const auto ef = identity_errors(fine), ec = identity_errors(coarse);
    EXPECT_LT(ef.vdot, ec.vdot);
    EXPECT_LT(ef.idot, ec.idot);
}

TEST(Identities, RejectsShortOrUnevenWindows) {
    std::vector<IdentitySample> w(2);
    EXPECT_THROW(identity_errors(w), UsageError);
    w.resize(4);
    for (std::size_t i = 0; i < 4; ++i) w[i].t = 0.1 * static_cast<double>(i * i);
    EXPECT_THROW(identity_errors(w), UsageError);
}

TEST(InteractionInequality, HoldsForFreeAndCoupledFlows) {
    const auto g = Grid::create({1, 512, 32.0});
    for (double b : {0.0, 1.0}) {
        const auto s = gaussians(g, CouplingSpec{2, {b, 0.5 * b, 0.5 * b, b}, 2.0, 1}, {0.8, 0.6},
                                 {{-1.5, 0, 0}, {1.5, 0, 0}}, 1.0, {{0.8, 0, 0}, {-0.8, 0, 0}});
        const auto w = trajectory(s, MorawetzWeight::quadratic(), MorawetzWeight::abs_distance(), 2e-3, 2.0, 10);
        const auto rep = interaction_inequality_check(w);
        EXPECT_TRUE(rep.pointwise_ok) << "beta = " << b << ", min margin " << rep.min_margin;
        EXPECT_TRUE(rep.integrated_ok) << "beta = " << b;
    }
}

TEST(InteractionInequality, DetectsViolation) {
    std::vector<IdentitySample> w(9);
    for (std::size_t i = 0; i < w.size(); ++i) {
        const double t = 0.1 * static_cast<double>(i);
        w[i].t = t;
        w[i].I = t * t;   // I'' = 2
        w[i].Idot = 2 * t;
        w[i].rhs_lower = 3.0;
    }
    const auto rep = interaction_inequality_check(w);
    EXPECT_FALSE(rep.pointwise_ok);
    EXPECT_FALSE(rep.integrated_ok);
    for (auto& x : w) x.rhs_lower = 1.5;
    EXPECT_TRUE(interaction_inequality_check(w).ok());
}

TEST(Accumulators, FreeGaussianPowerIntegral) {
    // For the free Gaussian, int |u|^6 = sqrt(pi/3) / (1 + 4t^2); its time integral is sqrt(pi/3) atan(2T) / 2.
    const auto g = Grid::create({1, 1024, 64.0});
    const auto s = gaussians(g, CouplingSpec{1, {0.0}, 1.0, 1}, {1.0}, {{0, 0, 0}});
    SpacetimeAccumulators acc(1);
    const double T = 2.0;
    evolve(s, StepParams{0.01, T, 1}, [&](const SystemState& x, int) {
        auto weighted = x;
        weighted.coupling.beta = {1.0};
        acc.add(weighted);
    });
    EXPECT_NEAR(acc.entry("power_2p4").total / (std::sqrt(pi / 3) * std::atan(2 * T) / 2), 1.0, 1e-3);
    const auto& e = acc.entry("density_gradient");
    EXPECT_EQ(e.history.size(), 201u);
    EXPECT_DOUBLE_EQ(SpacetimeAccumulators::total_at(e, 0.0), 0.0);
    EXPECT_LE(SpacetimeAccumulators::total_at(e, 1.0), e.total);
    EXPECT_THROW(acc.entry("nope"), UsageError);
}

TEST(Accumulators, NamesPerDimension) {
    EXPECT_EQ(SpacetimeAccumulators(3).entries().front().name, "l4_quartic");
    EXPECT_EQ(SpacetimeAccumulators(2).entries().back().name, "half_laplacian_density");
    SpacetimeAccumulators a(1);
    EXPECT_THROW(a.add(0.0, {1.0}), UsageError);
}
