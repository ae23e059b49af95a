#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "nlsys/initial_data.hpp"
#include "nlsys/integrator.hpp"

using namespace nlsys;
using std::numbers::pi;

namespace {

double l2_distance(const ScalarField& a, const ScalarField& b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += std::norm(a[j] - b[j]);
    return std::sqrt(s * a.grid()->cell_volume());
}

double state_distance(const SystemState& a, const SystemState& b) {
    double s = 0.0;
    for (int mu = 0; mu < a.components(); ++mu) s = std::max(s, l2_distance(a.field(mu), b.field(mu)));
    return s;
}

SystemState gaussian_state(const GridPtr& g, const CouplingSpec& c, std::vector<double> amp, double width,
                           std::vector<Vec3> centers = {{0, 0, 0}}) {
    InitialDataSpec spec;
    spec.amplitude = std::move(amp);
    spec.width = {width};
    spec.center = std::move(centers);
    return make_state(g, c, spec);
}

SystemState coupled_pair(const GridPtr& g) {
    return gaussian_state(g, CouplingSpec{2, {1.0, 0.5, 0.5, 1.0}, 2.0, g->dim()}, {1.0, 0.8}, 1.0, {{-1, 0, 0}, {1, 0, 0}});
}

double max_energy_drift(const SystemState& s0, double dt, double T) {
    const double E0 = energy(s0).total;
    double drift = 0.0;
    evolve(s0, StepParams{dt, T, 1}, [&](const SystemState& s, int) { drift = std::max(drift, std::abs(energy(s).total - E0)); });
    return drift;
}

} // namespace

TEST(StepParams, Validation) {
    EXPECT_THROW((StepParams{0.0, 1.0, 1}.validate()), UsageError);
    EXPECT_THROW((StepParams{-0.1, 1.0, 1}.validate()), UsageError);
    EXPECT_THROW((StepParams{0.1, -1.0, 1}.validate()), UsageError);
    EXPECT_THROW((StepParams{0.1, 1.0, 0}.validate()), UsageError);
    EXPECT_EQ((StepParams{0.1, 1.0, 1}.steps()), 10);
    EXPECT_EQ((StepParams{1e-3, 10.0, 1}.steps()), 10000);
}

TEST(LinearSubstep, IdentityPlaneWaveAndGaussian) {
    const double L = 16.0;
    const auto g = Grid::create({1, 256, L});
    const auto s = gaussian_state(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, 1.0);
    EXPECT_LT(state_distance(linear_substep(s, 0.0), s), 1e-14);

    const double k = 5 * pi / L, tau = 0.3;
    SystemState pw = s;
    pw.fields[0] = ScalarField::from_function(g, [&](const Vec3& x) { return std::polar(1.0, k * x[0]); });
    const auto out = linear_substep(pw, tau);
    for (std::size_t j = 0; j < g->size(); ++j)
        EXPECT_NEAR(std::abs(out.fields[0][j] - std::polar(1.0, k * g->position(j)[0] - k * k * tau)), 0.0, 1e-12);

    const auto free1 = linear_substep(s, 1.0);
    for (std::size_t j = 0; j < g->size(); ++j)
        EXPECT_NEAR(std::abs(free1.fields[0][j] - free_gaussian(g->position(j), 1.0, 1.0, 1)), 0.0, 1e-8);
    EXPECT_DOUBLE_EQ(free1.time, 1.0);
}

TEST(LinearSubstep, UnitaryPerComponent) {
    const auto g = Grid::create({2, 64, 8.0});
    const auto s = coupled_pair(g);
    const auto r = linear_substep(s, -0.7);
    for (int mu = 0; mu < 2; ++mu) EXPECT_NEAR(mass(r, mu) / mass(s, mu), 1.0, 1e-12);
}

TEST(NonlinearSubstep, Examples) {
    const auto g = Grid::create({1, 32, 4.0});
    auto s = coupled_pair(g);
    auto free = s;
    free.coupling.beta = {0, 0, 0, 0};
    EXPECT_EQ(state_distance(nonlinear_substep(free, 0.4), free), 0.0);

    const cplx c(0.6, -0.3);
    SystemState k;
    k.coupling = CouplingSpec::diagonal(1, 1.0, 1.0, 1);
    k.fields.push_back(ScalarField::from_function(g, [&](const Vec3&) { return c; }));
    const double tau = 0.9;
    const auto r = nonlinear_substep(k, tau);
    for (const auto& z : r.fields[0].values()) EXPECT_NEAR(std::abs(z - c * std::polar(1.0, -tau * std::norm(c))), 0.0, 1e-14);

    // A zero second component stays zero and the first evolves as if alone.
    auto two = s;
    two.fields[1] = ScalarField(g);
    SystemState one;
    one.coupling = CouplingSpec::diagonal(1, 1.0, 2.0, 1);
    one.fields = {two.fields[0]};
    const auto r2 = nonlinear_substep(two, tau), r1 = nonlinear_substep(one, tau);
    EXPECT_EQ(l2_distance(r2.fields[0], r1.fields[0]), 0.0);
    for (const auto& z : r2.fields[1].values()) EXPECT_EQ(z, cplx(0.0));
}

TEST(NonlinearSubstep, PreservesModulusPointwise) {
    const auto g = Grid::create({2, 32, 4.0});
    const auto s = coupled_pair(g);
    const auto r = nonlinear_substep(s, 0.37);
    for (int mu = 0; mu < 2; ++mu) {
        for (std::size_t j = 0; j < g->size(); ++j)
            EXPECT_NEAR(std::abs(r.field(mu)[j]), std::abs(s.field(mu)[j]), 1e-14);
        EXPECT_NEAR(mass(r, mu) / mass(s, mu), 1.0, 1e-14);
    }
}

TEST(NonlinearSubstep, SublinearExponentIsFiniteAtZeros) {
    const auto g = Grid::create({1, 32, 4.0});
    SystemState s;
    s.coupling = CouplingSpec::diagonal(1, 1.0, 0.5, 1);
    s.fields.push_back(ScalarField::from_function(g, [](const Vec3& x) { return cplx(x[0] > 0 ? x[0] : 0.0); }));
    const auto r = nonlinear_substep(s, 0.2);
    for (std::size_t j = 0; j < g->size(); ++j) {
        EXPECT_TRUE(std::isfinite(r.fields[0][j].real()));
        if (s.fields[0][j] == cplx(0.0)) {
            EXPECT_EQ(r.fields[0][j], cplx(0.0));
        }
    }
}

TEST(NonlinearSubstep, NonFiniteInputNamesLocation) {
    const auto g = Grid::create({1, 16, 4.0});
    auto s = gaussian_state(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, 1.0);
    s.fields[0][5] = cplx(std::numeric_limits<double>::quiet_NaN(), 0.0);
    try {
        nonlinear_substep(s, 0.1);
        FAIL() << "expected NumericalError";
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("x = (-1.5)"), std::string::npos) << e.what();
    }
}

TEST(StrangStep, FreeCaseAndZeroStep) {
    const auto g = Grid::create({1, 64, 8.0});
    auto s = coupled_pair(g);
    EXPECT_LT(state_distance(strang_step(s, 0.0), s), 1e-14);
    s.coupling.beta = {0, 0, 0, 0};
    EXPECT_LT(state_distance(strang_step(s, 0.05), linear_substep(s, 0.05)), 1e-14);
}

TEST(StrangStep, MassConservedEachStep) {
    const auto g = Grid::create({1, 128, 12.0});
    auto s = coupled_pair(g);
    const double m0 = mass(s, 0), m1 = mass(s, 1);
    for (int i = 0; i < 50; ++i) {
        s = strang_step(s, 0.01);
        EXPECT_NEAR(mass(s, 0) / m0, 1.0, 1e-12 * (i + 1));
        EXPECT_NEAR(mass(s, 1) / m1, 1.0, 1e-12 * (i + 1));
    }
}

TEST(StrangStep, TimeReversible) {
    const auto g = Grid::create({2, 32, 6.0});
    const auto s = coupled_pair(g);
    const auto back = strang_step(strang_step(s, 0.02), -0.02);
    EXPECT_LT(state_distance(back, s), 1e-10);
}

TEST(StrangStep, ComponentPermutationEquivariant) {
    const auto g = Grid::create({1, 64, 8.0});
    SystemState s = gaussian_state(g, CouplingSpec{3, {1.0, 0.2, 0.6, 0.2, 2.0, 0.3, 0.6, 0.3, 1.5}, 1.5, 1},
                                   {1.0, 0.8, 0.6}, 1.0, {{-1, 0, 0}, {0, 0, 0}, {1.5, 0, 0}});
    const std::array<int, 3> perm{2, 0, 1};
    SystemState t = s;
    for (int a = 0; a < 3; ++a) {
        t.fields[static_cast<std::size_t>(a)] = s.fields[static_cast<std::size_t>(perm[static_cast<std::size_t>(a)])];
        for (int b = 0; b < 3; ++b)
            t.coupling.beta[static_cast<std::size_t>(3 * a + b)] = s.coupling(perm[static_cast<std::size_t>(a)], perm[static_cast<std::size_t>(b)]);
    }
    const auto es = evolve(s, StepParams{0.01, 0.5, 50}).final_state;
    const auto et = evolve(t, StepParams{0.01, 0.5, 50}).final_state;
    for (int a = 0; a < 3; ++a) EXPECT_LT(l2_distance(et.field(a), es.field(perm[static_cast<std::size_t>(a)])), 1e-12);
}

TEST(StrangStep, SecondOrderEnergyConvergence) {
    const auto g = Grid::create({1, 256, 16.0});
    const auto s = gaussian_state(g, CouplingSpec::diagonal(1, 1.0, 1.0, 1), {1.0}, 1.0);
    const double d1 = max_energy_drift(s, 0.01, 1.0);
    const double d2 = max_energy_drift(s, 0.005, 1.0);
    const double d3 = max_energy_drift(s, 0.0025, 1.0);
    EXPECT_GE(d1 / d2, 3.5);
    EXPECT_LE(d1 / d2, 4.5);
    EXPECT_GE(d2 / d3, 3.5);
    EXPECT_LE(d2 / d3, 4.5);
}

TEST(StrangStep, DealiasingKeepsConservation) {
    const auto g = Grid::create({1, 256, 16.0});
    const auto s = coupled_pair(g);
    StepParams p{0.005, 1.0, 200};
    p.dealias = true;
    const auto r = evolve(s, p).final_state;
    for (int mu = 0; mu < 2; ++mu) EXPECT_NEAR(mass(r, mu) / mass(s, mu), 1.0, 1e-6);
    EXPECT_NEAR(energy(r).total / energy(s).total, 1.0, 1e-3);
}

TEST(Evolve, SnapshotCadenceAndTimes) {
    const auto g = Grid::create({1, 64, 8.0});
    const auto s = coupled_pair(g);
    std::vector<double> times;
    const auto res = evolve(s, StepParams{0.01, 0.25, 4}, [&](const SystemState& x, int) { times.push_back(x.time); });
    EXPECT_EQ(res.steps, 25);
    ASSERT_EQ(times.size(), 7u);
    EXPECT_DOUBLE_EQ(times[3], 0.12);
    int count = 0;
    const auto zero = evolve(s, StepParams{0.01, 0.0, 1}, [&](const SystemState&, int) { ++count; });
    EXPECT_EQ(count, 1);
    EXPECT_EQ(state_distance(zero.final_state, s), 0.0);
}

TEST(Evolve, FreeGaussianClosedForm) {
    for (int d : {1, 2}) {
        const auto g = Grid::create({d, 256, 32.0});
        const auto s = gaussian_state(g, CouplingSpec{1, {0.0}, 1.0, d}, {1.0}, 1.0);
        const auto r = evolve(s, StepParams{0.01, 2.0, 1000}).final_state;
        ScalarField exact = ScalarField::from_function(g, [&](const Vec3& x) { return free_gaussian(x, 2.0, 1.0, d); });
        EXPECT_LT(l2_distance(r.fields[0], exact), 1e-8) << "d = " << d;
    }
}

TEST(Evolve, BoundaryMonitorFlagsRun) {
    const auto g = Grid::create({1, 128, 8.0});
    const auto s = gaussian_state(g, CouplingSpec::diagonal(1, 1, 1, 1), {1.0}, 1.0, {{7.5, 0, 0}});
    const auto r = evolve(s, StepParams{0.01, 0.1, 5});
    EXPECT_FALSE(r.valid);
    EXPECT_FALSE(r.note.empty());
    EXPECT_GT(r.max_boundary_fraction, 1e-6);
}

TEST(Evolve, NonFiniteStateAborts) {
    const auto g = Grid::create({1, 32, 8.0});
    auto s = gaussian_state(g, CouplingSpec{1, {0.0}, 1.0, 1}, {1.0}, 1.0);
    s.fields[0][3] = cplx(std::numeric_limits<double>::infinity(), 0.0);
    EXPECT_THROW(evolve(s, StepParams{0.01, 0.1, 1}), NumericalError);
}

TEST(H1Bound, FreeFlowKeepsNorm) {
    const auto g = Grid::create({1, 256, 32.0});
    const auto s = gaussian_state(g, CouplingSpec{1, {0.0}, 1.0, 1}, {1.0}, 1.0);
    const double h0 = h1_norm(s);
    evolve(s, StepParams{0.01, 2.0, 20}, [&](const SystemState& x, int) { EXPECT_LE(h1_norm(x), (1 + 1e-6) * h0); });
}

TEST(H1Bound, EnergyControlsH1NormOnCoupledRun) {
    // sum ||u||_H1^2 = mass + kinetic <= mass + E(0) because the potential is nonnegative.
    const auto g = Grid::create({1, 512, 32.0});
    const auto s = coupled_pair(g);
    const double cap = total_mass(s) + energy(s).total;
    evolve(s, StepParams{1e-3, 3.0, 100}, [&](const SystemState& x, int) {
        double sq = 0.0;
        for (const auto& f : x.fields) sq += h1_norm_squared(f);
        EXPECT_LE(sq, (1 + 1e-6) * cap);
    });
}

TEST(H1Bound, SumOfNormsCanGrowAboveInitialValue) {
    // Data at rest convert potential into kinetic energy, so the H1 norm itself is not monotone.
    const auto g = Grid::create({1, 512, 32.0});
    const auto s = coupled_pair(g);
    const double h0 = h1_norm(s);
    double hmax = 0.0;
    evolve(s, StepParams{1e-3, 3.0, 100}, [&](const SystemState& x, int) { hmax = std::max(hmax, h1_norm(x)); });
    EXPECT_GT(hmax, (1 + 1e-3) * h0);
}

TEST(Rk4, ZeroStateAndFreePlaneWave) {
    const double L = 8.0;
    const auto g = Grid::create({1, 64, L});
    SystemState z;
    z.coupling = CouplingSpec::diagonal(1, 1, 1, 1);
    z.fields.push_back(ScalarField(g));
    const auto zs = rk4_reference_step(z, 0.01);
    for (const auto& v : zs.fields[0].values()) EXPECT_EQ(v, cplx(0.0));

    const double k = 4 * pi / L;
    SystemState pw;
    pw.coupling = CouplingSpec{1, {0.0}, 1.0, 1};
    pw.fields.push_back(ScalarField::from_function(g, [&](const Vec3& x) { return std::polar(1.0, k * x[0]); }));
    const double dt = 0.01 / (k * k);
    const double err = state_distance(rk4_reference_step(pw, dt), linear_substep(pw, dt));
    // Local error of RK4 on a pure phase: (k^2 dt)^5 / 120 per unit amplitude.
    EXPECT_LT(err, 1e-12 * std::sqrt(2 * L));
}

TEST(Rk4, AgreesWithStrangTrajectory) {
    const auto g = Grid::create({1, 64, 8.0});
    const auto s = gaussian_state(g, CouplingSpec::diagonal(1, 1.0, 1.0, 1), {1.0}, 1.0);
    SystemState a = s;
    for (int i = 0; i < 500; ++i) a = rk4_reference_step(a, 1e-3);
    const auto b = evolve(s, StepParams{1e-3, 0.5, 500}).final_state;
    EXPECT_LT(state_distance(a, b), 1e-5);
}

TEST(Rk4, InstabilityDetected) {
    const auto g = Grid::create({1, 64, 2.0});
    SystemState s;
    s.coupling = CouplingSpec{1, {0.0}, 1.0, 1};
    s.fields.push_back(ScalarField::from_function(g, [](const Vec3& x) { return std::exp(-x[0] * x[0] * 20.0); }));
    EXPECT_THROW(
        {
            for (int i = 0; i < 200; ++i) s = rk4_reference_step(s, 0.05);
        },
        NumericalError);
}
