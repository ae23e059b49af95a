#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "nlsys/system.hpp"

namespace nlsys {

struct StepParams {
    double dt = 1e-3;
    double t_final = 1.0;
    int snapshot_stride = 1;
    bool dealias = false;
    double boundary_threshold = 1e-6;

    int steps() const { return static_cast<int>(std::floor(t_final / dt + 1e-9)); }

    void validate() const {
        std::string msg;
        if (!(dt > 0.0) || !std::isfinite(dt)) msg += " dt must be > 0;";
        if (!(t_final >= 0.0) || !std::isfinite(t_final)) msg += " T must be >= 0;";
        if (snapshot_stride < 1) msg += " snapshot_stride must be >= 1;";
        if (!msg.empty()) throw UsageError("invalid step parameters:" + msg);
    }
};

namespace detail {

inline void multiply_free_phase(std::vector<cplx>& hat, const Grid& grid, double tau) {
    const auto& k2 = grid.wavenumber_squared_table();
    for (std::size_t j = 0; j < hat.size(); ++j) hat[j] *= std::polar(1.0, -k2[j] * tau);
}

/// Zero every mode with |mode_a| > M/3 along some axis.
inline void two_thirds_truncate(std::vector<cplx>& hat, const Grid& grid) {
    const int cut = grid.points() / 3;
    for (std::size_t j = 0; j < hat.size(); ++j) {
        const auto idx = grid.unravel(j);
        for (int a = 0; a < grid.dim(); ++a) {
            if (std::abs(grid.mode(idx[static_cast<std::size_t>(a)])) > cut) {
                hat[j] = 0.0;
                break;
            }
        }
    }
}

/// g_mu(x) = sum_nu beta_{mu nu} |u_nu|^{p+1} |u_mu|^{p-1}, zero where |u_mu| < 1e-300.
inline RealArray nonlinear_potential(const SystemState& s, int mu, const std::vector<RealArray>& moduli) {
    const double p = s.coupling.exponent;
    const std::size_t n = s.grid()->size();
    RealArray g(n, 0.0);
    const auto& am = moduli[static_cast<std::size_t>(mu)];
    for (int nu = 0; nu < s.components(); ++nu) {
        const double b = s.coupling(mu, nu);
        if (b == 0.0) continue;
        const auto& an = moduli[static_cast<std::size_t>(nu)];
        for (std::size_t j = 0; j < n; ++j) {
            if (am[j] < 1e-300) continue;
            g[j] += b * std::pow(an[j], p + 1.0) * std::pow(am[j], p - 1.0);
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        if (!std::isfinite(g[j])) {
            std::ostringstream msg;
            const auto x = s.grid()->position(j);
            msg << "non-finite nonlinear potential for component " << mu + 1 << " at x = (" << x[0];
            for (int a = 1; a < s.grid()->dim(); ++a) msg << ", " << x[static_cast<std::size_t>(a)];
            msg << ")";
            throw NumericalError(msg.str());
        }
    }
    return g;
}

inline std::vector<RealArray> moduli(const SystemState& s) {
    std::vector<RealArray> out;
    for (const auto& f : s.fields) {
        RealArray a(f.size());
        for (std::size_t j = 0; j < f.size(); ++j) a[j] = std::abs(f[j]);
        out.push_back(std::move(a));
    }
    return out;
}

} // namespace detail

/// Exact free flow over tau: every spectrum is multiplied by exp(-i |k|^2 tau).
inline SystemState linear_substep(const SystemState& s, double tau) {
    SystemState out = s;
    out.time = s.time + tau;
    if (tau == 0.0) return out;
    const auto& grid = *s.grid();
    std::vector<cplx> hat(grid.size());
    for (auto& f : out.fields) {
        grid.forward(f.values(), hat);
        detail::multiply_free_phase(hat, grid, tau);
        grid.inverse(hat, f.values());
    }
    return out;
}

/// Free propagator e^{i t Lap} applied to one physical field.
inline ScalarField free_propagate(const ScalarField& f, double t) {
    const auto& grid = *f.grid();
    std::vector<cplx> hat(grid.size());
    ScalarField out(f.grid());
    grid.forward(to_physical(f).values(), hat);
    detail::multiply_free_phase(hat, grid, t);
    grid.inverse(hat, out.values());
    return out;
}

/**
 * Exact nonlinear flow over tau: u_mu <- exp(-i tau g_mu) u_mu. Moduli are
 * constant along this flow so g is evaluated once. The clock is not advanced.
 */
inline SystemState nonlinear_substep(const SystemState& s, double tau, bool dealias = false) {
    SystemState out = s;
    if (s.coupling.has_offdiagonal() && s.coupling.exponent < 1.0)
        throw UsageError("coupled systems need p >= 1");
    const auto mod = detail::moduli(s);
    for (int mu = 0; mu < s.components(); ++mu) {
        const auto g = detail::nonlinear_potential(s, mu, mod);
        auto& f = out.fields[static_cast<std::size_t>(mu)];
        for (std::size_t j = 0; j < f.size(); ++j)
            if (g[j] != 0.0) f[j] *= std::polar(1.0, -tau * g[j]);
    }
    if (dealias) {
        const auto& grid = *s.grid();
        std::vector<cplx> hat(grid.size());
        for (auto& f : out.fields) {
            grid.forward(f.values(), hat);
            detail::two_thirds_truncate(hat, grid);
            grid.inverse(hat, f.values());
        }
    }
    return out;
}

/// linear(dt/2), nonlinear(dt), linear(dt/2).
inline SystemState strang_step(const SystemState& s, double dt, bool dealias = false) {
    if (dt == 0.0) return s;
    return linear_substep(nonlinear_substep(linear_substep(s, 0.5 * dt), dt, dealias), 0.5 * dt);
}

using SnapshotSink = std::function<void(const SystemState&, int step)>;

struct EvolveResult {
    SystemState final_state;
    bool valid = true;
    double max_boundary_fraction = 0.0;
    int steps = 0;
    int snapshots = 0;
    std::string note;
};

/**
 * Repeated Strang steps, floor(T/dt) of them. The sink sees the state at step
 * 0 and at every multiple of snapshot_stride. A boundary-mass fraction above
 * the threshold marks the run invalid; a non-finite mass throws.
 */
inline EvolveResult evolve(const SystemState& initial, const StepParams& params, const SnapshotSink& sink = {}) {
    params.validate();
    initial.check_consistent();
    initial.coupling.validate();
    EvolveResult res;
    res.final_state = initial;
    auto& s = res.final_state;
    const double t0 = initial.time;

    auto snapshot = [&](int step) {
        const double m = total_mass(s);
        if (!std::isfinite(m)) {
            std::ostringstream msg;
            msg << "non-finite mass at step " << step << " (t = " << s.time << ")";
            throw NumericalError(msg.str());
        }
        const double frac = boundary_mass_fraction(s);
        res.max_boundary_fraction = std::max(res.max_boundary_fraction, frac);
        if (frac > params.boundary_threshold && res.valid) {
            res.valid = false;
            std::ostringstream msg;
            msg << "boundary mass fraction " << frac << " exceeds " << params.boundary_threshold << " at t = " << s.time;
            res.note = msg.str();
        }
        ++res.snapshots;
        if (sink) sink(s, step);
    };

    snapshot(0);
    const int n = params.steps();
    for (int step = 1; step <= n; ++step) {
        s = strang_step(s, params.dt, params.dealias);
        s.time = t0 + step * params.dt;
        if (step % params.snapshot_stride == 0) snapshot(step);
    }
    res.steps = n;
    return res;
}

namespace detail {

/// d/dt u_mu = i (Lap u_mu - g_mu u_mu).
inline std::vector<std::vector<cplx>> full_rhs(const SystemState& s) {
    const auto& grid = *s.grid();
    const auto& k2 = grid.wavenumber_squared_table();
    const auto mod = moduli(s);
    std::vector<std::vector<cplx>> out;
    std::vector<cplx> hat(grid.size());
    for (int mu = 0; mu < s.components(); ++mu) {
        const auto& f = s.fields[static_cast<std::size_t>(mu)];
        grid.forward(f.values(), hat);
        for (std::size_t j = 0; j < hat.size(); ++j) hat[j] *= -k2[j];
        std::vector<cplx> lap(grid.size());
        grid.inverse(hat, lap);
        const auto g = nonlinear_potential(s, mu, mod);
        for (std::size_t j = 0; j < lap.size(); ++j) lap[j] = cplx(0.0, 1.0) * (lap[j] - g[j] * f[j]);
        out.push_back(std::move(lap));
    }
    return out;
}

inline SystemState axpy_state(const SystemState& s, double a, const std::vector<std::vector<cplx>>& k) {
    SystemState out = s;
    for (std::size_t mu = 0; mu < out.fields.size(); ++mu)
        for (std::size_t j = 0; j < out.fields[mu].size(); ++j) out.fields[mu][j] += a * k[mu][j];
    return out;
}

} // namespace detail

/**
 * Classical explicit RK4 step on the unsplit equation with a spectral
 * Laplacian. Stable only for dt of order h^2/pi or smaller; meant as an
 * independent oracle for the split-step scheme.
 */
inline SystemState rk4_reference_step(const SystemState& s, double dt) {
    const auto k1 = detail::full_rhs(s);
    const auto k2 = detail::full_rhs(detail::axpy_state(s, 0.5 * dt, k1));
    const auto k3 = detail::full_rhs(detail::axpy_state(s, 0.5 * dt, k2));
    const auto k4 = detail::full_rhs(detail::axpy_state(s, dt, k3));
    SystemState out = s;
    out.time = s.time + dt;
    for (std::size_t mu = 0; mu < out.fields.size(); ++mu)
        for (std::size_t j = 0; j < out.fields[mu].size(); ++j)
            out.fields[mu][j] += dt / 6.0 * (k1[mu][j] + 2.0 * k2[mu][j] + 2.0 * k3[mu][j] + k4[mu][j]);
    const double before = total_mass(s);
    const double after = total_mass(out);
    if (!std::isfinite(after) || (before > 0.0 && after > 100.0 * before) || (before == 0.0 && after > 0.0))
        throw NumericalError("rk4 reference step is unstable; reduce dt below h^2/pi");
    return out;
}

} // namespace nlsys
