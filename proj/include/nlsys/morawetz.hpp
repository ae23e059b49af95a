#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "nlsys/convolution.hpp"
#include "nlsys/system.hpp"

namespace nlsys {

/// phi(r) and its first four radial derivatives.
struct RadialProfile {
    std::function<double(double)> f, d1, d2, d3, d4;
    std::string label;
};

using Mat3 = std::array<std::array<double, 3>, 3>;

/**
 * Radial weight phi(|x|) for virial and interaction functionals.
 *
 * abs_distance is phi(r) = r, whose higher derivatives are distributions; the
 * interaction functional handles those analytically. erf_smoothed(eps) is the
 * even convex smoothing r erf(r/eps) + eps/sqrt(pi) exp(-r^2/eps^2) of r,
 * provided for d = 1.
 */
struct MorawetzWeight {
    enum class Kind { abs_distance, smooth_radial, erf_smoothed, constant };

    Kind kind = Kind::abs_distance;
    RadialProfile profile;
    double epsilon = 0.0;
    double level = 1.0;

    static MorawetzWeight abs_distance() { return {Kind::abs_distance, abs_profile(), 0.0, 1.0}; }

    static MorawetzWeight smooth(RadialProfile p) { return {Kind::smooth_radial, std::move(p), 0.0, 1.0}; }

    /// phi(r) = r^2.
    static MorawetzWeight quadratic() {
        return smooth({[](double r) { return r * r; }, [](double r) { return 2.0 * r; }, [](double) { return 2.0; },
                       [](double) { return 0.0; }, [](double) { return 0.0; }, "quadratic"});
    }

    /// phi(r) = sqrt(1 + r^2).
    static MorawetzWeight bracket() {
        auto b = [](double r) { return std::sqrt(1.0 + r * r); };
        return smooth({b, [b](double r) { return r / b(r); }, [b](double r) { return std::pow(b(r), -3.0); },
                       [b](double r) { return -3.0 * r * std::pow(b(r), -5.0); },
                       [b](double r) { return -3.0 * std::pow(b(r), -5.0) + 15.0 * r * r * std::pow(b(r), -7.0); },
                       "bracket"});
    }

    static MorawetzWeight erf_smoothed(double eps) {
        if (!(eps > 0.0)) throw UsageError("erf-smoothed weight needs epsilon > 0");
        const double c = 1.0 / (eps * std::sqrt(std::numbers::pi));
        RadialProfile p{
            [eps](double r) { return r * std::erf(r / eps) + eps / std::sqrt(std::numbers::pi) * std::exp(-r * r / (eps * eps)); },
            [eps](double r) { return std::erf(r / eps); },
            [eps, c](double r) { return 2.0 * c * std::exp(-r * r / (eps * eps)); },
            [eps, c](double r) { return -4.0 * c * r / (eps * eps) * std::exp(-r * r / (eps * eps)); },
            [eps, c](double r) {
                const double e2 = eps * eps;
                return 2.0 * c * std::exp(-r * r / e2) * (4.0 * r * r / (e2 * e2) - 2.0 / e2);
            },
            "erf:" + std::to_string(eps)};
        return {Kind::erf_smoothed, std::move(p), eps, 1.0};
    }

    static MorawetzWeight constant(double c = 1.0) {
        RadialProfile p{[c](double) { return c; }, [](double) { return 0.0; }, [](double) { return 0.0; },
                        [](double) { return 0.0; }, [](double) { return 0.0; }, "constant"};
        return {Kind::constant, std::move(p), 0.0, c};
    }

    bool distributional() const { return kind == Kind::abs_distance; }

    std::string name() const {
        switch (kind) {
        case Kind::abs_distance: return "abs";
        case Kind::erf_smoothed: return "erf(" + std::to_string(epsilon) + ")";
        case Kind::constant: return "constant";
        default: return profile.label.empty() ? "smooth" : profile.label;
        }
    }

    double value(const Vec3& x) const { return profile.f(norm(x)); }

    /// grad phi = phi'(r) x/r, zero at the origin.
    Vec3 gradient(const Vec3& x) const {
        const double r = norm(x);
        Vec3 g{0, 0, 0};
        if (r == 0.0) return g;
        const double s = profile.d1(r) / r;
        for (std::size_t a = 0; a < 3; ++a) g[a] = s * x[a];
        return g;
    }

    /// phi'' xx^T/r^2 + (phi'/r)(I - xx^T/r^2) restricted to the first `dim` axes.
    Mat3 hessian(const Vec3& x, int dim) const {
        require_smooth("hessian");
        const double r = norm(x);
        const double t = tangential(r);
        const double n = r == 0.0 ? profile.d2(0.0) : profile.d2(r);
        Mat3 h{};
        for (int a = 0; a < dim; ++a) {
            for (int b = 0; b < dim; ++b) {
                const double xx = r == 0.0 ? 0.0 : x[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(b)] / (r * r);
                h[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = (n - t) * xx + (a == b ? t : 0.0);
            }
        }
        return h;
    }

    /// phi'' + (d-1) phi'/r.
    double laplacian(const Vec3& x, int dim) const {
        require_smooth("laplacian");
        const double r = norm(x);
        return profile.d2(r) + (dim - 1) * tangential(r);
    }

    /// phi'''' + 2(d-1) phi'''/r + (d-1)(d-3)(phi''/r^2 - phi'/r^3); small r uses the Taylor limit.
    double bilaplacian(const Vec3& x, int dim) const {
        require_smooth("bilaplacian");
        const double r = norm(x);
        if (r < small_radius) return profile.d4(0.0) * dim * (dim + 2) / 3.0;
        const double d = dim;
        return profile.d4(r) + 2.0 * (d - 1.0) * profile.d3(r) / r +
               (d - 1.0) * (d - 3.0) * (profile.d2(r) / (r * r) - profile.d1(r) / (r * r * r));
    }

    /// Checks v^T D^2 phi v >= 0 on sampled radii and directions.
    bool convex_on_samples(int dim, double rmax, int samples = 64) const {
        if (kind == Kind::abs_distance) return true;
        for (int i = 0; i <= samples; ++i) {
            const double r = rmax * i / samples;
            for (int k = 0; k < 8; ++k) {
                const double a = std::numbers::pi * k / 8.0;
                Vec3 x{r, 0, 0}, v{std::cos(a), std::sin(a), 0.3};
                if (dim == 1) v = {1, 0, 0};
                const auto h = hessian(x, dim);
                double q = 0.0;
                for (int p = 0; p < dim; ++p)
                    for (int s = 0; s < dim; ++s)
                        q += v[static_cast<std::size_t>(p)] * h[static_cast<std::size_t>(p)][static_cast<std::size_t>(s)] * v[static_cast<std::size_t>(s)];
                if (q < -1e-12) return false;
            }
        }
        return true;
    }

    static double norm(const Vec3& x) { return std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]); }

private:
    static constexpr double small_radius = 1e-4;

    static RadialProfile abs_profile() {
        return {[](double r) { return r; }, [](double) { return 1.0; }, [](double) { return 0.0; },
                [](double) { return 0.0; }, [](double) { return 0.0; }, "abs"};
    }

    /// phi'(r)/r, with limit phi''(0).
    double tangential(double r) const { return r < small_radius ? profile.d2(0.0) : profile.d1(r) / r; }

    void require_smooth(const char* what) const {
        if (kind == Kind::abs_distance)
            throw UsageError(std::string("the ") + what +
                             " of the abs-distance weight is a distribution; use interaction_report, "
                             "which collapses delta terms analytically");
    }
};

namespace detail {

inline Vec3 shifted(const Grid& g, std::size_t j, const Vec3& c) {
    auto x = g.position(j);
    for (std::size_t a = 0; a < 3; ++a) x[a] -= c[a];
    return x;
}

} // namespace detail

/// V = sum_mu int phi(x - center) m_mu.
inline double virial_V(const SystemState& s, const MorawetzWeight& w, const Vec3& center = {0, 0, 0}) {
    const auto& g = *s.grid();
    const auto m = total_density(s);
    double v = 0.0;
    for (std::size_t j = 0; j < m.size(); ++j) v += w.value(detail::shifted(g, j, center)) * m[j];
    return v * g.cell_volume();
}

/// 2 sum_mu int j_mu . grad phi.
inline double virial_Vdot(const SystemState& s, const MorawetzWeight& w, const Vec3& center = {0, 0, 0}) {
    if (w.kind == MorawetzWeight::Kind::constant) return 0.0;
    const auto& g = *s.grid();
    double v = 0.0;
    for (int mu = 0; mu < s.components(); ++mu) {
        const auto j = current(s, mu);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const auto gp = w.gradient(detail::shifted(g, i, center));
            for (int a = 0; a < g.dim(); ++a) v += j[static_cast<std::size_t>(a)][i] * gp[static_cast<std::size_t>(a)];
        }
    }
    return 2.0 * v * g.cell_volume();
}

struct VddotTerms {
    double bilap_term = 0.0;
    double hessian_term = 0.0;
    double hessian_imag = 0.0;
    double nonlinear_term = 0.0;
    double total = 0.0;
};

/**
 * -sum int m Lap^2 phi + 4 sum int grad u D^2 phi grad conj(u)
 *   + 2p/(p+1) sum beta int |u_mu|^{p+1} |u_nu|^{p+1} Lap phi.
 */
inline VddotTerms virial_Vddot(const SystemState& s, const MorawetzWeight& w, const Vec3& center = {0, 0, 0}) {
    if (w.distributional())
        throw UsageError("virial_Vddot needs a smooth weight; the abs-distance weight is handled by interaction_report");
    VddotTerms t;
    if (w.kind == MorawetzWeight::Kind::constant) return t;
    const auto& g = *s.grid();
    const int d = g.dim();
    const double p = s.coupling.exponent;
    std::vector<double> lap(g.size()), bilap(g.size());
    std::vector<Mat3> hess(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) {
        const auto x = detail::shifted(g, j, center);
        lap[j] = w.laplacian(x, d);
        bilap[j] = w.bilaplacian(x, d);
        hess[j] = w.hessian(x, d);
    }
    const auto m = total_density(s);
    t.bilap_term = -inner(g, m, bilap);

    cplx hsum{0.0, 0.0};
    for (const auto& f : s.fields) {
        const auto grad = spectral_gradient(f);
        for (std::size_t j = 0; j < g.size(); ++j)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b)
                    hsum += grad[static_cast<std::size_t>(a)][j] * hess[j][static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] *
                            std::conj(grad[static_cast<std::size_t>(b)][j]);
    }
    hsum *= 4.0 * g.cell_volume();
    t.hessian_term = hsum.real();
    t.hessian_imag = hsum.imag();

    for (int mu = 0; mu < s.components(); ++mu)
        for (int nu = 0; nu < s.components(); ++nu)
            if (s.coupling(mu, nu) != 0.0) t.nonlinear_term += s.coupling(mu, nu) * inner(g, coupling_density(s, mu, nu), lap);
    t.nonlinear_term *= 2.0 * p / (p + 1.0);
    t.total = t.bilap_term + t.hessian_term + t.nonlinear_term;
    return t;
}

struct InteractionReport {
    double I = 0.0;
    double Idot = 0.0;
    double Iddot_fd = std::numeric_limits<double>::quiet_NaN();
    double rhs_lower = 0.0;
    std::optional<double> rhs_lower_alt;
    double N_term = 0.0;
    /// sum_{mu,kappa} double integral of Lap_x psi grad m_mu(x) . grad m_kappa(y).
    double gradient_pairing = 0.0;
    /// The same pairing from the Fourier symbol of Lap psi.
    double gradient_pairing_spectral = 0.0;
    /// || (-Lap)^{1/4} sum_mu m_mu ||^2.
    double half_laplacian_norm = 0.0;
};

/// Which weight/dimension pairs interaction_report accepts.
inline const char* interaction_support_table() {
    return "supported weights: abs (d = 1, 2, 3), erf-smoothed (d = 1), constant (any d)";
}

namespace detail {

template <class Symbol>
double plain_spectral_sum(const GridPtr& grid, const RealArray& f, Symbol symbol) {
    const auto hat = forward_transform(real_field(grid, f));
    const auto& k2 = grid->wavenumber_squared_table();
    double s = 0.0;
    for (std::size_t j = 0; j < hat.size(); ++j)
        if (k2[j] > 0.0) s += symbol(k2[j]) * std::norm(hat[j]);
    return s * grid->box_volume();
}

/**
 * (2L)^d sum_{k != 0} symbol(|k|^2) |fhat(k)|^2 for symbols homogeneous of
 * degree `degree` near k = 0. Unless the degree is an even integer the
 * symbol has a cusp at the origin and the plain sum over box frequencies
 * is off by O((pi/L)^{d + degree}); a copy zero-padded to twice the box
 * gives a second estimate and Richardson extrapolation removes that term.
 */
template <class Symbol>
double spectral_sum(const GridPtr& grid, const RealArray& f, Symbol symbol, double degree) {
    const double s1 = plain_spectral_sum(grid, f, symbol);
    const double half = 0.5 * degree;
    if (degree > 0.0 && half == std::floor(half)) return s1;
    const int d = grid->dim(), m = grid->points();
    const auto big = Grid::create({d, 2 * m, 2.0 * grid->half_width()});
    RealArray padded(big->size(), 0.0);
    for (std::size_t j = 0; j < f.size(); ++j) {
        auto idx = grid->unravel(j);
        for (int a = 0; a < d; ++a) idx[static_cast<std::size_t>(a)] += m / 2;
        padded[big->ravel(idx)] = f[j];
    }
    const double s2 = plain_spectral_sum(big, padded, symbol);
    return s2 + (s2 - s1) / (std::pow(2.0, d + degree) - 1.0);
}

/// ||(-Lap)^{s} f||^2, i.e. (2L)^d sum |k|^{4s} |fhat|^2.
inline double fractional_norm_squared(const GridPtr& grid, const RealArray& f, double power) {
    return spectral_sum(grid, f, [power](double q) { return std::pow(q, 2.0 * power); }, 4.0 * power);
}

inline std::vector<RealArray> real_gradient(const GridPtr& grid, const RealArray& f) {
    const auto grad = spectral_gradient(real_field(grid, f));
    std::vector<RealArray> out;
    for (const auto& g : grad) out.push_back(real_part(g));
    return out;
}

inline RealArray product_potential(const SystemState& s) {
    RealArray out(s.grid()->size(), 0.0);
    for (int mu = 0; mu < s.components(); ++mu) {
        for (int nu = 0; nu < s.components(); ++nu) {
            const double b = s.coupling(mu, nu);
            if (b == 0.0) continue;
            const auto pm = coupling_density(s, mu, nu);
            for (std::size_t j = 0; j < out.size(); ++j) out[j] += b * pm[j];
        }
    }
    return out;
}

} // namespace detail

/**
 * Interaction functional I = <M, phi * M> with M = sum m_mu, its time
 * derivative, the nonlinear term and the lower bounds for the second
 * derivative. Delta-valued derivatives of the abs weight (Lap psi = 2 delta in
 * d = 1, Lap^2 psi = -8 pi delta in d = 3) are collapsed to single integrals.
 */
inline InteractionReport interaction_report(const SystemState& s, const MorawetzWeight& w) {
    const auto& grid = s.grid();
    const int d = grid->dim();
    using K = MorawetzWeight::Kind;
    const bool ok = w.kind == K::constant || w.kind == K::abs_distance || (w.kind == K::erf_smoothed && d == 1);
    if (!ok) throw UsageError(std::string("interaction_report: unsupported weight '") + w.name() + "' in d = " +
                              std::to_string(d) + "; " + interaction_support_table());
    InteractionReport r;
    const auto M = total_density(s);
    r.half_laplacian_norm = detail::fractional_norm_squared(grid, M, 0.25);
    if (w.kind == K::constant) {
        const double mass = integrate(*grid, M);
        r.I = w.level * mass * mass;
        r.rhs_lower_alt = 0.0;
        return r;
    }
    const double p = s.coupling.exponent;
    const double nl = 4.0 * p / (p + 1.0);

    RadialKernel phi = w.kind == K::abs_distance
                           ? RadialKernel::abs_distance()
                           : RadialKernel::from_profile(w.profile.f, w.profile.d1, w.profile.label);
    r.I = inner(*grid, M, convolve_radial_kernel(grid, M, phi));

    const auto gphi = convolve_kernel_gradient(grid, M, phi);
    for (int mu = 0; mu < s.components(); ++mu) {
        const auto j = current(s, mu);
        for (int a = 0; a < d; ++a) r.Idot += inner(*grid, j[static_cast<std::size_t>(a)], gphi[static_cast<std::size_t>(a)]);
    }
    // Both factors of M(x) M(y) move: dI/dt = 4 <J, grad phi * M>.
    r.Idot *= 4.0;

    const auto P = detail::product_potential(s);
    const auto gradM = detail::real_gradient(grid, M);

    if (w.kind == K::abs_distance && d == 1) {
        // Lap psi = 2 delta: both double integrals collapse onto the diagonal.
        r.N_term = nl * 2.0 * inner(*grid, P, M);
        r.gradient_pairing = 2.0 * inner(*grid, gradM[0], gradM[0]);
        r.gradient_pairing_spectral = detail::spectral_sum(grid, M, [](double q) { return 2.0 * q; }, 2.0);
    } else {
        RadialKernel lap;
        if (w.kind == K::abs_distance) {
            // Lap |z| = (d - 1)/|z|.
            lap = RadialKernel::reciprocal(d - 1.0);
        } else {
            lap = RadialKernel::from_profile(w.profile.d2, w.profile.d3, w.profile.label + ":lap");
        }
        r.N_term = nl * inner(*grid, P, convolve_radial_kernel(grid, M, lap));
        for (int a = 0; a < d; ++a)
            r.gradient_pairing += inner(*grid, gradM[static_cast<std::size_t>(a)],
                                        convolve_radial_kernel(grid, gradM[static_cast<std::size_t>(a)], lap));
        if (w.kind == K::abs_distance && d == 2) {
            r.gradient_pairing_spectral =
                detail::spectral_sum(grid, M, [](double q) { return 2.0 * std::numbers::pi * std::sqrt(q); }, 1.0);
        } else if (w.kind == K::abs_distance && d == 3) {
            // Constant symbol 8 pi, including the mean mode.
            r.gradient_pairing_spectral = 8.0 * std::numbers::pi * inner(*grid, M, M);
        } else {
            r.gradient_pairing_spectral = r.gradient_pairing;
        }
    }
    r.rhs_lower = 2.0 * r.gradient_pairing + r.N_term;
    if (w.kind == K::abs_distance && d == 3) {
        // -2 <M, Lap^2 psi * M> with Lap^2 |z| = -8 pi delta.
        r.rhs_lower_alt = 16.0 * std::numbers::pi * inner(*grid, M, M) + r.N_term;
    }
    return r;
}

/// One row of a trajectory used by the finite-difference checks.
struct IdentitySample {
    double t = 0.0;
    double V = 0.0, Vdot = 0.0, Vddot = 0.0;
    double I = 0.0, Idot = 0.0, rhs_lower = 0.0, N_term = 0.0;
    std::optional<double> rhs_lower_alt;
};

namespace detail {

inline double uniform_spacing(const std::vector<IdentitySample>& w) {
    if (w.size() < 3) throw UsageError("need at least 3 consecutive snapshots");
    const double dt = w[1].t - w[0].t;
    if (!(dt > 0.0)) throw UsageError("snapshot times must increase");
    for (std::size_t i = 1; i < w.size(); ++i)
        if (std::abs((w[i].t - w[i - 1].t) - dt) > 1e-9 * std::max(1.0, std::abs(w[i].t)))
            throw UsageError("snapshot spacing is not uniform");
    return dt;
}

} // namespace detail

/// Largest central-difference mismatches of the derivative identities over interior snapshots.
struct IdentityErrors {
    double spacing = 0.0;
    double vdot = 0.0;
    double vddot = 0.0;
    double idot = 0.0;
};

inline IdentityErrors identity_errors(const std::vector<IdentitySample>& w) {
    IdentityErrors e;
    e.spacing = detail::uniform_spacing(w);
    const double h = e.spacing;
    for (std::size_t i = 1; i + 1 < w.size(); ++i) {
        e.vdot = std::max(e.vdot, std::abs((w[i + 1].V - w[i - 1].V) / (2.0 * h) - w[i].Vdot));
        e.vddot = std::max(e.vddot, std::abs((w[i + 1].V - 2.0 * w[i].V + w[i - 1].V) / (h * h) - w[i].Vddot));
        e.idot = std::max(e.idot, std::abs((w[i + 1].I - w[i - 1].I) / (2.0 * h) - w[i].Idot));
    }
    return e;
}

/**
 * Error constants C with err <= C dt^2, calibrated from a run at twice the
 * step: C = safety * err(2 dt) / (2 dt)^2.
 */
struct FdCalibration {
    double vdot = 0.0;
    double vddot = 0.0;
    double idot = 0.0;

    static FdCalibration from_coarse(const IdentityErrors& coarse, double coarse_dt, double safety = 2.0) {
        const double s = safety / (coarse_dt * coarse_dt);
        return {s * coarse.vdot, s * coarse.vddot, s * coarse.idot};
    }
};

struct IdentityCheck {
    IdentityErrors errors;
    double vdot_tol = 0.0, vddot_tol = 0.0, idot_tol = 0.0;
    bool vdot_ok = false, vddot_ok = false, idot_ok = false;
};

inline IdentityCheck check_identities(const std::vector<IdentitySample>& w, const FdCalibration& c, double dt) {
    IdentityCheck r;
    r.errors = identity_errors(w);
    r.vdot_tol = c.vdot * dt * dt + 1e-8;
    r.vddot_tol = c.vddot * dt * dt + 1e-6;
    r.idot_tol = c.idot * dt * dt + 1e-8;
    r.vdot_ok = r.errors.vdot <= r.vdot_tol;
    r.vddot_ok = r.errors.vddot <= r.vddot_tol;
    r.idot_ok = r.errors.idot <= r.idot_tol;
    return r;
}

struct InequalityPoint {
    double t = 0.0;
    double Iddot_fd = 0.0;
    double rhs_lower = 0.0;
    std::optional<double> rhs_lower_alt;
    double tol = 0.0;
    /// Iddot_fd - rhs_lower + tol.
    double margin = 0.0;
    std::optional<double> alt_margin;
};

struct InequalityReport {
    std::vector<InequalityPoint> points;
    double min_margin = std::numeric_limits<double>::infinity();
    std::optional<double> min_alt_margin;
    bool pointwise_ok = true;
    bool alt_ok = true;
    /// Idot(T) - Idot(S) against the trapezoid integral of rhs_lower over [S, T].
    double idot_increment = 0.0;
    double rhs_integral = 0.0;
    double integrated_tol = 0.0;
    bool integrated_ok = true;
    bool ok() const { return pointwise_ok && alt_ok && integrated_ok; }
};

/**
 * Second central difference of I against the lower bounds at every interior
 * snapshot. tol = max(1e-6 |I|, |D_2h - D_h|), where D_2h uses the five-point
 * stencil at doubled spacing; with fewer than five points the O(dt^2) term
 * c_fd * dt^2 is added instead.
 */
inline InequalityReport interaction_inequality_check(const std::vector<IdentitySample>& w, double c_fd = 0.0,
                                                     double dt = 0.0) {
    const double h = detail::uniform_spacing(w);
    InequalityReport rep;
    const std::size_t n = w.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        InequalityPoint pt;
        pt.t = w[i].t;
        pt.Iddot_fd = (w[i + 1].I - 2.0 * w[i].I + w[i - 1].I) / (h * h);
        pt.rhs_lower = w[i].rhs_lower;
        pt.rhs_lower_alt = w[i].rhs_lower_alt;
        const double base = 1e-6 * std::abs(w[i].I);
        if (i >= 2 && i + 2 < n) {
            const double d2h = (w[i + 2].I - 2.0 * w[i].I + w[i - 2].I) / (4.0 * h * h);
            pt.tol = std::max(base, std::abs(d2h - pt.Iddot_fd));
        } else if (n < 5) {
            pt.tol = base + c_fd * dt * dt;
        } else {
            // Edge of a longer window: borrow the neighbouring Richardson estimate.
            const std::size_t c = i < 2 ? 2 : n - 3;
            const double dh = (w[c + 1].I - 2.0 * w[c].I + w[c - 1].I) / (h * h);
            const double d2h = (w[c + 2].I - 2.0 * w[c].I + w[c - 2].I) / (4.0 * h * h);
            pt.tol = std::max(base, std::abs(d2h - dh));
        }
        pt.margin = pt.Iddot_fd - pt.rhs_lower + pt.tol;
        rep.min_margin = std::min(rep.min_margin, pt.margin);
        if (pt.margin < 0.0) rep.pointwise_ok = false;
        if (pt.rhs_lower_alt) {
            pt.alt_margin = pt.Iddot_fd - *pt.rhs_lower_alt + pt.tol;
            rep.min_alt_margin = std::min(rep.min_alt_margin.value_or(*pt.alt_margin), *pt.alt_margin);
            if (*pt.alt_margin < 0.0) rep.alt_ok = false;
        }
        rep.points.push_back(pt);
    }

    rep.idot_increment = w.back().Idot - w.front().Idot;
    double coarse = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) rep.rhs_integral += 0.5 * h * (w[i].rhs_lower + w[i + 1].rhs_lower);
    if (n >= 3 && (n - 1) % 2 == 0) {
        for (std::size_t i = 0; i + 2 < n; i += 2) coarse += h * (w[i].rhs_lower + w[i + 2].rhs_lower);
    } else {
        coarse = rep.rhs_integral;
    }
    double imax = 0.0;
    for (const auto& s : w) imax = std::max(imax, std::abs(s.Idot));
    rep.integrated_tol = std::max(1e-6 * imax, std::abs(coarse - rep.rhs_integral));
    rep.integrated_ok = rep.idot_increment >= rep.rhs_integral - rep.integrated_tol;
    return rep;
}

/**
 * Running trapezoid-in-time totals of the space-time quantities that the
 * interaction estimates bound:
 *   d = 3: sum int |u|^4 and sum beta_mm <|u_m|^{2p+2}, (1/r) * m_m>;
 *   d = 2: the same reciprocal integral and ||(-Lap)^{1/4} M||^2;
 *   d = 1: sum beta_mm int |u_m|^{2p+4} and ||d_x M||^2.
 */
class SpacetimeAccumulators {
public:
    struct Entry {
        std::string name;
        double total = 0.0;
        std::vector<std::pair<double, double>> history; // (t, running total)
    };

    explicit SpacetimeAccumulators(int dim) : dim_(dim) {
        if (dim == 3) names_ = {"l4_quartic", "reciprocal_coupling"};
        else if (dim == 2) names_ = {"reciprocal_coupling", "half_laplacian_density"};
        else names_ = {"power_2p4", "density_gradient"};
        for (const auto& n : names_) entries_.push_back({n, 0.0, {}});
    }

    static std::vector<double> integrands(const SystemState& s) {
        const auto& grid = s.grid();
        const int d = grid->dim();
        const double p = s.coupling.exponent;
        std::vector<double> v;
        auto reciprocal = [&] {
            double acc = 0.0;
            for (int mu = 0; mu < s.components(); ++mu) {
                const double b = s.coupling(mu, mu);
                const auto m = density(s, mu);
                RealArray q(m.size());
                for (std::size_t j = 0; j < m.size(); ++j) q[j] = std::pow(m[j], p + 1.0);
                acc += b * inner(*grid, q, convolve_radial_kernel(grid, m, RadialKernel::reciprocal()));
            }
            return acc;
        };
        if (d == 3) {
            double q4 = 0.0;
            for (int mu = 0; mu < s.components(); ++mu) {
                const auto m = density(s, mu);
                q4 += inner(*grid, m, m);
            }
            v = {q4, reciprocal()};
        } else if (d == 2) {
            v = {reciprocal(), detail::fractional_norm_squared(grid, total_density(s), 0.25)};
        } else {
            double pw = 0.0;
            for (int mu = 0; mu < s.components(); ++mu) {
                const auto m = density(s, mu);
                double acc = 0.0;
                for (double x : m) acc += std::pow(x, p + 2.0);
                pw += s.coupling(mu, mu) * acc * grid->cell_volume();
            }
            v = {pw, detail::fractional_norm_squared(grid, total_density(s), 0.5)};
        }
        return v;
    }

    void add(const SystemState& s) { add(s.time, integrands(s)); }

    void add(double t, const std::vector<double>& values) {
        if (values.size() != entries_.size()) throw UsageError("accumulator sample has the wrong length");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            auto& e = entries_[i];
            if (have_last_) e.total += 0.5 * (t - last_t_) * (last_[i] + values[i]);
            e.history.emplace_back(t, e.total);
        }
        last_ = values;
        last_t_ = t;
        have_last_ = true;
    }

    const std::vector<Entry>& entries() const { return entries_; }
    const Entry& entry(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw UsageError("unknown accumulator '" + name + "'");
    }

    /// Running total at the last sample with time <= t.
    static double total_at(const Entry& e, double t) {
        double v = 0.0;
        for (const auto& [ti, vi] : e.history) {
            if (ti > t + 1e-9) break;
            v = vi;
        }
        return v;
    }

    int dim() const { return dim_; }

private:
    int dim_;
    std::vector<std::string> names_;
    std::vector<Entry> entries_;
    std::vector<double> last_;
    double last_t_ = 0.0;
    bool have_last_ = false;
};

} // namespace nlsys
