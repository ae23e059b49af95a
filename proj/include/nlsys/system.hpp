#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "nlsys/grid.hpp"

namespace nlsys {

/**
 * Coupling of the defocusing system
 *   i d_t u_mu + Lap u_mu - sum_nu beta_{mu nu} |u_nu|^{p+1} |u_mu|^{p-1} u_mu = 0.
 *
 * beta is stored row-major, N x N.
 */
struct CouplingSpec {
    int components = 1;
    std::vector<double> beta{1.0};
    double exponent = 1.0;
    int dim = 1;

    double operator()(int mu, int nu) const {
        return beta[static_cast<std::size_t>(mu * components + nu)];
    }

    bool has_offdiagonal() const {
        for (int mu = 0; mu < components; ++mu)
            for (int nu = 0; nu < components; ++nu)
                if (mu != nu && (*this)(mu, nu) != 0.0) return true;
        return false;
    }

    bool is_free() const {
        return std::all_of(beta.begin(), beta.end(), [](double b) { return b == 0.0; });
    }

    /// 1 <= p < p*(d), with p*(3) = 2 and p*(1) = p*(2) = infinity.
    bool subcritical() const {
        const double pstar = dim == 3 ? 2.0 : std::numeric_limits<double>::infinity();
        return exponent >= 1.0 && exponent < pstar;
    }

    /// subcritical and p > 2/d.
    bool scattering_admissible() const { return subcritical() && exponent > 2.0 / dim; }

    /// Hard violations; an empty list means the coupling is usable.
    std::vector<std::string> problems() const {
        std::vector<std::string> out;
        if (components < 1) out.push_back("component count must be >= 1");
        if (dim < 1 || dim > 3) out.push_back("dimension must be 1, 2 or 3");
        if (beta.size() != static_cast<std::size_t>(components) * static_cast<std::size_t>(std::max(components, 0)))
            out.push_back("beta must have N*N entries");
        if (!(exponent > 0.0) || !std::isfinite(exponent)) out.push_back("p must be a positive real");
        if (!out.empty()) return out;
        // beta = 0 altogether is the free (linear) system and is allowed.
        const bool free = is_free();
        for (int mu = 0; mu < components; ++mu) {
            for (int nu = 0; nu < components; ++nu) {
                const double b = (*this)(mu, nu);
                std::ostringstream key;
                key << "beta[" << mu + 1 << "][" << nu + 1 << "]";
                if (!(b >= 0.0) || !std::isfinite(b)) out.push_back(key.str() + " must be a finite nonnegative number");
                if (mu == nu && !(b > 0.0) && !free) out.push_back(key.str() + " must be positive");
                if (b != (*this)(nu, mu)) out.push_back(key.str() + " breaks the required symmetry of beta");
            }
        }
        if (has_offdiagonal() && exponent < 1.0) out.push_back("coupled systems (nonzero off-diagonal beta) need p >= 1");
        return out;
    }

    /// Soft notes on the admissibility classes; runs remain allowed.
    std::vector<std::string> warnings() const {
        std::vector<std::string> out;
        if (!subcritical()) out.push_back("p is outside 1 <= p < p*(d); conservation and decay results may not apply");
        else if (!scattering_admissible()) out.push_back("p <= 2/d; scattering is not expected");
        return out;
    }

    void validate() const {
        const auto issues = problems();
        if (issues.empty()) return;
        std::string msg = "invalid coupling:";
        for (const auto& s : issues) msg += " " + s + ";";
        throw UsageError(msg);
    }

    static CouplingSpec diagonal(int n, double b, double p, int d) {
        CouplingSpec c{n, std::vector<double>(static_cast<std::size_t>(n * n), 0.0), p, d};
        for (int mu = 0; mu < n; ++mu) c.beta[static_cast<std::size_t>(mu * n + mu)] = b;
        return c;
    }
};

/// Time plus N physical-space fields on one grid.
struct SystemState {
    double time = 0.0;
    std::vector<ScalarField> fields;
    CouplingSpec coupling;

    int components() const { return static_cast<int>(fields.size()); }
    const GridPtr& grid() const { return fields.front().grid(); }

    const ScalarField& field(int mu) const {
        if (mu < 0 || mu >= components())
            throw std::out_of_range("component index " + std::to_string(mu) + " out of range");
        return fields[static_cast<std::size_t>(mu)];
    }

    void check_consistent() const {
        if (fields.empty()) throw UsageError("state has no components");
        if (coupling.components != components()) throw UsageError("coupling size does not match component count");
        for (const auto& f : fields) {
            if (f.grid()->spec() != fields.front().grid()->spec()) throw UsageError("components live on different grids");
            if (!f.is_physical()) throw UsageError("state fields must be in physical representation");
        }
    }
};

inline RealArray density(const SystemState& s, int mu) {
    const auto& f = s.field(mu);
    RealArray m(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) m[j] = std::norm(f[j]);
    return m;
}

/// Sum of all component densities.
inline RealArray total_density(const SystemState& s) {
    RealArray m(s.grid()->size(), 0.0);
    for (int mu = 0; mu < s.components(); ++mu) {
        const auto& f = s.fields[static_cast<std::size_t>(mu)];
        for (std::size_t j = 0; j < f.size(); ++j) m[j] += std::norm(f[j]);
    }
    return m;
}

/// j = Im(conj(u) grad u), one array per axis.
inline std::vector<RealArray> current(const SystemState& s, int mu) {
    const auto& f = s.field(mu);
    const auto grad = spectral_gradient(f);
    std::vector<RealArray> j;
    for (const auto& g : grad) {
        RealArray c(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) c[i] = (std::conj(f[i]) * g[i]).imag();
        j.push_back(std::move(c));
    }
    return j;
}

inline double mass(const SystemState& s, int mu) { return physical_norm_squared(s.field(mu)); }

inline double total_mass(const SystemState& s) {
    double m = 0.0;
    for (int mu = 0; mu < s.components(); ++mu) m += mass(s, mu);
    return m;
}

struct Energy {
    double kinetic = 0.0;
    double potential = 0.0;
    double total = 0.0;
};

/// Pointwise |u_mu|^{p+1} |u_nu|^{p+1}.
inline RealArray coupling_density(const SystemState& s, int mu, int nu) {
    const double p = s.coupling.exponent;
    const auto& a = s.field(mu);
    const auto& b = s.field(nu);
    RealArray out(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) out[j] = std::pow(std::abs(a[j]) * std::abs(b[j]), p + 1.0);
    return out;
}

/// E = sum int |grad u_mu|^2 + sum_{mu,nu} beta_{mu nu} int |u_mu u_nu|^{p+1} / (p+1).
inline Energy energy(const SystemState& s) {
    Energy e;
    for (const auto& f : s.fields) e.kinetic += gradient_norm_squared(f);
    const double p = s.coupling.exponent;
    for (int mu = 0; mu < s.components(); ++mu) {
        for (int nu = 0; nu < s.components(); ++nu) {
            const double b = s.coupling(mu, nu);
            if (b == 0.0) continue;
            e.potential += b * integrate(*s.grid(), coupling_density(s, mu, nu)) / (p + 1.0);
        }
    }
    e.total = e.kinetic + e.potential;
    return e;
}

struct NormReport {
    std::vector<double> per_component;
    double aggregate = 0.0;
};

/// L^q norms for q in [2, inf]; q = inf gives the max modulus. Aggregate is the component sum.
inline NormReport lq_norm(const SystemState& s, double q) {
    if (!(q >= 2.0)) throw UsageError("L^q norms are only provided for q >= 2");
    NormReport r;
    for (const auto& f : s.fields) {
        double v = 0.0;
        if (std::isinf(q)) {
            for (const auto& c : f.values()) v = std::max(v, std::abs(c));
        } else {
            for (const auto& c : f.values()) v += std::pow(std::abs(c), q);
            v = std::pow(v * f.grid()->cell_volume(), 1.0 / q);
        }
        r.per_component.push_back(v);
        r.aggregate += v;
    }
    return r;
}

/// sum_mu ||u_mu||_{H^1}.
inline double h1_norm(const SystemState& s) {
    double v = 0.0;
    for (const auto& f : s.fields) v += std::sqrt(h1_norm_squared(f));
    return v;
}

namespace detail {

/// Cyclic box sums of width w along one axis of a row-major d-dimensional array.
inline RealArray box_sum_axis(const RealArray& in, int dim, int points, int axis, int width) {
    RealArray out(in.size(), 0.0);
    std::size_t stride = 1;
    for (int a = dim - 1; a > axis; --a) stride *= static_cast<std::size_t>(points);
    const std::size_t block = stride * static_cast<std::size_t>(points);
    const auto m = static_cast<std::size_t>(points);
    for (std::size_t outer = 0; outer < in.size(); outer += block) {
        for (std::size_t inner = 0; inner < stride; ++inner) {
            const std::size_t base = outer + inner;
            double run = 0.0;
            for (int i = 0; i < width; ++i) run += in[base + static_cast<std::size_t>(i) * stride];
            for (std::size_t i = 0; i < m; ++i) {
                out[base + i * stride] = run;
                run -= in[base + i * stride];
                run += in[base + ((i + static_cast<std::size_t>(width)) % m) * stride];
            }
        }
    }
    return out;
}

} // namespace detail

/// Number of grid cells spanned by a unit length along one axis.
inline int unit_cube_cells(const Grid& grid) {
    if (2.0 * grid.half_width() < 1.0) throw UsageError("box is smaller than the unit cube");
    return std::max(1, static_cast<int>(std::lround(1.0 / grid.spacing())));
}

/// Maximum over grid-aligned unit cubes (cyclic) of sum_mu int_Q |u_mu|^2.
inline double max_cube_mass(const Grid& grid, const RealArray& dens) {
    const int cells = unit_cube_cells(grid);
    RealArray acc = dens;
    for (int a = 0; a < grid.dim(); ++a) acc = detail::box_sum_axis(acc, grid.dim(), grid.points(), a, cells);
    return *std::max_element(acc.begin(), acc.end()) * grid.cell_volume();
}

/// sup over unit cubes Q of (sum_mu int_Q |u_mu|^2)^{1/2}.
inline double sup_cube_mass(const SystemState& s) {
    return std::sqrt(max_cube_mass(*s.grid(), total_density(s)));
}

/// Fraction of total mass in the outer shell max_a |x_a| >= (1 - width) L.
inline double boundary_mass_fraction(const SystemState& s, double shell = 0.1) {
    const auto& g = *s.grid();
    const auto dens = total_density(s);
    const double cut = (1.0 - shell) * g.half_width();
    double outer = 0.0, all = 0.0;
    for (std::size_t j = 0; j < dens.size(); ++j) {
        all += dens[j];
        const auto x = g.position(j);
        double r = 0.0;
        for (int a = 0; a < g.dim(); ++a) r = std::max(r, std::abs(x[static_cast<std::size_t>(a)]));
        if (r >= cut) outer += dens[j];
    }
    return all > 0.0 ? outer / all : 0.0;
}

} // namespace nlsys
