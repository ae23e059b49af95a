#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "nlsys/system.hpp"

namespace nlsys {

/**
 * SplitMix64 generator with hand-rolled uniform and normal draws so that
 * seeded data are identical on every platform and standard library.
 */
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform on [0, 1) from the top 53 bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal by Box-Muller (one draw per call, the partner is discarded).
    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Child seed for stream `k`: the first output of a generator seeded with seed ^ (k * golden ratio constant).
    static std::uint64_t split(std::uint64_t seed, std::uint64_t k) {
        return SplitMix64(seed ^ (0x9E3779B97F4A7C15ULL * (k + 1))).next();
    }

private:
    std::uint64_t state_;
};

enum class DataFamily { gaussian, multi_bump, plane_modulated, random_band_limited };

inline DataFamily parse_family(const std::string& s) {
    if (s == "gaussian") return DataFamily::gaussian;
    if (s == "multi-bump") return DataFamily::multi_bump;
    if (s == "plane-modulated") return DataFamily::plane_modulated;
    if (s == "random-band-limited") return DataFamily::random_band_limited;
    throw UsageError("unknown initial-data family '" + s +
                     "' (expected gaussian, multi-bump, plane-modulated or random-band-limited)");
}

inline std::string family_name(DataFamily f) {
    switch (f) {
    case DataFamily::gaussian: return "gaussian";
    case DataFamily::multi_bump: return "multi-bump";
    case DataFamily::plane_modulated: return "plane-modulated";
    default: return "random-band-limited";
    }
}

/**
 * Per-component parameters; a list of length one is broadcast to every
 * component. velocity v gives the phase exp(i v.x / 2), i.e. group velocity v.
 */
struct InitialDataSpec {
    DataFamily family = DataFamily::gaussian;
    std::vector<double> amplitude{1.0};
    std::vector<double> width{1.0};
    std::vector<Vec3> center{{0.0, 0.0, 0.0}};
    std::vector<Vec3> velocity{{0.0, 0.0, 0.0}};
    int bumps = 2;              // multi-bump: bumps per component
    double separation = 4.0;    // multi-bump: spacing along axis 0
    double modulation = 1.0;    // plane-modulated: carrier wavenumber along axis 0
    double band_limit = 2.0;    // random-band-limited: largest |k| used
    std::uint64_t seed = 1;

    template <class T>
    static const T& pick(const std::vector<T>& v, int mu) {
        if (v.empty()) throw UsageError("empty per-component parameter list");
        return v.size() == 1 ? v.front() : v.at(static_cast<std::size_t>(mu));
    }
};

namespace detail {

inline double gaussian_envelope(const Vec3& x, const Vec3& c, double w, int dim) {
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) {
        const double z = x[static_cast<std::size_t>(a)] - c[static_cast<std::size_t>(a)];
        r2 += z * z;
    }
    return std::exp(-r2 / (2.0 * w * w));
}

inline cplx boost(const Vec3& x, const Vec3& v, int dim) {
    double ph = 0.0;
    for (int a = 0; a < dim; ++a) ph += 0.5 * v[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
    return std::polar(1.0, ph);
}

} // namespace detail

inline ScalarField make_component(const GridPtr& grid, const InitialDataSpec& spec, int mu) {
    const int d = grid->dim();
    const double A = InitialDataSpec::pick(spec.amplitude, mu);
    const double w = InitialDataSpec::pick(spec.width, mu);
    const Vec3 c = InitialDataSpec::pick(spec.center, mu);
    const Vec3 v = InitialDataSpec::pick(spec.velocity, mu);
    if (!(w > 0.0)) throw UsageError("initial-data width must be positive");
    ScalarField f(grid);
    switch (spec.family) {
    case DataFamily::gaussian:
        for (std::size_t j = 0; j < f.size(); ++j) {
            const auto x = grid->position(j);
            f[j] = A * detail::gaussian_envelope(x, c, w, d) * detail::boost(x, v, d);
        }
        break;
    case DataFamily::multi_bump: {
        if (spec.bumps < 1) throw UsageError("multi-bump needs at least one bump");
        for (std::size_t j = 0; j < f.size(); ++j) {
            const auto x = grid->position(j);
            double s = 0.0;
            for (int b = 0; b < spec.bumps; ++b) {
                Vec3 cb = c;
                cb[0] += (b - 0.5 * (spec.bumps - 1)) * spec.separation;
                s += detail::gaussian_envelope(x, cb, w, d);
            }
            f[j] = A * s * detail::boost(x, v, d);
        }
        break;
    }
    case DataFamily::plane_modulated:
        for (std::size_t j = 0; j < f.size(); ++j) {
            const auto x = grid->position(j);
            f[j] = A * detail::gaussian_envelope(x, c, w, d) * std::cos(spec.modulation * (x[0] - c[0])) *
                   detail::boost(x, v, d);
        }
        break;
    case DataFamily::random_band_limited: {
        // Random spectrum on |k| <= band_limit, shaped by a Gaussian envelope and scaled to peak modulus A.
        SplitMix64 rng(SplitMix64::split(spec.seed, static_cast<std::uint64_t>(mu)));
        ScalarField hat(grid, Representation::spectral);
        const double k2max = spec.band_limit * spec.band_limit;
        for (std::size_t j = 0; j < hat.size(); ++j) {
            if (grid->wavenumber_squared(j) > k2max) continue;
            const double re = rng.normal();
            const double im = rng.normal();
            hat[j] = cplx(re, im);
        }
        f = inverse_transform(hat);
        double peak = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) {
            const auto x = grid->position(j);
            f[j] *= detail::gaussian_envelope(x, c, w, d) * detail::boost(x, v, d);
            peak = std::max(peak, std::abs(f[j]));
        }
        if (peak > 0.0)
            for (auto& z : f.values()) z *= A / peak;
        break;
    }
    }
    return f;
}

inline SystemState make_state(const GridPtr& grid, const CouplingSpec& coupling, const InitialDataSpec& spec) {
    SystemState s;
    s.coupling = coupling;
    for (int mu = 0; mu < coupling.components; ++mu) s.fields.push_back(make_component(grid, spec, mu));
    return s;
}

/// Free Schrodinger evolution of exp(-|x|^2/(2w^2)) (amplitude 1, centered at 0) in d dimensions.
inline cplx free_gaussian(const Vec3& x, double t, double w, int dim) {
    const cplx z = 1.0 + cplx(0.0, 2.0 * t / (w * w));
    double r2 = 0.0;
    for (int a = 0; a < dim; ++a) r2 += x[static_cast<std::size_t>(a)] * x[static_cast<std::size_t>(a)];
    return std::pow(z, -0.5 * dim) * std::exp(-r2 / (2.0 * w * w * z));
}

} // namespace nlsys
