#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "nlsys/initial_data.hpp"
#include "nlsys/system.hpp"

namespace nlsys {

enum class GNVariant { main, cubic };

inline std::string variant_name(GNVariant v) { return v == GNVariant::main ? "main" : "cubic"; }

inline GNVariant parse_variant(const std::string& s) {
    if (s == "main") return GNVariant::main;
    if (s == "cubic") return GNVariant::cubic;
    throw UsageError("unknown GN variant '" + s + "' (expected main or cubic)");
}

/**
 * Localized Gagliardo-Nirenberg quotient of a vector function phi:
 *   main:  sum int |phi_l|^e / (S^{4/d} sum ||phi_l||_{H^1}^2),  e = (2d+4)/d,
 *   cubic: sum int |phi_l|^3 / (S sum ||phi_l||_{H^1}^2),
 * with S = sup over grid-aligned unit cubes of (sum int_Q |phi_l|^2)^{1/2}.
 */
inline double gn_ratio(const std::vector<ScalarField>& phi, GNVariant variant) {
    if (phi.empty()) throw UsageError("gn_ratio needs at least one component");
    const auto& grid = *phi.front().grid();
    const int d = grid.dim();
    const double e = variant == GNVariant::main ? (2.0 * d + 4.0) / d : 3.0;
    double lhs = 0.0, h1 = 0.0;
    RealArray dens(grid.size(), 0.0);
    for (const auto& f0 : phi) {
        const ScalarField f = to_physical(f0);
        for (std::size_t j = 0; j < f.size(); ++j) {
            const double a = std::abs(f[j]);
            lhs += std::pow(a, e);
            dens[j] += a * a;
        }
        h1 += h1_norm_squared(f);
    }
    lhs *= grid.cell_volume();
    if (!(h1 > 0.0)) throw UsageError("gn_ratio is undefined for the zero function");
    const double S = std::sqrt(max_cube_mass(grid, dens));
    const double loc = variant == GNVariant::main ? std::pow(S, 4.0 / d) : S;
    return lhs / (loc * h1);
}

enum class CorpusGenerator { band_limited, bumps, trains, mixed };

inline CorpusGenerator parse_generator(const std::string& s) {
    if (s == "band-limited") return CorpusGenerator::band_limited;
    if (s == "bumps") return CorpusGenerator::bumps;
    if (s == "trains") return CorpusGenerator::trains;
    if (s == "mixed") return CorpusGenerator::mixed;
    throw UsageError("unknown corpus generator '" + s + "' (expected band-limited, bumps, trains or mixed)");
}

/**
 * Sample i of a seeded corpus: `components` fields drawn from the generator
 * (mixed cycles through the other three). Centers stay in the inner half of
 * the box. Each sample depends only on (seed, i).
 */
inline std::vector<ScalarField> corpus_sample(const GridPtr& grid, CorpusGenerator gen, std::uint64_t seed,
                                              std::uint64_t index, int components = 2) {
    SplitMix64 rng(SplitMix64::split(seed, index));
    if (gen == CorpusGenerator::mixed) gen = static_cast<CorpusGenerator>(index % 3);
    const int d = grid->dim();
    const double reach = 0.5 * grid->half_width();
    const double hmin = 2.0 * grid->spacing();
    std::vector<ScalarField> out;
    for (int c = 0; c < components; ++c) {
        InitialDataSpec spec;
        Vec3 center{0, 0, 0};
        for (int a = 0; a < d; ++a) center[static_cast<std::size_t>(a)] = rng.uniform(-0.5 * reach, 0.5 * reach);
        spec.center = {center};
        spec.amplitude = {rng.uniform(0.2, 2.0)};
        spec.width = {std::max(hmin, rng.uniform(0.3, 2.0))};
        spec.seed = rng.next();
        switch (gen) {
        case CorpusGenerator::band_limited:
            spec.family = DataFamily::random_band_limited;
            spec.band_limit = rng.uniform(1.0, 4.0);
            spec.width = {rng.uniform(1.0, 3.0)};
            break;
        case CorpusGenerator::bumps:
            spec.family = DataFamily::gaussian;
            break;
        default:
            spec.family = DataFamily::multi_bump;
            spec.bumps = 2 + static_cast<int>(rng.next() % 3);
            spec.separation = rng.uniform(0.5, 3.0);
            spec.width = {rng.uniform(0.3, 1.0)};
            break;
        }
        out.push_back(make_component(grid, spec, 0));
    }
    return out;
}

struct GNReport {
    GNVariant variant = GNVariant::main;
    int dim = 1;
    std::uint64_t seed = 0;
    std::vector<double> ratios;
    double sup = 0.0;
    double median = 0.0;
    bool all_finite = true;
    /// Some sample exceeds 10x the corpus median.
    bool drift_alarm = false;
    std::size_t count() const { return ratios.size(); }
};

inline GNReport corpus_sup_ratio(const GridPtr& grid, CorpusGenerator gen, std::uint64_t seed, int count,
                                 GNVariant variant, int components = 2) {
    if (count < 1) throw UsageError("corpus needs at least one sample");
    GNReport r;
    r.variant = variant;
    r.dim = grid->dim();
    r.seed = seed;
    for (int i = 0; i < count; ++i) {
        const double q = gn_ratio(corpus_sample(grid, gen, seed, static_cast<std::uint64_t>(i), components), variant);
        if (!std::isfinite(q) || !(q > 0.0)) r.all_finite = false;
        r.ratios.push_back(q);
    }
    r.sup = *std::max_element(r.ratios.begin(), r.ratios.end());
    auto sorted = r.ratios;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    r.drift_alarm = r.sup > 10.0 * r.median;
    return r;
}

} // namespace nlsys
