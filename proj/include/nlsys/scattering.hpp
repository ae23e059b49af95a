#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "nlsys/integrator.hpp"
#include "nlsys/system.hpp"

namespace nlsys {

/// Exact rational with 64-bit parts, kept in lowest terms with a positive denominator.
class Rational {
public:
    Rational(std::int64_t n = 0, std::int64_t d = 1) : num_(n), den_(d) {
        if (d == 0) throw UsageError("rational with zero denominator");
        normalize();
    }

    /// Best approximation with denominator <= max_den; throws unless it matches x to 1e-12 relative.
    static Rational from_double(double x, std::int64_t max_den = 1000000) {
        if (!std::isfinite(x)) throw UsageError("cannot represent a non-finite value as a rational");
        std::int64_t p0 = 0, q0 = 1, p1 = 1, q1 = 0;
        double v = x;
        for (int it = 0; it < 64; ++it) {
            const double a = std::floor(v);
            const auto ai = static_cast<std::int64_t>(a);
            const std::int64_t p2 = ai * p1 + p0, q2 = ai * q1 + q0;
            if (q2 > max_den) break;
            p0 = p1; q0 = q1; p1 = p2; q1 = q2;
            const double frac = v - a;
            if (std::abs(static_cast<double>(p1) / static_cast<double>(q1) - x) <= 1e-15 * std::max(1.0, std::abs(x)) || frac < 1e-15) break;
            v = 1.0 / frac;
        }
        Rational r(p1, q1);
        if (std::abs(r.value() - x) > 1e-12 * std::max(1.0, std::abs(x)))
            throw UsageError("value " + std::to_string(x) + " has no small-denominator rational form");
        return r;
    }

    std::int64_t num() const { return num_; }
    std::int64_t den() const { return den_; }
    double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

    friend Rational operator+(const Rational& a, const Rational& b) { return {a.num_ * b.den_ + b.num_ * a.den_, a.den_ * b.den_}; }
    friend Rational operator-(const Rational& a, const Rational& b) { return {a.num_ * b.den_ - b.num_ * a.den_, a.den_ * b.den_}; }
    friend Rational operator*(const Rational& a, const Rational& b) { return {a.num_ * b.num_, a.den_ * b.den_}; }
    friend Rational operator/(const Rational& a, const Rational& b) {
        if (b.num_ == 0) throw UsageError("rational division by zero");
        return {a.num_ * b.den_, a.den_ * b.num_};
    }
    friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }
    friend bool operator<(const Rational& a, const Rational& b) { return a.num_ * b.den_ < b.num_ * a.den_; }
    friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }

    std::string str() const { return den_ == 1 ? std::to_string(num_) : std::to_string(num_) + "/" + std::to_string(den_); }

private:
    void normalize() {
        if (den_ < 0) { num_ = -num_; den_ = -den_; }
        const std::int64_t g = std::gcd(num_ < 0 ? -num_ : num_, den_);
        if (g > 1) { num_ /= g; den_ /= g; }
    }

    std::int64_t num_, den_;
};

/// Exponent pair (q, r) for the space-time norm L^q_t W^{1,r}_x in d dimensions.
struct StrichartzPair {
    Rational q, r;
    int dim = 1;
    bool admissible = false;
    std::string violation;

    /// 2/q + d/r == d/2 in exact arithmetic.
    bool scaling_exact() const { return Rational(2) / q + Rational(dim) / r == Rational(dim, 2); }
};

/// q = 4(p+1)/(d p), r = 2p + 2.
inline StrichartzPair admissible_pair(const Rational& p, int d) {
    if (!(Rational(0) < p)) throw UsageError("admissible_pair needs p > 0");
    if (d < 1 || d > 3) throw UsageError("admissible_pair needs d in {1, 2, 3}");
    StrichartzPair s{Rational(4) * (p + Rational(1)) / (Rational(d) * p), Rational(2) * p + Rational(2), d, true, {}};
    if (s.q < Rational(2)) {
        s.admissible = false;
        s.violation = "q = " + s.q.str() + " < 2";
    } else if (!s.scaling_exact()) {
        s.admissible = false;
        s.violation = "2/q + d/r != d/2";
    }
    return s;
}

inline StrichartzPair admissible_pair(double p, int d) { return admissible_pair(Rational::from_double(p), d); }

/// sum_mu (||u_mu||_{L^r} + || |grad u_mu| ||_{L^r}); r = inf uses max norms.
inline double w1r_norm(const SystemState& s, double r) {
    const auto& g = *s.grid();
    double total = 0.0;
    for (const auto& f : s.fields) {
        const auto grad = spectral_gradient(f);
        double a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < f.size(); ++j) {
            double gg = 0.0;
            for (const auto& c : grad) gg += std::norm(c[j]);
            if (std::isinf(r)) {
                a = std::max(a, std::abs(f[j]));
                b = std::max(b, std::sqrt(gg));
            } else {
                a += std::pow(std::abs(f[j]), r);
                b += std::pow(gg, 0.5 * r);
            }
        }
        if (!std::isinf(r)) {
            a = std::pow(a * g.cell_volume(), 1.0 / r);
            b = std::pow(b * g.cell_volume(), 1.0 / r);
        }
        total += a + b;
    }
    return total;
}

/// Trapezoid accumulation of (sum_mu ||u_mu(t)||_{W^{1,r}})^q over snapshots.
class StrichartzAccumulator {
public:
    explicit StrichartzAccumulator(StrichartzPair pair) : pair_(std::move(pair)) {
        if (!pair_.admissible) throw UsageError("Strichartz accumulator needs an admissible pair: " + pair_.violation);
    }

    void add(const SystemState& s) { add(s.time, w1r_norm(s, pair_.r.value())); }

    void add(double t, double spatial_norm) {
        const double v = std::pow(spatial_norm, pair_.q.value());
        if (have_last_) total_ += 0.5 * (t - last_t_) * (last_ + v);
        last_ = v;
        last_t_ = t;
        have_last_ = true;
        history_.emplace_back(t, total_);
    }

    /// Integral of the q-th power so far.
    double integral() const { return total_; }
    /// The L^q_t W^{1,r}_x norm so far.
    double norm() const { return std::pow(total_, 1.0 / pair_.q.value()); }
    const std::vector<std::pair<double, double>>& history() const { return history_; }
    const StrichartzPair& pair() const { return pair_; }

    /// Increase of the integral over (t1, t2].
    double increment(double t1, double t2) const {
        double a = 0.0, b = 0.0;
        for (const auto& [t, v] : history_) {
            if (t <= t1 + 1e-9) a = v;
            if (t <= t2 + 1e-9) b = v;
        }
        return b - a;
    }

private:
    StrichartzPair pair_;
    double total_ = 0.0;
    double last_ = 0.0;
    double last_t_ = 0.0;
    bool have_last_ = false;
    std::vector<std::pair<double, double>> history_;
};

/// Sum over components of ||a_mu - b_mu||_{H^1}.
inline double h1_distance(const std::vector<ScalarField>& a, const std::vector<ScalarField>& b) {
    if (a.size() != b.size()) throw UsageError("component counts differ");
    double s = 0.0;
    for (std::size_t mu = 0; mu < a.size(); ++mu) {
        ScalarField d = to_physical(a[mu]);
        const ScalarField e = to_physical(b[mu]);
        for (std::size_t j = 0; j < d.size(); ++j) d[j] -= e[j];
        s += std::sqrt(h1_norm_squared(d));
    }
    return s;
}

struct CauchyResidual {
    double t1 = 0.0, t2 = 0.0, residual = 0.0;
};

struct ScatteringResult {
    int direction = +1;
    std::vector<ScalarField> profile;
    std::vector<CauchyResidual> cauchy_residuals;
    bool converged = false;
    double tolerance = 0.0;
    std::string diagnostic;
};

/// v(t) = e^{-it Lap} u(t) for every component.
inline std::vector<ScalarField> pull_back(const SystemState& s) {
    std::vector<ScalarField> v;
    for (const auto& f : s.fields) v.push_back(free_propagate(f, -s.time));
    return v;
}

/**
 * Free profiles v(t_i) = e^{-i t_i Lap} u(t_i) along snapshots ordered toward
 * the chosen end (+1: increasing times, -1: decreasing). Converged when the
 * last consecutive H^1 residual is below tol and the residuals did not grow
 * over the last three windows.
 */
inline ScatteringResult asymptotic_profile(const std::vector<SystemState>& snaps, int direction, double tol) {
    if (snaps.empty()) throw UsageError("asymptotic_profile needs at least one snapshot");
    if (direction != 1 && direction != -1) throw UsageError("direction must be +1 or -1");
    for (std::size_t i = 1; i < snaps.size(); ++i)
        if (!((snaps[i].time - snaps[i - 1].time) * direction > 0.0))
            throw UsageError("snapshot times must move monotonically toward the chosen end");
    ScatteringResult res;
    res.direction = direction;
    res.tolerance = tol;
    auto prev = pull_back(snaps.front());
    for (std::size_t i = 1; i < snaps.size(); ++i) {
        auto cur = pull_back(snaps[i]);
        res.cauchy_residuals.push_back({snaps[i - 1].time, snaps[i].time, h1_distance(prev, cur)});
        prev = std::move(cur);
    }
    res.profile = std::move(prev);
    const auto& r = res.cauchy_residuals;
    bool growing = false;
    if (r.size() >= 3) {
        const std::size_t n = r.size();
        growing = r[n - 1].residual > r[n - 2].residual && r[n - 2].residual > r[n - 3].residual;
    }
    const double last = r.empty() ? 0.0 : r.back().residual;
    if (growing) {
        res.diagnostic = "Cauchy residuals increased over the last three windows";
    } else if (!(last < tol) && !r.empty()) {
        std::ostringstream m;
        m << "last residual " << last << " is not below " << tol;
        res.diagnostic = m.str();
    }
    res.converged = !growing && (r.empty() || last < tol);
    return res;
}

struct WaveOperatorResult {
    SystemState state;              // w(0)
    std::vector<double> residuals;  // sup_t sum_mu ||w^{k+1}(t) - w^k(t)||_{H^1} per iteration
    int iterations = 0;
    bool converged = false;
    bool diverged = false;
    std::string message;
};

/**
 * Truncated Duhamel fixed point for the state that scatters to `profile`:
 *   w(t) = e^{it Lap} u0+ + i int_t^T e^{i(t-s) Lap} G(w(s)) ds,  G_mu = g_mu w_mu,
 * iterated on the uniform grid t_n = n T / nodes in the interaction picture
 * v = e^{-it Lap} w, with trapezoid quadrature in s. The +i follows from
 * i d_t u + Lap u = G. Divergence is declared after three consecutive
 * residual increases or on overflow.
 */
inline WaveOperatorResult wave_operator(const std::vector<ScalarField>& profile, const CouplingSpec& coupling, double T,
                                        int nodes, double tol, int max_iter) {
    if (profile.empty()) throw UsageError("wave_operator needs a profile");
    if (!(T > 0.0) || nodes < 1) throw UsageError("wave_operator needs T > 0 and at least one time step");
    if (max_iter < 1) throw UsageError("wave_operator needs max_iter >= 1");
    coupling.validate();
    const auto gptr = profile.front().grid();
    const auto& grid = *gptr;
    const std::size_t n = grid.size();
    const int N = static_cast<int>(profile.size());
    const double ds = T / nodes;
    const auto& k2 = grid.wavenumber_squared_table();

    std::vector<std::vector<cplx>> u0hat(static_cast<std::size_t>(N), std::vector<cplx>(n));
    for (int mu = 0; mu < N; ++mu) grid.forward(to_physical(profile[static_cast<std::size_t>(mu)]).values(), u0hat[static_cast<std::size_t>(mu)]);

    // vhat[node][mu] in spectral space; iterate 0 is the free flow.
    std::vector<std::vector<std::vector<cplx>>> vhat(static_cast<std::size_t>(nodes + 1), u0hat);

    WaveOperatorResult res;
    SystemState scratch;
    scratch.coupling = coupling;
    scratch.fields.assign(static_cast<std::size_t>(N), ScalarField(gptr));
    std::vector<cplx> buf(n);
    int growth = 0;

    // F(s) = e^{-is Lap} G(w(s)) at node k, from the current iterate, stored spectrally.
    auto source = [&](int k, std::vector<std::vector<cplx>>& Fk) {
        const double t = k * ds;
        const auto& vk = vhat[static_cast<std::size_t>(k)];
        for (int mu = 0; mu < N; ++mu) {
            for (std::size_t j = 0; j < n; ++j) buf[j] = vk[static_cast<std::size_t>(mu)][j] * std::polar(1.0, -k2[j] * t);
            grid.inverse(buf, scratch.fields[static_cast<std::size_t>(mu)].values());
        }
        const auto mod = detail::moduli(scratch);
        for (int mu = 0; mu < N; ++mu) {
            const auto g = detail::nonlinear_potential(scratch, mu, mod);
            const auto& f = scratch.fields[static_cast<std::size_t>(mu)];
            auto& out = Fk[static_cast<std::size_t>(mu)];
            for (std::size_t j = 0; j < n; ++j) buf[j] = g[j] * f[j];
            grid.forward(buf, out);
            for (std::size_t j = 0; j < n; ++j) out[j] *= std::polar(1.0, k2[j] * t);
        }
    };

    std::vector<std::vector<cplx>> Fcur(static_cast<std::size_t>(N), std::vector<cplx>(n));
    std::vector<std::vector<cplx>> Fnext = Fcur;
    for (int it = 1; it <= max_iter; ++it) {
        // Sweep backward from T; node k's source is taken from the old iterate before v_k is replaced.
        double sup = 0.0;
        bool finite = true;
        std::vector<std::vector<cplx>> acc(static_cast<std::size_t>(N), std::vector<cplx>(n, cplx{0.0, 0.0}));
        for (int k = nodes; k >= 0 && finite; --k) {
            try {
                source(k, Fcur);
            } catch (const NumericalError&) {
                finite = false;
                break;
            }
            if (k < nodes)
                for (int mu = 0; mu < N; ++mu)
                    for (std::size_t j = 0; j < n; ++j)
                        acc[static_cast<std::size_t>(mu)][j] += 0.5 * ds * (Fcur[static_cast<std::size_t>(mu)][j] + Fnext[static_cast<std::size_t>(mu)][j]);
            std::swap(Fcur, Fnext);
            double diff = 0.0;
            for (int mu = 0; mu < N; ++mu) {
                auto& v = vhat[static_cast<std::size_t>(k)][static_cast<std::size_t>(mu)];
                double d2 = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    const cplx nv = u0hat[static_cast<std::size_t>(mu)][j] + cplx(0.0, 1.0) * acc[static_cast<std::size_t>(mu)][j];
                    d2 += (1.0 + k2[j]) * std::norm(nv - v[j]);
                    v[j] = nv;
                }
                diff += std::sqrt(d2 * grid.box_volume());
            }
            if (!std::isfinite(diff)) finite = false;
            sup = std::max(sup, diff);
        }
        if (!finite) sup = std::numeric_limits<double>::infinity();
        res.residuals.push_back(sup);
        res.iterations = it;
        if (!std::isfinite(sup)) {
            // Iterates overflowed: the map is not a contraction for these data.
            res.diverged = true;
            res.message = "fixed-point iterates overflowed at iteration " + std::to_string(it) +
                          "; increase T or shrink the data";
            break;
        }
        if (res.residuals.size() >= 2 && sup > res.residuals[res.residuals.size() - 2]) ++growth;
        else growth = 0;
        if (sup < tol) {
            res.converged = true;
            break;
        }
        if (growth >= 3) {
            res.diverged = true;
            res.message = "fixed-point residual grew for 3 consecutive iterations; increase T or shrink the data";
            break;
        }
    }
    if (!res.converged && !res.diverged) {
        std::ostringstream m;
        m << "no convergence after " << max_iter << " iterations (last residual " << res.residuals.back() << ")";
        res.message = m.str();
    }
    res.state.coupling = coupling;
    res.state.time = 0.0;
    for (int mu = 0; mu < N; ++mu) {
        ScalarField f(gptr);
        grid.inverse(vhat[0][static_cast<std::size_t>(mu)], f.values());
        res.state.fields.push_back(std::move(f));
    }
    return res;
}

/// Geometric decay rate per iteration over the last (up to) three residual ratios; NaN with fewer than two residuals.
inline double contraction_rate(const std::vector<double>& r) {
    if (r.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const std::size_t n = r.size();
    const std::size_t k = std::min<std::size_t>(3, n - 1);
    if (r[n - 1 - k] <= 0.0) return 0.0;
    return std::pow(r[n - 1] / r[n - 1 - k], 1.0 / static_cast<double>(k));
}

} // namespace nlsys
