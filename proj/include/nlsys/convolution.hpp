#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "nlsys/grid.hpp"

namespace nlsys {

/**
 * Radial convolution kernel K(|z|), scaled by `scale`.
 *
 * reciprocal_distance and abs_distance get spectrally accurate discrete
 * kernels from the closed-form transform of the kernel truncated at the box
 * diameter. `profile` kernels are sampled pointwise (they must be finite at
 * the origin).
 */
struct RadialKernel {
    enum class Kind { reciprocal_distance, abs_distance, profile };

    Kind kind = Kind::abs_distance;
    double scale = 1.0;
    std::function<double(double)> profile;
    std::function<double(double)> slope; // d profile / dr, used for gradient kernels
    std::string label;                   // cache key; empty disables caching for profiles

    static RadialKernel reciprocal(double scale = 1.0) {
        return {Kind::reciprocal_distance, scale, {}, {}, "reciprocal"};
    }
    static RadialKernel abs_distance(double scale = 1.0) {
        return {Kind::abs_distance, scale, {}, {}, "abs"};
    }
    static RadialKernel from_profile(std::function<double(double)> value, std::function<double(double)> derivative,
                                     std::string label = {}) {
        return {Kind::profile, 1.0, std::move(value), std::move(derivative), std::move(label)};
    }
    static RadialKernel constant(double c = 1.0) {
        return from_profile([c](double) { return c; }, [](double) { return 0.0; }, "constant:" + std::to_string(c));
    }
};

namespace detail {

// 16-point Gauss-Legendre nodes/weights on [-1, 1] (positive half).
inline constexpr std::array<double, 8> gl16_nodes{
    0.0950125098376374, 0.2816035507792589, 0.4580167776572274, 0.6178762444026438,
    0.7554044083550030, 0.8656312023878318, 0.9445750230732326, 0.9894009349916499};
inline constexpr std::array<double, 8> gl16_weights{
    0.1894506104550685, 0.1826034150449236, 0.1691565193950025, 0.1495959888165767,
    0.1246289712555339, 0.0951585116824928, 0.0622535239386479, 0.0271524594117541};

inline double gauss_legendre(const std::function<double(double)>& f, double a, double b) {
    const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
    double s = 0.0;
    for (std::size_t i = 0; i < gl16_nodes.size(); ++i) {
        const double dx = half * gl16_nodes[i];
        s += gl16_weights[i] * (f(mid - dx) + f(mid + dx));
    }
    return s * half;
}

/// int_0^x J0(s) ds for every x (any order, x >= 0), by cumulative Gauss-Legendre.
inline std::vector<double> bessel_j0_integral(const std::vector<double>& xs) {
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return xs[a] < xs[b]; });
    const std::function<double(double)> j0 = [](double s) { return std::cyl_bessel_j(0.0, s); };
    std::vector<double> out(xs.size());
    double prev = 0.0, acc = 0.0;
    for (auto i : order) {
        const double x = xs[i];
        const int pieces = std::max(1, static_cast<int>(std::ceil((x - prev) / 0.5)));
        const double w = (x - prev) / pieces;
        for (int p = 0; p < pieces; ++p) acc += gauss_legendre(j0, prev + p * w, prev + (p + 1) * w);
        prev = x;
        out[i] = acc;
    }
    return out;
}

/// Fourier transform of K(r) restricted to r <= R, as a function of |k|, dimension d.
inline std::vector<double> truncated_kernel_transform(RadialKernel::Kind kind, int dim, double radius,
                                                      const std::vector<double>& kmag) {
    using std::numbers::pi;
    const double R = radius;
    std::vector<double> out(kmag.size());
    if (kind == RadialKernel::Kind::reciprocal_distance) {
        if (dim == 3) {
            for (std::size_t i = 0; i < kmag.size(); ++i) {
                const double k = kmag[i];
                if (k * R < 1e-6) {
                    out[i] = 2.0 * pi * R * R;
                } else {
                    const double s = std::sin(0.5 * k * R);
                    out[i] = 8.0 * pi * s * s / (k * k);
                }
            }
        } else if (dim == 2) {
            std::vector<double> xs(kmag.size());
            for (std::size_t i = 0; i < kmag.size(); ++i) xs[i] = kmag[i] * R;
            const auto F = bessel_j0_integral(xs);
            for (std::size_t i = 0; i < kmag.size(); ++i)
                out[i] = kmag[i] * R < 1e-8 ? 2.0 * pi * R : 2.0 * pi * F[i] / kmag[i];
        } else {
            throw UsageError("the reciprocal-distance kernel is not defined in one dimension");
        }
        return out;
    }
    // abs_distance
    if (dim == 1) {
        for (std::size_t i = 0; i < kmag.size(); ++i) {
            const double k = kmag[i], x = k * R;
            if (x < 0.5) {
                // 2 int_0^R r cos(kr) dr as a series in x
                double term = R * R, sum = 0.0;
                for (int n = 0; n < 12; ++n) {
                    sum += 2.0 * term / (2.0 * n + 2.0);
                    term *= -x * x / ((2.0 * n + 1.0) * (2.0 * n + 2.0));
                }
                out[i] = sum;
            } else {
                out[i] = 2.0 * (R * std::sin(x) / k + (std::cos(x) - 1.0) / (k * k));
            }
        }
    } else if (dim == 2) {
        std::vector<double> xs(kmag.size());
        for (std::size_t i = 0; i < kmag.size(); ++i) xs[i] = kmag[i] * R;
        const auto F = bessel_j0_integral(xs);
        for (std::size_t i = 0; i < kmag.size(); ++i) {
            const double k = kmag[i], x = xs[i];
            if (x < 1e-8) {
                out[i] = 2.0 * pi * R * R * R / 3.0;
            } else if (x < 0.5) {
                // int_0^x s^2 J0(s) ds series
                double sum = 0.0, c = 1.0;
                for (int n = 0; n < 12; ++n) {
                    sum += c * std::pow(x, 2 * n + 3) / (2.0 * n + 3.0);
                    c *= -1.0 / (4.0 * (n + 1.0) * (n + 1.0));
                }
                out[i] = 2.0 * pi * sum / (k * k * k);
            } else {
                const double g = x * x * std::cyl_bessel_j(1.0, x) + x * std::cyl_bessel_j(0.0, x) - F[i];
                out[i] = 2.0 * pi * g / (k * k * k);
            }
        }
    } else {
        for (std::size_t i = 0; i < kmag.size(); ++i) {
            const double k = kmag[i], x = k * R;
            double g; // int_0^x s^2 sin(s) ds
            if (x < 0.5) {
                g = 0.0;
                double c = 1.0; // (-1)^n / (2n+1)!
                for (int n = 0; n < 12; ++n) {
                    g += c * std::pow(x, 2 * n + 4) / (2.0 * n + 4.0);
                    c *= -1.0 / ((2.0 * n + 2.0) * (2.0 * n + 3.0));
                }
            } else {
                g = -x * x * std::cos(x) + 2.0 * x * std::sin(x) + 2.0 * std::cos(x) - 2.0;
            }
            out[i] = x < 1e-8 ? pi * R * R * R * R : 4.0 * pi * g / (k * k * k * k);
        }
    }
    return out;
}

} // namespace detail

/**
 * Free-space convolution (K * f)(x) = int K(x - y) f(y) dy for data living in
 * the box, computed as a cyclic convolution on a grid zero-padded by 2 per axis.
 *
 * The discrete kernel is built once. For the singular/growing kernels
 * (1/r, r) it is the band-limited image of the kernel truncated at the box
 * diameter, obtained from its closed-form Fourier transform on an auxiliary
 * (1 + sqrt(d))-times larger periodic grid; this makes the convolution
 * spectrally accurate for resolved data and needs no special origin value.
 */
class FreeSpaceConvolver {
public:
    /// `axis` >= 0 convolves with the derivative d/dz_axis of the kernel instead.
    FreeSpaceConvolver(GridPtr grid, const RadialKernel& kernel, int axis = -1)
        : grid_(std::move(grid)), padded_points_(2 * grid_->points()) {
        const int d = grid_->dim();
        if (axis >= d) throw UsageError("gradient axis out of range");
        plan_ = std::make_unique<FftPlan>(std::vector<int>(static_cast<std::size_t>(d), padded_points_));
        std::vector<double> w;
        if (kernel.kind == RadialKernel::Kind::profile) {
            if (!kernel.profile) throw UsageError("profile kernel without a profile function");
            if (axis >= 0 && !kernel.slope) throw UsageError("gradient of a profile kernel needs its slope");
            w = sampled_kernel(kernel, axis);
        } else {
            if (kernel.kind == RadialKernel::Kind::reciprocal_distance && d == 1)
                throw UsageError("the reciprocal-distance kernel is not supported in one dimension");
            w = band_limited_kernel(kernel, axis);
        }
        kernel_hat_.resize(w.size());
        for (std::size_t i = 0; i < w.size(); ++i) kernel_hat_[i] = w[i];
        plan_->forward(kernel_hat_);
        const double norm = grid_->cell_volume() / static_cast<double>(plan_->size());
        for (auto& c : kernel_hat_) c *= norm;
    }

    const GridPtr& grid() const { return grid_; }

    RealArray apply(std::span<const double> f) const {
        auto out = apply_complex_impl(f);
        RealArray r(grid_->size());
        for (std::size_t j = 0; j < r.size(); ++j) r[j] = out[j].real();
        return r;
    }

private:
    std::size_t padded_index(const std::array<int, 3>& idx) const {
        std::size_t flat = 0;
        for (int a = 0; a < grid_->dim(); ++a)
            flat = flat * static_cast<std::size_t>(padded_points_) + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
        return flat;
    }

    std::vector<cplx> apply_complex_impl(std::span<const double> f) const {
        if (f.size() != grid_->size()) throw UsageError("convolution input length does not match grid");
        std::vector<cplx> buf(plan_->size(), cplx{0.0, 0.0});
        for (std::size_t j = 0; j < f.size(); ++j) buf[padded_index(grid_->unravel(j))] = f[j];
        plan_->forward(buf);
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] *= kernel_hat_[i];
        plan_->backward(buf);
        std::vector<cplx> out(grid_->size());
        for (std::size_t j = 0; j < out.size(); ++j) out[j] = buf[padded_index(grid_->unravel(j))];
        return out;
    }

    /// Displacement (in cells) for padded index q.
    int displacement(int q, int n) const { return q < n / 2 ? q : q - n; }

    std::vector<double> sampled_kernel(const RadialKernel& kernel, int axis) const {
        const int d = grid_->dim();
        const double h = grid_->spacing();
        std::vector<double> w(plan_->size());
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::size_t rem = i;
            std::array<double, 3> z{0, 0, 0};
            for (int a = d - 1; a >= 0; --a) {
                const int q = static_cast<int>(rem % static_cast<std::size_t>(padded_points_));
                rem /= static_cast<std::size_t>(padded_points_);
                z[static_cast<std::size_t>(a)] = displacement(q, padded_points_) * h;
            }
            const double r = std::sqrt(z[0] * z[0] + z[1] * z[1] + z[2] * z[2]);
            if (axis < 0) {
                w[i] = kernel.scale * kernel.profile(r);
            } else {
                w[i] = r > 0.0 ? kernel.scale * kernel.slope(r) * z[static_cast<std::size_t>(axis)] / r : 0.0;
            }
        }
        return w;
    }

    std::vector<double> band_limited_kernel(const RadialKernel& kernel, int axis) const {
        const int d = grid_->dim();
        const int m = grid_->points();
        const double h = grid_->spacing();
        const double radius = 2.0 * grid_->half_width() * std::sqrt(static_cast<double>(d));
        const int big = detail::fft_friendly_even(
            static_cast<int>(std::ceil((1.0 + std::sqrt(static_cast<double>(d))) * m)) + 2);
        const double period = big * h;
        FftPlan big_plan(std::vector<int>(static_cast<std::size_t>(d), big));

        std::vector<double> kaxis(static_cast<std::size_t>(big));
        for (int i = 0; i < big; ++i)
            kaxis[static_cast<std::size_t>(i)] = 2.0 * std::numbers::pi / period * displacement(i, big);

        // Distinct |k|^2 values (integer mode sums) share one transform evaluation.
        std::vector<long long> mode2(big_plan.size());
        std::vector<long long> uniq;
        for (std::size_t i = 0; i < mode2.size(); ++i) {
            std::size_t rem = i;
            long long s = 0;
            for (int a = d - 1; a >= 0; --a) {
                const long long q = displacement(static_cast<int>(rem % static_cast<std::size_t>(big)), big);
                rem /= static_cast<std::size_t>(big);
                s += q * q;
            }
            mode2[i] = s;
        }
        uniq = mode2;
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        std::vector<double> kmag(uniq.size());
        const double dk = 2.0 * std::numbers::pi / period;
        for (std::size_t i = 0; i < uniq.size(); ++i) kmag[i] = dk * std::sqrt(static_cast<double>(uniq[i]));
        const auto transform = detail::truncated_kernel_transform(kernel.kind, d, radius, kmag);

        std::vector<cplx> spec(big_plan.size());
        for (std::size_t i = 0; i < spec.size(); ++i) {
            const auto pos = std::lower_bound(uniq.begin(), uniq.end(), mode2[i]) - uniq.begin();
            cplx v = kernel.scale * transform[static_cast<std::size_t>(pos)];
            if (axis >= 0) {
                std::size_t rem = i;
                int qa = 0;
                for (int a = d - 1; a >= 0; --a) {
                    const int q = static_cast<int>(rem % static_cast<std::size_t>(big));
                    rem /= static_cast<std::size_t>(big);
                    if (a == axis) qa = q;
                }
                v *= (qa == big / 2) ? cplx(0.0, 0.0) : cplx(0.0, kaxis[static_cast<std::size_t>(qa)]);
            }
            spec[i] = v;
        }
        big_plan.backward(spec);
        const double norm = 1.0 / std::pow(period, d);

        // Restrict the periodized band-limited kernel to displacements of the 2x padded grid.
        std::vector<double> w(plan_->size(), 0.0);
        for (std::size_t i = 0; i < w.size(); ++i) {
            std::size_t rem = i;
            std::size_t flat_big = 0;
            std::array<int, 3> q{0, 0, 0};
            for (int a = d - 1; a >= 0; --a) {
                q[static_cast<std::size_t>(a)] = static_cast<int>(rem % static_cast<std::size_t>(padded_points_));
                rem /= static_cast<std::size_t>(padded_points_);
            }
            for (int a = 0; a < d; ++a) {
                const int disp = displacement(q[static_cast<std::size_t>(a)], padded_points_);
                const int bi = disp >= 0 ? disp : disp + big;
                flat_big = flat_big * static_cast<std::size_t>(big) + static_cast<std::size_t>(bi);
            }
            w[i] = spec[flat_big].real() * norm;
        }
        return w;
    }

    GridPtr grid_;
    int padded_points_;
    std::unique_ptr<FftPlan> plan_;
    std::vector<cplx> kernel_hat_;
};

/// Shared convolver for `kernel` (or its gradient along `axis`) on `grid`.
inline std::shared_ptr<const FreeSpaceConvolver> convolver_for(const GridPtr& grid, const RadialKernel& kernel,
                                                               int axis = -1) {
    auto build = [&] { return std::make_shared<const FreeSpaceConvolver>(grid, kernel, axis); };
    if (kernel.label.empty()) return build();
    const std::string key = kernel.label + "|" + std::to_string(kernel.scale) + "|" + std::to_string(axis);
    return grid->cached_convolver(key, build);
}

/// Free-space convolution of a real field with a radial kernel.
inline RealArray convolve_radial_kernel(const GridPtr& grid, std::span<const double> f, const RadialKernel& kernel) {
    return convolver_for(grid, kernel)->apply(f);
}

/// Free-space convolution with the gradient of a radial kernel, one array per axis.
inline std::vector<RealArray> convolve_kernel_gradient(const GridPtr& grid, std::span<const double> f,
                                                       const RadialKernel& kernel) {
    std::vector<RealArray> out;
    for (int a = 0; a < grid->dim(); ++a) out.push_back(convolver_for(grid, kernel, a)->apply(f));
    return out;
}

} // namespace nlsys
