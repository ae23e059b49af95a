#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <fftw3.h>

#include "nlsys/errors.hpp"

namespace nlsys {

using cplx = std::complex<double>;
using RealArray = std::vector<double>;
using Vec3 = std::array<double, 3>;

/**
 * Periodic box [-L, L)^d sampled with M points per axis.
 *
 * Point i along an axis sits at x_i = -L + i*h with h = 2L/M. Wavenumbers are
 * k_j = (pi/L) * j for j in [-M/2, M/2), stored in FFT order.
 */
struct GridSpec {
    int dim = 1;
    int points = 256;
    double half_width = 16.0;

    double spacing() const { return 2.0 * half_width / points; }
    double cell_volume() const { return std::pow(spacing(), dim); }
    double box_volume() const { return std::pow(2.0 * half_width, dim); }

    std::size_t size() const {
        std::size_t n = 1;
        for (int a = 0; a < dim; ++a) n *= static_cast<std::size_t>(points);
        return n;
    }

    void validate() const {
        std::ostringstream problems;
        if (dim < 1 || dim > 3) problems << "dimension must be 1, 2 or 3 (got " << dim << "); ";
        if (points < 8 || points % 2 != 0)
            problems << "points per axis must be even and >= 8 (got " << points << "); ";
        if (!(half_width > 0.0) || !std::isfinite(half_width))
            problems << "box half-width must be positive (got " << half_width << "); ";
        if (!problems.str().empty()) throw UsageError("invalid grid: " + problems.str());
    }

    bool operator==(const GridSpec&) const = default;
};

namespace detail {

inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}

/// Smallest integer >= n whose only prime factors are 2, 3, 5 and 7, and which is even.
inline int fft_friendly_even(int n) {
    for (int m = std::max(n, 2);; ++m) {
        if (m % 2 != 0) continue;
        int r = m;
        for (int p : {2, 3, 5, 7})
            while (r % p == 0) r /= p;
        if (r == 1) return m;
    }
}

} // namespace detail

/// In-place complex DFT plans for a fixed row-major shape. Execution is thread safe.
class FftPlan {
public:
    explicit FftPlan(std::vector<int> shape) : shape_(std::move(shape)) {
        size_ = 1;
        for (int n : shape_) size_ *= static_cast<std::size_t>(n);
        std::lock_guard lock(detail::fftw_planner_mutex());
        auto* scratch = fftw_alloc_complex(size_);
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        const int rank = static_cast<int>(shape_.size());
        forward_ = fftw_plan_dft(rank, shape_.data(), scratch, scratch, FFTW_FORWARD, flags);
        backward_ = fftw_plan_dft(rank, shape_.data(), scratch, scratch, FFTW_BACKWARD, flags);
        fftw_free(scratch);
        if (!forward_ || !backward_) throw NumericalError("FFTW failed to create a plan");
    }

    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    ~FftPlan() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(forward_);
        fftw_destroy_plan(backward_);
    }

    std::size_t size() const { return size_; }
    const std::vector<int>& shape() const { return shape_; }

    /// Unnormalized forward transform, sum_j f_j exp(-2 pi i n j / M).
    void forward(std::span<cplx> data) const { execute(forward_, data); }
    /// Unnormalized backward transform, sum_n f_n exp(+2 pi i n j / M).
    void backward(std::span<cplx> data) const { execute(backward_, data); }

private:
    void execute(fftw_plan plan, std::span<cplx> data) const {
        if (data.size() != size_) throw UsageError("FFT buffer has wrong length");
        auto* p = reinterpret_cast<fftw_complex*>(data.data());
        fftw_execute_dft(plan, p, p);
    }

    std::vector<int> shape_;
    std::size_t size_ = 0;
    fftw_plan forward_ = nullptr;
    fftw_plan backward_ = nullptr;
};

class FreeSpaceConvolver;

/**
 * Immutable periodic grid with wavenumber tables and transform plans.
 *
 * Shared between fields via std::shared_ptr<const Grid>. Convolution kernels
 * built for this grid are cached internally; the cache is mutex protected so
 * a Grid may be shared across threads.
 */
class Grid {
public:
    static std::shared_ptr<const Grid> create(const GridSpec& spec) {
        spec.validate();
        return std::shared_ptr<const Grid>(new Grid(spec));
    }

    const GridSpec& spec() const { return spec_; }
    int dim() const { return spec_.dim; }
    int points() const { return spec_.points; }
    double half_width() const { return spec_.half_width; }
    double spacing() const { return spec_.spacing(); }
    double cell_volume() const { return spec_.cell_volume(); }
    double box_volume() const { return spec_.box_volume(); }
    std::size_t size() const { return size_; }

    /// Wavenumbers along one axis in FFT order: index m maps to (pi/L) * (m < M/2 ? m : m - M).
    const std::vector<double>& wavenumbers() const { return k_; }
    /// Signed mode number for FFT-order index m.
    int mode(int m) const { return m < spec_.points / 2 ? m : m - spec_.points; }
    double coordinate(int i) const { return -spec_.half_width + i * spacing(); }

    std::array<int, 3> unravel(std::size_t flat) const {
        std::array<int, 3> idx{0, 0, 0};
        const auto m = static_cast<std::size_t>(spec_.points);
        for (int a = spec_.dim - 1; a >= 0; --a) {
            idx[static_cast<std::size_t>(a)] = static_cast<int>(flat % m);
            flat /= m;
        }
        return idx;
    }

    std::size_t ravel(const std::array<int, 3>& idx) const {
        std::size_t flat = 0;
        for (int a = 0; a < spec_.dim; ++a) flat = flat * static_cast<std::size_t>(spec_.points) + static_cast<std::size_t>(idx[static_cast<std::size_t>(a)]);
        return flat;
    }

    Vec3 position(std::size_t flat) const {
        auto idx = unravel(flat);
        Vec3 x{0.0, 0.0, 0.0};
        for (int a = 0; a < spec_.dim; ++a) x[static_cast<std::size_t>(a)] = coordinate(idx[static_cast<std::size_t>(a)]);
        return x;
    }

    Vec3 wavevector(std::size_t flat) const {
        auto idx = unravel(flat);
        Vec3 k{0.0, 0.0, 0.0};
        for (int a = 0; a < spec_.dim; ++a) k[static_cast<std::size_t>(a)] = k_[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
        return k;
    }

    double wavenumber_squared(std::size_t flat) const { return k2_[flat]; }
    const std::vector<double>& wavenumber_squared_table() const { return k2_; }

    /**
     * Spectral coefficients with the DC coefficient equal to the field mean:
     * fhat(k) = M^{-d} sum_j f(x_j) exp(-i k.x_j), using physical positions x_j.
     */
    void forward(std::span<const cplx> in, std::span<cplx> out) const {
        std::copy(in.begin(), in.end(), out.begin());
        plan_->forward(out);
        const double norm = 1.0 / static_cast<double>(size_);
        for (std::size_t j = 0; j < size_; ++j) out[j] *= sign_[j] * norm;
    }

    /// Inverse of forward(): f(x_j) = sum_k fhat(k) exp(i k.x_j).
    void inverse(std::span<const cplx> in, std::span<cplx> out) const {
        for (std::size_t j = 0; j < size_; ++j) out[j] = in[j] * sign_[j];
        plan_->backward(out);
    }

    /// True when the mode at `flat` is the Nyquist mode along axis a.
    bool is_nyquist(std::size_t flat, int axis) const {
        return unravel(flat)[static_cast<std::size_t>(axis)] == spec_.points / 2;
    }

    std::shared_ptr<const FreeSpaceConvolver> cached_convolver(const std::string& key,
        const std::function<std::shared_ptr<const FreeSpaceConvolver>()>& build) const {
        {
            std::lock_guard lock(cache_mutex_);
            if (auto it = cache_.find(key); it != cache_.end()) return it->second;
        }
        auto made = build();
        std::lock_guard lock(cache_mutex_);
        return cache_.emplace(key, std::move(made)).first->second;
    }

private:
    explicit Grid(const GridSpec& spec) : spec_(spec), size_(spec.size()) {
        const int m = spec_.points;
        k_.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i)
            k_[static_cast<std::size_t>(i)] = std::numbers::pi / spec_.half_width * mode(i);
        plan_ = std::make_unique<FftPlan>(std::vector<int>(static_cast<std::size_t>(spec_.dim), m));
        sign_.resize(size_);
        k2_.resize(size_);
        for (std::size_t j = 0; j < size_; ++j) {
            auto idx = unravel(j);
            int parity = 0;
            double k2 = 0.0;
            for (int a = 0; a < spec_.dim; ++a) {
                parity += idx[static_cast<std::size_t>(a)];
                const double ka = k_[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
                k2 += ka * ka;
            }
            // exp(-i k x_j) with x_j = -L + j h picks up (-1)^mode relative to the raw DFT.
            sign_[j] = (parity % 2 == 0) ? 1.0 : -1.0;
            k2_[j] = k2;
        }
    }

    GridSpec spec_;
    std::size_t size_;
    std::vector<double> k_;
    std::vector<double> k2_;
    std::vector<double> sign_;
    std::unique_ptr<FftPlan> plan_;
    mutable std::mutex cache_mutex_;
    mutable std::map<std::string, std::shared_ptr<const FreeSpaceConvolver>> cache_;
};

using GridPtr = std::shared_ptr<const Grid>;

enum class Representation { physical, spectral };

/// Complex scalar field of length M^d tied to a grid, tagged with its representation.
class ScalarField {
public:
    ScalarField() = default;

    explicit ScalarField(GridPtr grid, Representation rep = Representation::physical)
        : grid_(std::move(grid)), values_(grid_->size(), cplx{0.0, 0.0}), rep_(rep) {}

    ScalarField(GridPtr grid, std::vector<cplx> values, Representation rep = Representation::physical)
        : grid_(std::move(grid)), values_(std::move(values)), rep_(rep) {
        if (values_.size() != grid_->size()) throw UsageError("field length does not match grid size");
    }

    template <class F>
    static ScalarField from_function(GridPtr grid, F&& f) {
        ScalarField out(grid);
        for (std::size_t j = 0; j < grid->size(); ++j) out.values_[j] = cplx(f(grid->position(j)));
        return out;
    }

    const GridPtr& grid() const { return grid_; }
    Representation representation() const { return rep_; }
    bool is_physical() const { return rep_ == Representation::physical; }
    std::size_t size() const { return values_.size(); }

    cplx& operator[](std::size_t i) { return values_[i]; }
    const cplx& operator[](std::size_t i) const { return values_[i]; }
    std::span<cplx> values() { return values_; }
    std::span<const cplx> values() const { return values_; }
    std::vector<cplx>& data() { return values_; }
    const std::vector<cplx>& data() const { return values_; }

private:
    GridPtr grid_;
    std::vector<cplx> values_;
    Representation rep_ = Representation::physical;
};

inline ScalarField forward_transform(const ScalarField& f) {
    if (!f.is_physical()) throw UsageError("forward_transform expects a physical-space field");
    ScalarField out(f.grid(), Representation::spectral);
    f.grid()->forward(f.values(), out.values());
    return out;
}

inline ScalarField inverse_transform(const ScalarField& f) {
    if (f.is_physical()) throw UsageError("inverse_transform expects a spectral-space field");
    ScalarField out(f.grid(), Representation::physical);
    f.grid()->inverse(f.values(), out.values());
    return out;
}

inline ScalarField to_spectral(const ScalarField& f) { return f.is_physical() ? forward_transform(f) : f; }
inline ScalarField to_physical(const ScalarField& f) { return f.is_physical() ? f : inverse_transform(f); }

/// Spectral multiplier m(k); k is padded with zeros beyond the grid dimension.
using Multiplier = std::function<cplx(const Vec3& k)>;

/**
 * Pointwise multiplication by m(k) in spectral space. The output keeps the
 * representation of the input. Non-finite multiplier values are rejected.
 */
inline ScalarField apply_multiplier(const ScalarField& f, const Multiplier& m) {
    const auto& grid = *f.grid();
    ScalarField hat = to_spectral(f);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const Vec3 k = grid.wavevector(j);
        const cplx v = m(k);
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            std::ostringstream msg;
            msg << "multiplier is not finite at k = (" << k[0];
            for (int a = 1; a < grid.dim(); ++a) msg << ", " << k[static_cast<std::size_t>(a)];
            msg << ")";
            throw UsageError(msg.str());
        }
        hat[j] *= v;
    }
    return f.is_physical() ? inverse_transform(hat) : hat;
}

/// Component a of the result is the inverse transform of i k_a fhat; Nyquist modes are dropped.
inline std::vector<ScalarField> spectral_gradient(const ScalarField& f) {
    const auto& grid = *f.grid();
    const ScalarField hat = to_spectral(f);
    std::vector<ScalarField> out;
    out.reserve(static_cast<std::size_t>(grid.dim()));
    for (int a = 0; a < grid.dim(); ++a) {
        ScalarField d(f.grid(), Representation::spectral);
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const auto idx = grid.unravel(j)[static_cast<std::size_t>(a)];
            if (idx == grid.points() / 2) continue;
            d[j] = cplx(0.0, grid.wavenumbers()[static_cast<std::size_t>(idx)]) * hat[j];
        }
        out.push_back(inverse_transform(d));
    }
    return out;
}

/// Real-valued array promoted to a physical complex field.
inline ScalarField real_field(GridPtr grid, std::span<const double> values) {
    ScalarField f(std::move(grid));
    if (values.size() != f.size()) throw UsageError("array length does not match grid size");
    for (std::size_t j = 0; j < f.size(); ++j) f[j] = values[j];
    return f;
}

inline RealArray real_part(const ScalarField& f) {
    RealArray out(f.size());
    for (std::size_t j = 0; j < f.size(); ++j) out[j] = f[j].real();
    return out;
}

/// h^d * sum_j f_j g_j.
inline double inner(const Grid& grid, std::span<const double> f, std::span<const double> g) {
    double s = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) s += f[j] * g[j];
    return s * grid.cell_volume();
}

inline double integrate(const Grid& grid, std::span<const double> f) {
    double s = 0.0;
    for (double v : f) s += v;
    return s * grid.cell_volume();
}

/// Squared L2 norm from spectral coefficients: (2L)^d sum |fhat|^2.
inline double spectral_norm_squared(const ScalarField& hat) {
    if (hat.is_physical()) throw UsageError("spectral_norm_squared expects spectral coefficients");
    double s = 0.0;
    for (const auto& c : hat.values()) s += std::norm(c);
    return s * hat.grid()->box_volume();
}

/// Squared L2 norm by grid quadrature.
inline double physical_norm_squared(const ScalarField& f) {
    if (!f.is_physical()) throw UsageError("physical_norm_squared expects a physical-space field");
    double s = 0.0;
    for (const auto& c : f.values()) s += std::norm(c);
    return s * f.grid()->cell_volume();
}

/// ||f||_{H^1}^2 = (2L)^d sum_k (1 + |k|^2) |fhat(k)|^2.
inline double h1_norm_squared(const ScalarField& f) {
    const ScalarField hat = to_spectral(f);
    const auto& k2 = f.grid()->wavenumber_squared_table();
    double s = 0.0;
    for (std::size_t j = 0; j < hat.size(); ++j) s += (1.0 + k2[j]) * std::norm(hat[j]);
    return s * f.grid()->box_volume();
}

/// Dirichlet energy int |grad f|^2 computed spectrally.
inline double gradient_norm_squared(const ScalarField& f) {
    const ScalarField hat = to_spectral(f);
    const auto& k2 = f.grid()->wavenumber_squared_table();
    double s = 0.0;
    for (std::size_t j = 0; j < hat.size(); ++j) s += k2[j] * std::norm(hat[j]);
    return s * f.grid()->box_volume();
}

} // namespace nlsys
