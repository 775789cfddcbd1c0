#pragma once

#include <afcsim/errors.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <vector>

namespace afcsim {

/// Uniform detuning grid in MHz, relative to the probe carrier.
struct DetuningGrid
{
    double start_mhz = 0.0;
    double step_mhz = 0.01;
    std::size_t size = 0;

    double operator[](std::size_t i) const { return start_mhz + static_cast<double>(i) * step_mhz; }
    double stop_mhz() const { return (*this)[size - 1]; }
    double span_mhz() const { return step_mhz * static_cast<double>(size - 1); }

    /// Grid running over [-half_span, +half_span] with a bin at exactly 0.
    static DetuningGrid symmetric(double half_span_mhz = 25.0, double step_mhz = 0.01)
    {
        if (!(step_mhz > 0.0) || !(half_span_mhz > 0.0)) {
            throw PhysicsError("detuning grid: span and step must be positive");
        }
        const auto half = static_cast<std::size_t>(std::llround(half_span_mhz / step_mhz));
        return {-static_cast<double>(half) * step_mhz, step_mhz, 2 * half + 1};
    }

    /// Nearest bin index, clamped to the grid.
    std::size_t nearest(double detuning_mhz) const
    {
        const double x = std::round((detuning_mhz - start_mhz) / step_mhz);
        if (x <= 0.0) {
            return 0;
        }
        return std::min(size - 1, static_cast<std::size_t>(x));
    }

    bool operator==(const DetuningGrid&) const = default;

    void validate() const
    {
        if (size < 2 || !(step_mhz > 0.0) || !std::isfinite(start_mhz)) {
            throw PhysicsError("detuning grid: need at least two bins and a positive step");
        }
    }
};

/// Optical depth per detuning bin.
struct SpectralProfile
{
    DetuningGrid grid;
    std::vector<double> od;

    void validate() const
    {
        grid.validate();
        if (od.size() != grid.size) {
            throw PhysicsError("spectral profile: od size does not match grid");
        }
        for (double d : od) {
            if (!(d >= 0.0) || !std::isfinite(d)) {
                throw PhysicsError("spectral profile: od must be finite and non-negative");
            }
        }
    }

    double max_od() const { return od.empty() ? 0.0 : *std::max_element(od.begin(), od.end()); }

    /// Mean od over bins with |detuning - center| <= half_width.
    double mean_od(double center_mhz, double half_width_mhz) const
    {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < grid.size; ++i) {
            if (std::abs(grid[i] - center_mhz) <= half_width_mhz + 1e-9) {
                sum += od[i];
                ++n;
            }
        }
        return n ? sum / static_cast<double>(n) : 0.0;
    }

    /// Linear interpolation, clamped to the edge values outside the grid.
    double od_at(double detuning_mhz) const
    {
        const double x = (detuning_mhz - grid.start_mhz) / grid.step_mhz;
        if (x <= 0.0) {
            return od.front();
        }
        const auto last = static_cast<double>(grid.size - 1);
        if (x >= last) {
            return od.back();
        }
        const auto i = static_cast<std::size_t>(x);
        const double f = x - static_cast<double>(i);
        return od[i] * (1.0 - f) + od[i + 1] * f;
    }
};

inline SpectralProfile flat_profile(const DetuningGrid& grid, double od)
{
    return {grid, std::vector<double>(grid.size, od)};
}

/// Comb of Gaussian teeth on a flat background.
struct CombShape
{
    double delta_khz = 400.0;
    double tooth_fwhm_khz = 130.0;
    double tooth_od = 2.0;
    double bandwidth_mhz = 4.0;
    double background_od = 0.0;
    double center_mhz = 0.0;
};

inline SpectralProfile comb_profile(const DetuningGrid& grid, const CombShape& c)
{
    if (!(c.delta_khz > 0.0) || !(c.tooth_fwhm_khz > 0.0) || c.tooth_od < 0.0 ||
        c.bandwidth_mhz < 0.0 || c.background_od < 0.0) {
        throw PhysicsError("comb shape: spacing and tooth width must be positive, ods non-negative");
    }
    const double delta = c.delta_khz * 1e-3;
    const double sigma = c.tooth_fwhm_khz * 1e-3 / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const int kmax = static_cast<int>(std::floor(0.5 * c.bandwidth_mhz / delta + 1e-9));

    SpectralProfile p = flat_profile(grid, c.background_od);
    for (std::size_t i = 0; i < grid.size; ++i) {
        const double x = grid[i] - c.center_mhz;
        double sum = 0.0;
        for (int k = -kmax; k <= kmax; ++k) {
            const double u = (x - k * delta) / sigma;
            if (std::abs(u) < 40.0) {
                sum += std::exp(-0.5 * u * u);
            }
        }
        p.od[i] += c.tooth_od * sum;
    }
    return p;
}

/// Flat-topped absorption feature with smooth (tanh) edges added on top of
/// an existing profile.
inline void add_feature(SpectralProfile& p, double center_mhz, double width_mhz, double od,
                        double edge_mhz = 0.05)
{
    const double half = 0.5 * width_mhz;
    for (std::size_t i = 0; i < p.grid.size; ++i) {
        const double x = std::abs(p.grid[i] - center_mhz);
        p.od[i] += od * 0.5 * (1.0 - std::tanh((x - half) / edge_mhz));
    }
}

/// Convolution with a unit-area Lorentzian of the given FWHM (homogeneous
/// broadening). Beyond the grid the profile is continued by its edge values.
inline SpectralProfile lorentzian_broaden(const SpectralProfile& in, double fwhm_khz)
{
    if (!(fwhm_khz > 0.0)) {
        return in;
    }
    const double hw = 0.5 * fwhm_khz * 1e-3;
    const double step = in.grid.step_mhz;
    // kernel integrated over each bin so that narrow lines keep unit area
    const auto reach = static_cast<long>(std::ceil(std::max(200.0 * hw, 5.0 * step) / step));
    std::vector<double> kernel(2 * static_cast<std::size_t>(reach) + 1);
    for (long k = -reach; k <= reach; ++k) {
        const double a = (static_cast<double>(k) - 0.5) * step;
        const double b = (static_cast<double>(k) + 0.5) * step;
        kernel[static_cast<std::size_t>(k + reach)] =
            (std::atan(b / hw) - std::atan(a / hw)) / std::numbers::pi;
    }
    // mass of the truncated tails goes to the centre bin
    double total = 0.0;
    for (double v : kernel) {
        total += v;
    }
    kernel[static_cast<std::size_t>(reach)] += 1.0 - total;

    SpectralProfile out{in.grid, std::vector<double>(in.grid.size, 0.0)};
    const auto n = static_cast<long>(in.grid.size);
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        for (long k = -reach; k <= reach; ++k) {
            const long j = std::clamp(i - k, 0L, n - 1);
            acc += kernel[static_cast<std::size_t>(k + reach)] * in.od[static_cast<std::size_t>(j)];
        }
        out.od[static_cast<std::size_t>(i)] = std::max(0.0, acc);
    }
    return out;
}

} // namespace afcsim
