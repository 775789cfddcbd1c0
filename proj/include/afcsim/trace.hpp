#pragma once

#include <afcsim/errors.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <optional>
#include <vector>

namespace afcsim {

/// Uniformly sampled time series produced by the engines.
struct Trace
{
    double t0_us = 0.0;
    double dt_us = 0.002;
    std::vector<double> intensity;
    /// Present when the producer tracks the complex output field.
    std::vector<std::complex<double>> field;

    std::size_t size() const { return intensity.size(); }
    double time(std::size_t i) const { return t0_us + static_cast<double>(i) * dt_us; }
    bool has_field() const { return !field.empty(); }

    static Trace from_field(double t0_us, double dt_us, std::vector<std::complex<double>> field)
    {
        Trace t;
        t.t0_us = t0_us;
        t.dt_us = dt_us;
        t.intensity.resize(field.size());
        for (std::size_t i = 0; i < field.size(); ++i) {
            t.intensity[i] = std::norm(field[i]);
        }
        t.field = std::move(field);
        return t;
    }

    void validate() const
    {
        if (!(dt_us > 0.0)) {
            throw PhysicsError("trace: time step must be positive");
        }
        if (has_field() && field.size() != intensity.size()) {
            throw PhysicsError("trace: field and intensity sizes differ");
        }
        for (double v : intensity) {
            if (!(v >= 0.0) || !std::isfinite(v)) {
                throw PhysicsError("trace: intensity must be finite and non-negative");
            }
        }
    }
};

/// Sample range [first, last) with |t - centre| <= width/2.
struct WindowRange
{
    std::size_t first = 0;
    std::size_t last = 0;
    bool empty() const { return last <= first; }
};

inline WindowRange window_range(const Trace& tr, double centre_us, double width_us)
{
    WindowRange r;
    const double lo = centre_us - 0.5 * width_us;
    const double hi = centre_us + 0.5 * width_us;
    const double a = std::ceil((lo - tr.t0_us) / tr.dt_us - 1e-9);
    const double b = std::floor((hi - tr.t0_us) / tr.dt_us + 1e-9);
    const double n = static_cast<double>(tr.size());
    r.first = static_cast<std::size_t>(std::clamp(a, 0.0, n));
    r.last = static_cast<std::size_t>(std::clamp(b + 1.0, 0.0, n));
    return r;
}

/// Integrated intensity (rectangle rule) inside a window.
inline double window_energy(const Trace& tr, double centre_us, double width_us)
{
    const auto r = window_range(tr, centre_us, width_us);
    double e = 0.0;
    for (std::size_t i = r.first; i < r.last; ++i) {
        e += tr.intensity[i];
    }
    return e * tr.dt_us;
}

/// Intensity-weighted mean time inside a window; nullopt for an empty window.
inline std::optional<double> window_centroid(const Trace& tr, double centre_us, double width_us)
{
    const auto r = window_range(tr, centre_us, width_us);
    double w = 0.0;
    double wt = 0.0;
    for (std::size_t i = r.first; i < r.last; ++i) {
        w += tr.intensity[i];
        wt += tr.intensity[i] * tr.time(i);
    }
    if (!(w > 0.0)) {
        return std::nullopt;
    }
    return wt / w;
}

/// Whether the window holds a strict interior local maximum of intensity.
inline bool window_has_peak(const Trace& tr, double centre_us, double width_us)
{
    const auto r = window_range(tr, centre_us, width_us);
    for (std::size_t i = r.first + 1; i + 1 < r.last; ++i) {
        if (tr.intensity[i] > tr.intensity[i - 1] && tr.intensity[i] >= tr.intensity[i + 1] &&
            tr.intensity[i] > 0.0) {
            return true;
        }
    }
    return false;
}

} // namespace afcsim
