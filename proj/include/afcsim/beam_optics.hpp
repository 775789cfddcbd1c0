#pragma once

// Gaussian-beam geometry in the bulk crystal, waveguide mode overlap and the
// waveguide/bulk Rabi-frequency enhancement.

#include <afcsim/errors.hpp>
#include <afcsim/level_scheme.hpp>

#include <cmath>
#include <numbers>
#include <string>

namespace afcsim::beam {

struct BeamGeometry
{
    /// e^-2 intensity radius at the focus.
    double waist_um = 14.0;
    double wavelength_nm = 606.0;
    double refractive_index = 1.8;
    double length_mm = 10.0;
    /// Focus position measured from the input facet.
    double focus_mm = 0.0;

    void validate() const
    {
        if (!(waist_um > 0.0) || !(wavelength_nm > 0.0) || !(refractive_index > 0.0) || !(length_mm > 0.0) ||
            !(focus_mm >= 0.0)) {
            throw PhysicsError("beam geometry: waist, wavelength, index and length must be positive");
        }
    }

    /// z_R = pi w0^2 n / lambda.
    double rayleigh_mm() const
    {
        const double w0_mm = waist_um * 1e-3;
        return std::numbers::pi * w0_mm * w0_mm * refractive_index / (wavelength_nm * 1e-6);
    }
};

struct WaveguideMode
{
    double wx_um = 9.25;
    double wy_um = 7.9;
    /// Facet-to-facet transmission including coupling.
    double transmission = 0.5;

    void validate() const
    {
        if (!(wx_um > 0.0) || !(wy_um > 0.0)) {
            throw PhysicsError("waveguide mode: radii must be positive");
        }
        if (!(transmission > 0.0) || transmission > 1.0) {
            throw PhysicsError("waveguide mode: transmission must lie in (0, 1]");
        }
    }
};

inline double beam_radius(const BeamGeometry& g, double z_mm)
{
    g.validate();
    if (z_mm < 0.0 || z_mm > g.length_mm) {
        throw PhysicsError("beam_radius: z outside the crystal");
    }
    const double u = (z_mm - g.focus_mm) / g.rayleigh_mm();
    return g.waist_um * std::sqrt(1.0 + u * u);
}

/// Power coupling between a round input beam and a separable elliptical
/// mode, both centred with flat phase.
inline double mode_overlap(double input_radius_um, const WaveguideMode& m)
{
    if (!(input_radius_um > 0.0) || !(m.wx_um > 0.0) || !(m.wy_um > 0.0)) {
        throw PhysicsError("mode_overlap: radii must be positive");
    }
    const double w = input_radius_um;
    const double fx = 2.0 * w * m.wx_um / (w * w + m.wx_um * m.wx_um);
    const double fy = 2.0 * w * m.wy_um / (w * w + m.wy_um * m.wy_um);
    return fx * fy;
}

enum class Convention { field_average, intensity_average };

inline std::string to_string(Convention c)
{
    return c == Convention::field_average ? "field-average" : "intensity-average";
}

/// Longitudinal mean of 1/w(z) (field) or sqrt of the mean of 1/w(z)^2
/// (intensity) over the crystal, composite Simpson with `intervals` panels.
inline double bulk_figure(const BeamGeometry& g, Convention c, int intervals = 2000)
{
    g.validate();
    const int n = intervals + intervals % 2;
    const double h = g.length_mm / n;
    double sum = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double w = beam_radius(g, std::min(g.length_mm, i * h));
        const double f = c == Convention::field_average ? 1.0 / w : 1.0 / (w * w);
        const double coef = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        sum += coef * f;
    }
    const double mean = sum * h / 3.0 / g.length_mm;
    return c == Convention::field_average ? mean : std::sqrt(mean);
}

/// Rabi frequency per root power in the guide, relative units matching
/// bulk_figure.
inline double waveguide_figure(const WaveguideMode& m)
{
    m.validate();
    return std::sqrt(m.transmission) / std::sqrt(m.wx_um * m.wy_um);
}

inline double enhancement_factor(const BeamGeometry& g, const WaveguideMode& m, Convention c)
{
    return waveguide_figure(m) / bulk_figure(g, c);
}

/// Ratio of measured Rabi frequencies normalized to equal power.
inline double measured_slope_ratio(double rabi_wg, double power_wg_mw, double rabi_bulk, double power_bulk_mw)
{
    if (!(rabi_wg > 0.0) || !(rabi_bulk > 0.0) || !(power_wg_mw > 0.0) || !(power_bulk_mw > 0.0)) {
        throw PhysicsError("measured_slope_ratio: Rabi frequencies and powers must be positive");
    }
    return (rabi_wg / rabi_bulk) * std::sqrt(power_bulk_mw / power_wg_mw);
}

struct RabiCalibration
{
    double power_mw = 2.0;
    double rabi = two_pi * 1.6;
};

/// Omega = Omega_ref sqrt(P / P_ref).
inline double power_to_rabi(double power_mw, const RabiCalibration& cal = {})
{
    if (!(cal.power_mw > 0.0)) {
        throw PhysicsError("power_to_rabi: calibration power must be positive");
    }
    if (power_mw < 0.0) {
        throw PhysicsError("power_to_rabi: negative power");
    }
    return cal.rabi * std::sqrt(power_mw / cal.power_mw);
}

struct EnhancementReport
{
    double rayleigh_mm = 0.0;
    double facet_radius_um = 0.0;
    double overlap = 0.0;
    /// Transmission left after coupling, transmission / overlap.
    double implied_propagation = 0.0;
    double field_average = 0.0;
    double intensity_average = 0.0;
    double measured_slope = 0.0;
    /// Reference value quoted for comparison; depends on the averaging convention.
    double quoted_theory = 5.7;
};

inline EnhancementReport enhancement_report(const BeamGeometry& g = {}, const WaveguideMode& m = {},
                                            double rabi_wg = two_pi * 1.6, double power_wg_mw = 2.0,
                                            double rabi_bulk = two_pi * 0.69, double power_bulk_mw = 15.0)
{
    EnhancementReport r;
    r.rayleigh_mm = g.rayleigh_mm();
    r.facet_radius_um = beam_radius(g, 0.0);
    r.overlap = mode_overlap(r.facet_radius_um, m);
    r.implied_propagation = m.transmission / r.overlap;
    r.field_average = enhancement_factor(g, m, Convention::field_average);
    r.intensity_average = enhancement_factor(g, m, Convention::intensity_average);
    r.measured_slope = measured_slope_ratio(rabi_wg, power_wg_mw, rabi_bulk, power_bulk_mw);
    return r;
}

} // namespace afcsim::beam
