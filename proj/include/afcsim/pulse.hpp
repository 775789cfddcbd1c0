#pragma once

#include <afcsim/errors.hpp>
#include <afcsim/level_scheme.hpp>

#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace afcsim {

using cplx = std::complex<double>;

enum class PulseShape { gaussian, square, chirped_gaussian };

inline std::string to_string(PulseShape s)
{
    switch (s) {
    case PulseShape::gaussian: return "gaussian";
    case PulseShape::square: return "square";
    case PulseShape::chirped_gaussian: return "chirped-gaussian";
    }
    return "?";
}

/// Sampled complex envelope of a pulse in its own time frame (t = 0 at the
/// pulse centre). Samples are Rabi frequencies in rad/us and already carry
/// the carrier detuning and chirp phase, with the convention that a
/// component exp(-i 2 pi f t) sits at detuning +f.
struct PulseEnvelope
{
    double dt_ns = 1.0;
    double t0_us = 0.0;
    std::vector<cplx> samples;
    double carrier_mhz = 0.0;
    PulseShape shape = PulseShape::gaussian;
    double fwhm_ns = 0.0;
    double chirp_mhz = 0.0;
    double peak_rabi = 0.0;

    double dt_us() const { return dt_ns * 1e-3; }
    double time(std::size_t i) const { return t0_us + static_cast<double>(i) * dt_us(); }
    double t_end_us() const { return samples.empty() ? t0_us : time(samples.size() - 1); }

    /// Piecewise-linear interpolation between samples, zero outside.
    cplx at(double t_us) const
    {
        if (samples.empty()) {
            return {};
        }
        const double x = (t_us - t0_us) / dt_us();
        const auto last = static_cast<double>(samples.size() - 1);
        constexpr double eps = 1e-9;
        if (x < -eps || x > last + eps) {
            return {};
        }
        if (x <= 0.0) {
            return samples.front();
        }
        if (x >= last) {
            return samples.back();
        }
        const auto i = static_cast<std::size_t>(x);
        const double f = x - static_cast<double>(i);
        return samples[i] * (1.0 - f) + samples[i + 1] * f;
    }

    /// Trapezoidal integral of |amplitude|, i.e. the pulse area for a real
    /// envelope.
    double area() const
    {
        double a = 0.0;
        for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
            a += 0.5 * (std::abs(samples[i]) + std::abs(samples[i + 1])) * dt_us();
        }
        return a;
    }

    /// Integral of |amplitude|^2 over time (trapezoidal).
    double energy() const
    {
        double e = 0.0;
        for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
            e += 0.5 * (std::norm(samples[i]) + std::norm(samples[i + 1])) * dt_us();
        }
        return e;
    }
};

struct PulseParams
{
    PulseShape shape = PulseShape::gaussian;
    /// Intensity FWHM for gaussian shapes, full duration for square.
    double fwhm_ns = 345.0;
    double peak_rabi = 1.0;
    double carrier_mhz = 0.0;
    /// Total span of the linear frequency sweep (chirped-gaussian only).
    double chirp_mhz = 0.0;
    double dt_ns = 1.0;
    /// Gaussian support is +-truncation * FWHM around the centre.
    double truncation = 2.0;
};

inline PulseEnvelope build_pulse(const PulseParams& p)
{
    if (!(p.fwhm_ns > 0.0)) {
        throw PhysicsError("build_pulse: duration must be positive");
    }
    if (!(p.dt_ns > 0.0) || !(p.truncation > 0.0)) {
        throw PhysicsError("build_pulse: sample period and truncation must be positive");
    }
    const bool chirped = p.shape == PulseShape::chirped_gaussian;
    const double chirp = chirped ? p.chirp_mhz : 0.0;
    const double max_freq = std::abs(p.carrier_mhz) + 0.5 * std::abs(chirp);
    if (max_freq > 0.0) {
        // at least 8 samples per cycle of the highest instantaneous frequency
        const double required_rate_mhz = 8.0 * max_freq;
        if (1e3 / p.dt_ns < required_rate_mhz * (1.0 - 1e-12)) {
            std::ostringstream msg;
            msg << "build_pulse: undersampled chirp, sample rate " << 1e3 / p.dt_ns
                << " MHz is below the required " << required_rate_mhz << " MHz (dt <= "
                << 1e3 / required_rate_mhz << " ns)";
            throw PhysicsError(msg.str());
        }
    }

    PulseEnvelope env;
    env.dt_ns = p.dt_ns;
    env.shape = p.shape;
    env.fwhm_ns = p.fwhm_ns;
    env.chirp_mhz = chirp;
    env.carrier_mhz = p.carrier_mhz;
    env.peak_rabi = p.peak_rabi;

    const double dt = p.dt_ns * 1e-3;
    const double fwhm = p.fwhm_ns * 1e-3;
    if (p.shape == PulseShape::square) {
        const auto n = static_cast<std::size_t>(std::llround(fwhm / dt));
        if (n == 0) {
            throw PhysicsError("build_pulse: square pulse shorter than one sample");
        }
        env.t0_us = -0.5 * static_cast<double>(n) * dt;
        env.samples.resize(n + 1);
        for (std::size_t i = 0; i <= n; ++i) {
            const double t = env.time(i);
            env.samples[i] = p.peak_rabi * std::exp(cplx(0.0, -two_pi * p.carrier_mhz * t));
        }
        return env;
    }

    const auto half = static_cast<std::size_t>(std::ceil(p.truncation * fwhm / dt));
    const double support = 2.0 * static_cast<double>(half) * dt;
    const double rate = chirp / support; // MHz per us
    env.t0_us = -static_cast<double>(half) * dt;
    env.samples.resize(2 * half + 1);
    const double a = 2.0 * std::numbers::ln2 / (fwhm * fwhm);
    for (std::size_t i = 0; i < env.samples.size(); ++i) {
        const double t = env.time(i);
        const double phase = -two_pi * (p.carrier_mhz * t + 0.5 * rate * t * t);
        env.samples[i] = p.peak_rabi * std::exp(-a * t * t) * std::exp(cplx(0.0, phase));
    }
    return env;
}

/// Instantaneous frequency (MHz) between consecutive samples, from the
/// unwrapped phase difference.
inline std::vector<double> instantaneous_frequency(const PulseEnvelope& env)
{
    std::vector<double> f;
    for (std::size_t i = 0; i + 1 < env.samples.size(); ++i) {
        const double dphi = std::arg(env.samples[i + 1] * std::conj(env.samples[i]));
        f.push_back(-dphi / (two_pi * env.dt_us()));
    }
    return f;
}

} // namespace afcsim
