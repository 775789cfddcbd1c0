#pragma once

// Weak-pulse propagation as a linear spectral filter exp(-d/2 + i phi) with
// the dispersion phi fixed by causality.

#include <afcsim/errors.hpp>
#include <afcsim/fft.hpp>
#include <afcsim/pulse.hpp>
#include <afcsim/spectral_profile.hpp>
#include <afcsim/trace.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace afcsim::linear {

/// Smallest integer >= n whose only prime factors are 2, 3 and 5.
inline std::size_t good_fft_size(std::size_t n)
{
    for (std::size_t m = std::max<std::size_t>(n, 1);; ++m) {
        std::size_t r = m;
        for (std::size_t p : {2u, 3u, 5u}) {
            while (r % p == 0) {
                r /= p;
            }
        }
        if (r == 1) {
            return m;
        }
    }
}

struct KkOptions
{
    int pad_factor = 4;
    /// Fraction of the grid at each end covered by the raised-cosine taper.
    double taper_fraction = 0.05;
    /// Edge non-flatness tolerated before a warning, relative to max(1, peak OD).
    double edge_tolerance = 1e-3;
};

struct PhaseProfile
{
    DetuningGrid grid;
    std::vector<double> phase;
    std::vector<std::string> warnings;

    /// Linear interpolation inside the grid. Outside it the phase follows the
    /// 1/detuning tail of the Hilbert transform of a bounded-support profile.
    double at(double detuning_mhz) const
    {
        const double x = (detuning_mhz - grid.start_mhz) / grid.step_mhz;
        if (x <= 0.0) {
            return grid.start_mhz < 0.0 ? phase.front() * grid.start_mhz / detuning_mhz : phase.front();
        }
        const auto last = static_cast<double>(grid.size - 1);
        if (x >= last) {
            return grid.stop_mhz() > 0.0 ? phase.back() * grid.stop_mhz() / detuning_mhz : phase.back();
        }
        const auto i = static_cast<std::size_t>(x);
        const double f = x - static_cast<double>(i);
        return phase[i] * (1.0 - f) + phase[i + 1] * f;
    }
};

/// phi = -H[d/2] with H the Hilbert transform, computed spectrally on a
/// zero-padded grid after removing the edge baseline.
inline PhaseProfile kk_phase(const SpectralProfile& profile, const KkOptions& opt = {})
{
    profile.validate();
    if (opt.pad_factor < 4) {
        throw PhysicsError("kk_phase: pad factor must be at least 4");
    }
    const std::size_t n = profile.grid.size;
    const auto& d = profile.od;
    PhaseProfile out{profile.grid, std::vector<double>(n, 0.0), {}};

    const auto m = std::max<std::size_t>(1, static_cast<std::size_t>(opt.taper_fraction * static_cast<double>(n)));
    double dev = std::abs(d.front() - d.back());
    for (std::size_t i = 0; i < m && i < n; ++i) {
        dev = std::max(dev, std::abs(d[i] - d.front()));
        dev = std::max(dev, std::abs(d[n - 1 - i] - d.back()));
    }
    if (dev > opt.edge_tolerance * std::max(1.0, profile.max_od())) {
        std::ostringstream msg;
        msg << "kk_phase: profile not flat near the grid edges (deviation " << dev
            << " OD); dispersion may suffer wrap-around";
        out.warnings.push_back(msg.str());
    }

    const double baseline = 0.5 * (d.front() + d.back());
    const std::size_t len = good_fft_size(static_cast<std::size_t>(opt.pad_factor) * n);
    std::vector<cplx> sig(len, cplx{});
    for (std::size_t i = 0; i < n; ++i) {
        double w = 1.0;
        const std::size_t edge = std::min(i, n - 1 - i);
        if (edge < m) {
            w = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(edge) / static_cast<double>(m)));
        }
        sig[i] = 0.5 * (d[i] - baseline) * w;
    }
    // Hilbert multiplier -i sgn(k) in the conjugate domain
    fft_inplace(sig, FftDirection::forward);
    for (std::size_t k = 0; k < len; ++k) {
        if (k == 0 || 2 * k == len) {
            sig[k] = 0.0;
        } else if (k < (len + 1) / 2) {
            sig[k] *= cplx(0.0, -1.0);
        } else {
            sig[k] *= cplx(0.0, 1.0);
        }
    }
    fft_inplace(sig, FftDirection::backward);
    for (std::size_t i = 0; i < n; ++i) {
        out.phase[i] = -sig[i].real() / static_cast<double>(len);
    }
    return out;
}

struct LinearOptions
{
    /// Time before the pulse start included in the output.
    double pre_pad_us = 1.0;
    /// Time after the pulse end included in the output.
    double window_us = 12.5;
    KkOptions kk{};
    /// Largest fraction of pulse energy allowed outside the profile grid.
    double bandwidth_tolerance = 1e-4;
};

/// Output field of `pulse` after the medium; the trace time axis is the
/// pulse's own frame (t = 0 at its centre).
inline Trace propagate_linear(const PulseEnvelope& pulse, const SpectralProfile& profile,
                              const LinearOptions& opt = {}, std::vector<std::string>* warnings = nullptr)
{
    profile.validate();
    if (pulse.samples.empty()) {
        throw PhysicsError("propagate_linear: empty pulse");
    }
    if (!(opt.pre_pad_us >= 0.0) || !(opt.window_us >= 0.0)) {
        throw PhysicsError("propagate_linear: padding and window must be non-negative");
    }
    const double dt = pulse.dt_us();
    const double t0 = pulse.t0_us - opt.pre_pad_us;
    const auto n_out = static_cast<std::size_t>(std::ceil((pulse.t_end_us() + opt.window_us - t0) / dt - 1e-9)) + 1;
    // frequency resolution at least as fine as the profile grid
    const auto n_res = static_cast<std::size_t>(std::ceil(1.0 / (profile.grid.step_mhz * dt)));
    const std::size_t len = good_fft_size(std::max(n_out, n_res));

    std::vector<cplx> buf(len, cplx{});
    const auto offset = static_cast<std::size_t>(std::llround(opt.pre_pad_us / dt));
    for (std::size_t i = 0; i < pulse.samples.size() && offset + i < len; ++i) {
        buf[offset + i] = pulse.samples[i];
    }
    fft_inplace(buf, FftDirection::backward);

    double total = 0.0;
    double outside = 0.0;
    for (std::size_t k = 0; k < len; ++k) {
        const double f = fft_frequency(k, len, dt);
        const double e = std::norm(buf[k]);
        total += e;
        if (f < profile.grid.start_mhz || f > profile.grid.stop_mhz()) {
            outside += e;
        }
    }
    if (total > 0.0 && outside > opt.bandwidth_tolerance * total) {
        std::ostringstream msg;
        msg << "propagate_linear: pulse bandwidth exceeds the profile grid ["
            << profile.grid.start_mhz << ", " << profile.grid.stop_mhz() << "] MHz ("
            << 100.0 * outside / total << "% of the energy lies outside)";
        throw PhysicsError(msg.str());
    }

    const PhaseProfile phase = kk_phase(profile, opt.kk);
    if (warnings) {
        warnings->insert(warnings->end(), phase.warnings.begin(), phase.warnings.end());
    }
    for (std::size_t k = 0; k < len; ++k) {
        const double f = fft_frequency(k, len, dt);
        buf[k] *= std::exp(cplx(-0.5 * profile.od_at(f), phase.at(f)));
    }
    fft_inplace(buf, FftDirection::forward);

    std::vector<cplx> field(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        field[i] = buf[i] / static_cast<double>(len);
    }
    return Trace::from_field(t0, dt, std::move(field));
}

struct EchoMetrics
{
    double eta_afc = 0.0;
    /// Intensity centroid of the echo window, absolute trace time.
    std::optional<double> echo_time_us;
    /// Echo centroid relative to the centroid of the transmitted pulse.
    std::optional<double> storage_time_us;
    double transmitted_fraction = 0.0;
    bool has_echo = false;
};

/// Echo window energy of `output` over the pulse window energy of `reference`.
/// Windows are 3 input FWHM wide, centred at expected_time and 0.
inline EchoMetrics echo_metrics(const Trace& output, const Trace& reference, double expected_time_us,
                                double input_fwhm_us)
{
    if (output.size() != reference.size() || std::abs(output.dt_us - reference.dt_us) > 1e-12 ||
        std::abs(output.t0_us - reference.t0_us) > 1e-9) {
        throw PhysicsError("echo_metrics: output and reference must share the time grid");
    }
    if (!(input_fwhm_us > 0.0)) {
        throw PhysicsError("echo_metrics: input FWHM must be positive");
    }
    const double width = 3.0 * input_fwhm_us;
    const double ref_energy = window_energy(reference, 0.0, width);
    if (!(ref_energy > 0.0)) {
        throw PhysicsError("echo_metrics: reference pulse window carries no energy");
    }
    EchoMetrics m;
    m.eta_afc = window_energy(output, expected_time_us, width) / ref_energy;
    m.transmitted_fraction = window_energy(output, 0.0, width) / ref_energy;
    m.has_echo = window_has_peak(output, expected_time_us, width);
    m.echo_time_us = window_centroid(output, expected_time_us, width);
    if (m.echo_time_us) {
        const auto tc = window_centroid(output, 0.0, width);
        m.storage_time_us = *m.echo_time_us - tc.value_or(0.0);
    }
    return m;
}

} // namespace afcsim::linear
