#pragma once

// Time-domain ensemble integration of the optical Bloch equations (two-level
// and Lambda) with forward emission through a chain of thin slabs.
//
// Units: time in us, detunings in MHz (angular 2*pi*MHz = rad/us), Rabi
// frequencies in rad/us. A field component exp(-i 2 pi f t) is resonant with
// atoms at detuning +f.

#include <afcsim/errors.hpp>
#include <afcsim/level_scheme.hpp>
#include <afcsim/parallel.hpp>
#include <afcsim/pulse.hpp>
#include <afcsim/spectral_profile.hpp>
#include <afcsim/trace.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace afcsim::bloch {

enum class Mode { two_level, lambda };
enum class PulseRole { input, refocus, control, probe };

inline std::string to_string(PulseRole r)
{
    switch (r) {
    case PulseRole::input: return "input";
    case PulseRole::refocus: return "refocus";
    case PulseRole::control: return "control";
    case PulseRole::probe: return "probe";
    }
    return "?";
}

/// A pulse placed on the absolute time axis; `start_us` is the time of its
/// first sample. Control pulses drive the s-e transition in Lambda mode, all
/// other roles drive g-e.
struct ScheduledPulse
{
    double start_us = 0.0;
    PulseEnvelope envelope;
    PulseRole role = PulseRole::input;

    double end_us() const { return start_us + (envelope.t_end_us() - envelope.t0_us); }
    double center_us() const { return start_us - envelope.t0_us; }
    cplx at(double t_us) const { return envelope.at(t_us - start_us + envelope.t0_us); }

    static ScheduledPulse centered(double center_us, PulseEnvelope env, PulseRole role)
    {
        const double start = center_us + env.t0_us;
        return {start, std::move(env), role};
    }
};

struct PulseSequence
{
    std::vector<ScheduledPulse> pulses;
    /// Permits overlapping envelopes (e.g. a control pulse during an input).
    bool allow_overlap = false;

    void validate() const
    {
        for (std::size_t i = 1; i < pulses.size(); ++i) {
            if (pulses[i].start_us < pulses[i - 1].start_us) {
                throw PhysicsError("pulse sequence: start times must be ascending");
            }
            if (!allow_overlap && pulses[i].start_us < pulses[i - 1].end_us() - 1e-9) {
                std::ostringstream msg;
                msg << "pulse sequence: pulse " << i << " (" << to_string(pulses[i].role)
                    << ") overlaps the previous envelope";
                throw PhysicsError(msg.str());
            }
        }
    }
};

/// Relative Rabi frequency and power fraction of one transverse annulus.
struct Annulus
{
    double relative_rabi = 1.0;
    double weight = 1.0;
};

/// Equal-power annuli of a Gaussian beam: relative Rabi frequency at the
/// power midpoint of each annulus, sqrt((k + 1/2)/n).
inline std::vector<Annulus> gaussian_annuli(int n = 8)
{
    if (n < 1) {
        throw PhysicsError("gaussian_annuli: need at least one annulus");
    }
    std::vector<Annulus> out;
    for (int k = 0; k < n; ++k) {
        out.push_back({std::sqrt((k + 0.5) / n), 1.0 / n});
    }
    return out;
}

struct EnsembleSpec
{
    std::vector<double> optical_detuning_mhz{0.0};
    std::vector<double> optical_weight{1.0};
    /// Sum of OD * bin width over the optical grid, in OD * MHz.
    double od_integral_mhz = 0.0;
    std::vector<double> spin_detuning_mhz{0.0};
    std::vector<double> spin_weight{1.0};
    double t1_us = std::numeric_limits<double>::infinity();
    double t2_us = std::numeric_limits<double>::infinity();
    /// Dephasing time of the spin coherence beyond the spin grid.
    double t2_spin_us = std::numeric_limits<double>::infinity();
    /// Excited-state decay fraction into g (Lambda mode; the rest goes to s).
    double branching_g = 0.5;
    std::vector<Annulus> annuli{Annulus{}};
    int slabs = 10;

    void validate() const
    {
        auto check_weights = [](const std::vector<double>& w, const std::vector<double>& d, const char* what) {
            if (w.empty() || w.size() != d.size()) {
                throw PhysicsError(std::string("ensemble: ") + what + " grid and weights differ in size");
            }
            double s = 0.0;
            for (double v : w) {
                if (!(v >= 0.0)) {
                    throw PhysicsError(std::string("ensemble: negative ") + what + " weight");
                }
                s += v;
            }
            if (std::abs(s - 1.0) > 1e-9) {
                std::ostringstream msg;
                msg << "ensemble: " << what << " weights sum to " << s << ", must be normalized to 1";
                throw PhysicsError(msg.str());
            }
        };
        check_weights(optical_weight, optical_detuning_mhz, "optical");
        check_weights(spin_weight, spin_detuning_mhz, "spin");
        std::vector<double> aw;
        std::vector<double> ar;
        for (const auto& a : annuli) {
            if (!(a.relative_rabi > 0.0) || a.relative_rabi > 1.0) {
                throw PhysicsError("ensemble: relative Rabi frequency must lie in (0, 1]");
            }
            aw.push_back(a.weight);
            ar.push_back(a.relative_rabi);
        }
        check_weights(aw, ar, "annulus");
        if (slabs < 1) {
            throw PhysicsError("ensemble: slab count must be at least 1");
        }
        if (!(od_integral_mhz >= 0.0) || !(t1_us > 0.0) || !(t2_us > 0.0) || !(t2_spin_us > 0.0)) {
            throw PhysicsError("ensemble: OD integral must be non-negative and decay times positive");
        }
        if (!(branching_g >= 0.0 && branching_g <= 1.0)) {
            throw PhysicsError("ensemble: branching must lie in [0, 1]");
        }
    }

    /// Optical grid and weights taken from a profile; bins below
    /// `floor_fraction` of the peak OD are dropped.
    static EnsembleSpec from_profile(const SpectralProfile& p, double floor_fraction = 0.0)
    {
        p.validate();
        EnsembleSpec e;
        e.optical_detuning_mhz.clear();
        e.optical_weight.clear();
        const double floor = floor_fraction * p.max_od();
        double total = 0.0;
        for (std::size_t i = 0; i < p.grid.size; ++i) {
            if (p.od[i] > floor && p.od[i] > 0.0) {
                e.optical_detuning_mhz.push_back(p.grid[i]);
                e.optical_weight.push_back(p.od[i]);
                total += p.od[i];
            }
        }
        if (!(total > 0.0)) {
            e.optical_detuning_mhz = {0.0};
            e.optical_weight = {1.0};
            e.od_integral_mhz = 0.0;
            return e;
        }
        for (double& w : e.optical_weight) {
            w /= total;
        }
        e.od_integral_mhz = total * p.grid.step_mhz;
        return e;
    }

    /// Gaussian spin grid of `points` points over +-2.5 FWHM.
    void set_gaussian_spin(double fwhm_khz, int points = 21)
    {
        spin_detuning_mhz.clear();
        spin_weight.clear();
        if (!(fwhm_khz > 0.0) || points <= 1) {
            spin_detuning_mhz = {0.0};
            spin_weight = {1.0};
            return;
        }
        const double fwhm = fwhm_khz * 1e-3;
        const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
        double total = 0.0;
        for (int i = 0; i < points; ++i) {
            const double x = -2.5 * fwhm + 5.0 * fwhm * i / (points - 1);
            const double w = std::exp(-0.5 * x * x / (sigma * sigma));
            spin_detuning_mhz.push_back(x);
            spin_weight.push_back(w);
            total += w;
        }
        for (double& w : spin_weight) {
            w /= total;
        }
    }
};

struct EngineOptions
{
    double dt_ns = 2.0;
    /// Simulation window; when t_end <= t_start it is derived from the sequence.
    double t_start_us = 0.0;
    double t_end_us = 0.0;
    /// Extra time after the last pulse for an automatic window.
    double tail_us = 3.0;
    /// Midpoint (two-stage) slab update; false gives the explicit Euler chain.
    bool midpoint = true;
    int threads = 1;
    std::size_t chunks = 64;
    /// Density matrices are checked every `diag_stride` steps.
    int diag_stride = 16;
};

struct Diagnostics
{
    double max_trace_error = 0.0;
    double min_population = 1.0;
    double max_population = 0.0;
    double min_eigenvalue = 0.0;
    /// Weighted mean populations (g, s, e) at the end of the window in the
    /// first slab, for the first annulus.
    std::array<double, 3> final_populations{1.0, 0.0, 0.0};
    std::size_t steps = 0;
    std::size_t cells = 0;

    void merge(const Diagnostics& o)
    {
        max_trace_error = std::max(max_trace_error, o.max_trace_error);
        min_population = std::min(min_population, o.min_population);
        max_population = std::max(max_population, o.max_population);
        min_eigenvalue = std::min(min_eigenvalue, o.min_eigenvalue);
    }
};

struct EvolveResult
{
    Trace trace;
    Diagnostics diagnostics;
};

namespace detail {

struct Rates
{
    double g1 = 0.0;
    double g2 = 0.0;
    double gs = 0.0;
    double bg = 0.5;
};

/// Two-level state: populations gg, ee and coherence eg.
struct TwoLevel
{
    double gg = 1.0;
    double ee = 0.0;
    double re = 0.0;
    double im = 0.0;
};

inline TwoLevel deriv(const TwoLevel& s, double om_r, double om_i, double delta, const Rates& r)
{
    // Im(conj(Omega) rho_eg)
    const double im_term = om_r * s.im - om_i * s.re;
    const double w = s.gg - s.ee;
    TwoLevel d;
    d.ee = im_term - r.g1 * s.ee;
    d.gg = -im_term + r.g1 * s.ee;
    d.re = delta * s.im - r.g2 * s.re - 0.5 * om_i * w;
    d.im = -delta * s.re - r.g2 * s.im + 0.5 * om_r * w;
    return d;
}

inline TwoLevel axpy(const TwoLevel& s, double h, const TwoLevel& d)
{
    return {s.gg + h * d.gg, s.ee + h * d.ee, s.re + h * d.re, s.im + h * d.im};
}

/// Lambda state: populations gg, ss, ee; coherences eg, es, sg as (re, im).
struct Lambda
{
    double gg = 1.0;
    double ss = 0.0;
    double ee = 0.0;
    double eg_r = 0.0, eg_i = 0.0;
    double es_r = 0.0, es_i = 0.0;
    double sg_r = 0.0, sg_i = 0.0;
};

/// Probe half-Rabi a = Omega_p/2, control half-Rabi c = Omega_c/2.
inline Lambda deriv(const Lambda& s, double ar, double ai, double cr, double ci, double delta, double delta_s,
                    const Rates& r)
{
    Lambda d;
    // Im(conj(a) rho_eg), Im(conj(c) rho_es)
    const double ia = ar * s.eg_i - ai * s.eg_r;
    const double ic = cr * s.es_i - ci * s.es_r;
    d.gg = -2.0 * ia + r.g1 * r.bg * s.ee;
    d.ss = -2.0 * ic + r.g1 * (1.0 - r.bg) * s.ee;
    d.ee = 2.0 * ia + 2.0 * ic - r.g1 * s.ee;

    // rho_eg' = -i D rho_eg + i a (gg - ee) + i c rho_sg - g2 rho_eg
    const double wg = s.gg - s.ee;
    d.eg_r = delta * s.eg_i - ai * wg - (cr * s.sg_i + ci * s.sg_r) - r.g2 * s.eg_r;
    d.eg_i = -delta * s.eg_r + ar * wg + (cr * s.sg_r - ci * s.sg_i) - r.g2 * s.eg_i;

    // rho_es' = -i (D - ds) rho_es + i a conj(rho_sg) + i c (ss - ee) - g2 rho_es
    const double dd = delta - delta_s;
    const double ws = s.ss - s.ee;
    // a * conj(sg) = (ar + i ai)(sg_r - i sg_i)
    const double acs_r = ar * s.sg_r + ai * s.sg_i;
    const double acs_i = ai * s.sg_r - ar * s.sg_i;
    d.es_r = dd * s.es_i - acs_i - ci * ws - r.g2 * s.es_r;
    d.es_i = -dd * s.es_r + acs_r + cr * ws - r.g2 * s.es_i;

    // rho_sg' = -i ds rho_sg + i conj(c) rho_eg - i a conj(rho_es) - gs rho_sg
    const double ceg_r = cr * s.eg_r + ci * s.eg_i; // conj(c) * eg
    const double ceg_i = cr * s.eg_i - ci * s.eg_r;
    const double aces_r = ar * s.es_r + ai * s.es_i; // a * conj(es)
    const double aces_i = ai * s.es_r - ar * s.es_i;
    d.sg_r = delta_s * s.sg_i - ceg_i + aces_i - r.gs * s.sg_r;
    d.sg_i = -delta_s * s.sg_r + ceg_r - aces_r - r.gs * s.sg_i;
    return d;
}

inline Lambda axpy(const Lambda& s, double h, const Lambda& d)
{
    return {s.gg + h * d.gg,     s.ss + h * d.ss,     s.ee + h * d.ee,
            s.eg_r + h * d.eg_r, s.eg_i + h * d.eg_i, s.es_r + h * d.es_r,
            s.es_i + h * d.es_i, s.sg_r + h * d.sg_r, s.sg_i + h * d.sg_i};
}

inline void check_state(const TwoLevel& s, Diagnostics& dg)
{
    dg.max_trace_error = std::max(dg.max_trace_error, std::abs(s.gg + s.ee - 1.0));
    dg.min_population = std::min({dg.min_population, s.gg, s.ee});
    dg.max_population = std::max({dg.max_population, s.gg, s.ee});
    // eigenvalues of [[ee, eg], [ge, gg]]
    const double half_tr = 0.5 * (s.gg + s.ee);
    const double half_diff = 0.5 * (s.ee - s.gg);
    const double lam = half_tr - std::sqrt(half_diff * half_diff + s.re * s.re + s.im * s.im);
    dg.min_eigenvalue = std::min(dg.min_eigenvalue, lam);
}

inline void check_state(const Lambda& s, Diagnostics& dg)
{
    dg.max_trace_error = std::max(dg.max_trace_error, std::abs(s.gg + s.ss + s.ee - 1.0));
    dg.min_population = std::min({dg.min_population, s.gg, s.ss, s.ee});
    dg.max_population = std::max({dg.max_population, s.gg, s.ss, s.ee});
    Eigen::Matrix3cd rho;
    rho << cplx(s.gg, 0), cplx(s.sg_r, -s.sg_i), cplx(s.eg_r, -s.eg_i),
           cplx(s.sg_r, s.sg_i), cplx(s.ss, 0), cplx(s.es_r, -s.es_i),
           cplx(s.eg_r, s.eg_i), cplx(s.es_r, s.es_i), cplx(s.ee, 0);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(rho, Eigen::EigenvaluesOnly);
    dg.min_eigenvalue = std::min(dg.min_eigenvalue, es.eigenvalues().minCoeff());
}

struct Cell
{
    double delta = 0.0;   // rad/us
    double delta_s = 0.0; // rad/us
    double weight = 0.0;
};

/// Integrates every cell over the window under the given drives (sampled on
/// the half-step grid) and returns sum(weight * rho_eg) on the full-step grid.
template <class State>
std::vector<cplx> polarization(const std::vector<Cell>& cells, const std::vector<cplx>& probe,
                               const std::vector<cplx>* control, std::size_t steps, double dt, const Rates& rates,
                               const EngineOptions& opt, Diagnostics& diag, bool record_final)
{
    const std::size_t chunks = std::min<std::size_t>(opt.chunks, std::max<std::size_t>(cells.size(), 1));
    std::vector<std::vector<cplx>> partial(chunks);
    std::vector<Diagnostics> cdiag(chunks);
    std::vector<std::array<double, 3>> cfinal(chunks, std::array<double, 3>{0.0, 0.0, 0.0});

    parallel_chunks(cells.size(), chunks, opt.threads, [&](std::size_t c, std::size_t b, std::size_t e) {
        auto& acc = partial[c];
        acc.assign(steps + 1, cplx{});
        Diagnostics dg;
        dg.min_population = 1.0;
        dg.max_population = 0.0;
        for (std::size_t k = b; k < e; ++k) {
            const Cell& cell = cells[k];
            State s{};
            for (std::size_t n = 0; n < steps; ++n) {
                const cplx p0 = probe[2 * n];
                const cplx p1 = probe[2 * n + 1];
                const cplx p2 = probe[2 * n + 2];
                if constexpr (std::is_same_v<State, TwoLevel>) {
                    acc[n] += cell.weight * cplx(s.re, s.im);
                    const auto k1 = deriv(s, p0.real(), p0.imag(), cell.delta, rates);
                    const auto k2 = deriv(axpy(s, 0.5 * dt, k1), p1.real(), p1.imag(), cell.delta, rates);
                    const auto k3 = deriv(axpy(s, 0.5 * dt, k2), p1.real(), p1.imag(), cell.delta, rates);
                    const auto k4 = deriv(axpy(s, dt, k3), p2.real(), p2.imag(), cell.delta, rates);
                    s.gg += dt / 6.0 * (k1.gg + 2.0 * k2.gg + 2.0 * k3.gg + k4.gg);
                    s.ee += dt / 6.0 * (k1.ee + 2.0 * k2.ee + 2.0 * k3.ee + k4.ee);
                    s.re += dt / 6.0 * (k1.re + 2.0 * k2.re + 2.0 * k3.re + k4.re);
                    s.im += dt / 6.0 * (k1.im + 2.0 * k2.im + 2.0 * k3.im + k4.im);
                } else {
                    acc[n] += cell.weight * cplx(s.eg_r, s.eg_i);
                    const cplx c0 = 0.5 * (*control)[2 * n];
                    const cplx c1 = 0.5 * (*control)[2 * n + 1];
                    const cplx c2 = 0.5 * (*control)[2 * n + 2];
                    const double d = cell.delta;
                    const double ds = cell.delta_s;
                    const auto k1 = deriv(s, 0.5 * p0.real(), 0.5 * p0.imag(), c0.real(), c0.imag(), d, ds, rates);
                    const auto k2 = deriv(axpy(s, 0.5 * dt, k1), 0.5 * p1.real(), 0.5 * p1.imag(), c1.real(),
                                          c1.imag(), d, ds, rates);
                    const auto k3 = deriv(axpy(s, 0.5 * dt, k2), 0.5 * p1.real(), 0.5 * p1.imag(), c1.real(),
                                          c1.imag(), d, ds, rates);
                    const auto k4 = deriv(axpy(s, dt, k3), 0.5 * p2.real(), 0.5 * p2.imag(), c2.real(), c2.imag(),
                                          d, ds, rates);
                    Lambda sum = axpy(axpy(k1, 2.0, k2), 2.0, k3);
                    sum = axpy(sum, 1.0, k4);
                    s = axpy(s, dt / 6.0, sum);
                }
                if (opt.diag_stride > 0 && (n + 1) % static_cast<std::size_t>(opt.diag_stride) == 0) {
                    check_state(s, dg);
                }
            }
            check_state(s, dg);
            if constexpr (std::is_same_v<State, TwoLevel>) {
                acc[steps] += cell.weight * cplx(s.re, s.im);
                if (record_final) {
                    cfinal[c][0] += cell.weight * s.gg;
                    cfinal[c][2] += cell.weight * s.ee;
                }
            } else {
                acc[steps] += cell.weight * cplx(s.eg_r, s.eg_i);
                if (record_final) {
                    cfinal[c][0] += cell.weight * s.gg;
                    cfinal[c][1] += cell.weight * s.ss;
                    cfinal[c][2] += cell.weight * s.ee;
                }
            }
        }
        cdiag[c] = dg;
    });

    // ordered reduction
    std::vector<cplx> total(steps + 1, cplx{});
    std::array<double, 3> fin{0.0, 0.0, 0.0};
    for (std::size_t c = 0; c < chunks; ++c) {
        if (!partial[c].empty()) {
            for (std::size_t n = 0; n <= steps; ++n) {
                total[n] += partial[c][n];
            }
        }
        diag.merge(cdiag[c]);
        for (int i = 0; i < 3; ++i) {
            fin[i] += cfinal[c][i];
        }
    }
    if (record_final) {
        diag.final_populations = fin;
    }
    return total;
}

} // namespace detail

/// Largest frequency (MHz) the time step has to resolve.
inline double max_frequency_mhz(const EnsembleSpec& spec, const PulseSequence& seq, Mode mode)
{
    double f = 0.0;
    double max_r = 0.0;
    for (const auto& a : spec.annuli) {
        max_r = std::max(max_r, a.relative_rabi);
    }
    for (double d : spec.optical_detuning_mhz) {
        f = std::max(f, std::abs(d));
        if (mode == Mode::lambda) {
            for (double s : spec.spin_detuning_mhz) {
                f = std::max({f, std::abs(d - s), std::abs(s)});
            }
        }
    }
    for (const auto& p : seq.pulses) {
        double peak = 0.0;
        for (const auto& v : p.envelope.samples) {
            peak = std::max(peak, std::abs(v));
        }
        f = std::max(f, max_r * peak / two_pi);
        f = std::max(f, std::abs(p.envelope.carrier_mhz) + 0.5 * std::abs(p.envelope.chirp_mhz));
    }
    return f;
}

/// Throws when dt gives fewer than 10 steps per cycle of the fastest
/// frequency.
inline void check_step(double dt_us, double fmax_mhz)
{
    if (fmax_mhz <= 0.0) {
        return;
    }
    const double required = 1.0 / (10.0 * fmax_mhz);
    if (dt_us > required * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "evolve_ensemble: step size violation, dt = " << dt_us * 1e3 << " ns but the fastest frequency "
            << fmax_mhz << " MHz requires dt <= " << required * 1e3 << " ns";
        throw PhysicsError(msg.str());
    }
}

inline EvolveResult evolve_ensemble(const EnsembleSpec& spec, const PulseSequence& seq, Mode mode,
                                    const EngineOptions& opt = {})
{
    spec.validate();
    seq.validate();
    if (!(opt.dt_ns > 0.0)) {
        throw PhysicsError("evolve_ensemble: time step must be positive");
    }
    const double dt = opt.dt_ns * 1e-3;
    check_step(dt, max_frequency_mhz(spec, seq, mode));

    double t0 = opt.t_start_us;
    double t1 = opt.t_end_us;
    if (t1 <= t0) {
        if (seq.pulses.empty()) {
            t0 = 0.0;
            t1 = 1.0;
        } else {
            t0 = seq.pulses.front().start_us;
            t1 = t0;
            for (const auto& p : seq.pulses) {
                t0 = std::min(t0, p.start_us);
                t1 = std::max(t1, p.end_us());
            }
            t0 -= 0.1;
            t1 += opt.tail_us;
        }
    }
    const auto steps = static_cast<std::size_t>(std::ceil((t1 - t0) / dt - 1e-9));

    // drives on the half-step grid
    std::vector<cplx> probe(2 * steps + 1, cplx{});
    std::vector<cplx> control(mode == Mode::lambda ? 2 * steps + 1 : 0, cplx{});
    for (const auto& p : seq.pulses) {
        const bool is_control = p.role == PulseRole::control;
        if (is_control && mode != Mode::lambda) {
            throw PhysicsError("evolve_ensemble: control pulses require lambda mode");
        }
        auto& target = is_control ? control : probe;
        const auto j0 = static_cast<std::size_t>(std::max(0.0, std::floor((p.start_us - t0) / (0.5 * dt))));
        const auto j1 = std::min(2 * steps, static_cast<std::size_t>(std::ceil((p.end_us() - t0) / (0.5 * dt))));
        for (std::size_t j = j0; j <= j1; ++j) {
            target[j] += p.at(t0 + 0.5 * dt * static_cast<double>(j));
        }
    }

    detail::Rates rates;
    rates.g1 = 1.0 / spec.t1_us;
    rates.g2 = 1.0 / spec.t2_us;
    rates.gs = 1.0 / spec.t2_spin_us;
    rates.bg = spec.branching_g;

    std::vector<detail::Cell> cells;
    const bool use_spin = mode == Mode::lambda;
    for (std::size_t b = 0; b < spec.optical_detuning_mhz.size(); ++b) {
        if (spec.optical_weight[b] == 0.0) {
            continue;
        }
        if (use_spin) {
            for (std::size_t s = 0; s < spec.spin_detuning_mhz.size(); ++s) {
                const double w = spec.optical_weight[b] * spec.spin_weight[s];
                if (w > 0.0) {
                    cells.push_back({two_pi * spec.optical_detuning_mhz[b], two_pi * spec.spin_detuning_mhz[s], w});
                }
            }
        } else {
            cells.push_back({two_pi * spec.optical_detuning_mhz[b], 0.0, spec.optical_weight[b]});
        }
    }

    const double kslab = 2.0 * spec.od_integral_mhz / spec.slabs;
    const cplx ik(0.0, kslab);

    auto emitted = [&](const std::vector<cplx>& in, const std::vector<cplx>& pol, double scale) {
        std::vector<cplx> out(in);
        for (std::size_t n = 0; n <= steps; ++n) {
            out[2 * n] += scale * ik * pol[n];
            if (n < steps) {
                out[2 * n + 1] += scale * ik * 0.5 * (pol[n] + pol[n + 1]);
            }
        }
        return out;
    };

    Diagnostics diag;
    diag.min_population = 1.0;
    diag.max_population = 0.0;
    diag.steps = steps;
    diag.cells = cells.size();

    std::vector<cplx> out_field(steps + 1, cplx{});
    std::vector<double> out_intensity(steps + 1, 0.0);

    bool first = true;
    for (const auto& ann : spec.annuli) {
        std::vector<cplx> field(probe.size());
        for (std::size_t j = 0; j < probe.size(); ++j) {
            field[j] = ann.relative_rabi * probe[j];
        }
        std::vector<cplx> ctrl(control.size());
        for (std::size_t j = 0; j < control.size(); ++j) {
            ctrl[j] = ann.relative_rabi * control[j];
        }
        const std::vector<cplx>* cptr = mode == Mode::lambda ? &ctrl : nullptr;

        auto run = [&](const std::vector<cplx>& drive, bool record) {
            if (mode == Mode::two_level) {
                return detail::polarization<detail::TwoLevel>(cells, drive, cptr, steps, dt, rates, opt, diag, record);
            }
            return detail::polarization<detail::Lambda>(cells, drive, cptr, steps, dt, rates, opt, diag, record);
        };

        if (spec.od_integral_mhz > 0.0 || first) {
            for (int s = 0; s < spec.slabs; ++s) {
                const bool record = first && s == 0;
                if (opt.midpoint) {
                    const auto pa = run(field, record);
                    const auto half = emitted(field, pa, 0.5);
                    const auto pb = run(half, false);
                    field = emitted(field, pb, 1.0);
                } else {
                    const auto pa = run(field, record);
                    field = emitted(field, pa, 1.0);
                }
                if (spec.od_integral_mhz == 0.0) {
                    break;
                }
            }
        }
        first = false;
        for (std::size_t n = 0; n <= steps; ++n) {
            const cplx e = field[2 * n] / ann.relative_rabi;
            out_field[n] += ann.weight * e;
            out_intensity[n] += ann.weight * std::norm(e);
        }
    }

    EvolveResult r;
    r.trace.t0_us = t0;
    r.trace.dt_us = dt;
    r.trace.intensity = std::move(out_intensity);
    r.trace.field = std::move(out_field);
    r.diagnostics = diag;
    return r;
}


/// Ensemble with a flat optical distribution of the given width and OD.
inline EnsembleSpec flat_ensemble(double width_mhz, double od, double bin_mhz, int slabs = 1)
{
    if (!(width_mhz > 0.0) || !(bin_mhz > 0.0) || !(od >= 0.0)) {
        throw PhysicsError("flat_ensemble: width and bin must be positive, OD non-negative");
    }
    const auto half = static_cast<long>(std::floor(0.5 * width_mhz / bin_mhz + 1e-9));
    EnsembleSpec e;
    e.optical_detuning_mhz.clear();
    e.optical_weight.clear();
    for (long i = -half; i <= half; ++i) {
        e.optical_detuning_mhz.push_back(static_cast<double>(i) * bin_mhz);
    }
    const auto n = static_cast<double>(e.optical_detuning_mhz.size());
    e.optical_weight.assign(e.optical_detuning_mhz.size(), 1.0 / n);
    e.od_integral_mhz = od * n * bin_mhz;
    e.slabs = slabs;
    return e;
}

/// Free-precession time equivalent to the detuning phase a resonant pulse of
/// real envelope imprints: integral of sin(theta(t)) over the pulse divided by
/// sin(area), theta being the running area.
inline double effective_precession_us(const PulseEnvelope& env)
{
    const double dt = env.dt_us();
    double theta = 0.0;
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < env.samples.size(); ++i) {
        const double a0 = std::abs(env.samples[i]);
        const double a1 = std::abs(env.samples[i + 1]);
        const double mid = theta + 0.25 * (a0 + a1) * dt;
        integral += std::sin(mid) * dt;
        theta += 0.5 * (a0 + a1) * dt;
    }
    const double s = std::sin(theta);
    if (std::abs(s) < 1e-9) {
        throw PhysicsError("effective_precession: pulse area is a multiple of pi");
    }
    return integral / s;
}

struct TwoPulseParams
{
    /// Duration of the square refocusing pulse; the first pulse has half its area.
    double pi_duration_us = 0.5;
    double first_area = std::numbers::pi / 2.0;
    double second_area = std::numbers::pi;
    /// Output recorded until 2 tau + this margin.
    double tail_us = 2.0;
};

struct EchoRun
{
    Trace trace;
    double tau_us = 0.0;
    /// Echo centre in trace time.
    double expected_echo_us = 0.0;
    Diagnostics diagnostics;
};

/// Square excitation and refocusing pulses. Time zero is the effective
/// excitation instant of the first pulse; the refocusing pulse is centred at
/// tau, so the echo forms at 2 tau.
inline EchoRun two_pulse_echo(const EnsembleSpec& spec, double tau_us, const TwoPulseParams& p = {},
                              const EngineOptions& opt = {})
{
    if (!(p.pi_duration_us > 0.0) || !(p.first_area > 0.0) || !(p.second_area > 0.0)) {
        throw PhysicsError("two_pulse_echo: pulse duration and areas must be positive");
    }
    const double rabi = std::numbers::pi / p.pi_duration_us;
    PulseParams first;
    first.shape = PulseShape::square;
    first.peak_rabi = rabi;
    first.fwhm_ns = 1e3 * p.first_area / rabi;
    first.dt_ns = 0.5 * opt.dt_ns;
    PulseParams second = first;
    second.fwhm_ns = 1e3 * p.second_area / rabi;
    auto e1 = build_pulse(first);
    auto e2 = build_pulse(second);
    const double len1 = e1.t_end_us() - e1.t0_us;
    const double len2 = e2.t_end_us() - e2.t0_us;
    if (tau_us < 0.5 * (len1 + len2) + 0.1) {
        std::ostringstream msg;
        msg << "two_pulse_echo: tau = " << tau_us << " us does not separate the pulses";
        throw PhysicsError(msg.str());
    }
    const double start1 = effective_precession_us(e1) - len1;

    PulseSequence seq;
    seq.pulses.push_back({start1, std::move(e1), PulseRole::input});
    seq.pulses.push_back(ScheduledPulse::centered(tau_us, std::move(e2), PulseRole::refocus));

    EngineOptions o = opt;
    o.t_start_us = start1 - 0.1;
    o.t_end_us = 2.0 * tau_us + p.tail_us;
    auto r = evolve_ensemble(spec, seq, Mode::two_level, o);
    return {std::move(r.trace), tau_us, 2.0 * tau_us, r.diagnostics};
}

struct NutationRun
{
    Trace trace;
    /// Absorption signal 1 - P_out / P_in sampled on the trace grid.
    std::vector<double> absorption;
    double rabi = 0.0;
    Diagnostics diagnostics;
};

/// Square drive switched on at t = 0 and held for `duration_us`.
inline NutationRun optical_nutation(const EnsembleSpec& spec, double rabi, double duration_us,
                                    const EngineOptions& opt = {})
{
    if (!(rabi > 0.0) || !(duration_us > 0.0)) {
        throw PhysicsError("optical_nutation: Rabi frequency and duration must be positive");
    }
    PulseParams pp;
    pp.shape = PulseShape::square;
    pp.peak_rabi = rabi;
    pp.fwhm_ns = 1e3 * duration_us;
    pp.dt_ns = 0.5 * opt.dt_ns;
    auto env = build_pulse(pp);
    const double len = env.t_end_us() - env.t0_us;
    PulseSequence seq;
    seq.pulses.push_back({0.0, std::move(env), PulseRole::input});
    EngineOptions o = opt;
    o.t_start_us = 0.0;
    o.t_end_us = len;
    auto r = evolve_ensemble(spec, seq, Mode::two_level, o);
    NutationRun out;
    out.rabi = rabi;
    out.diagnostics = r.diagnostics;
    const double pin = rabi * rabi;
    out.absorption.resize(r.trace.size());
    for (std::size_t i = 0; i < r.trace.size(); ++i) {
        out.absorption[i] = 1.0 - r.trace.intensity[i] / pin;
    }
    out.trace = std::move(r.trace);
    return out;
}

struct SpinWaveParams
{
    /// Comb period; the AFC echo forms at 1/delta after the input.
    double delta_khz = 400.0;
    PulseParams input{PulseShape::gaussian, 260.0, two_pi * 1e-3, 0.0, 0.0, 1.0, 2.0};
    PulseParams control{PulseShape::chirped_gaussian, 450.0, two_pi * 0.693, 0.0, 1.5, 1.0, 2.0};
    /// Centre of the first control pulse.
    double control_center_us = 1.25;
    /// Guard windows are +-guard * FWHM around pulses and echoes.
    double guard = 1.5;
    double tail_us = 1.0;
};

struct SpinWaveRun
{
    Trace trace;
    double afc_echo_us = 0.0;
    double spin_echo_us = 0.0;
    /// Half-width of the echo windows.
    double echo_half_window_us = 0.0;
    Diagnostics diagnostics;
};

/// Input at t = 0, controls at c and c + T_s; the spin-wave echo is expected
/// at 1/delta + T_s.
inline SpinWaveRun spin_wave_storage(const EnsembleSpec& spec, double storage_us, const SpinWaveParams& p = {},
                                     const EngineOptions& opt = {})
{
    if (!(p.delta_khz > 0.0) || !(storage_us > 0.0)) {
        throw PhysicsError("spin_wave_storage: comb period and storage time must be positive");
    }
    const double t_afc = 1e3 / p.delta_khz;
    const double t_sw = t_afc + storage_us;
    const double in_half = p.guard * p.input.fwhm_ns * 1e-3;
    const double c_half = p.guard * p.control.fwhm_ns * 1e-3;
    const double c1 = p.control_center_us;
    const double c2 = c1 + storage_us;

    auto overlaps = [](double a, double ha, double b, double hb) { return std::abs(a - b) < ha + hb; };
    auto reject = [](const std::string& what) { throw PhysicsError("spin_wave_storage: " + what); };
    if (overlaps(c1, c_half, 0.0, in_half)) {
        reject("first control overlaps the input window");
    }
    if (c1 + c_half > t_afc - in_half) {
        reject("first control must end before the AFC echo window at 1/delta");
    }
    for (double c : {c1, c2}) {
        if (overlaps(c, c_half, t_sw, in_half)) {
            reject("a control pulse overlaps the spin-wave echo window");
        }
    }
    if (overlaps(c2, c_half, t_afc, in_half)) {
        reject("second control overlaps the AFC echo window");
    }

    PulseParams ip = p.input;
    ip.dt_ns = 0.5 * opt.dt_ns;
    PulseParams cp = p.control;
    cp.dt_ns = 0.5 * opt.dt_ns;
    PulseSequence seq;
    seq.allow_overlap = true;
    seq.pulses.push_back(ScheduledPulse::centered(0.0, build_pulse(ip), PulseRole::input));
    seq.pulses.push_back(ScheduledPulse::centered(c1, build_pulse(cp), PulseRole::control));
    seq.pulses.push_back(ScheduledPulse::centered(c2, build_pulse(cp), PulseRole::control));
    std::sort(seq.pulses.begin(), seq.pulses.end(),
              [](const ScheduledPulse& a, const ScheduledPulse& b) { return a.start_us < b.start_us; });

    EngineOptions o = opt;
    o.t_start_us = seq.pulses.front().start_us - 0.1;
    o.t_end_us = t_sw + in_half + p.tail_us;
    auto r = evolve_ensemble(spec, seq, Mode::lambda, o);
    return {std::move(r.trace), t_afc, t_sw, in_half, r.diagnostics};
}

} // namespace afcsim::bloch
