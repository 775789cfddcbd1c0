#pragma once

// Built-in scenarios. Each turns a validated Config into an in-memory set of
// artifacts (profiles, traces, tables, a key=value report) that the CLI writes
// out together with a digest manifest.

#include <afcsim/analysis.hpp>
#include <afcsim/beam_optics.hpp>
#include <afcsim/bloch_engine.hpp>
#include <afcsim/config.hpp>
#include <afcsim/csv.hpp>
#include <afcsim/digest.hpp>
#include <afcsim/errors.hpp>
#include <afcsim/level_scheme.hpp>
#include <afcsim/linear_engine.hpp>
#include <afcsim/pulse.hpp>
#include <afcsim/pumping.hpp>
#include <afcsim/spectral_profile.hpp>
#include <afcsim/trace.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace afcsim::scenario {

struct RunOptions
{
    int threads = 1;
    /// Recorded in the report; every built-in scenario is noiseless.
    std::uint64_t seed = 0;
};

struct Artifacts
{
    /// Relative path and file content, in emission order.
    std::vector<std::pair<std::string, std::string>> files;
    io::Report report;

    void add_text(const std::string& name, std::string content) { files.emplace_back(name, std::move(content)); }

    void add_profile(const std::string& name, const SpectralProfile& p)
    {
        std::ostringstream os;
        io::write_profile_csv(os, p);
        add_text(name, os.str());
    }

    void add_trace(const std::string& name, const Trace& t)
    {
        std::ostringstream os;
        io::write_trace_csv(os, t);
        add_text(name, os.str());
    }

    void add_table(const std::string& name, const io::Table& t)
    {
        std::ostringstream os;
        io::write_table(os, t);
        add_text(name, os.str());
    }
};

/// `path<TAB>sha256` lines sorted by path.
inline std::string manifest_text(const std::vector<std::pair<std::string, std::string>>& files)
{
    std::vector<std::pair<std::string, std::string>> rows;
    for (const auto& [name, content] : files) {
        rows.emplace_back(name, digest::sha256_hex(content));
    }
    std::sort(rows.begin(), rows.end());
    std::string out;
    for (const auto& [name, d] : rows) {
        out += name + '\t' + d + '\n';
    }
    return out;
}

/// Writes every file plus report.txt and manifest.txt; returns the paths.
inline std::vector<std::string> write_artifacts(const Artifacts& a, const std::string& out_dir)
{
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    auto files = a.files;
    files.emplace_back("report.txt", a.report.str());
    std::vector<std::string> written;
    auto put = [&](const std::string& name, const std::string& content) {
        const fs::path p = fs::path(out_dir) / name;
        std::ofstream os(p, std::ios::binary);
        if (!os) {
            throw std::runtime_error("cannot write " + p.string());
        }
        os << content;
        written.push_back(p.string());
    };
    for (const auto& [name, content] : files) {
        put(name, content);
    }
    put("manifest.txt", manifest_text(files));
    return written;
}

struct ManifestCheck
{
    std::size_t entries = 0;
    std::vector<std::string> mismatched;
    std::vector<std::string> missing;
    bool ok() const { return entries > 0 && mismatched.empty() && missing.empty(); }
};

inline ManifestCheck verify_manifest(const std::string& dir)
{
    namespace fs = std::filesystem;
    std::ifstream in(fs::path(dir) / "manifest.txt");
    if (!in) {
        throw std::runtime_error("no manifest.txt in " + dir);
    }
    ManifestCheck c;
    std::string line;
    while (std::getline(in, line)) {
        const auto tab = line.find('\t');
        if (tab == std::string::npos) {
            continue;
        }
        ++c.entries;
        const std::string name = line.substr(0, tab);
        const fs::path p = fs::path(dir) / name;
        if (!fs::exists(p)) {
            c.missing.push_back(name);
        } else if (digest::sha256_file(p.string()) != line.substr(tab + 1)) {
            c.mismatched.push_back(name);
        }
    }
    return c;
}

// Builders from configuration sections.

inline LevelScheme scheme_from(const config::Config& c)
{
    LevelScheme s;
    const auto g = c.list("scheme", "ground_splittings_mhz");
    const auto e = c.list("scheme", "excited_splittings_mhz");
    if (g.size() != 2) {
        c.reject("scheme", "ground_splittings_mhz", "expected two values");
    }
    if (e.size() != 2) {
        c.reject("scheme", "excited_splittings_mhz", "expected two values");
    }
    s.ground_splittings_mhz = {g[0], g[1]};
    s.excited_splittings_mhz = {e[0], e[1]};
    s.inhom_fwhm_ghz = c.number("scheme", "inhom_fwhm_ghz");
    s.t2_opt_us = c.number("scheme", "t2_opt_us");
    s.t1_opt_us = c.number("scheme", "t1_opt_us");
    s.gamma_inh_spin_khz = c.number("scheme", "gamma_inh_spin_khz");
    s.roles = {c.integer("scheme", "role_afc"), c.integer("scheme", "role_storage"),
               c.integer("scheme", "role_auxiliary")};
    s.validate();
    return s;
}

inline DetuningGrid grid_from(const config::Config& c)
{
    return DetuningGrid::symmetric(c.number("ensemble", "grid_half_span_mhz"), c.number("ensemble", "grid_step_mhz"));
}

inline beam::RabiCalibration calibration_from(const config::Config& c)
{
    return {c.number("analysis", "calibration_power_mw"), two_pi * c.number("analysis", "calibration_rabi_mhz")};
}

inline PulseShape shape_from(const std::string& s)
{
    if (s == "square") {
        return PulseShape::square;
    }
    if (s == "chirped-gaussian") {
        return PulseShape::chirped_gaussian;
    }
    return PulseShape::gaussian;
}

inline bloch::PulseRole role_from(const std::string& s)
{
    if (s == "refocus") {
        return bloch::PulseRole::refocus;
    }
    if (s == "control") {
        return bloch::PulseRole::control;
    }
    if (s == "probe") {
        return bloch::PulseRole::probe;
    }
    return bloch::PulseRole::input;
}

/// Pulse parameters of a [sequence.N] section (or its defaults).
inline PulseParams pulse_from(const config::Config& c, const std::string& section, double dt_ns)
{
    PulseParams p;
    p.shape = shape_from(c.text(section, "shape"));
    p.fwhm_ns = c.number(section, "fwhm_ns");
    const double power = c.number(section, "power_mw");
    p.peak_rabi = power > 0.0 ? beam::power_to_rabi(power, calibration_from(c))
                              : two_pi * c.number(section, "peak_rabi_mhz");
    p.carrier_mhz = c.number(section, "carrier_mhz");
    p.chirp_mhz = c.number(section, "chirp_mhz");
    p.truncation = c.number(section, "truncation");
    p.dt_ns = dt_ns;
    return p;
}

/// First [sequence.N] section with the given role, if any.
inline std::optional<std::string> section_with_role(const config::Config& c, const std::string& role)
{
    for (const auto& s : c.indexed_sections("sequence")) {
        if (c.text(s, "role") == role) {
            return s;
        }
    }
    return std::nullopt;
}

inline bloch::EngineOptions engine_from(const config::Config& c, const RunOptions& run)
{
    bloch::EngineOptions o;
    o.dt_ns = c.number("engine", "dt_ns");
    o.chunks = static_cast<std::size_t>(std::max(1, c.integer("engine", "chunks")));
    o.midpoint = c.boolean("engine", "midpoint");
    o.t_start_us = c.number("engine", "t_start_us");
    o.t_end_us = c.number("engine", "t_end_us");
    o.tail_us = c.number("engine", "tail_us");
    o.threads = run.threads;
    if (!(o.dt_ns > 0.0)) {
        c.reject("engine", "dt_ns", "must be positive");
    }
    return o;
}

inline linear::LinearOptions linear_from(const config::Config& c)
{
    linear::LinearOptions o;
    o.pre_pad_us = c.number("engine", "pre_pad_us");
    o.window_us = c.number("engine", "window_us");
    return o;
}

/// Absorbing line centred at zero detuning; with `beat` a second class is
/// placed one ground splitting below it.
inline SpectralProfile line_profile(const config::Config& c, const LevelScheme& scheme, bool beat)
{
    const DetuningGrid grid = grid_from(c);
    SpectralProfile p = flat_profile(grid, 0.0);
    const double fwhm = c.number("ensemble", "line_fwhm_mhz");
    const double od = c.number("ensemble", "line_od");
    if (!(fwhm > 0.0) || !(od >= 0.0)) {
        c.reject("ensemble", "line_fwhm_mhz", "line width must be positive and OD non-negative");
    }
    const bool gaussian = c.text("ensemble", "line_shape") == "gaussian";
    const double sigma = fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const double beat_od = c.number("ensemble", "beat_fraction") * od;
    const double beat_sigma = c.number("ensemble", "beat_fwhm_mhz") / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const double beat_at = -scheme.ground_splittings_mhz[0];
    for (std::size_t i = 0; i < grid.size; ++i) {
        const double x = grid[i];
        double v = 0.0;
        if (gaussian) {
            v = od * std::exp(-0.5 * x * x / (sigma * sigma));
        } else if (std::abs(x) <= 0.5 * fwhm + 1e-9) {
            v = od;
        }
        if (beat && beat_od > 0.0) {
            const double y = x - beat_at;
            v += beat_od * std::exp(-0.5 * y * y / (beat_sigma * beat_sigma));
        }
        p.od[i] = v;
    }
    return p;
}

inline bloch::EnsembleSpec ensemble_from(const config::Config& c, const LevelScheme& scheme,
                                         const SpectralProfile& profile, bool spin_grid)
{
    auto e = bloch::EnsembleSpec::from_profile(profile, c.number("ensemble", "bin_floor"));
    e.slabs = c.integer("ensemble", "slabs");
    const int annuli = c.integer("ensemble", "annuli");
    if (annuli < 1) {
        c.reject("ensemble", "annuli", "must be at least 1");
    }
    e.annuli = annuli == 1 ? std::vector<bloch::Annulus>{bloch::Annulus{}} : bloch::gaussian_annuli(annuli);
    e.t1_us = scheme.t1_opt_us;
    e.t2_us = scheme.t2_opt_us;
    if (spin_grid) {
        e.set_gaussian_spin(scheme.gamma_inh_spin_khz, c.integer("ensemble", "spin_points"));
    }
    return e;
}

inline CombShape comb_shape_from(const config::Config& c, double delta_khz)
{
    CombShape s;
    s.delta_khz = delta_khz;
    s.tooth_fwhm_khz = c.number("preparation", "tooth_fwhm_khz");
    s.tooth_od = c.number("preparation", "tooth_od");
    s.bandwidth_mhz = c.number("preparation", "comb_bandwidth_mhz");
    s.background_od = c.number("preparation", "background_od");
    return s;
}

inline bool pumped(const config::Config& c) { return c.text("preparation", "mode") == "pumped"; }

/// Finesse used for the resolvability check: configured for pumped combs,
/// spacing over tooth width for synthetic ones.
inline double comb_finesse(const config::Config& c, double delta_khz)
{
    return pumped(c) ? c.number("preparation", "finesse") : delta_khz / c.number("preparation", "tooth_fwhm_khz");
}

inline std::vector<double> deltas_from(const config::Config& c)
{
    const auto d = c.list("preparation", "delta_khz");
    if (d.empty()) {
        c.reject("preparation", "delta_khz", "needs at least one spacing");
    }
    for (double v : d) {
        if (!(v > 0.0)) {
            c.reject("preparation", "delta_khz", "spacings must be positive");
        }
    }
    return d;
}

inline PumpSegment pump_from(const config::Config& c)
{
    PumpSegment s;
    s.rate_per_s = c.number("preparation", "pump_rate_per_s");
    s.linewidth_khz = c.number("preparation", "pump_linewidth_khz");
    s.validate();
    return s;
}

inline RenderOptions render_from(const config::Config& c)
{
    RenderOptions r;
    r.peak_od_calibration = c.number("preparation", "od_calibration");
    return r;
}

struct PumpedStages
{
    SpectralProfile unpumped;
    PitResult pit;
    SpectralProfile pit_profile;
    FeatureResult feature;
    SpectralProfile feature_profile;
    /// (delta_khz, comb result, rendered profile)
    std::vector<std::tuple<double, AfcResult, SpectralProfile>> combs;
};

inline PumpedStages run_pumping(const config::Config& c, const LevelScheme& scheme, const std::vector<double>& deltas,
                                int threads, bool with_feature)
{
    const ClassPopulations start(grid_from(c));
    const RenderOptions ro = render_from(c);
    const PumpSegment seg = pump_from(c);

    PitParams pp;
    pp.width_mhz = c.number("preparation", "pit_width_mhz");
    pp.od_background = c.number("preparation", "background_od");
    pp.segment_ms = c.number("preparation", "pit_segment_ms");
    pp.max_segments = c.integer("preparation", "pit_max_segments");
    pp.pump = seg;

    PumpedStages st;
    st.unpumped = absorption_profile(start, ro);
    st.pit = prepare_pit(start, scheme, pp, ro, threads);
    st.pit_profile = absorption_profile(st.pit.state, ro);
    if (with_feature) {
        FeatureParams fp;
        fp.target_od = c.number("preparation", "feature_od");
        fp.width_mhz = c.number("preparation", "feature_width_mhz");
        fp.pit_width_mhz = pp.width_mhz;
        fp.pump = seg;
        st.feature = prepare_single_class_feature(st.pit.state, scheme, fp, ro, threads);
        st.feature_profile = absorption_profile(st.feature.state, ro);
    }
    for (double d : deltas) {
        AfcParams ap;
        ap.delta_khz = d;
        ap.finesse = c.number("preparation", "finesse");
        ap.bandwidth_mhz = c.number("preparation", "comb_bandwidth_mhz");
        ap.feature_od = c.number("preparation", "feature_od");
        ap.pit_width_mhz = pp.width_mhz;
        ap.gap_ms_per_mhz = c.number("preparation", "gap_ms_per_mhz");
        ap.pump = seg;
        auto r = prepare_afc(st.pit.state, scheme, ap, ro, threads);
        auto prof = absorption_profile(r.state, ro);
        st.combs.emplace_back(d, std::move(r), std::move(prof));
    }
    return st;
}

/// Comb profiles for each spacing with the flat reference profile, pumped or
/// synthetic per the [preparation] mode.
struct CombSet
{
    std::vector<std::pair<double, SpectralProfile>> combs;
    SpectralProfile reference;
};

inline CombSet comb_set(const config::Config& c, const LevelScheme& scheme, const std::vector<double>& deltas,
                        int threads)
{
    CombSet s;
    const DetuningGrid grid = grid_from(c);
    if (pumped(c)) {
        auto st = run_pumping(c, scheme, deltas, threads, false);
        s.reference = st.pit_profile;
        for (auto& [d, r, p] : st.combs) {
            s.combs.emplace_back(d, std::move(p));
        }
    } else {
        s.reference = flat_profile(grid, c.number("preparation", "reference_od"));
        for (double d : deltas) {
            s.combs.emplace_back(d, comb_profile(grid, comb_shape_from(c, d)));
        }
    }
    return s;
}

inline std::string tag(double v)
{
    std::string s = io::format_number(v);
    std::replace(s.begin(), s.end(), '.', 'p');
    return s;
}

/// Schema values, origins and physics pre-checks without running the
/// scenario. Throws PhysicsError or ConfigError on the first failure.
inline io::Report validate(const config::Config& c)
{
    io::Report r;
    const std::string name = c.scenario();
    r.set("scenario", name);
    r.set("source", c.source());

    scheme_from(c);
    r.set("check.scheme", "ok");
    const DetuningGrid grid = grid_from(c);
    grid.validate();
    r.set("check.grid_bins", grid.size);

    const bool linear_pulses = name == "fig5a-afc-sweep";
    const double dt_ns = linear_pulses ? c.number("engine", "pulse_dt_ns") : 0.5 * c.number("engine", "dt_ns");
    if (!(dt_ns > 0.0)) {
        c.reject("engine", linear_pulses ? "pulse_dt_ns" : "dt_ns", "must be positive");
    }
    for (const auto& s : c.indexed_sections("sequence")) {
        try {
            build_pulse(pulse_from(c, s, dt_ns));
        } catch (const PhysicsError& e) {
            throw PhysicsError("[" + s + "] " + e.what());
        }
        r.set("check." + s, "ok");
    }

    if (name == "fig4-afc-prep" || name == "fig5a-afc-sweep" || name == "fig5b-spinwave" ||
        name == "fig5c-spin-decay") {
        for (double d : deltas_from(c)) {
            check_comb_resolvable(grid, d, comb_finesse(c, d));
        }
        r.set("check.comb", "ok");
    }
    if (name == "fig2-echo-decay") {
        const auto taus = c.list("analysis", "tau_us");
        if (taus.size() < 2) {
            c.reject("analysis", "tau_us", "the decay fit needs at least two delays");
        }
    }
    if (name == "fig3-nutation" && !(c.number("analysis", "rabi_mhz") > 0.0)) {
        c.reject("analysis", "rabi_mhz", "must be positive");
    }
    if (name == "fig5b-spinwave" || name == "fig5c-spin-decay") {
        const auto ts = c.list("analysis", "storage_us");
        if (ts.empty() || (name == "fig5c-spin-decay" && ts.size() < 2)) {
            c.reject("analysis", "storage_us", "not enough storage times");
        }
    }
    if (name == "enhancement-report") {
        beam::BeamGeometry g;
        g.waist_um = c.number("analysis", "waist_um");
        g.wavelength_nm = c.number("analysis", "wavelength_nm");
        g.refractive_index = c.number("analysis", "refractive_index");
        g.length_mm = c.number("analysis", "length_mm");
        g.focus_mm = c.number("analysis", "focus_mm");
        g.validate();
    }
    r.set("status", "valid");
    std::size_t defaults = 0;
    for (const auto& [key, value, origin] : c.effective()) {
        r.set("effective." + key, value);
        r.set("origin." + key, origin);
        defaults += origin == "default";
    }
    r.set("defaults_applied", defaults);
    return r;
}

// Scenarios.

inline void echo_decay(const config::Config& c, const RunOptions& run, Artifacts& a)
{
    const LevelScheme scheme = scheme_from(c);
    const auto spec = ensemble_from(c, scheme, line_profile(c, scheme, false), false);
    const auto opt = engine_from(c, run);
    bloch::TwoPulseParams tp;
    tp.pi_duration_us = c.number("analysis", "pi_duration_us");
    const double rabi = std::numbers::pi / tp.pi_duration_us;
    const double input_energy = rabi * rabi * (tp.first_area / rabi);
    const double width = 2.0 * tp.pi_duration_us;

    io::Table pts{{"two_tau_us", "efficiency"}, {}};
    std::vector<analysis::Point> points;
    bloch::Diagnostics diag;
    for (double tau : c.list("analysis", "tau_us")) {
        auto r = bloch::two_pulse_echo(spec, tau, tp, opt);
        diag.merge(r.diagnostics);
        const double e = window_energy(r.trace, r.expected_echo_us, width) / input_energy;
        const auto centroid = window_centroid(r.trace, r.expected_echo_us, width);
        a.add_trace("echo_tau_" + tag(tau) + "us.csv", r.trace);
        pts.rows.push_back({2.0 * tau, e});
        points.push_back({2.0 * tau, e});
        const std::string k = "tau_" + tag(tau);
        a.report.set(k + ".echo_expected_us", r.expected_echo_us);
        a.report.set(k + ".echo_centroid_us", centroid.value_or(std::nan("")));
        a.report.set(k + ".echo_offset_samples", centroid ? (*centroid - r.expected_echo_us) / r.trace.dt_us : std::nan(""));
        a.report.set(k + ".efficiency", e);
    }
    a.add_table("echo_decay_points.csv", pts);
    const auto fit = analysis::fit_exponential_decay(points);
    a.report.set("fit.model", fit.model);
    a.report.set("fit.converged", fit.converged);
    a.report.set("fit.t2_us", fit.value("T2_us"));
    a.report.set("fit.t2_sigma_us", fit.sigma("T2_us"));
    a.report.set("configured.t2_us", scheme.t2_opt_us);
    a.report.set("fit.t2_relative_error", fit.value("T2_us") / scheme.t2_opt_us - 1.0);
    const double beta = c.number("analysis", "isd_beta");
    for (double x : c.list("analysis", "isd_excitation")) {
        a.report.set("isd.t2_us_at_" + tag(x), analysis::isd_trend(fit.value("T2_us"), beta, x));
    }
    a.report.set("diag.max_trace_error", diag.max_trace_error);
    a.report.set("diag.min_population", diag.min_population);
    a.report.set("diag.min_eigenvalue", diag.min_eigenvalue);
}

inline void nutation(const config::Config& c, const RunOptions& run, Artifacts& a)
{
    const LevelScheme scheme = scheme_from(c);
    const auto opt = engine_from(c, run);
    const double rabi = two_pi * c.number("analysis", "rabi_mhz");
    const double duration = c.number("analysis", "nutation_duration_us");

    auto absorption_trace = [](const bloch::NutationRun& n) {
        Trace t;
        t.t0_us = n.trace.t0_us;
        t.dt_us = n.trace.dt_us;
        t.intensity = n.absorption;
        return t;
    };
    auto table = [](const bloch::NutationRun& n) {
        io::Table t{{"time_us", "absorption"}, {}};
        for (std::size_t i = 0; i < n.absorption.size(); ++i) {
            t.rows.push_back({n.trace.time(i), n.absorption[i]});
        }
        return t;
    };
    auto record = [&](const std::string& prefix, const analysis::RabiExtraction& x) {
        a.report.set(prefix + ".converged", x.t_pi.converged);
        if (x.t_pi.converged) {
            a.report.set(prefix + ".t_pi_us", x.t_pi.value("t_pi_us"));
            a.report.set(prefix + ".omega_t_pi", rabi * x.t_pi.value("t_pi_us"));
            a.report.set(prefix + ".omega_estimate_mhz", x.t_pi.value("omega") / two_pi);
            a.report.set(prefix + ".j1_omega_mhz", x.j1.value("omega") / two_pi);
        }
        a.report.set(prefix + ".model_mismatch", x.model_mismatch);
    };

    a.report.set("rabi_mhz", rabi / two_pi);
    a.report.set("first_minimum_constant", analysis::nutation_first_minimum);
    a.report.set("rounded_constant", analysis::nutation_rounded_constant);

    const auto base = bloch::optical_nutation(ensemble_from(c, scheme, line_profile(c, scheme, false), false), rabi,
                                              duration, opt);
    a.add_table("nutation.csv", table(base));
    a.add_trace("nutation_transmitted.csv", base.trace);
    record("single", analysis::extract_rabi(absorption_trace(base)));

    if (c.boolean("analysis", "include_beat")) {
        const auto beat = bloch::optical_nutation(ensemble_from(c, scheme, line_profile(c, scheme, true), false),
                                                  rabi, duration, opt);
        a.add_table("nutation_beat.csv", table(beat));
        const auto f = analysis::dominant_frequency(beat.absorption, beat.trace.dt_us,
                                                    c.number("analysis", "beat_min_mhz"));
        a.report.set("beat.expected_mhz", scheme.ground_splittings_mhz[0]);
        a.report.set("beat.frequency_mhz", f.value_or(std::nan("")));
        record("beat.raw", analysis::extract_rabi(absorption_trace(beat)));
        const double notch = c.number("analysis", "notch_mhz");
        if (notch > 0.0) {
            record("beat.notched", analysis::extract_rabi(absorption_trace(beat), notch));
        }
    }
}

inline void afc_prep(const config::Config& c, const RunOptions& run, Artifacts& a)
{
    const LevelScheme scheme = scheme_from(c);
    const auto deltas = deltas_from(c);
    const auto st = run_pumping(c, scheme, deltas, run.threads, true);
    a.add_profile("profile_unpumped.csv", st.unpumped);
    a.add_profile("profile_pit.csv", st.pit_profile);
    a.add_profile("profile_feature.csv", st.feature_profile);
    a.report.set("pit.achieved_od", st.pit.achieved_od);
    a.report.set("pit.reached", st.pit.reached);
    a.report.set("pit.segments", st.pit.segments_used);
    a.report.set("feature.peak_od", st.feature.peak_od);
    a.report.set("feature.burn_ms", st.feature.burn_ms);
    a.report.set("feature.burn_center_mhz", st.feature.burn_center_mhz);
    for (const auto& [d, r, p] : st.combs) {
        const std::string k = "afc_" + tag(d) + "khz";
        a.add_profile("profile_" + k + ".csv", p);
        a.report.set(k + ".teeth", r.teeth);
        a.report.set(k + ".gap_width_khz", r.gap_width_khz);
        a.report.set(k + ".gap_ms", r.gap_ms);
        a.report.set(k + ".tooth_od", p.od_at(0.0));
        a.report.set(k + ".gap_od", p.od_at(0.5e-3 * d));
        a.report.set(k + ".population_error", r.state.max_normalization_error());
    }
}

inline void afc_sweep(const config::Config& c, const RunOptions& run, Artifacts& a)
{
    const LevelScheme scheme = scheme_from(c);
    const auto deltas = deltas_from(c);
    const auto set = comb_set(c, scheme, deltas, run.threads);
    const auto in_section = section_with_role(c, "input");
    const PulseParams pp = pulse_from(c, in_section.value_or("sequence.1"), c.number("engine", "pulse_dt_ns"));
    const auto pulse = build_pulse(pp);
    const auto lo = linear_from(c);
    const auto reference = linear::propagate_linear(pulse, set.reference, lo);
    a.add_profile("profile_reference.csv", set.reference);
    a.add_trace("trace_reference.csv", reference);
    const double eta_wg = c.number("analysis", "waveguide_transmission");
    const double od_b = c.number("preparation", "background_od");
    for (const auto& [d, profile] : set.combs) {
        const std::string k = "afc_" + tag(d) + "khz";
        const auto out = linear::propagate_linear(pulse, profile, lo);
        const double expected = 1e3 / d;
        const auto m = linear::echo_metrics(out, reference, expected, pp.fwhm_ns * 1e-3);
        a.add_profile("profile_" + k + ".csv", profile);
        a.add_trace("trace_" + k + ".csv", out);
        a.report.set(k + ".expected_echo_us", expected);
        a.report.set(k + ".eta_afc", m.eta_afc);
        a.report.set(k + ".has_echo", m.has_echo);
        a.report.set(k + ".echo_time_us", m.echo_time_us.value_or(std::nan("")));
        a.report.set(k + ".storage_time_us", m.storage_time_us.value_or(std::nan("")));
        a.report.set(k + ".storage_error_samples",
                     m.storage_time_us ? (*m.storage_time_us - expected) / out.dt_us : std::nan(""));
        a.report.set(k + ".transmitted_fraction", m.transmitted_fraction);
        a.report.set(k + ".device_efficiency", analysis::device_efficiency(m.eta_afc, eta_wg, od_b));
    }
    a.report.set("device_efficiency.eta_afc_device",
                 analysis::device_efficiency(c.number("analysis", "eta_afc_device"), eta_wg, od_b));
}

struct SpinWaveSetup
{
    bloch::EnsembleSpec spec;
    bloch::SpinWaveParams params;
    bloch::EngineOptions opt;
    double input_energy = 0.0;
};

inline SpinWaveSetup spin_wave_setup(const config::Config& c, const RunOptions& run)
{
    const LevelScheme scheme = scheme_from(c);
    const double delta = deltas_from(c).front();
    SpinWaveSetup s;
    s.opt = engine_from(c, run);
    s.spec = ensemble_from(c, scheme, comb_set(c, scheme, {delta}, run.threads).combs.front().second, true);
    s.params.delta_khz = delta;
    const double dt = 0.5 * s.opt.dt_ns;
    if (const auto in = section_with_role(c, "input")) {
        s.params.input = pulse_from(c, *in, dt);
    }
    if (const auto ctl = section_with_role(c, "control")) {
        s.params.control = pulse_from(c, *ctl, dt);
    }
    s.params.control_center_us = c.number("analysis", "control_center_us");
    s.params.guard = c.number("analysis", "echo_guard");
    s.params.tail_us = c.number("analysis", "spin_tail_us");
    PulseParams ip = s.params.input;
    ip.dt_ns = dt;
    s.input_energy = build_pulse(ip).energy();
    return s;
}

struct SpinWavePoint
{
    double storage_us = 0.0;
    double energy = 0.0;
    double reference_energy = 0.0;
    double eta_c = 0.0;
    double centroid_us = 0.0;
    double snr = 0.0;
    bloch::SpinWaveRun run;
};

/// Peak of the echo window over the RMS of the record starting one full
/// window width after the expected echo.
inline double spin_echo_snr(const bloch::SpinWaveRun& r)
{
    const double width = 2.0 * r.echo_half_window_us;
    const auto w = window_range(r.trace, r.spin_echo_us, width);
    double peak = 0.0;
    for (std::size_t k = w.first; k < w.last; ++k) {
        peak = std::max(peak, r.trace.intensity[k]);
    }
    double s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
        if (r.trace.time(k) > r.spin_echo_us + width) {
            s2 += r.trace.intensity[k] * r.trace.intensity[k];
            ++n;
        }
    }
    if (n == 0 || s2 == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return peak / std::sqrt(s2 / static_cast<double>(n));
}

/// One storage time with the configured spin linewidth and a zero-linewidth
/// run at the same T_s for normalization.
inline SpinWavePoint spin_wave_point(const SpinWaveSetup& s, double storage_us)
{
    SpinWavePoint p;
    p.storage_us = storage_us;
    p.run = bloch::spin_wave_storage(s.spec, storage_us, s.params, s.opt);
    const double width = 2.0 * p.run.echo_half_window_us;
    p.energy = window_energy(p.run.trace, p.run.spin_echo_us, width);
    auto ref_spec = s.spec;
    ref_spec.set_gaussian_spin(0.0);
    const auto ref = bloch::spin_wave_storage(ref_spec, storage_us, s.params, s.opt);
    p.reference_energy = window_energy(ref.trace, ref.spin_echo_us, width);
    p.eta_c = p.reference_energy > 0.0 ? p.energy / p.reference_energy : 0.0;
    p.centroid_us = window_centroid(p.run.trace, p.run.spin_echo_us, width).value_or(std::nan(""));
    p.snr = spin_echo_snr(p.run);
    return p;
}

inline void record_spin_point(Artifacts& a, const SpinWaveSetup& s, const SpinWavePoint& p, double gamma_khz)
{
    const std::string k = "ts_" + tag(p.storage_us);
    a.add_trace("spinwave_" + k + "us.csv", p.run.trace);
    const auto transmitted = window_centroid(p.run.trace, 0.0, 2.0 * p.run.echo_half_window_us);
    a.report.set(k + ".expected_echo_us", p.run.spin_echo_us);
    a.report.set(k + ".echo_centroid_us", p.centroid_us);
    a.report.set(k + ".echo_offset_samples", (p.centroid_us - p.run.spin_echo_us) / p.run.trace.dt_us);
    a.report.set(k + ".storage_vs_transmitted_us", p.centroid_us - transmitted.value_or(0.0));
    a.report.set(k + ".eta_sw_simulated", p.energy / s.input_energy);
    a.report.set(k + ".eta_c_simulated", p.eta_c);
    a.report.set(k + ".eta_c_analytic", analysis::spin_coherence_factor(gamma_khz, p.storage_us));
    a.report.set(k + ".snr", p.snr);
    a.report.set(k + ".total_storage_us", p.run.spin_echo_us);
    a.report.set(k + ".diag.max_trace_error", p.run.diagnostics.max_trace_error);
    a.report.set(k + ".diag.min_eigenvalue", p.run.diagnostics.min_eigenvalue);
}

inline void spin_wave(const config::Config& c, const RunOptions& run, Artifacts& a)
{
    const LevelScheme scheme = scheme_from(c);
    const auto s = spin_wave_setup(c, run);
    const double ts = c.list("analysis", "storage_us").front();
    const auto p = spin_wave_point(s, ts);
    record_spin_point(a, s, p, scheme.gamma_inh_spin_khz);
    const auto eff = analysis::efficiency_decomposition(c.number("analysis", "eta_afc_spinwave"),
                                                        c.number("analysis", "eta_transfer"),
                                                        scheme.gamma_inh_spin_khz, ts);
    a.report.set("composition.eta_afc", c.number("analysis", "eta_afc_spinwave"));
    a.report.set("composition.eta_transfer", c.number("analysis", "eta_transfer"));
    a.report.set("composition.eta_c", eff.eta_c);
    a.report.set("composition.eta_sw", eff.eta_sw);
    a.report.set("afc_echo_us", p.run.afc_echo_us);
}

inline void spin_decay(const config::Config& c, const RunOptions& run, Artifacts& a)
{
    const LevelScheme scheme = scheme_from(c);
    const auto s = spin_wave_setup(c, run);
    io::Table pts{{"storage_us", "eta_c"}, {}};
    std::vector<analysis::Point> points;
    for (double ts : c.list("analysis", "storage_us")) {
        const auto p = spin_wave_point(s, ts);
        record_spin_point(a, s, p, scheme.gamma_inh_spin_khz);
        pts.rows.push_back({ts, p.eta_c});
        points.push_back({ts, p.eta_c});
    }
    a.add_table("spin_decay_points.csv", pts);
    const auto fit = analysis::fit_gaussian_decay(points);
    a.report.set("fit.model", fit.model);
    a.report.set("fit.converged", fit.converged);
    a.report.set("fit.gamma_inh_khz", fit.value("gamma_inh_khz"));
    a.report.set("fit.gamma_sigma_khz", fit.sigma("gamma_inh_khz"));
    a.report.set("configured.gamma_inh_khz", scheme.gamma_inh_spin_khz);
    a.report.set("fit.gamma_relative_error", fit.value("gamma_inh_khz") / scheme.gamma_inh_spin_khz - 1.0);
}

inline void enhancement(const config::Config& c, const RunOptions&, Artifacts& a)
{
    beam::BeamGeometry g;
    g.waist_um = c.number("analysis", "waist_um");
    g.wavelength_nm = c.number("analysis", "wavelength_nm");
    g.refractive_index = c.number("analysis", "refractive_index");
    g.length_mm = c.number("analysis", "length_mm");
    g.focus_mm = c.number("analysis", "focus_mm");
    beam::WaveguideMode m;
    m.wx_um = c.number("analysis", "mode_wx_um");
    m.wy_um = c.number("analysis", "mode_wy_um");
    m.transmission = c.number("analysis", "waveguide_transmission");
    const auto r = beam::enhancement_report(
        g, m, two_pi * c.number("analysis", "rabi_wg_mhz"), c.number("analysis", "power_wg_mw"),
        two_pi * c.number("analysis", "rabi_bulk_mhz"), c.number("analysis", "power_bulk_mw"));
    a.report.set("rayleigh_mm", r.rayleigh_mm);
    a.report.set("facet_radius_um", r.facet_radius_um);
    a.report.set("mode_overlap", r.overlap);
    a.report.set("implied_propagation", r.implied_propagation);
    a.report.set("enhancement.field_average", r.field_average);
    a.report.set("enhancement.intensity_average", r.intensity_average);
    a.report.set("enhancement.measured_slope", r.measured_slope);
    a.report.set("enhancement.quoted_theory", r.quoted_theory);
    a.report.set("enhancement.quoted_theory_note", "convention-dependent; compared, not asserted");
    io::Table t{{"z_mm", "radius_um"}, {}};
    for (int i = 0; i <= 100; ++i) {
        const double z = g.length_mm * i / 100.0;
        t.rows.push_back({z, beam::beam_radius(g, z)});
    }
    a.add_table("beam_radius.csv", t);
    const auto cal = calibration_from(c);
    io::Table p{{"power_mw", "rabi_mhz"}, {}};
    for (int i = 0; i <= 20; ++i) {
        const double pw = 0.25 * i;
        p.rows.push_back({pw, beam::power_to_rabi(pw, cal) / two_pi});
    }
    a.add_table("rabi_vs_power.csv", p);
}

inline void sequence(const config::Config& c, const RunOptions& run, Artifacts& a)
{
    const LevelScheme scheme = scheme_from(c);
    const auto opt = engine_from(c, run);
    bloch::PulseSequence seq;
    bool control = false;
    for (const auto& s : c.indexed_sections("sequence")) {
        const auto role = role_from(c.text(s, "role"));
        control = control || role == bloch::PulseRole::control;
        seq.pulses.push_back(bloch::ScheduledPulse::centered(c.number(s, "center_us"),
                                                             build_pulse(pulse_from(c, s, 0.5 * opt.dt_ns)), role));
    }
    seq.allow_overlap = control;
    const auto mode = control ? bloch::Mode::lambda : bloch::Mode::two_level;
    const auto spec = ensemble_from(c, scheme, line_profile(c, scheme, false), control);
    const auto r = bloch::evolve_ensemble(spec, seq, mode, opt);
    a.add_trace("trace.csv", r.trace);
    a.report.set("mode", control ? "lambda" : "two-level");
    a.report.set("pulses", seq.pulses.size());
    a.report.set("samples", r.trace.size());
    double peak = 0.0;
    for (double v : r.trace.intensity) {
        peak = std::max(peak, v);
    }
    a.report.set("peak_intensity", peak);
    a.report.set("diag.max_trace_error", r.diagnostics.max_trace_error);
    a.report.set("diag.min_population", r.diagnostics.min_population);
    a.report.set("diag.max_population", r.diagnostics.max_population);
    a.report.set("diag.min_eigenvalue", r.diagnostics.min_eigenvalue);
}

/// Preparation only: the comb (or pumped stages) for every configured spacing.
inline Artifacts prepare(const config::Config& c, const RunOptions& run = {})
{
    validate(c);
    Artifacts a;
    const LevelScheme scheme = scheme_from(c);
    const auto deltas = deltas_from(c);
    a.report.set("scenario", c.scenario());
    a.report.set("preparation.mode", c.text("preparation", "mode"));
    if (pumped(c)) {
        const auto st = run_pumping(c, scheme, deltas, run.threads, false);
        a.add_profile("profile_pit.csv", st.pit_profile);
        for (const auto& [d, r, p] : st.combs) {
            a.add_profile("profile_afc_" + tag(d) + "khz.csv", p);
        }
    } else {
        const auto set = comb_set(c, scheme, deltas, run.threads);
        a.add_profile("profile_reference.csv", set.reference);
        for (const auto& [d, p] : set.combs) {
            a.add_profile("profile_afc_" + tag(d) + "khz.csv", p);
        }
    }
    return a;
}

inline Artifacts run(const config::Config& c, const RunOptions& run = {})
{
    static const std::map<std::string, std::function<void(const config::Config&, const RunOptions&, Artifacts&)>>
        table{{"fig2-echo-decay", echo_decay},   {"fig3-nutation", nutation},
              {"fig4-afc-prep", afc_prep},       {"fig5a-afc-sweep", afc_sweep},
              {"fig5b-spinwave", spin_wave},     {"fig5c-spin-decay", spin_decay},
              {"enhancement-report", enhancement}, {"bloch-sequence", sequence}};
    validate(c);
    Artifacts a;
    a.report.set("scenario", c.scenario());
    a.report.set("title", c.text("", "title"));
    a.report.set("seed", std::to_string(run.seed));
    table.at(c.scenario())(c, run, a);
    return a;
}

} // namespace afcsim::scenario
