// Acceptance run: one PASS/FAIL line per criterion, exit status 1 on any FAIL.

#include <afcsim/analysis.hpp>
#include <afcsim/beam_optics.hpp>
#include <afcsim/bloch_engine.hpp>
#include <afcsim/config.hpp>
#include <afcsim/linear_engine.hpp>
#include <afcsim/scenario.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

using namespace afcsim;

namespace {

struct Criterion
{
    Criterion(int i, std::string n) : id(i), name(std::move(n)) {}

    int id;
    std::string name;
    bool ok = true;
    std::vector<std::string> details;

    void check(bool cond, const std::string& what)
    {
        ok = ok && cond;
        details.push_back(std::string(cond ? "" : "!") + what);
    }
};

std::string fmt(double v, int prec = 6)
{
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

std::string read_config(const std::string& name)
{
    std::ifstream in(std::string(AFCSIM_CONFIG_DIR) + "/" + name);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Shipped config with one `key = value` line replaced.
config::Config shipped(const std::string& name, const std::string& from = "", const std::string& to = "")
{
    std::string text = read_config(name);
    if (!from.empty()) {
        const auto p = text.find(from);
        if (p == std::string::npos) {
            throw std::runtime_error(name + ": no line '" + from + "'");
        }
        text.replace(p, from.size(), to);
    }
    return config::Config::from_string(text, name);
}

double num(const scenario::Artifacts& a, const std::string& key)
{
    const auto v = a.report.get(key);
    if (!v) {
        throw std::runtime_error("report has no key " + key);
    }
    return std::stod(*v);
}

std::string text(const scenario::Artifacts& a, const std::string& key)
{
    return a.report.get(key).value_or("");
}

Criterion echo_timing(const scenario::Artifacts& sweep, const config::Config& c)
{
    Criterion k{1, "AFC echo timing at 1/delta"};
    const double dt = c.number("engine", "pulse_dt_ns") * 1e-3;
    for (const char* tag : {"250", "400", "500", "667"}) {
        const std::string p = std::string("afc_") + tag + "khz.";
        const double expect = 1e3 / std::stod(tag);
        const double got = num(sweep, p + "storage_time_us");
        k.check(text(sweep, p + "has_echo") == "true" && std::abs(got - expect) <= dt,
                std::string(tag) + " kHz: " + fmt(got) + " us vs " + fmt(expect) + " us");
    }
    return k;
}

Criterion cross_engine()
{
    Criterion k{2, "weak-pulse Bloch vs linear engine"};
    CombShape c;
    c.delta_khz = 667.0;
    c.tooth_fwhm_khz = 195.0;
    c.tooth_od = 2.43;
    c.background_od = 0.0;
    c.bandwidth_mhz = 4.0;
    const auto profile = comb_profile(DetuningGrid::symmetric(5.0, 0.01), c);
    PulseParams pp;
    pp.fwhm_ns = 345.0;
    pp.peak_rabi = 1e-4;
    pp.truncation = 3.0;
    pp.dt_ns = 5.0;
    linear::LinearOptions lo;
    lo.pre_pad_us = 0.5;
    lo.window_us = 3.0;
    const auto lin = linear::propagate_linear(build_pulse(pp), profile, lo);

    auto spec = bloch::EnsembleSpec::from_profile(profile);
    spec.slabs = 10;
    pp.dt_ns = 2.5;
    bloch::PulseSequence seq;
    seq.pulses.push_back(bloch::ScheduledPulse::centered(0.0, build_pulse(pp), bloch::PulseRole::input));
    bloch::EngineOptions o;
    o.dt_ns = 5.0;
    o.t_start_us = lin.t0_us;
    o.t_end_us = lin.time(lin.size() - 1);
    const auto blo = bloch::evolve_ensemble(spec, seq, bloch::Mode::two_level, o).trace;

    double peak = 0.0;
    double sq = 0.0;
    const std::size_t n = std::min(lin.size(), blo.size());
    for (std::size_t i = 0; i < n; ++i) {
        peak = std::max(peak, lin.intensity[i]);
        sq += std::pow(blo.intensity[i] - lin.intensity[i], 2);
    }
    const double rel = std::sqrt(sq / static_cast<double>(n)) / peak;
    k.check(lin.size() == blo.size() && rel <= 0.02, "RMS/peak intensity " + fmt(rel, 3));
    return k;
}

Criterion efficiency_calibration(const scenario::Artifacts& sweep)
{
    Criterion k{3, "AFC efficiency calibration"};
    const double e667 = num(sweep, "afc_667khz.eta_afc");
    const double e400 = num(sweep, "afc_400khz.eta_afc");
    k.check(std::abs(e667 - 0.146) <= 0.01, "eta(1.5 us) " + fmt(100 * e667, 4) + "%");
    k.check(std::abs(e400 - 0.083) <= 0.01, "eta(2.5 us) " + fmt(100 * e400, 4) + "%");
    return k;
}

Criterion two_pulse_echo(const scenario::Artifacts& echo)
{
    Criterion k{4, "two-pulse echo and T2"};
    for (const char* tau : {"5", "10", "15", "20"}) {
        const double off = num(echo, std::string("tau_") + tau + ".echo_offset_samples");
        k.check(std::abs(off) <= 1.0, std::string("tau ") + tau + ": " + fmt(off, 3) + " samples");
    }
    const double t2 = num(echo, "fit.t2_us");
    k.check(text(echo, "fit.converged") == "true" && std::abs(t2 / 49.9 - 1.0) <= 0.05, "T2 " + fmt(t2, 5) + " us");
    return k;
}

Criterion nutation(const scenario::Artifacts& nut)
{
    Criterion k{5, "nutation and class beat"};
    const double x = num(nut, "single.omega_t_pi");
    k.check(std::abs(x / 5.14 - 1.0) <= 0.05, "Omega*t_pi " + fmt(x, 4));
    const double f = num(nut, "beat.frequency_mhz");
    k.check(std::abs(f / 10.2 - 1.0) <= 0.02, "beat " + fmt(f, 5) + " MHz");
    return k;
}

Criterion spin_wave(const scenario::Artifacts& thin, const scenario::Artifacts& thick, const scenario::Artifacts& decay,
                    const config::Config& c)
{
    Criterion k{6, "spin-wave storage"};
    const double dt = c.number("engine", "dt_ns") * 1e-3;
    const double expect = num(thin, "ts_3p6.expected_echo_us");
    const double got = num(thin, "ts_3p6.echo_centroid_us");
    k.check(std::abs(expect - 6.1) < 1e-9, "1/delta + T_s = " + fmt(expect) + " us");
    k.check(std::abs(got - expect) <= dt, "weak-comb echo " + fmt(got) + " us");
    k.details.push_back("full comb echo vs transmitted " + fmt(num(thick, "ts_3p6.storage_vs_transmitted_us")) + " us");
    const double g = num(decay, "fit.gamma_inh_khz");
    k.check(std::abs(g / 23.6 - 1.0) <= 0.05, "gamma_inh " + fmt(g, 5) + " kHz");
    const double sw = num(thick, "composition.eta_sw");
    k.check(std::abs(sw - 0.02) <= 0.002, "eta_SW " + fmt(100 * sw, 4) + "%");
    const double ec = num(thick, "ts_3p6.eta_c_simulated");
    k.check(std::abs(ec - 0.95) <= 0.02, "eta_C simulated " + fmt(ec, 4));
    return k;
}

Criterion reach(const scenario::Artifacts& decay)
{
    Criterion k{7, "spin-wave echo at 15 us total storage"};
    const double total = num(decay, "ts_12p5.total_storage_us");
    const double snr = num(decay, "ts_12p5.snr");
    k.check(std::abs(total - 15.0) < 1e-9 && snr > 10.0, "total " + fmt(total) + " us, S/N " + fmt(snr, 4));
    return k;
}

Criterion device(const scenario::Artifacts& sweep)
{
    Criterion k{8, "device efficiency"};
    const double d = num(sweep, "device_efficiency.eta_afc_device");
    k.check(std::abs(d - 0.0269) <= 1e-4, "eta_d " + fmt(100 * d, 4) + "%");
    return k;
}

Criterion beam_and_enhancement(const scenario::Artifacts& enh)
{
    Criterion k{9, "beam optics and enhancement"};
    const double zr = num(enh, "rayleigh_mm");
    k.check(std::abs(zr / 1.83 - 1.0) <= 0.01, "z_R " + fmt(zr, 4) + " mm");
    const double ov = num(enh, "mode_overlap");
    k.check(std::abs(ov - 0.78) <= 0.01, "overlap " + fmt(ov, 4));
    const double slope = num(enh, "enhancement.measured_slope");
    k.check(std::abs(slope - 6.35) <= 0.01, "measured slope " + fmt(slope, 4));
    for (const char* conv : {"field_average", "intensity_average"}) {
        const double e = num(enh, std::string("enhancement.") + conv);
        k.check(e >= 2.0 && e <= 7.0, std::string(conv) + " " + fmt(e, 4));
    }
    k.details.push_back("quoted 5.7: " + text(enh, "enhancement.quoted_theory_note"));
    return k;
}

Criterion properties(const scenario::Artifacts& prep, const scenario::Artifacts& echo,
                     const scenario::Artifacts& echo_fine, const scenario::Artifacts& decay)
{
    Criterion k{10, "property suites"};
    const double pop = num(prep, "afc_400khz.population_error");
    k.check(pop <= 1e-9, "population error " + fmt(pop, 3));
    const double tr = std::max(num(echo, "diag.max_trace_error"), num(decay, "ts_12p5.diag.max_trace_error"));
    k.check(tr <= 1e-9, "trace error " + fmt(tr, 3));

    PulseParams pp;
    pp.fwhm_ns = 345.0;
    pp.truncation = 3.0;
    pp.dt_ns = 5.0;
    const auto pulse = build_pulse(pp);
    CombShape c;
    c.delta_khz = 400.0;
    c.tooth_od = 2.43;
    c.tooth_fwhm_khz = 195.0;
    c.background_od = 1.0;
    c.bandwidth_mhz = 8.0;
    const auto out = linear::propagate_linear(pulse, comb_profile(DetuningGrid::symmetric(), c));
    double peak = 0.0;
    double leak = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        peak = std::max(peak, out.intensity[i]);
        if (out.time(i) < pulse.t0_us - 2.0 * pulse.dt_us()) {
            leak = std::max(leak, out.intensity[i]);
        }
    }
    k.check(leak <= 1e-6 * peak, "causality leakage " + fmt(leak / peak, 3) + " of peak");

    std::vector<analysis::Point> ex;
    std::vector<analysis::Point> ga;
    for (double x : {10.0, 20.0, 30.0, 40.0}) {
        ex.push_back({x, 2.0 * std::exp(-2.0 * x / 49.9)});
        const double y = std::numbers::pi * 0.0236 * x / 4.0;
        ga.push_back({x / 4.0, std::exp(-y * y / (2.0 * std::numbers::ln2))});
    }
    const double et = analysis::fit_exponential_decay(ex).value("T2_us") / 49.9 - 1.0;
    const double eg = analysis::fit_gaussian_decay(ga).value("gamma_inh_khz") / 23.6 - 1.0;
    k.check(std::abs(et) <= 1e-6 && std::abs(eg) <= 1e-6,
            "fit round trip " + fmt(std::max(std::abs(et), std::abs(eg)), 3));

    const double conv = num(echo, "tau_5.efficiency") / num(echo_fine, "tau_5.efficiency") - 1.0;
    k.check(std::abs(conv) <= 0.005, "dt halving " + fmt(100 * conv, 3) + "%");

    bool same = true;
    for (const char* name : {"fig5a-afc-sweep.ini", "bloch-sequence.ini", "fig4-afc-prep.ini"}) {
        const auto cfg = shipped(name);
        const auto a = scenario::run(cfg, {1, 0});
        const auto b = scenario::run(cfg, {3, 0});
        same = same && a.report.str() == b.report.str() &&
               scenario::manifest_text(a.files) == scenario::manifest_text(b.files);
    }
    k.check(same, "byte-identical across 1 and 3 threads");
    return k;
}

} // namespace

int main()
{
    std::vector<Criterion> results;
    try {
        const auto sweep_cfg = shipped("fig5a-afc-sweep.ini");
        const auto sweep = scenario::run(sweep_cfg);
        const auto echo = scenario::run(shipped("fig2-echo-decay.ini"));
        const auto echo_fine = scenario::run(shipped("fig2-echo-decay.ini", "dt_ns = 5", "dt_ns = 2.5"));
        const auto nut = scenario::run(shipped("fig3-nutation.ini"));
        const auto prep = scenario::run(shipped("fig4-afc-prep.ini"));
        const auto sw_cfg = shipped("fig5b-spinwave.ini");
        const auto thick = scenario::run(sw_cfg);
        const auto thin = scenario::run(shipped("fig5b-spinwave.ini", "tooth_od = 2.43", "tooth_od = 0.05"));
        const auto decay = scenario::run(shipped("fig5c-spin-decay.ini"));
        const auto enh = scenario::run(shipped("enhancement-report.ini"));

        results.push_back(echo_timing(sweep, sweep_cfg));
        results.push_back(cross_engine());
        results.push_back(efficiency_calibration(sweep));
        results.push_back(two_pulse_echo(echo));
        results.push_back(nutation(nut));
        results.push_back(spin_wave(thin, thick, decay, sw_cfg));
        results.push_back(reach(decay));
        results.push_back(device(sweep));
        results.push_back(beam_and_enhancement(enh));
        results.push_back(properties(prep, echo, echo_fine, decay));
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance run aborted: " << e.what() << '\n';
        return 1;
    }

    int failed = 0;
    for (const auto& r : results) {
        std::cout << (r.ok ? "PASS" : "FAIL") << " criterion " << r.id << ": " << r.name << " (";
        for (std::size_t i = 0; i < r.details.size(); ++i) {
            std::cout << (i ? "; " : "") << r.details[i];
        }
        std::cout << ")\n";
        failed += r.ok ? 0 : 1;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << '\n';
    return failed == 0 ? 0 : 1;
}
