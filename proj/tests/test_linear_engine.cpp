#include <afcsim/linear_engine.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace afcsim;
using linear::propagate_linear;

namespace {

PulseEnvelope input_pulse(double fwhm_ns = 345.0, double truncation = 2.0, double dt_ns = 5.0)
{
    PulseParams p;
    p.fwhm_ns = fwhm_ns;
    p.truncation = truncation;
    p.dt_ns = dt_ns;
    p.peak_rabi = 1.0;
    return build_pulse(p);
}

CombShape comb(double delta_khz, double tooth_od = 2.43, double background = 1.0)
{
    CombShape c;
    c.delta_khz = delta_khz;
    c.tooth_fwhm_khz = 195.0;
    c.tooth_od = tooth_od;
    c.background_od = background;
    c.bandwidth_mhz = 8.0;
    return c;
}

linear::LinearOptions options()
{
    linear::LinearOptions o;
    o.pre_pad_us = 1.0;
    o.window_us = 4.0;
    return o;
}

/// First-echo efficiency of an ideal periodic comb relative to the background
/// transmission: |d_1|^2 exp(-d_mean), with d_1 the first Fourier coefficient
/// of the tooth OD over one period and d_mean its mean (quadrature below).
double periodic_comb_efficiency(const CombShape& c)
{
    const double delta = c.delta_khz * 1e-3;
    const double sigma = c.tooth_fwhm_khz * 1e-3 / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    const int n = 20000;
    double mean = 0.0;
    std::complex<double> d1{};
    for (int i = 0; i < n; ++i) {
        const double x = -0.5 * delta + delta * (i + 0.5) / n;
        double d = 0.0;
        for (int k = -3; k <= 3; ++k) {
            const double u = (x - k * delta) / sigma;
            d += c.tooth_od * std::exp(-0.5 * u * u);
        }
        mean += d / n;
        d1 += d / n * std::exp(std::complex<double>(0.0, 2.0 * std::numbers::pi * x / delta));
    }
    return std::norm(d1) * std::exp(-mean);
}

double dawson(double y)
{
    const int n = 4000;
    const double h = y / n;
    double s = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double t = i * h;
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        s += w * std::exp(t * t - y * y);
    }
    return s * h / 3.0;
}

double peak(const std::vector<double>& v)
{
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, x);
    }
    return m;
}

} // namespace

TEST(KkPhase, GaussianLineMatchesDawsonFunction)
{
    const auto grid = DetuningGrid::symmetric(25.0, 0.01);
    const double d0 = 2.0;
    const double s = 1.0;
    SpectralProfile p = flat_profile(grid, 0.0);
    for (std::size_t i = 0; i < grid.size; ++i) {
        p.od[i] = d0 * std::exp(-0.5 * grid[i] * grid[i] / (s * s));
    }
    const auto ph = linear::kk_phase(p);
    EXPECT_TRUE(ph.warnings.empty());
    for (double y : {-4.0, -1.3, -0.5, 0.0, 0.2, 1.0, 2.7, 6.0}) {
        // H[exp(-u^2)] = (2 / sqrt(pi)) D(u), phase = -H[d / 2]
        const double expect = -0.5 * d0 * 2.0 / std::sqrt(std::numbers::pi) * dawson(y / (s * std::sqrt(2.0)));
        EXPECT_NEAR(ph.at(y), expect, 2e-3) << y;
    }
}

TEST(LinearEngine, OutputIsCausalAfterTruncatedInput)
{
    const auto pulse = input_pulse(345.0, 3.0);
    const auto grid = DetuningGrid::symmetric(25.0, 0.01);
    const auto out = propagate_linear(pulse, comb_profile(grid, comb(400.0)), options());
    const double ref = peak(out.intensity);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (out.time(i) < pulse.t0_us - 2.0 * pulse.dt_us()) {
            EXPECT_LE(out.intensity[i], 1e-6 * ref) << out.time(i);
        }
    }
}

TEST(LinearEngine, EmptyMediumIsIdentity)
{
    const auto pulse = input_pulse();
    const auto out = propagate_linear(pulse, flat_profile(DetuningGrid::symmetric(25.0, 0.01), 0.0), options());
    for (std::size_t i = 0; i < pulse.samples.size(); ++i) {
        const double t = pulse.t0_us + static_cast<double>(i) * pulse.dt_us();
        const auto j = static_cast<std::size_t>(std::llround((t - out.t0_us) / out.dt_us));
        EXPECT_NEAR(std::abs(out.field[j] - pulse.samples[i]), 0.0, 1e-9);
    }
}

TEST(LinearEngine, EchoAppearsAtInverseSpacing)
{
    const auto pulse = input_pulse();
    const auto grid = DetuningGrid::symmetric(25.0, 0.01);
    for (double d : {250.0, 400.0, 500.0, 667.0}) {
        // a weak comb keeps the dispersive delay of the echo below one sample
        const auto c = comb(d, 0.05, 0.0);
        const auto out = propagate_linear(pulse, comb_profile(grid, c), options());
        const auto ref = propagate_linear(pulse, flat_profile(grid, 0.0), options());
        const double expected = 1e3 / d;
        const auto m = linear::echo_metrics(out, ref, expected, 0.345);
        ASSERT_TRUE(m.storage_time_us.has_value());
        EXPECT_NEAR(*m.storage_time_us, expected, pulse.dt_us()) << d;
        EXPECT_TRUE(m.has_echo);
    }
}

TEST(LinearEngine, EfficiencyMatchesPeriodicCombOracle)
{
    const auto pulse = input_pulse();
    const auto grid = DetuningGrid::symmetric(25.0, 0.01);
    for (double d : {250.0, 400.0, 500.0, 667.0}) {
        const auto c = comb(d);
        const auto out = propagate_linear(pulse, comb_profile(grid, c), options());
        const auto ref = propagate_linear(pulse, flat_profile(grid, c.background_od), options());
        const auto m = linear::echo_metrics(out, ref, 1e3 / d, 0.345);
        const double oracle = periodic_comb_efficiency(c);
        EXPECT_NEAR(m.eta_afc / oracle, 1.0, 0.02) << d << " kHz: " << m.eta_afc << " vs " << oracle;
    }
}

TEST(LinearEngine, EfficiencyIsOneForIdenticalTraces)
{
    const auto pulse = input_pulse();
    const auto ref = propagate_linear(pulse, flat_profile(DetuningGrid::symmetric(25.0, 0.01), 1.0), options());
    const auto m = linear::echo_metrics(ref, ref, 0.0, 0.345);
    EXPECT_NEAR(m.eta_afc, 1.0, 1e-12);
}

TEST(LinearEngine, WeakCombEfficiencyGrowsWithToothOd)
{
    const auto pulse = input_pulse();
    const auto grid = DetuningGrid::symmetric(25.0, 0.01);
    double last = 0.0;
    for (double od : {0.1, 0.3, 0.6, 1.0, 1.5}) {
        const auto c = comb(667.0, od, 0.0);
        const auto out = propagate_linear(pulse, comb_profile(grid, c), options());
        const auto ref = propagate_linear(pulse, flat_profile(grid, 0.0), options());
        const double eta = linear::echo_metrics(out, ref, 1.5, 0.345).eta_afc;
        EXPECT_GT(eta, last) << od;
        last = eta;
    }
}

TEST(LinearEngine, PassiveAndLinear)
{
    const auto pulse = input_pulse();
    const auto grid = DetuningGrid::symmetric(25.0, 0.01);
    const auto prof = comb_profile(grid, comb(400.0));
    const auto out = propagate_linear(pulse, prof, options());
    double ein = 0.0;
    for (const auto& s : pulse.samples) {
        ein += std::norm(s);
    }
    double eout = 0.0;
    for (double v : out.intensity) {
        eout += v;
    }
    EXPECT_LE(eout, ein * (1.0 + 1e-9));

    PulseEnvelope twice = pulse;
    for (auto& s : twice.samples) {
        s *= std::complex<double>(0.0, 2.0);
    }
    const auto out2 = propagate_linear(twice, prof, options());
    const double scale = std::sqrt(peak(out.intensity));
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_NEAR(std::abs(out2.field[i] - std::complex<double>(0.0, 2.0) * out.field[i]), 0.0, 1e-12 * scale);
    }
}

TEST(LinearEngine, RejectsPulseWiderThanGrid)
{
    const auto pulse = input_pulse(20.0, 2.0, 1.0);
    EXPECT_THROW(propagate_linear(pulse, flat_profile(DetuningGrid::symmetric(5.0, 0.01), 0.0), options()),
                 PhysicsError);
}
