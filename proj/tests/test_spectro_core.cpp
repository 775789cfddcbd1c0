#include <afcsim/csv.hpp>
#include <afcsim/level_scheme.hpp>
#include <afcsim/pulse.hpp>
#include <afcsim/spectral_profile.hpp>
#include <afcsim/trace.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace afcsim;

namespace {

/// Intensity FWHM from linear interpolation of the half-maximum crossings.
double measured_fwhm_ns(const PulseEnvelope& env)
{
    std::vector<double> I;
    for (const auto& s : env.samples) {
        I.push_back(std::norm(s));
    }
    const double half = 0.5 * *std::max_element(I.begin(), I.end());
    std::size_t a = 0;
    while (I[a + 1] < half) {
        ++a;
    }
    std::size_t b = I.size() - 1;
    while (I[b - 1] < half) {
        --b;
    }
    const double ta = static_cast<double>(a) + (half - I[a]) / (I[a + 1] - I[a]);
    const double tb = static_cast<double>(b) - (half - I[b]) / (I[b - 1] - I[b]);
    return (tb - ta) * env.dt_ns;
}

int idx(int g, int e)
{
    return IonClass{g, e}.index();
}

} // namespace

TEST(ClassOffsets, ReferenceTransitionIsZero)
{
    const auto off = class_offsets(LevelScheme{});
    EXPECT_EQ(off[idx(0, 1)], 0.0);
}

TEST(ClassOffsets, FirstGroundGapSeparatesClassesByTenPointTwo)
{
    const auto off = class_offsets(LevelScheme{});
    for (int j = 0; j < 3; ++j) {
        EXPECT_NEAR(off[idx(0, j)] - off[idx(1, j)], 10.2, 1e-12);
    }
}

TEST(ClassOffsets, EqualSplittingsMatchHandTable)
{
    const double s = 3.7;
    LevelScheme sc;
    sc.ground_splittings_mhz = {s, s};
    sc.excited_splittings_mhz = {s, s};
    // transition (i -> j) relative to (0 -> 1): (j - 1 - i) s
    const double table[3][3] = {{-s, 0.0, s}, {-2 * s, -s, 0.0}, {-3 * s, -2 * s, -s}};
    const auto off = class_offsets(sc);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            EXPECT_NEAR(off[idx(i, j)], table[i][j], 1e-12) << i << "," << j;
        }
    }
}

TEST(ClassOffsets, BruteForceLevelGapEnumeration)
{
    LevelScheme sc;
    sc.ground_splittings_mhz = {10.2, 17.3};
    sc.excited_splittings_mhz = {4.6, 4.8};
    const double g[3] = {0.0, 10.2, 27.5};
    const double e[3] = {0.0, 4.6, 9.4};
    const auto off = class_offsets(sc);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            EXPECT_NEAR(off[idx(i, j)], (e[j] - g[i]) - (e[1] - g[0]), 1e-12);
        }
    }
}

TEST(ClassOffsets, TranslationCovariantInExcitedShift)
{
    LevelScheme a;
    LevelScheme b;
    b.excited_shift_mhz = 1.25;
    const auto oa = class_offsets(a);
    const auto ob = class_offsets(b);
    for (int k = 0; k < class_count; ++k) {
        EXPECT_NEAR(ob[k] - oa[k], 1.25, 1e-12);
    }
}

TEST(LevelScheme, RejectsInvalidValues)
{
    LevelScheme s;
    s.ground_splittings_mhz[1] = 0.0;
    EXPECT_THROW(s.validate(), PhysicsError);
    LevelScheme r;
    r.roles = {0, 0, 2};
    EXPECT_THROW(r.validate(), PhysicsError);
    EXPECT_NO_THROW(LevelScheme{}.validate());
}

TEST(BuildPulse, GaussianFwhmWithinOneSample)
{
    PulseParams p;
    p.fwhm_ns = 345.0;
    p.dt_ns = 1.0;
    const auto env = build_pulse(p);
    EXPECT_NEAR(measured_fwhm_ns(env), 345.0, p.dt_ns);
    double peak = 0.0;
    for (const auto& s : env.samples) {
        peak = std::max(peak, std::abs(s));
    }
    EXPECT_DOUBLE_EQ(peak, p.peak_rabi);
}

TEST(BuildPulse, SquareAreaIsRabiTimesDuration)
{
    PulseParams p;
    p.shape = PulseShape::square;
    p.fwhm_ns = 500.0;
    p.peak_rabi = 2.0 * std::numbers::pi;
    p.dt_ns = 1.0;
    EXPECT_NEAR(build_pulse(p).area(), p.peak_rabi * 0.5, 1e-12);
}

TEST(BuildPulse, ChirpSpanFromPhaseDifferentiation)
{
    PulseParams p;
    p.shape = PulseShape::chirped_gaussian;
    p.fwhm_ns = 450.0;
    p.chirp_mhz = 1.5;
    p.dt_ns = 1.0;
    const auto env = build_pulse(p);
    double lo = 1e9;
    double hi = -1e9;
    for (std::size_t i = 0; i + 1 < env.samples.size(); ++i) {
        double d = std::arg(env.samples[i + 1]) - std::arg(env.samples[i]);
        d -= 2.0 * std::numbers::pi * std::round(d / (2.0 * std::numbers::pi));
        const double f = -d / (2.0 * std::numbers::pi * env.dt_us());
        lo = std::min(lo, f);
        hi = std::max(hi, f);
    }
    EXPECT_NEAR(hi - lo, 1.5, 0.02 * 1.5);
    EXPECT_NEAR(0.5 * (hi + lo), 0.0, 1e-9);
}

TEST(BuildPulse, UndersampledChirpNamesRequiredRate)
{
    PulseParams p;
    p.shape = PulseShape::chirped_gaussian;
    p.chirp_mhz = 40.0;
    p.carrier_mhz = 30.0;
    p.dt_ns = 5.0;
    try {
        build_pulse(p);
        FAIL() << "expected rejection";
    } catch (const PhysicsError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("undersampled"), std::string::npos);
        EXPECT_NE(msg.find("400 MHz"), std::string::npos) << msg;
    }
}

TEST(BuildPulse, EnergyScalesQuadratically)
{
    PulseParams p;
    p.peak_rabi = 1.0;
    const double e1 = build_pulse(p).energy();
    for (double k : {0.5, 2.0, 3.0}) {
        p.peak_rabi = k;
        EXPECT_NEAR(build_pulse(p).energy(), k * k * e1, 1e-12 * k * k * e1);
    }
}

TEST(BuildPulse, RejectsNonPositiveDuration)
{
    PulseParams p;
    p.fwhm_ns = 0.0;
    EXPECT_THROW(build_pulse(p), PhysicsError);
}

TEST(DetuningGrid, SymmetricAndUniform)
{
    const auto g = DetuningGrid::symmetric(25.0, 0.01);
    EXPECT_EQ(g.size, 5001u);
    EXPECT_NEAR(g[2500], 0.0, 1e-12);
    EXPECT_NEAR(g.start_mhz, -25.0, 1e-9);
    EXPECT_NEAR(g.stop_mhz(), 25.0, 1e-9);
}

TEST(SpectralProfile, RejectsNegativeOd)
{
    auto p = flat_profile(DetuningGrid::symmetric(1.0, 0.1), 1.0);
    p.od[3] = -0.1;
    EXPECT_THROW(p.validate(), PhysicsError);
}

TEST(Csv, ProfileRoundTripIsExact)
{
    CombShape c;
    const auto p = comb_profile(DetuningGrid::symmetric(3.0, 0.01), c);
    std::stringstream ss;
    io::write_profile_csv(ss, p);
    EXPECT_EQ(ss.str().substr(0, 15), "detuning_mhz,od");
    const auto q = io::read_profile_csv(ss);
    ASSERT_EQ(q.od.size(), p.od.size());
    for (std::size_t i = 0; i < p.od.size(); ++i) {
        EXPECT_EQ(q.od[i], p.od[i]);
        EXPECT_NEAR(q.grid[i], p.grid[i], 1e-12);
    }
}

TEST(Csv, TraceRoundTripIsExact)
{
    std::vector<std::complex<double>> f;
    for (int i = 0; i < 50; ++i) {
        f.emplace_back(std::sin(0.1 * i) / 3.0, std::cos(0.37 * i) * 1e-7);
    }
    const auto t = Trace::from_field(-0.5, 0.002, f);
    std::stringstream ss;
    io::write_trace_csv(ss, t);
    EXPECT_EQ(ss.str().substr(0, 23), "time_us,intensity,re,im");
    const auto u = io::read_trace_csv(ss);
    ASSERT_EQ(u.size(), t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        EXPECT_EQ(u.intensity[i], t.intensity[i]);
        EXPECT_EQ(u.field[i], t.field[i]);
        EXPECT_NEAR(u.time(i), t.time(i), 1e-12);
    }
}

TEST(Csv, RejectsMalformedRows)
{
    std::stringstream ss("time_us,intensity\n0,1\n0.1,abc\n");
    try {
        io::read_trace_csv(ss, "x.csv");
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3);
    }
}

TEST(Trace, WindowEnergyOfConstant)
{
    Trace t;
    t.t0_us = 0.0;
    t.dt_us = 0.01;
    t.intensity.assign(1001, 2.0);
    EXPECT_NEAR(window_energy(t, 5.0, 1.0), 2.0, 0.05);
}
