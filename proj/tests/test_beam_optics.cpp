#include <afcsim/beam_optics.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace afcsim;
using namespace afcsim::beam;

namespace {

/// Power overlap of two centred Gaussian fields by direct 2D quadrature.
double overlap_quadrature(double w, double wx, double wy)
{
    const double span = 4.0 * std::max({w, wx, wy});
    const int n = 600;
    const double h = 2.0 * span / n;
    double cross = 0.0;
    double a = 0.0;
    double b = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = -span + i * h;
        for (int j = 0; j <= n; ++j) {
            const double y = -span + j * h;
            const double e1 = std::exp(-(x * x + y * y) / (w * w));
            const double e2 = std::exp(-x * x / (wx * wx) - y * y / (wy * wy));
            cross += e1 * e2;
            a += e1 * e1;
            b += e2 * e2;
        }
    }
    return cross * cross / (a * b);
}

} // namespace

TEST(BeamOptics, RayleighRangeOfDefaultGeometry)
{
    EXPECT_NEAR(BeamGeometry{}.rayleigh_mm(), 1.829, 1e-3);
}

TEST(BeamOptics, FieldAverageMatchesClosedForm)
{
    BeamGeometry g;
    const double zr = g.rayleigh_mm();
    // int_0^L dz / w = (zR / w0) asinh(L / zR)
    const double expect = zr / g.waist_um * std::asinh(g.length_mm / zr) / g.length_mm;
    EXPECT_NEAR(bulk_figure(g, Convention::field_average) / expect, 1.0, 1e-9);
}

TEST(BeamOptics, IntensityAverageMatchesClosedForm)
{
    BeamGeometry g;
    const double zr = g.rayleigh_mm();
    // int_0^L dz / w^2 = (zR / w0^2) atan(L / zR)
    const double mean = zr / (g.waist_um * g.waist_um) * std::atan(g.length_mm / zr) / g.length_mm;
    EXPECT_NEAR(bulk_figure(g, Convention::intensity_average) / std::sqrt(mean), 1.0, 1e-9);
}

TEST(BeamOptics, CentredFocusSplitsIntoTwoHalves)
{
    BeamGeometry g;
    g.focus_mm = 0.5 * g.length_mm;
    const double zr = g.rayleigh_mm();
    const double expect = zr / g.waist_um * 2.0 * std::asinh(0.5 * g.length_mm / zr) / g.length_mm;
    EXPECT_NEAR(bulk_figure(g, Convention::field_average) / expect, 1.0, 1e-9);
}

TEST(BeamOptics, FigureIsSymmetricAboutMirroredFocus)
{
    BeamGeometry a;
    a.focus_mm = 2.5;
    BeamGeometry b = a;
    b.focus_mm = a.length_mm - a.focus_mm;
    for (auto c : {Convention::field_average, Convention::intensity_average}) {
        EXPECT_NEAR(bulk_figure(a, c), bulk_figure(b, c), 1e-12);
    }
}

TEST(BeamOptics, OverlapMatchesQuadratureAndPeaksWhenMatched)
{
    const WaveguideMode m;
    for (double w : {5.0, 8.5, 14.0, 20.0}) {
        const double o = mode_overlap(w, m);
        EXPECT_NEAR(o, overlap_quadrature(w, m.wx_um, m.wy_um), 1e-6) << w;
        EXPECT_LT(o, 1.0);
    }
    WaveguideMode round;
    round.wx_um = round.wy_um = 11.0;
    EXPECT_NEAR(mode_overlap(11.0, round), 1.0, 1e-15);
    EXPECT_LT(mode_overlap(11.5, round), 1.0);
}

TEST(BeamOptics, EnhancementGrowsWithWaveguideTransmission)
{
    double last = 0.0;
    for (double t : {0.1, 0.3, 0.5, 0.8, 1.0}) {
        WaveguideMode m;
        m.transmission = t;
        const double e = enhancement_factor(BeamGeometry{}, m, Convention::field_average);
        EXPECT_GT(e, last);
        last = e;
    }
}

TEST(BeamOptics, MeasuredSlopeRatio)
{
    EXPECT_NEAR(measured_slope_ratio(1.6, 2.0, 0.69, 15.0), 1.6 / 0.69 * std::sqrt(7.5), 1e-12);
    EXPECT_NEAR(measured_slope_ratio(1.6, 2.0, 0.69, 15.0), 6.350, 1e-3);
}

TEST(BeamOptics, PowerToRabiFollowsSquareRoot)
{
    const RabiCalibration cal;
    EXPECT_NEAR(power_to_rabi(4.0 * cal.power_mw, cal), 2.0 * cal.rabi, 1e-12);
    EXPECT_NEAR(power_to_rabi(0.5, cal) / two_pi, 0.8, 1e-12);
    EXPECT_NEAR(power_to_rabi(0.375, cal) / two_pi, 0.693, 1e-3);
    EXPECT_EQ(power_to_rabi(0.0, cal), 0.0);
    EXPECT_THROW(power_to_rabi(-1.0, cal), PhysicsError);
}

TEST(BeamOptics, RejectsInvalidGeometry)
{
    BeamGeometry g;
    g.waist_um = 0.0;
    EXPECT_THROW(bulk_figure(g, Convention::field_average), PhysicsError);
    WaveguideMode m;
    m.transmission = 1.5;
    EXPECT_THROW(waveguide_figure(m), PhysicsError);
}
