#include <afcsim/pumping.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace afcsim;

namespace {

double integral(const SpectralProfile& p)
{
    double s = 0.0;
    for (double v : p.od) {
        s += v;
    }
    return s * p.grid.step_mhz;
}

/// Reference rate equations for one entry under a fixed Lorentzian pump,
/// integrated with small RK4 steps instead of a matrix exponential.
std::array<double, 3> rk4_entry(const LevelScheme& sc, double bin_mhz, int cls, double pump_mhz, double gamma_mhz,
                                double dose, std::array<double, 3> n)
{
    const auto off = class_offsets(sc);
    double R[3][3];
    for (int k = 0; k < 3; ++k) {
        for (int l = 0; l < 3; ++l) {
            const double x = bin_mhz + off[3 * k + l] - off[cls];
            const double u = (x - pump_mhz) / (0.5 * gamma_mhz);
            R[k][l] = dose / (1.0 + u * u);
        }
    }
    auto f = [&](const std::array<double, 3>& v) {
        std::array<double, 3> d{};
        for (int k = 0; k < 3; ++k) {
            for (int l = 0; l < 3; ++l) {
                const double flow = R[k][l] * v[k];
                d[k] -= flow;
                for (int m = 0; m < 3; ++m) {
                    d[m] += flow / 3.0;
                }
            }
        }
        return d;
    };
    const int steps = 20000;
    const double h = 1.0 / steps;
    for (int s = 0; s < steps; ++s) {
        auto add = [&](const std::array<double, 3>& a, const std::array<double, 3>& b, double c) {
            return std::array<double, 3>{a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]};
        };
        const auto k1 = f(n);
        const auto k2 = f(add(n, k1, 0.5 * h));
        const auto k3 = f(add(n, k2, 0.5 * h));
        const auto k4 = f(add(n, k3, h));
        for (int m = 0; m < 3; ++m) {
            n[m] += h / 6.0 * (k1[m] + 2 * k2[m] + 2 * k3[m] + k4[m]);
        }
    }
    return n;
}

PitResult default_pit(const ClassPopulations& start)
{
    return prepare_pit(start, LevelScheme{}, PitParams{});
}

} // namespace

TEST(Pumping, UnpumpedProfileIsFlatAtCalibration)
{
    const ClassPopulations st(DetuningGrid::symmetric());
    const auto p = absorption_profile(st);
    const std::size_t n = p.grid.size;
    for (std::size_t i = n / 10; i < n - n / 10; ++i) {
        EXPECT_NEAR(p.od[i], 18.0, 0.18);
    }
}

TEST(Pumping, MatrixExponentialMatchesRateEquationIntegration)
{
    LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric(20.0, 0.05));
    PumpSegment seg;
    seg.pattern = PumpPattern::fixed(0.3);
    seg.duration_ms = 0.02;
    seg.rate_per_s = 1e5;
    seg.linewidth_khz = 400.0;
    const auto out = pump_step(st, sc, seg);
    for (std::size_t bin : {390u, 400u, 406u, 410u, 600u}) {
        for (int c : {0, 1, 4, 8}) {
            const auto ref = rk4_entry(sc, st.grid()[bin], c, 0.3, 0.4, seg.dose(), {1.0 / 3, 1.0 / 3, 1.0 / 3});
            for (int m = 0; m < 3; ++m) {
                EXPECT_NEAR(out.at(bin, c)[m], ref[m], 1e-10) << bin << " " << c << " " << m;
            }
        }
    }
}

TEST(Pumping, ZeroRateIsIdentity)
{
    const ClassPopulations st(DetuningGrid::symmetric(5.0, 0.01));
    PumpSegment seg;
    seg.pattern = PumpPattern::sweep(-1.0, 1.0);
    seg.rate_per_s = 0.0;
    EXPECT_TRUE(pump_step(st, LevelScheme{}, seg) == st);
}

TEST(Pumping, SegmentsComposeAsSemigroup)
{
    const LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric(10.0, 0.05));
    PumpSegment a;
    a.pattern = PumpPattern::sweep(-2.0, 2.0);
    a.duration_ms = 0.3;
    PumpSegment b = a;
    b.duration_ms = 0.7;
    PumpSegment ab = a;
    ab.duration_ms = 1.0;
    const auto two = pump_step(pump_step(st, sc, a), sc, b);
    const auto one = pump_step(st, sc, ab);
    for (std::size_t i = 0; i < st.bins(); ++i) {
        for (int c = 0; c < class_count; ++c) {
            for (int m = 0; m < 3; ++m) {
                EXPECT_NEAR(two.at(i, c)[m], one.at(i, c)[m], 1e-12);
            }
        }
    }
}

TEST(Pumping, PitOpensTransparencyWindow)
{
    const ClassPopulations st(DetuningGrid::symmetric());
    const auto pit = default_pit(st);
    ASSERT_TRUE(pit.reached);
    const auto p = absorption_profile(pit.state);
    EXPECT_LE(p.mean_od(0.0, 0.45 * 18.0), 1.0);
    double out_sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < p.grid.size; ++i) {
        if (std::abs(p.grid[i]) > 9.0) {
            out_sum += p.od[i];
            ++n;
        }
    }
    EXPECT_GE(out_sum / static_cast<double>(n), 0.9 * 18.0);
}

TEST(Pumping, SumRuleForClassesInsideGrid)
{
    // every line of the ions touched by a +-1 MHz pump lies well inside +-60 MHz
    const LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric(60.0, 0.05));
    PumpSegment seg;
    seg.pattern = PumpPattern::sweep(-1.0, 1.0);
    seg.duration_ms = 1.0;
    seg.linewidth_khz = 2.0;
    const auto before = integral(absorption_profile(st));
    const auto after = integral(absorption_profile(pump_step(st, sc, seg)));
    EXPECT_NEAR(after / before, 1.0, 1e-6);
}

TEST(Pumping, ConservationAndRangeAfterFullPreparation)
{
    const LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric());
    const auto pit = default_pit(st);
    const auto afc = prepare_afc(pit.state, sc, AfcParams{});
    for (const auto* s : {&pit.state, &afc.state}) {
        EXPECT_LE(s->max_normalization_error(), 1e-9);
        EXPECT_TRUE(s->fractions_in_range(1e-9));
        for (double v : absorption_profile(*s).od) {
            EXPECT_GE(v, 0.0);
        }
    }
}

TEST(Pumping, DeterministicAcrossThreadCounts)
{
    const LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric());
    PitParams pp;
    const auto a = prepare_pit(st, sc, pp, {}, 1);
    const auto b = prepare_pit(st, sc, pp, {}, 1);
    const auto c = prepare_pit(st, sc, pp, {}, 3);
    EXPECT_TRUE(a.state == b.state);
    EXPECT_TRUE(a.state == c.state);
}

TEST(Pumping, SingleClassFeatureAddsAbsorptionOnlyOnLinesOfBurnedIons)
{
    const LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric());
    const auto pit = default_pit(st);
    FeatureParams fp;
    const auto f = prepare_single_class_feature(pit.state, sc, fp);
    EXPECT_NEAR(f.peak_od, 2.35, 2.35 * 2e-3);
    // ions touched by the burn band through any line g_k -> e_l, and every line they own
    const double g[3] = {0.0, 10.2, 27.5};
    const double e[3] = {0.0, 4.6, 9.4};
    std::vector<double> lines;
    for (int k = 0; k < 3; ++k) {
        for (int l = 0; l < 3; ++l) {
            for (int i = 0; i < 3; ++i) {
                for (int j = 0; j < 3; ++j) {
                    lines.push_back(f.burn_center_mhz + (e[j] - g[i]) - (e[l] - g[k]));
                }
            }
        }
    }
    const auto before = absorption_profile(pit.state);
    const auto after = absorption_profile(f.state);
    // margin covers the pump Lorentzian tails over the long burn
    const double reach = 0.5 * fp.width_mhz + 0.3;
    for (std::size_t i = 0; i < after.grid.size; ++i) {
        const double x = after.grid[i];
        if (std::abs(x) > 9.0 || after.od[i] - before.od[i] < 0.05) {
            continue;
        }
        bool explained = false;
        for (double s : lines) {
            explained = explained || std::abs(x - s) <= reach;
        }
        EXPECT_TRUE(explained) << "unexpected absorption at " << x << " MHz";
    }
    for (double s : f.satellites_mhz) {
        bool listed = false;
        for (double v : lines) {
            listed = listed || std::abs(v - s) < 1e-9;
        }
        EXPECT_TRUE(listed) << s;
    }
}

TEST(Pumping, CombHasTeethAtMultiplesOfSpacing)
{
    const LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric());
    const auto pit = default_pit(st);
    const auto afc = prepare_afc(pit.state, sc, AfcParams{});
    const auto p = absorption_profile(afc.state);
    EXPECT_EQ(afc.teeth, 11);
    for (int k = -2; k <= 2; ++k) {
        EXPECT_GT(p.od_at(0.4 * k), 2.0 * p.od_at(0.4 * k + 0.2)) << k;
    }
}

TEST(Pumping, HalvingToothOdAtFixedFinesse)
{
    // longer carving only lowers the gaps; tooth OD follows the feature OD
    const LevelScheme sc;
    const ClassPopulations st(DetuningGrid::symmetric());
    const auto pit = default_pit(st);
    AfcParams hi;
    AfcParams lo;
    lo.feature_od = 0.5 * hi.feature_od;
    const auto ph = absorption_profile(prepare_afc(pit.state, sc, hi).state);
    const auto pl = absorption_profile(prepare_afc(pit.state, sc, lo).state);
    EXPECT_LT(pl.od_at(0.0), ph.od_at(0.0));
}

TEST(Pumping, UnresolvableCombIsRejected)
{
    const ClassPopulations st(DetuningGrid::symmetric(25.0, 0.01));
    AfcParams ap;
    ap.delta_khz = 30.0;
    try {
        prepare_afc(st, LevelScheme{}, ap);
        FAIL();
    } catch (const PhysicsError& e) {
        EXPECT_NE(std::string(e.what()).find("comb unresolvable"), std::string::npos);
    }
}
