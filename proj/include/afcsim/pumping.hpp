#pragma once

// Rate-equation spectral hole burning over the nine ion classes.
//
// Every (bin, class) entry of ClassPopulations is an independent closed
// three-ground-state system. A pump segment is treated as the time average of
// many fast repetitions of its frequency pattern, so the rate matrix of each
// entry is constant during the segment and the update is a single matrix
// exponential.

#include <afcsim/errors.hpp>
#include <afcsim/level_scheme.hpp>
#include <afcsim/parallel.hpp>
#include <afcsim/populations.hpp>
#include <afcsim/spectral_profile.hpp>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace afcsim {

using Matrix3 = std::array<std::array<double, 3>, 3>;

inline Matrix3 filled_matrix(double v)
{
    Matrix3 m{};
    for (auto& row : m) {
        row.fill(v);
    }
    return m;
}

/// Closed interval of pump frequencies in MHz. A zero-width band is a fixed
/// frequency.
struct PumpBand
{
    double lo_mhz = 0.0;
    double hi_mhz = 0.0;
    double width() const { return hi_mhz - lo_mhz; }
};

/// Frequency pattern of one segment, visited at constant sweep speed.
struct PumpPattern
{
    enum class Kind { fixed, sweep, comb };

    Kind kind = Kind::fixed;
    std::vector<PumpBand> bands{PumpBand{}};

    static PumpPattern fixed(double f_mhz) { return {Kind::fixed, {PumpBand{f_mhz, f_mhz}}}; }
    static PumpPattern sweep(double lo_mhz, double hi_mhz) { return {Kind::sweep, {PumpBand{lo_mhz, hi_mhz}}}; }
    static PumpPattern comb(std::vector<PumpBand> bands) { return {Kind::comb, std::move(bands)}; }

    void validate() const
    {
        if (bands.empty()) {
            throw PhysicsError("pump pattern: no frequency bands");
        }
        for (const auto& b : bands) {
            if (!(b.hi_mhz >= b.lo_mhz) || !std::isfinite(b.lo_mhz) || !std::isfinite(b.hi_mhz)) {
                throw PhysicsError("pump pattern: band bounds must be finite and ordered");
            }
            if (kind == Kind::comb && !(b.width() > 0.0)) {
                throw PhysicsError("pump pattern: comb bands must have positive width");
            }
        }
        if (kind != Kind::comb && bands.size() != 1) {
            throw PhysicsError("pump pattern: fixed and sweep patterns hold exactly one band");
        }
    }

    /// Time-averaged excitation of a line at detuning x by a Lorentzian pump
    /// of FWHM gamma (MHz), normalized to 1 for a fixed pump on resonance.
    double excitation(double x_mhz, double gamma_mhz) const
    {
        const double h = 0.5 * gamma_mhz;
        if (kind == Kind::fixed) {
            const double u = (x_mhz - bands.front().lo_mhz) / h;
            return 1.0 / (1.0 + u * u);
        }
        double integral = 0.0;
        double total = 0.0;
        for (const auto& b : bands) {
            const double w = b.width();
            if (w <= 0.0) {
                continue;
            }
            integral += h * (std::atan((x_mhz - b.lo_mhz) / h) - std::atan((x_mhz - b.hi_mhz) / h));
            total += w;
        }
        return total > 0.0 ? integral / total : 0.0;
    }
};

struct PumpSegment
{
    PumpPattern pattern{};
    double duration_ms = 1.0;
    /// Depletion rate of a resonant ground state at line centre, per second.
    double rate_per_s = 1e5;
    /// branching[j][k]: probability that excited level j decays to ground k.
    Matrix3 branching = filled_matrix(1.0 / 3.0);
    /// strengths[i][j]: relative strength of the g_i -> e_j transition.
    Matrix3 strengths = filled_matrix(1.0);
    double linewidth_khz = 50.0;

    double dose() const { return rate_per_s * duration_ms * 1e-3; }

    void validate() const
    {
        pattern.validate();
        if (!(duration_ms >= 0.0) || !std::isfinite(duration_ms)) {
            throw PhysicsError("pump segment: duration must be non-negative");
        }
        if (!(rate_per_s >= 0.0) || !std::isfinite(rate_per_s)) {
            throw PhysicsError("pump segment: rate must be non-negative");
        }
        if (!(linewidth_khz > 0.0)) {
            throw PhysicsError("pump segment: linewidth must be positive");
        }
        for (const auto& row : branching) {
            double s = 0.0;
            for (double v : row) {
                if (v < 0.0) {
                    throw PhysicsError("pump segment: negative branching ratio");
                }
                s += v;
            }
            if (std::abs(s - 1.0) > 1e-9) {
                throw PhysicsError("pump segment: branching rows must sum to 1");
            }
        }
        for (const auto& row : strengths) {
            for (double v : row) {
                if (!(v >= 0.0)) {
                    throw PhysicsError("pump segment: strengths must be non-negative");
                }
            }
        }
    }
};

struct PumpRecipe
{
    std::vector<PumpSegment> segments;
};

namespace detail {

/// Excitation factors of every (bin, class, k, l) line, optionally served
/// from a table on an extended grid when all line separations are whole
/// numbers of bins.
class ExcitationTable
{
public:
    ExcitationTable(const DetuningGrid& grid, const std::array<double, class_count>& off,
                    const PumpPattern& pattern, double gamma_mhz)
        : m_grid(grid), m_off(off), m_pattern(pattern), m_gamma(gamma_mhz)
    {
        long lo = 0;
        long hi = 0;
        for (int c = 0; c < class_count; ++c) {
            for (int kl = 0; kl < class_count; ++kl) {
                const double s = (off[kl] - off[c]) / grid.step_mhz;
                const double r = std::round(s);
                if (std::abs(s - r) > 1e-6) {
                    return;
                }
                m_shift[c][kl] = static_cast<long>(r);
                lo = std::min(lo, m_shift[c][kl]);
                hi = std::max(hi, m_shift[c][kl]);
            }
        }
        m_base = lo;
        const auto n = static_cast<std::size_t>(static_cast<long>(grid.size) + hi - lo);
        m_table.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double x = grid.start_mhz + (static_cast<double>(i) + static_cast<double>(lo)) * grid.step_mhz;
            m_table[i] = pattern.excitation(x, gamma_mhz);
        }
        m_tabulated = true;
    }

    double operator()(std::size_t bin, int cls, int kl) const
    {
        if (m_tabulated) {
            return m_table[static_cast<std::size_t>(static_cast<long>(bin) + m_shift[cls][kl] - m_base)];
        }
        return m_pattern.excitation(m_grid[bin] + m_off[kl] - m_off[cls], m_gamma);
    }

private:
    DetuningGrid m_grid;
    std::array<double, class_count> m_off;
    const PumpPattern& m_pattern;
    double m_gamma;
    bool m_tabulated = false;
    long m_base = 0;
    std::array<std::array<long, class_count>, class_count> m_shift{};
    std::vector<double> m_table;
};

} // namespace detail

/// Advances every entry by one segment: n' = exp(M) n with
/// M[m][k] = sum_l R_kl b[l][m] - delta_mk sum_l R_kl and R_kl the integrated
/// excitation of line g_k -> e_l.
inline ClassPopulations pump_step(const ClassPopulations& state, const LevelScheme& scheme,
                                  const PumpSegment& seg, int threads = 1)
{
    seg.validate();
    const double dose = seg.dose();
    if (dose == 0.0) {
        return state;
    }
    const auto off = class_offsets(scheme);
    const DetuningGrid& grid = state.grid();
    const detail::ExcitationTable table(grid, off, seg.pattern, seg.linewidth_khz * 1e-3);

    ClassPopulations out = state;
    const std::size_t entries = grid.size * class_count;
    parallel_for(entries, threads, [&](std::size_t e) {
        const std::size_t bin = e / class_count;
        const int cls = static_cast<int>(e % class_count);

        Eigen::Matrix3d rates = Eigen::Matrix3d::Zero(); // rates(k, l)
        double total = 0.0;
        for (int k = 0; k < 3; ++k) {
            for (int l = 0; l < 3; ++l) {
                const double r = dose * seg.strengths[k][l] * table(bin, cls, IonClass{k, l}.index());
                rates(k, l) = r;
                total += r;
            }
        }
        if (total < 1e-13) {
            return;
        }
        Eigen::Matrix3d gen = Eigen::Matrix3d::Zero();
        for (int k = 0; k < 3; ++k) {
            for (int m = 0; m < 3; ++m) {
                double in = 0.0;
                for (int l = 0; l < 3; ++l) {
                    in += rates(k, l) * seg.branching[l][m];
                }
                gen(m, k) += in;
            }
            gen(k, k) -= rates.row(k).sum();
        }
        const Eigen::Matrix3d prop = gen.exp();
        auto& n = out.at(bin, cls);
        const Eigen::Vector3d v = prop * Eigen::Vector3d(n[0], n[1], n[2]);
        double s = 0.0;
        for (int k = 0; k < 3; ++k) {
            n[k] = std::max(0.0, v[k]);
            s += n[k];
        }
        for (int k = 0; k < 3; ++k) {
            n[k] /= s;
        }
    });
    return out;
}

inline ClassPopulations run_recipe(const ClassPopulations& state, const LevelScheme& scheme,
                                   const PumpRecipe& recipe, int threads = 1)
{
    ClassPopulations s = state;
    for (const auto& seg : recipe.segments) {
        s = pump_step(s, scheme, seg, threads);
    }
    return s;
}

struct RenderOptions
{
    /// OD of the unpumped ensemble.
    double peak_od_calibration = 18.0;
    Matrix3 strengths = filled_matrix(1.0);
    /// Homogeneous Lorentzian FWHM applied after rendering; 0 disables it.
    double homogeneous_fwhm_khz = 0.0;
};

/// Homogeneous linewidth 1/(pi T2) of the optical transition, in kHz.
inline double homogeneous_fwhm_khz(const LevelScheme& scheme)
{
    return 1e3 / (std::numbers::pi * scheme.t2_opt_us);
}

/// OD per bin from the resonant transition of every entry. The unpumped
/// ensemble renders flat at the calibration value.
inline SpectralProfile absorption_profile(const ClassPopulations& state, const RenderOptions& opt = {})
{
    double norm = 0.0;
    for (int c = 0; c < class_count; ++c) {
        const auto ic = IonClass::from_index(c);
        norm += opt.strengths[ic.ground][ic.excited] / 3.0;
    }
    if (!(norm > 0.0)) {
        throw PhysicsError("absorption_profile: all transition strengths are zero");
    }
    SpectralProfile p = flat_profile(state.grid(), 0.0);
    for (std::size_t b = 0; b < state.bins(); ++b) {
        double sum = 0.0;
        for (int c = 0; c < class_count; ++c) {
            const auto ic = IonClass::from_index(c);
            sum += opt.strengths[ic.ground][ic.excited] * state.at(b, c)[ic.ground];
        }
        p.od[b] = std::max(0.0, opt.peak_od_calibration * sum / norm);
    }
    if (opt.homogeneous_fwhm_khz > 0.0) {
        p = lorentzian_broaden(p, opt.homogeneous_fwhm_khz);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Preparation recipes

struct PitParams
{
    double width_mhz = 18.0;
    double center_mhz = 0.0;
    double od_background = 1.0;
    double segment_ms = 5.0;
    int max_segments = 60;
    /// Rate, branching, strengths and linewidth; pattern and duration are set
    /// by the recipe.
    PumpSegment pump{};
};

struct PitResult
{
    ClassPopulations state;
    /// Mean OD over the inner 90% of the window.
    double achieved_od = 0.0;
    bool reached = false;
    int segments_used = 0;
};

inline double pit_background(const SpectralProfile& p, double center, double width)
{
    return p.mean_od(center, 0.45 * width);
}

/// Repeated sweeps over the window until the background target or the
/// segment budget is reached.
inline PitResult prepare_pit(const ClassPopulations& state, const LevelScheme& scheme, const PitParams& pp,
                             const RenderOptions& render = {}, int threads = 1)
{
    if (!(pp.width_mhz >= 0.0)) {
        throw PhysicsError("prepare_pit: width must be non-negative");
    }
    if (pp.width_mhz > state.grid().span_mhz()) {
        throw PhysicsError("prepare_pit: pit width exceeds the detuning grid span");
    }
    PitResult r{state, 0.0, false, 0};
    if (pp.width_mhz == 0.0) {
        const auto p = absorption_profile(state, render);
        r.achieved_od = p.od_at(pp.center_mhz);
        r.reached = r.achieved_od <= pp.od_background;
        return r;
    }
    PumpSegment seg = pp.pump;
    seg.pattern = PumpPattern::sweep(pp.center_mhz - 0.5 * pp.width_mhz, pp.center_mhz + 0.5 * pp.width_mhz);
    seg.duration_ms = pp.segment_ms;

    r.achieved_od = pit_background(absorption_profile(r.state, render), pp.center_mhz, pp.width_mhz);
    while (r.achieved_od > pp.od_background && r.segments_used < pp.max_segments) {
        r.state = pump_step(r.state, scheme, seg, threads);
        ++r.segments_used;
        r.achieved_od = pit_background(absorption_profile(r.state, render), pp.center_mhz, pp.width_mhz);
    }
    r.reached = r.achieved_od <= pp.od_background;
    return r;
}

struct FeatureParams
{
    double target_od = 2.35;
    double width_mhz = 2.5;
    double center_mhz = 0.0;
    /// Width of the previously prepared pit (for the containment check).
    double pit_width_mhz = 18.0;
    double max_burn_ms = 5000.0;
    double rel_tolerance = 1e-3;
    PumpSegment pump{};
};

struct FeatureResult
{
    ClassPopulations state;
    double peak_od = 0.0;
    double burn_ms = 0.0;
    /// Centre of the burn-back band.
    double burn_center_mhz = 0.0;
    /// Line positions of the burned-back ions other than the feature itself.
    std::vector<double> satellites_mhz;
};

/// Position of the auxiliary-state line of the ions whose feature line sits
/// at `feature_mhz`.
inline double burn_back_center(const LevelScheme& scheme, double feature_mhz)
{
    const auto off = class_offsets(scheme);
    const int ex = LevelScheme::reference_excited;
    return feature_mhz + off[IonClass{scheme.roles.auxiliary, ex}.index()] -
           off[IonClass{scheme.roles.afc, ex}.index()];
}

/// Every non-auxiliary line of ions that have some auxiliary line at
/// `band_center_mhz`.
inline std::vector<double> burn_back_lines(const LevelScheme& scheme, double band_center_mhz)
{
    const auto off = class_offsets(scheme);
    const int aux = scheme.roles.auxiliary;
    std::vector<double> out;
    for (int l = 0; l < 3; ++l) {
        const double nu = band_center_mhz - off[IonClass{aux, l}.index()];
        for (int k = 0; k < 3; ++k) {
            if (k == aux) {
                continue;
            }
            for (int j = 0; j < 3; ++j) {
                out.push_back(nu + off[IonClass{k, j}.index()]);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline double feature_peak(const SpectralProfile& p, double center, double width)
{
    double peak = 0.0;
    for (std::size_t i = 0; i < p.grid.size; ++i) {
        if (std::abs(p.grid[i] - center) <= 0.5 * width + 1e-9) {
            peak = std::max(peak, p.od[i]);
        }
    }
    return peak;
}

/// Burns population of the feature class back from the auxiliary state into
/// the AFC state inside `width`, with the burn duration bisected to the target
/// peak OD.
inline FeatureResult prepare_single_class_feature(const ClassPopulations& state, const LevelScheme& scheme,
                                                  const FeatureParams& fp, const RenderOptions& render = {},
                                                  int threads = 1)
{
    if (!(fp.width_mhz > 0.0) || !(fp.target_od >= 0.0)) {
        throw PhysicsError("prepare_single_class_feature: width must be positive and target OD non-negative");
    }
    if (fp.width_mhz >= fp.pit_width_mhz) {
        std::ostringstream msg;
        msg << "prepare_single_class_feature: feature width " << fp.width_mhz
            << " MHz does not fit inside the " << fp.pit_width_mhz << " MHz pit";
        throw PhysicsError(msg.str());
    }
    FeatureResult r;
    r.burn_center_mhz = burn_back_center(scheme, fp.center_mhz);
    for (double s : burn_back_lines(scheme, r.burn_center_mhz)) {
        if (std::abs(s - fp.center_mhz) > 1e-9) {
            r.satellites_mhz.push_back(s);
        }
    }

    PumpSegment seg = fp.pump;
    seg.pattern = PumpPattern::sweep(r.burn_center_mhz - 0.5 * fp.width_mhz, r.burn_center_mhz + 0.5 * fp.width_mhz);

    auto burn = [&](double ms) {
        seg.duration_ms = ms;
        auto s = pump_step(state, scheme, seg, threads);
        const double od = feature_peak(absorption_profile(s, render), fp.center_mhz, fp.width_mhz);
        return std::pair{std::move(s), od};
    };

    const double start = feature_peak(absorption_profile(state, render), fp.center_mhz, fp.width_mhz);
    if (fp.target_od <= start) {
        r.state = state;
        r.peak_od = start;
        return r;
    }

    double lo = 0.0;
    double hi = std::min(1.0, fp.max_burn_ms);
    auto best = burn(hi);
    while (best.second < fp.target_od) {
        if (hi >= fp.max_burn_ms) {
            std::ostringstream msg;
            msg << "prepare_single_class_feature: target OD " << fp.target_od << " unreachable, maximum "
                << best.second << " after " << hi << " ms";
            throw PhysicsError(msg.str());
        }
        lo = hi;
        hi = std::min(2.0 * hi, fp.max_burn_ms);
        best = burn(hi);
    }
    double best_ms = hi;
    for (int it = 0; it < 60; ++it) {
        if (std::abs(best.second - fp.target_od) <= fp.rel_tolerance * fp.target_od) {
            break;
        }
        const double mid = 0.5 * (lo + hi);
        auto trial = burn(mid);
        const bool above = trial.second >= fp.target_od;
        (above ? hi : lo) = mid;
        if (std::abs(trial.second - fp.target_od) < std::abs(best.second - fp.target_od)) {
            best = std::move(trial);
            best_ms = mid;
        }
    }
    r.state = std::move(best.first);
    r.peak_od = best.second;
    r.burn_ms = best_ms;
    return r;
}

struct AfcParams
{
    double delta_khz = 400.0;
    double finesse = 3.0;
    double bandwidth_mhz = 4.0;
    double center_mhz = 0.0;
    /// Peak OD of the flat feature the comb is carved from.
    double feature_od = 2.35;
    double pit_width_mhz = 18.0;
    /// Carving time per MHz of total gap width.
    double gap_ms_per_mhz = 0.5;
    PumpSegment pump{};
};

struct AfcResult
{
    ClassPopulations state;
    double feature_peak_od = 0.0;
    int teeth = 0;
    double gap_width_khz = 0.0;
    double gap_ms = 0.0;
    std::vector<PumpBand> gaps;
};

/// Checks the comb geometry against the grid; throws PhysicsError.
inline void check_comb_resolvable(const DetuningGrid& grid, double delta_khz, double finesse)
{
    const double bins = delta_khz * 1e-3 / grid.step_mhz;
    if (!(bins >= 4.0 - 1e-9)) {
        std::ostringstream msg;
        msg << "comb unresolvable: spacing " << delta_khz << " kHz spans " << bins
            << " grid bins, minimum 4 bins";
        throw PhysicsError(msg.str());
    }
    if (!(finesse >= 1.0)) {
        throw PhysicsError("comb finesse must be at least 1");
    }
    const double tooth_bins = bins / finesse;
    if (tooth_bins < 2.0 - 1e-9) {
        std::ostringstream msg;
        msg << "comb finesse unresolvable on grid: tooth width " << delta_khz / finesse << " kHz spans "
            << tooth_bins << " bins, minimum 2 bins (finesse <= " << bins / 2.0 << ")";
        throw PhysicsError(msg.str());
    }
}

/// Flat feature of width bandwidth + delta, then gaps carved midway between
/// the teeth.
inline AfcResult prepare_afc(const ClassPopulations& state, const LevelScheme& scheme, const AfcParams& ap,
                             const RenderOptions& render = {}, int threads = 1)
{
    check_comb_resolvable(state.grid(), ap.delta_khz, ap.finesse);
    if (!(ap.bandwidth_mhz > 0.0)) {
        throw PhysicsError("prepare_afc: bandwidth must be positive");
    }
    const double delta = ap.delta_khz * 1e-3;

    FeatureParams fp;
    fp.target_od = ap.feature_od;
    fp.width_mhz = ap.bandwidth_mhz + delta;
    fp.center_mhz = ap.center_mhz;
    fp.pit_width_mhz = ap.pit_width_mhz;
    fp.pump = ap.pump;
    auto feature = prepare_single_class_feature(state, scheme, fp, render, threads);

    AfcResult r;
    r.feature_peak_od = feature.peak_od;
    const int kmax = static_cast<int>(std::floor(0.5 * ap.bandwidth_mhz / delta + 1e-9));
    r.teeth = 2 * kmax + 1;
    const double gap = delta * (1.0 - 1.0 / ap.finesse);
    r.gap_width_khz = gap * 1e3;
    if (gap <= 0.0) {
        r.state = std::move(feature.state);
        return r;
    }
    for (int k = -kmax - 1; k <= kmax; ++k) {
        const double c = ap.center_mhz + (k + 0.5) * delta;
        r.gaps.push_back({c - 0.5 * gap, c + 0.5 * gap});
    }
    PumpSegment seg = ap.pump;
    seg.pattern = PumpPattern::comb(r.gaps);
    seg.duration_ms = ap.gap_ms_per_mhz * gap * static_cast<double>(r.gaps.size());
    r.gap_ms = seg.duration_ms;
    r.state = pump_step(feature.state, scheme, seg, threads);
    return r;
}

} // namespace afcsim
