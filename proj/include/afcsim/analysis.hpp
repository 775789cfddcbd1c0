#pragma once

// Parameter extraction (decay fits, Rabi frequency from nutation) and
// efficiency algebra.

#include <afcsim/errors.hpp>
#include <afcsim/fft.hpp>
#include <afcsim/levmar.hpp>
#include <afcsim/pulse.hpp>
#include <afcsim/trace.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace afcsim::analysis {

struct FitResult
{
    std::string model;
    std::vector<std::string> names;
    std::vector<double> values;
    std::vector<double> sigmas;
    double residual_rms = 0.0;
    bool converged = false;
    std::vector<std::string> notes;

    double value(const std::string& name) const { return values.at(index(name)); }
    double sigma(const std::string& name) const { return sigmas.at(index(name)); }

    void add(std::string name, double v, double s)
    {
        names.push_back(std::move(name));
        values.push_back(v);
        sigmas.push_back(std::abs(s));
    }

private:
    std::size_t index(const std::string& name) const
    {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) {
            throw std::out_of_range("FitResult: no parameter " + name);
        }
        return static_cast<std::size_t>(it - names.begin());
    }
};

struct Point
{
    double x = 0.0;
    double y = 0.0;
};

/// Exponent constant of the Gaussian spin decay, pi^2 / (2 ln 2).
inline constexpr double gaussian_decay_constant = std::numbers::pi * std::numbers::pi / (2.0 * std::numbers::ln2);

/// eta_C = exp(-pi^2 gamma^2 T^2 / (2 ln 2)), gamma in kHz and T in us.
inline double spin_coherence_factor(double gamma_inh_khz, double storage_us)
{
    const double g = gamma_inh_khz * 1e-3;
    return std::exp(-gaussian_decay_constant * g * g * storage_us * storage_us);
}

/// I(x) = A exp(-2 x / T2) with x = 2 tau in us.
inline FitResult fit_exponential_decay(const std::vector<Point>& pts)
{
    if (pts.size() < 3) {
        throw PhysicsError("fit_exponential_decay: need at least 3 points");
    }
    double xmin = pts.front().x;
    double xmax = pts.front().x;
    for (const auto& p : pts) {
        if (!(p.y > 0.0)) {
            throw PhysicsError("fit_exponential_decay: efficiencies must be positive");
        }
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
    }
    const double span = xmax - xmin;
    if (!(span > 0.0)) {
        throw PhysicsError("fit_exponential_decay: points need distinct abscissae");
    }

    // log-linear start: ln y = ln A - k x
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (const auto& p : pts) {
        const double ly = std::log(p.y);
        sx += p.x;
        sy += ly;
        sxx += p.x * p.x;
        sxy += p.x * ly;
    }
    const auto n = static_cast<double>(pts.size());
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    const double icpt = (sy - slope * sx) / n;

    // parameters (A, k) with k = 2 / T2
    Eigen::VectorXd p0(2);
    p0 << std::exp(icpt), -slope;
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            r[static_cast<Eigen::Index>(i)] = p[0] * std::exp(-p[1] * pts[i].x) - pts[i].y;
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd j(pts.size(), 2);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double e = std::exp(-p[1] * pts[i].x);
            j(static_cast<Eigen::Index>(i), 0) = e;
            j(static_cast<Eigen::Index>(i), 1) = -p[0] * pts[i].x * e;
        }
        return j;
    };
    const auto lm = fit::levenberg_marquardt(residual, p0, jacobian);

    FitResult out;
    out.model = "exponential: A*exp(-2*x/T2)";
    out.residual_rms = lm.residual_rms;
    const double a = lm.params[0];
    const double k = lm.params[1];
    const double sa = std::sqrt(std::max(0.0, lm.covariance(0, 0)));
    const double sk = std::sqrt(std::max(0.0, lm.covariance(1, 1)));
    out.converged = lm.converged;
    if (!(k > 1e-9 / span) || !std::isfinite(k)) {
        out.converged = false;
        out.notes.push_back("non-decaying data: T2 diverges");
        out.add("T2_us", std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
    } else {
        out.add("T2_us", 2.0 / k, 2.0 * sk / (k * k));
    }
    out.add("A", a, sa);
    return out;
}

/// eta(T) = exp(-pi^2 gamma^2 T^2 / (2 ln 2)) with T in us; gamma in kHz.
inline FitResult fit_gaussian_decay(const std::vector<Point>& pts)
{
    if (pts.size() < 3) {
        throw PhysicsError("fit_gaussian_decay: need at least 3 points");
    }
    // moment start from ln eta = -c u T^2 through the origin, u = gamma^2 (MHz^2)
    double num = 0.0;
    double den = 0.0;
    for (const auto& p : pts) {
        if (p.y > 0.0) {
            const double t2 = p.x * p.x;
            num += -t2 * std::log(p.y);
            den += gaussian_decay_constant * t2 * t2;
        }
    }
    Eigen::VectorXd p0(1);
    p0 << (den > 0.0 ? std::max(0.0, num / den) : 0.0);
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            r[static_cast<Eigen::Index>(i)] =
                std::exp(-gaussian_decay_constant * p[0] * pts[i].x * pts[i].x) - pts[i].y;
        }
        return r;
    };
    auto jacobian = [&](const Eigen::VectorXd& p) {
        Eigen::MatrixXd j(pts.size(), 1);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double t2 = pts[i].x * pts[i].x;
            j(static_cast<Eigen::Index>(i), 0) = -gaussian_decay_constant * t2 * std::exp(-gaussian_decay_constant * p[0] * t2);
        }
        return j;
    };
    const auto lm = fit::levenberg_marquardt(residual, p0, jacobian);

    FitResult out;
    out.model = "gaussian: exp(-pi^2*gamma^2*T^2/(2*ln2))";
    out.residual_rms = lm.residual_rms;
    out.converged = lm.converged;
    const double u = lm.params[0];
    const double su = std::sqrt(std::max(0.0, lm.covariance(0, 0)));
    if (u <= 0.0) {
        out.add("gamma_inh_khz", 0.0, 1e3 * std::sqrt(su));
        out.notes.push_back("no resolvable decay: gamma at the u >= 0 boundary");
    } else {
        const double g = std::sqrt(u);
        out.add("gamma_inh_khz", 1e3 * g, 1e3 * su / (2.0 * g));
    }
    return out;
}

/// Centred moving average over `length` samples (fractional ends weighted);
/// zeroes a sinusoid whose period equals the window.
inline std::vector<double> boxcar(const std::vector<double>& s, double length)
{
    if (!(length >= 1.0)) {
        return s;
    }
    const auto h = static_cast<long>(std::floor(0.5 * (length - 1.0)));
    const double frac = 0.5 * (length - 1.0) - static_cast<double>(h);
    const auto n = static_cast<long>(s.size());
    std::vector<double> out(s.size());
    for (long i = 0; i < n; ++i) {
        double acc = 0.0;
        double w = 0.0;
        for (long j = -h - 1; j <= h + 1; ++j) {
            const double wt = std::abs(j) <= h ? 1.0 : frac;
            const long q = i + j;
            if (wt == 0.0 || q < 0 || q >= n) {
                continue;
            }
            acc += wt * s[static_cast<std::size_t>(q)];
            w += wt;
        }
        out[static_cast<std::size_t>(i)] = acc / w;
    }
    return out;
}

inline std::vector<double> median3(const std::vector<double>& s)
{
    std::vector<double> out(s);
    for (std::size_t i = 1; i + 1 < s.size(); ++i) {
        double a = s[i - 1];
        double b = s[i];
        double c = s[i + 1];
        out[i] = std::max(std::min(a, b), std::min(std::max(a, b), c));
    }
    return out;
}

/// Dominant frequency (MHz) above `min_mhz` of a uniformly sampled signal:
/// Hann window, zero padding to 8x, parabolic peak interpolation.
inline std::optional<double> dominant_frequency(const std::vector<double>& s, double dt_us, double min_mhz)
{
    if (s.size() < 8 || !(dt_us > 0.0)) {
        return std::nullopt;
    }
    double mean = 0.0;
    for (double v : s) {
        mean += v;
    }
    mean /= static_cast<double>(s.size());
    std::size_t len = 1;
    while (len < 8 * s.size()) {
        len *= 2;
    }
    std::vector<cplx> b(len, cplx{});
    const auto last = static_cast<double>(s.size() - 1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        const double w = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / last));
        b[i] = (s[i] - mean) * w;
    }
    fft_inplace(b, FftDirection::forward);
    std::size_t best = 0;
    double peak = 0.0;
    for (std::size_t k = 1; k + 1 < len / 2; ++k) {
        if (fft_frequency(k, len, dt_us) < min_mhz) {
            continue;
        }
        const double m = std::abs(b[k]);
        if (m > peak) {
            peak = m;
            best = k;
        }
    }
    if (best == 0) {
        return std::nullopt;
    }
    const double y0 = std::abs(b[best - 1]);
    const double y1 = std::abs(b[best]);
    const double y2 = std::abs(b[best + 1]);
    const double den = y0 - 2.0 * y1 + y2;
    const double d = den != 0.0 ? 0.5 * (y0 - y2) / den : 0.0;
    return (static_cast<double>(best) + d) / (static_cast<double>(len) * dt_us);
}

/// First minimum of J1(x)/x; the rounded estimate uses 5.1.
inline constexpr double nutation_first_minimum = 5.1356;
inline constexpr double nutation_rounded_constant = 5.1;

struct RabiExtraction
{
    /// Omega from the t_pi criterion (parameters omega, t_pi_us).
    FitResult t_pi;
    /// Full-curve fit B + A * 2 J1(Omega t)/(Omega t) (parameters omega, A, B).
    FitResult j1;
    /// Set when the curve does not follow the J1 form, so t_pi is biased.
    bool model_mismatch = false;
};

/// The trace intensity is the absorption signal 1 - P_out/P_in starting at
/// pulse turn-on. `notch_mhz` removes a beat by averaging over its period.
inline RabiExtraction extract_rabi(const Trace& trace, std::optional<double> notch_mhz = std::nullopt,
                                   double mismatch_threshold = 0.05)
{
    if (trace.size() < 5 || !(trace.dt_us > 0.0)) {
        throw PhysicsError("extract_rabi: trace too short");
    }
    std::vector<double> s = trace.intensity;
    // the boxcar is one-sided within half a window of turn-on; no minimum is taken there
    std::size_t first = 1;
    if (notch_mhz) {
        if (!(*notch_mhz > 0.0)) {
            throw PhysicsError("extract_rabi: notch frequency must be positive");
        }
        const double length = 1.0 / (*notch_mhz * trace.dt_us);
        s = boxcar(s, length);
        first = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(0.5 * length)));
    }
    s = median3(s);

    RabiExtraction out;
    out.t_pi.model = "t_pi: Omega = 5.1 / t_pi";
    std::optional<double> t_pi;
    // first strict minimum; plateaus left by the median filter count as one point
    for (std::size_t i = first; i + 1 < s.size(); ++i) {
        if (!(s[i] < s[i - 1])) {
            continue;
        }
        std::size_t j = i;
        while (j + 1 < s.size() && s[j + 1] == s[i]) {
            ++j;
        }
        if (j + 1 >= s.size() || !(s[j + 1] > s[i])) {
            continue;
        }
        double centre = 0.5 * static_cast<double>(i + j);
        if (i == j) {
            const double y0 = s[i - 1];
            const double y1 = s[i];
            const double y2 = s[i + 1];
            centre += 0.5 * (y0 - y2) / (y0 - 2.0 * y1 + y2);
        }
        t_pi = centre * trace.dt_us;
        break;
    }
    if (!t_pi || !(*t_pi > 0.0)) {
        out.t_pi.converged = false;
        out.t_pi.notes.push_back("no local minimum after turn-on");
        out.j1.model = "j1";
        out.j1.converged = false;
        return out;
    }
    const double omega = nutation_rounded_constant / *t_pi;
    out.t_pi.converged = true;
    out.t_pi.add("omega", omega, omega * 0.5 * trace.dt_us / *t_pi);
    out.t_pi.add("t_pi_us", *t_pi, 0.5 * trace.dt_us);

    // secondary estimate: full-curve fit on the unsmoothed (notched) signal
    std::vector<double> y = trace.intensity;
    if (notch_mhz) {
        y = boxcar(y, 1.0 / (*notch_mhz * trace.dt_us));
    }
    auto shape = [](double x) { return x < 1e-8 ? 1.0 : 2.0 * std::cyl_bessel_j(1.0, x) / x; };
    auto residual = [&](const Eigen::VectorXd& p) {
        Eigen::VectorXd r(static_cast<Eigen::Index>(y.size()));
        for (std::size_t i = 0; i < y.size(); ++i) {
            const double t = trace.time(i) - trace.t0_us;
            r[static_cast<Eigen::Index>(i)] = p[2] + p[1] * shape(std::abs(p[0]) * t) - y[i];
        }
        return r;
    };
    double ymax = *std::max_element(y.begin(), y.end());
    double ymin = *std::min_element(y.begin(), y.end());
    Eigen::VectorXd p0(3);
    p0 << nutation_first_minimum / *t_pi, ymax - ymin, 0.0;
    const auto lm = fit::levenberg_marquardt(residual, p0);
    out.j1.model = "j1: B + A*2*J1(Omega*t)/(Omega*t)";
    out.j1.residual_rms = lm.residual_rms;
    out.j1.add("omega", std::abs(lm.params[0]), std::sqrt(std::max(0.0, lm.covariance(0, 0))));
    out.j1.add("A", lm.params[1], std::sqrt(std::max(0.0, lm.covariance(1, 1))));
    out.j1.add("B", lm.params[2], std::sqrt(std::max(0.0, lm.covariance(2, 2))));
    const double scale = std::max(ymax - ymin, 1e-300);
    out.model_mismatch = !lm.converged || lm.residual_rms > mismatch_threshold * scale;
    out.j1.converged = !out.model_mismatch;
    if (out.model_mismatch) {
        out.j1.notes.push_back("signal does not follow J1(x)/x; full-curve fit rejected");
        out.t_pi.notes.push_back("model mismatch: t_pi estimate is biased for this signal");
    }
    return out;
}

struct SpinWaveEfficiency
{
    double eta_c = 1.0;
    double eta_sw = 0.0;
};

/// eta_SW = eta_AFC * eta_T^2 * eta_C.
inline SpinWaveEfficiency efficiency_decomposition(double eta_afc, double eta_t, double gamma_inh_khz,
                                                   double storage_us)
{
    if (!(eta_afc >= 0.0 && eta_afc <= 1.0) || !(eta_t >= 0.0 && eta_t <= 1.0)) {
        throw PhysicsError("efficiency_decomposition: efficiencies must lie in [0, 1]");
    }
    if (!(gamma_inh_khz >= 0.0) || !(storage_us >= 0.0)) {
        throw PhysicsError("efficiency_decomposition: linewidth and storage time must be non-negative");
    }
    SpinWaveEfficiency e;
    e.eta_c = spin_coherence_factor(gamma_inh_khz, storage_us);
    e.eta_sw = eta_afc * eta_t * eta_t * e.eta_c;
    return e;
}

/// eta_d = eta_AFC * eta_wg * exp(-OD_B).
inline double device_efficiency(double eta_afc, double waveguide_transmission, double od_background)
{
    if (!(eta_afc >= 0.0) || !(waveguide_transmission >= 0.0) || !(od_background >= 0.0)) {
        throw PhysicsError("device_efficiency: inputs must be non-negative");
    }
    return eta_afc * waveguide_transmission * std::exp(-od_background);
}

/// T2 = 1 / (1/T2_0 + beta x) with x = P_p OD / t_p.
inline double isd_trend(double t2_0_us, double beta, double excitation)
{
    if (!(t2_0_us > 0.0) || !(beta >= 0.0) || !(excitation >= 0.0)) {
        throw PhysicsError("isd_trend: T2_0 must be positive, beta and excitation non-negative");
    }
    return 1.0 / (1.0 / t2_0_us + beta * excitation);
}

} // namespace afcsim::analysis
