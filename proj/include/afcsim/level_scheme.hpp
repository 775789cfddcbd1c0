#pragma once

#include <afcsim/errors.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

namespace afcsim {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Indices of the three ground hyperfine states (1/2g, 3/2g, 5/2g) by the role
/// each one plays in the storage protocol.
struct RoleAssignment
{
    int afc = 0;
    int storage = 1;
    int auxiliary = 2;

    bool is_permutation() const
    {
        std::array<int, 3> r{afc, storage, auxiliary};
        std::sort(r.begin(), r.end());
        return r == std::array<int, 3>{0, 1, 2};
    }
};

/// Hyperfine level structure of the optical transition plus the coherence
/// parameters of the ion species.
///
/// Ground levels are ordered 1/2g, 3/2g, 5/2g with increasing energy; the
/// excited levels 1/2e, 3/2e, 5/2e likewise. Transition frequencies are
/// measured relative to the 1/2g -> 3/2e reference line.
struct LevelScheme
{
    std::array<double, 2> ground_splittings_mhz{10.2, 17.3};
    std::array<double, 2> excited_splittings_mhz{4.6, 4.8};
    double inhom_fwhm_ghz = 20.0;
    double t2_opt_us = 49.9;
    double t1_opt_us = 164.0;
    double gamma_inh_spin_khz = 23.6;
    RoleAssignment roles{};
    /// Rigid shift of the whole excited manifold, in MHz.
    double excited_shift_mhz = 0.0;

    static constexpr int reference_ground = 0;
    static constexpr int reference_excited = 1;

    void validate() const
    {
        for (double s : ground_splittings_mhz) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw PhysicsError("level scheme: ground splittings must be positive");
            }
        }
        for (double s : excited_splittings_mhz) {
            if (!(s > 0.0) || !std::isfinite(s)) {
                throw PhysicsError("level scheme: excited splittings must be positive");
            }
        }
        if (!(inhom_fwhm_ghz > 0.0) || !(t2_opt_us > 0.0) || !(t1_opt_us > 0.0)) {
            throw PhysicsError("level scheme: widths and coherence times must be positive");
        }
        if (!(gamma_inh_spin_khz >= 0.0)) {
            throw PhysicsError("level scheme: spin inhomogeneous width must be non-negative");
        }
        if (!roles.is_permutation()) {
            throw PhysicsError("level scheme: role assignment must be a permutation of {0,1,2}");
        }
    }

    std::array<double, 3> ground_levels_mhz() const
    {
        return {0.0, ground_splittings_mhz[0], ground_splittings_mhz[0] + ground_splittings_mhz[1]};
    }

    std::array<double, 3> excited_levels_mhz() const
    {
        return {excited_shift_mhz,
                excited_shift_mhz + excited_splittings_mhz[0],
                excited_shift_mhz + excited_splittings_mhz[0] + excited_splittings_mhz[1]};
    }
};

/// One of the 3x3 ion classes: the set of ions whose ground -> excited
/// transition (ground, excited) is resonant with a given frequency.
struct IonClass
{
    int ground;
    int excited;

    constexpr int index() const { return 3 * ground + excited; }
    static constexpr IonClass from_index(int i) { return {i / 3, i % 3}; }
};

inline constexpr int class_count = 9;

/// Frequency of every g_i -> e_j transition, in MHz, relative to the
/// unshifted 1/2g -> 3/2e reference line. Indexed by IonClass::index().
inline std::array<double, class_count> class_offsets(const LevelScheme& scheme)
{
    const auto g = scheme.ground_levels_mhz();
    const auto e = scheme.excited_levels_mhz();
    // reference position uses the unshifted excited manifold
    const double ref = scheme.excited_splittings_mhz[0] - g[LevelScheme::reference_ground];

    std::array<double, class_count> out{};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            out[IonClass{i, j}.index()] = (e[j] - g[i]) - ref;
        }
    }
    return out;
}

inline std::string ground_label(int i)
{
    static const char* names[] = {"1/2g", "3/2g", "5/2g"};
    return names[i];
}

inline std::string excited_label(int j)
{
    static const char* names[] = {"1/2e", "3/2e", "5/2e"};
    return names[j];
}

} // namespace afcsim
