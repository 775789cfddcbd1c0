#pragma once

#include <afcsim/errors.hpp>
#include <afcsim/level_scheme.hpp>
#include <afcsim/spectral_profile.hpp>

#include <array>
#include <cmath>
#include <vector>

namespace afcsim {

/// Ground-state population fractions of every (detuning bin, ion class)
/// entry. Entry (b, c) holds the ions whose class-c transition is resonant
/// with bin b; each entry is an independent closed three-level system.
class ClassPopulations
{
public:
    using Triple = std::array<double, 3>;

    ClassPopulations() = default;

    /// Thermal start: every ground state equally populated.
    explicit ClassPopulations(const DetuningGrid& grid)
        : m_grid(grid), m_n(grid.size * class_count, Triple{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0})
    {
    }

    const DetuningGrid& grid() const { return m_grid; }
    std::size_t bins() const { return m_grid.size; }

    const Triple& at(std::size_t bin, int cls) const
    {
        return m_n[bin * class_count + static_cast<std::size_t>(cls)];
    }
    Triple& at(std::size_t bin, int cls) { return m_n[bin * class_count + static_cast<std::size_t>(cls)]; }

    /// Largest |sum - 1| over all entries.
    double max_normalization_error() const
    {
        double worst = 0.0;
        for (const auto& t : m_n) {
            worst = std::max(worst, std::abs(t[0] + t[1] + t[2] - 1.0));
        }
        return worst;
    }

    bool fractions_in_range(double tol = 1e-9) const
    {
        for (const auto& t : m_n) {
            for (double v : t) {
                if (v < -tol || v > 1.0 + tol) {
                    return false;
                }
            }
        }
        return true;
    }

    bool operator==(const ClassPopulations& o) const = default;

private:
    DetuningGrid m_grid{};
    std::vector<Triple> m_n;
};

} // namespace afcsim
