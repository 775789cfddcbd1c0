#pragma once

// Minimal RAII front end to FFTW for complex 1-D transforms. Planning is not
// thread-safe in FFTW, so plan creation and destruction are serialized.

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <mutex>
#include <stdexcept>
#include <vector>

namespace afcsim {

namespace detail {
inline std::mutex& fftw_planner_mutex()
{
    static std::mutex m;
    return m;
}
} // namespace detail

enum class FftDirection { forward = FFTW_FORWARD, backward = FFTW_BACKWARD };

/// Unnormalized in-place transform: forward uses exp(-i 2 pi k n / N),
/// backward exp(+i 2 pi k n / N).
inline void fft_inplace(std::vector<std::complex<double>>& data, FftDirection dir)
{
    if (data.empty()) {
        return;
    }
    auto* ptr = reinterpret_cast<fftw_complex*>(data.data());
    fftw_plan plan = nullptr;
    {
        std::lock_guard lock(detail::fftw_planner_mutex());
        plan = fftw_plan_dft_1d(static_cast<int>(data.size()), ptr, ptr, static_cast<int>(dir), FFTW_ESTIMATE);
    }
    if (!plan) {
        throw std::runtime_error("fftw: plan creation failed");
    }
    fftw_execute(plan);
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
}

/// Signed frequency of FFT bin k for N samples spaced dt (units 1/dt).
inline double fft_frequency(std::size_t k, std::size_t n, double dt)
{
    const auto kk = static_cast<double>(k);
    const auto nn = static_cast<double>(n);
    return (k < (n + 1) / 2 ? kk : kk - nn) / (nn * dt);
}

} // namespace afcsim
