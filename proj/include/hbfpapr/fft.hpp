#pragma once

/**
 * @file fft.hpp
 * @brief Thin FFTW wrapper with a process-wide plan cache.
 *
 * Convention used throughout the library: the forward DFT is unscaled,
 * X[k] = sum_n x[n] e^{-2 pi i k n / N}; the inverse DFT carries 1/N,
 * x[n] = (1/N) sum_k X[k] e^{+2 pi i k n / N}.
 *
 * Plans are created with FFTW_ESTIMATE | FFTW_UNALIGNED and executed through
 * the new-array interface, so a cached plan can be reused on any buffer with
 * the same layout and from any thread. Plan creation is serialized.
 */

#include "core.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <span>
#include <tuple>

namespace hbfpapr::fft {

namespace detail {

struct PlanKey {
    int n;
    int howmany;
    int stride;
    int dist;
    int sign;
    auto operator<=>(const PlanKey&) const = default;
};

class PlanCache {
public:
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    fftw_plan get(const PlanKey& key, Complex* sample) {
        std::lock_guard lock(mutex_);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;
        auto* buf = reinterpret_cast<fftw_complex*>(sample);
        const int n = key.n;
        fftw_plan plan = fftw_plan_many_dft(1, &n, key.howmany, buf, nullptr, key.stride, key.dist, buf,
                                            nullptr, key.stride, key.dist, key.sign,
                                            FFTW_ESTIMATE | FFTW_UNALIGNED);
        if (plan == nullptr) throw Error("fftw plan creation failed");
        plans_.emplace(key, plan);
        return plan;
    }

private:
    std::mutex mutex_;
    std::map<PlanKey, fftw_plan> plans_;
};

inline PlanCache& cache() {
    static PlanCache instance;
    return instance;
}

inline void run(Complex* data, int n, int howmany, int stride, int dist, int sign) {
    if (n == 0 || howmany == 0) return;
    fftw_plan plan = cache().get({n, howmany, stride, dist, sign}, data);
    auto* buf = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(plan, buf, buf);
}

}  // namespace detail

/// In-place unscaled forward DFT.
inline void forward(std::span<Complex> x) {
    detail::run(x.data(), static_cast<int>(x.size()), 1, 1, 0, FFTW_FORWARD);
}

/// In-place inverse DFT including the 1/N factor.
inline void inverse(std::span<Complex> x) {
    detail::run(x.data(), static_cast<int>(x.size()), 1, 1, 0, FFTW_BACKWARD);
    const double s = 1.0 / static_cast<double>(x.size());
    for (auto& v : x) v *= s;
}

/// In-place inverse DFT without the 1/N factor.
inline void inverse_unscaled(std::span<Complex> x) {
    detail::run(x.data(), static_cast<int>(x.size()), 1, 1, 0, FFTW_BACKWARD);
}

/// Unscaled forward DFT of every row of m, in place.
inline void forward_rows(CMatrix& m) {
    detail::run(m.data(), static_cast<int>(m.cols()), static_cast<int>(m.rows()), 1,
                static_cast<int>(m.cols()), FFTW_FORWARD);
}

/// Inverse DFT (with 1/N) of every row of m, in place.
inline void inverse_rows(CMatrix& m) {
    detail::run(m.data(), static_cast<int>(m.cols()), static_cast<int>(m.rows()), 1,
                static_cast<int>(m.cols()), FFTW_BACKWARD);
    m *= 1.0 / static_cast<double>(m.cols());
}

/// Unscaled forward DFT of every column of m (along the stream axis), in place.
inline void forward_cols(CMatrix& m) {
    detail::run(m.data(), static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                static_cast<int>(m.cols()), 1, FFTW_FORWARD);
}

/// Unscaled inverse DFT of every column of m (along the stream axis), in place.
inline void inverse_cols_unscaled(CMatrix& m) {
    detail::run(m.data(), static_cast<int>(m.rows()), static_cast<int>(m.cols()),
                static_cast<int>(m.cols()), 1, FFTW_BACKWARD);
}

/// Signed frequency of FFT bin k for an n-point transform, in [-n/2, n/2).
inline long signed_bin(std::size_t k, std::size_t n) {
    const auto kk = static_cast<long>(k);
    const auto nn = static_cast<long>(n);
    return kk < nn / 2 ? kk : kk - nn;
}

/// FFT bin index of signed frequency m.
inline std::size_t bin_index(long m, std::size_t n) {
    const auto nn = static_cast<long>(n);
    return static_cast<std::size_t>(((m % nn) + nn) % nn);
}

}  // namespace hbfpapr::fft
