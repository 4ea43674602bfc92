#pragma once

/**
 * @file str.hpp
 * @brief Single-antenna sparse tone reservation.
 *
 * Peaks above a threshold are cancelled by subtracting circularly shifted
 * copies of the band-limited kernel (the "digital SINC"). The dense
 * least-squares projection onto the occupied band is provided as well; it
 * is the reference the sparse path must reproduce exactly.
 */

#include "core.hpp"
#include "fft.hpp"
#include "signal.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace hbfpapr {

/**
 * @brief Time response of the occupied band, n_fft * IDFT(rectangle).
 *
 * values[0] = n_sc and |values[d]| = |sin(pi n_sc d / N) / sin(pi d / N)|.
 * With the DC-centered band of an even n_sc the band centre sits half a bin
 * below DC, so values[d] also carries the phase e^{-i pi d / N} and the
 * kernel is Hermitian (values[N-d] = conj(values[d])) rather than real.
 * For odd n_sc the kernel is real and symmetric.
 *
 * window_len == 0 means the full kernel; otherwise only window_len taps
 * around d = 0 are nonzero.
 */
struct SincKernel {
    CVector values;
    std::size_t n_sc = 0;
    std::size_t window_len = 0;

    std::size_t n_fft() const { return values.size(); }
    bool windowed() const { return window_len != 0 && window_len < values.size(); }

    /// Kernel scaled to unit peak, values[d] / n_sc.
    Complex unit(std::size_t d) const { return values[d] / static_cast<double>(n_sc); }

    /// Offsets [first, first + count) (mod N) that carry nonzero taps.
    long first_tap() const { return windowed() ? -static_cast<long>(window_len / 2) : 0; }
    std::size_t tap_count() const { return windowed() ? window_len : values.size(); }
};

/// Closed-form kernel for the DC-centered band of n_sc bins.
inline SincKernel build_sinc(std::size_t n_fft, std::size_t n_sc) {
    if (n_fft == 0 || n_sc == 0 || n_sc > n_fft) throw ShapeError("build_sinc: need 0 < n_sc <= n_fft");
    SincKernel k;
    k.n_sc = n_sc;
    k.values.resize(n_fft);
    const double n = static_cast<double>(n_fft);
    const double m = static_cast<double>(n_sc);
    // Band centre in bins: -floor(n_sc/2) + (n_sc - 1)/2, i.e. -1/2 for even n_sc and 0 for odd.
    const double centre = -static_cast<double>(n_sc / 2) + (m - 1.0) / 2.0;
    k.values[0] = Complex(m, 0.0);
    for (std::size_t d = 1; d < n_fft; ++d) {
        const double dd = static_cast<double>(d);
        const double ratio = std::sin(kPi * m * dd / n) / std::sin(kPi * dd / n);
        k.values[d] = std::polar(1.0, 2.0 * kPi * centre * dd / n) * ratio;
    }
    return k;
}

/// Kernel computed directly as n_fft * IDFT of the occupied rectangle.
inline SincKernel sinc_from_rectangle(std::size_t n_fft, std::size_t n_sc) {
    SincKernel k;
    k.n_sc = n_sc;
    k.values.assign(n_fft, Complex{});
    for (auto b : occupied_bins(n_fft, n_sc)) k.values[b] = 1.0;
    fft::inverse_unscaled(k.values);
    return k;
}

/**
 * Keeps window_len taps around d = 0, offsets [-window_len/2, window_len - window_len/2).
 * Cuts the per-peak cost from n_fft to window_len at the price of out-of-band leakage.
 */
inline SincKernel windowed_kernel(const SincKernel& kernel, std::size_t window_len) {
    const std::size_t n = kernel.n_fft();
    if (window_len == 0 || window_len > n) throw ShapeError("windowed_kernel: need 0 < window_len <= n_fft");
    SincKernel w = kernel;
    if (window_len == n) {
        w.window_len = 0;
        return w;
    }
    w.window_len = window_len;
    std::vector<char> keep(n, 0);
    const long first = -static_cast<long>(window_len / 2);
    for (std::size_t t = 0; t < window_len; ++t) keep[fft::bin_index(first + static_cast<long>(t), n)] = 1;
    for (std::size_t d = 0; d < n; ++d)
        if (!keep[d]) w.values[d] = Complex{};
    return w;
}

/// Columns: index,value_re,value_im
inline void write_kernel_csv(std::ostream& os, const SincKernel& k) {
    os << "index,value_re,value_im\n";
    for (std::size_t d = 0; d < k.n_fft(); ++d)
        os << d << ',' << fmt_double(k.values[d].real(), "%.12g") << ',' << fmt_double(k.values[d].imag(), "%.12g")
           << '\n';
}

// ---------------------------------------------------------------------------

struct Peak {
    std::size_t index;
    Complex amplitude;
};

using PeakSet = std::vector<Peak>;

/// Normalized thresholds, one per iteration, plus the DAC-domain projection scale.
struct ThresholdSchedule {
    std::vector<double> tau_norm;
    double coef = 1.0;
    ThresholdNorm norm = ThresholdNorm::Rms;
};

/// Absolute threshold for a normalized gene on signal x.
inline double absolute_threshold(std::span<const Complex> x, double tau_norm, ThresholdNorm norm) {
    double e = 0.0;
    for (const auto& v : x) e += std::norm(v);
    const double l2 = std::sqrt(e);
    return norm == ThresholdNorm::Rms ? tau_norm * l2 / std::sqrt(static_cast<double>(x.size())) : tau_norm * l2;
}

/// Excess above tau: y(n) = x(n)(1 - tau/|x(n)|) where |x(n)| >= tau, else 0.
inline CVector threshold_excess(std::span<const Complex> x, double tau) {
    CVector y(x.size());
    for (std::size_t n = 0; n < x.size(); ++n) {
        const double a = std::abs(x[n]);
        y[n] = (a >= tau && a > 0.0) ? x[n] * (1.0 - tau / a) : Complex{};
    }
    return y;
}

/**
 * @brief One peak per block: the largest |y| in each of n_b contiguous blocks.
 *
 * Blocks whose maximum is zero emit nothing. Ties go to the lowest index.
 * A maximum on a block edge is accepted as is.
 */
inline PeakSet blockwise_peaks(std::span<const Complex> y, std::size_t n_b) {
    if (n_b == 0 || y.size() % n_b != 0) throw ShapeError("blockwise_peaks: n_b must divide the symbol length");
    const std::size_t len = y.size() / n_b;
    PeakSet peaks;
    for (std::size_t b = 0; b < n_b; ++b) {
        std::size_t best = b * len;
        double best_mag = std::norm(y[best]);
        for (std::size_t n = b * len + 1; n < (b + 1) * len; ++n) {
            const double m = std::norm(y[n]);
            if (m > best_mag) {
                best = n;
                best_mag = m;
            }
        }
        if (best_mag > 0.0) peaks.push_back({best, y[best]});
    }
    return peaks;
}

/// Adds sum_k amp_k * unit-peak kernel shifted to index_k into out (circularly).
inline void accumulate_kernels(std::span<Complex> out, const PeakSet& peaks, const SincKernel& kernel) {
    const std::size_t n = kernel.n_fft();
    if (out.size() != n) throw ShapeError("accumulate_kernels: length mismatch");
    const double inv = 1.0 / static_cast<double>(kernel.n_sc);
    const long first = kernel.first_tap();
    const std::size_t taps = kernel.tap_count();
    for (const auto& p : peaks) {
        if (p.index >= n) throw ShapeError("accumulate_kernels: peak index out of range");
        const Complex a = p.amplitude * inv;
        std::size_t d = fft::bin_index(first, n);
        std::size_t i = (p.index + d) % n;
        for (std::size_t t = 0; t < taps; ++t) {
            out[i] += a * kernel.values[d];
            if (++d == n) d = 0;
            if (++i == n) i = 0;
        }
    }
}

struct SparseReduction {
    CVector delta;    ///< cancellation signal
    CVector reduced;  ///< x - delta
};

/**
 * @brief Subtracts unit-peak kernels weighted by the peak amplitudes.
 *
 * delta(i) = sum_k y(n_k) * values[i - n_k] / n_sc, so an isolated peak is
 * reduced by exactly its own amplitude.
 */
inline SparseReduction sparse_reduce(std::span<const Complex> x, const PeakSet& peaks, const SincKernel& kernel) {
    if (x.size() != kernel.n_fft()) throw ShapeError("sparse_reduce: length mismatch");
    SparseReduction r;
    r.delta.assign(x.size(), Complex{});
    accumulate_kernels(r.delta, peaks, kernel);
    r.reduced.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.reduced[i] = x[i] - r.delta[i];
    return r;
}

/**
 * @brief Least-squares fit of y by the occupied band: S (S^H S)^{-1} S^H y.
 *
 * Computed as IDFT(mask * DFT(y)), the orthogonal projection onto the band.
 */
inline CVector dense_ls_project(std::span<const Complex> y, std::span<const std::size_t> bins) {
    CVector f(y.begin(), y.end());
    fft::forward(f);
    CVector g(f.size(), Complex{});
    for (auto b : bins) {
        if (b >= f.size()) throw ShapeError("dense_ls_project: bin out of range");
        g[b] = f[b];
    }
    fft::inverse(g);
    return g;
}

/// Sparse record of cancellation amplitudes, index -> summed amplitude.
using AmplitudeRow = std::map<std::size_t, Complex>;

struct StrResult {
    CVector delta;               ///< accumulated cancellation signal
    CVector reduced;             ///< x - delta
    AmplitudeRow amplitudes;     ///< amplitudes merged by index across iterations
    std::vector<double> thresholds;
    std::vector<std::size_t> peaks_per_iteration;
};

/**
 * @brief Iterative sparse tone reservation on one antenna.
 *
 * Thresholds are tau_t = schedule.tau_norm[t] times the norm of the input x
 * (fixed across iterations); peaks are re-detected on the current residual
 * every iteration.
 */
inline StrResult iterate_str(std::span<const Complex> x, const ThresholdSchedule& schedule, std::size_t n_b,
                             const SincKernel& kernel) {
    StrResult r;
    r.delta.assign(x.size(), Complex{});
    r.reduced.assign(x.begin(), x.end());
    for (double g : schedule.tau_norm) {
        const double tau = absolute_threshold(x, g, schedule.norm);
        r.thresholds.push_back(tau);
        const auto y = threshold_excess(r.reduced, tau);
        const auto peaks = blockwise_peaks(y, n_b);
        r.peaks_per_iteration.push_back(peaks.size());
        if (peaks.empty()) continue;
        CVector step(x.size(), Complex{});
        accumulate_kernels(step, peaks, kernel);
        for (std::size_t i = 0; i < x.size(); ++i) {
            r.delta[i] += step[i];
            r.reduced[i] -= step[i];
        }
        for (const auto& p : peaks) r.amplitudes[p.index] += p.amplitude;
    }
    return r;
}

}  // namespace hbfpapr
