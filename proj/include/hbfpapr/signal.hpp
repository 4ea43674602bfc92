#pragma once

/**
 * @file signal.hpp
 * @brief Signal containers, OFDM symbol synthesis and evaluation metrics
 *        (PAPR, CCDF, EVM, power spectrum).
 */

#include "core.hpp"
#include "fft.hpp"
#include "rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace hbfpapr {

enum class Domain { Dac, Antenna };

inline const char* to_string(Domain d) { return d == Domain::Dac ? "dac" : "antenna"; }

/**
 * @brief One OFDM symbol for a set of streams, n_streams x n_fft samples.
 *
 * A stream is a DAC output (Domain::Dac) or an antenna signal (Domain::Antenna).
 */
struct TimeSignal {
    CMatrix data;
    Domain domain = Domain::Dac;

    TimeSignal() = default;
    TimeSignal(CMatrix d, Domain dom) : data(std::move(d)), domain(dom) {}
    TimeSignal(std::size_t streams, std::size_t n_fft, Domain dom)
        : data(CMatrix::Zero(static_cast<Eigen::Index>(streams), static_cast<Eigen::Index>(n_fft))), domain(dom) {}

    std::size_t streams() const { return static_cast<std::size_t>(data.rows()); }
    std::size_t n_fft() const { return static_cast<std::size_t>(data.cols()); }

    std::span<Complex> row(std::size_t s) { return {data.data() + s * n_fft(), n_fft()}; }
    std::span<const Complex> row(std::size_t s) const { return {data.data() + s * n_fft(), n_fft()}; }
};

// ---------------------------------------------------------------------------
// Occupied band

/**
 * Signed subcarrier frequencies of the occupied band, centered on DC:
 * m in [-floor(n_sc/2), n_sc - 1 - floor(n_sc/2)]. For even n_sc the band has
 * one more negative than positive frequency.
 */
inline std::vector<long> centered_subcarriers(std::size_t n_sc) {
    std::vector<long> m(n_sc);
    const long lo = -static_cast<long>(n_sc / 2);
    std::iota(m.begin(), m.end(), lo);
    return m;
}

/// FFT bin indices of the occupied band.
inline std::vector<std::size_t> occupied_bins(std::size_t n_fft, std::size_t n_sc) {
    std::vector<std::size_t> bins;
    bins.reserve(n_sc);
    for (long m : centered_subcarriers(n_sc)) bins.push_back(fft::bin_index(m, n_fft));
    return bins;
}

/// Boolean mask over FFT bins, true on the occupied band.
inline std::vector<char> band_mask(std::size_t n_fft, std::size_t n_sc) {
    std::vector<char> mask(n_fft, 0);
    for (auto b : occupied_bins(n_fft, n_sc)) mask[b] = 1;
    return mask;
}

/// Subcarrier amplitudes for a set of streams; column j maps to FFT bin subcarrier_indices[j].
struct FreqGrid {
    CMatrix data;
    std::vector<std::size_t> subcarrier_indices;
    std::size_t n_fft = 0;

    FreqGrid() = default;
    FreqGrid(std::size_t streams, std::size_t n_fft_, std::size_t n_sc)
        : data(CMatrix::Zero(static_cast<Eigen::Index>(streams), static_cast<Eigen::Index>(n_sc))),
          subcarrier_indices(occupied_bins(n_fft_, n_sc)),
          n_fft(n_fft_) {}

    std::size_t streams() const { return static_cast<std::size_t>(data.rows()); }
    std::size_t n_sc() const { return subcarrier_indices.size(); }
};

// ---------------------------------------------------------------------------
// Modulation

/**
 * @brief Gray-mapped 16-QAM with unit average power.
 *
 * Bits (b0 b1 b2 b3) map to ((1-2b0)(2-(1-2b2)) + i(1-2b1)(2-(1-2b3))) / sqrt(10),
 * so 0000 -> (1+1i)/sqrt(10).
 */
inline CVector qam16_modulate(std::span<const std::uint8_t> bits) {
    if (bits.size() % 4 != 0) throw ShapeError("qam16_modulate: bit count must be a multiple of 4");
    const double scale = 1.0 / std::sqrt(10.0);
    CVector out(bits.size() / 4);
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto* b = bits.data() + 4 * k;
        const double re = (1.0 - 2.0 * b[0]) * (2.0 - (1.0 - 2.0 * b[2]));
        const double im = (1.0 - 2.0 * b[1]) * (2.0 - (1.0 - 2.0 * b[3]));
        out[k] = Complex(re, im) * scale;
    }
    return out;
}

inline std::vector<std::uint8_t> random_bits(CounterRng& rng, std::size_t count) {
    std::vector<std::uint8_t> bits(count);
    for (auto& b : bits) b = rng.bit() ? 1 : 0;
    return bits;
}

// ---------------------------------------------------------------------------
// OFDM synthesis

/**
 * @brief Time-domain symbol of every stream in the grid.
 *
 * Zero-pads the grid into n_fft bins and applies the inverse DFT including
 * 1/n_fft, so mean sample power = mean subcarrier power * n_sc / n_fft^2.
 */
inline TimeSignal ofdm_symbol(const FreqGrid& grid, Domain domain = Domain::Dac) {
    if (grid.n_fft == 0) throw ShapeError("ofdm_symbol: n_fft is zero");
    if (grid.subcarrier_indices.size() != static_cast<std::size_t>(grid.data.cols()))
        throw ShapeError("ofdm_symbol: grid width does not match subcarrier index count");
    for (auto b : grid.subcarrier_indices)
        if (b >= grid.n_fft) throw ShapeError("ofdm_symbol: subcarrier index out of range");

    TimeSignal out(grid.streams(), grid.n_fft, domain);
    for (std::size_t s = 0; s < grid.streams(); ++s)
        for (std::size_t j = 0; j < grid.n_sc(); ++j)
            out.data(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(grid.subcarrier_indices[j])) +=
                grid.data(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j));
    fft::inverse_rows(out.data);
    return out;
}

/// Forward DFT of every stream restricted to the grid's occupied bins.
inline FreqGrid analyze(const TimeSignal& x, std::size_t n_sc) {
    FreqGrid grid(x.streams(), x.n_fft(), n_sc);
    CMatrix spec = x.data;
    fft::forward_rows(spec);
    for (std::size_t s = 0; s < x.streams(); ++s)
        for (std::size_t j = 0; j < n_sc; ++j)
            grid.data(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) =
                spec(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(grid.subcarrier_indices[j]));
    return grid;
}

/// Seeded 16-QAM grid for one OFDM symbol; each (symbol, stream) pair owns an RNG stream.
inline FreqGrid random_qam16_grid(const SimConfig& cfg, std::size_t symbol_index, std::size_t streams) {
    FreqGrid grid(streams, cfg.n_fft, cfg.n_sc);
    for (std::size_t s = 0; s < streams; ++s) {
        CounterRng rng(cfg.rng_seed, RngDomain::Bits, symbol_index * 65536 + s);
        const auto bits = random_bits(rng, 4 * cfg.n_sc);
        const auto sym = qam16_modulate(bits);
        for (std::size_t j = 0; j < cfg.n_sc; ++j)
            grid.data(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(j)) = sym[j];
    }
    return grid;
}

/// Seeded DAC-domain OFDM symbol (n_dac streams).
inline TimeSignal random_dac_symbol(const SimConfig& cfg, std::size_t symbol_index) {
    return ofdm_symbol(random_qam16_grid(cfg, symbol_index, cfg.n_dac), Domain::Dac);
}

// ---------------------------------------------------------------------------
// Metrics

/// Peak-to-average power ratio in dB: 10 log10(max |x|^2 / mean |x|^2).
inline double papr_db(std::span<const Complex> x) {
    double peak = 0.0;
    double sum = 0.0;
    for (const auto& v : x) {
        const double p = std::norm(v);
        peak = std::max(peak, p);
        sum += p;
    }
    if (x.empty() || sum <= 0.0 || !std::isfinite(sum)) throw MetricError("papr_db: signal is all zero");
    return 10.0 * std::log10(peak / (sum / static_cast<double>(x.size())));
}

/// PAPR of every stream of one symbol, appended to out.
inline void append_papr(const TimeSignal& x, std::vector<double>& out) {
    for (std::size_t s = 0; s < x.streams(); ++s) out.push_back(papr_db(x.row(s)));
}

/**
 * @brief Empirical complementary CDF.
 *
 * papr_db holds the distinct sample values in ascending order;
 * exceed_prob[i] = P(PAPR >= papr_db[i]). Counting ties as exceeding keeps
 * exceed_prob strictly decreasing and in (0, 1].
 */
struct CcdfCurve {
    std::vector<double> papr_db;
    std::vector<double> exceed_prob;
    std::size_t n_samples = 0;

    std::size_t size() const { return papr_db.size(); }
};

inline CcdfCurve ccdf(std::vector<double> values) {
    CcdfCurve c;
    c.n_samples = values.size();
    if (values.empty()) return c;
    std::sort(values.begin(), values.end());
    const double n = static_cast<double>(values.size());
    std::size_t i = 0;
    while (i < values.size()) {
        std::size_t j = i;
        while (j < values.size() && values[j] == values[i]) ++j;
        c.papr_db.push_back(values[i]);
        c.exceed_prob.push_back(static_cast<double>(values.size() - i) / n);
        i = j;
    }
    return c;
}

/// Smallest probability the curve can resolve.
inline double min_resolvable_prob(const CcdfCurve& c) {
    return c.n_samples == 0 ? 1.0 : 1.0 / static_cast<double>(c.n_samples);
}

/**
 * Smallest level whose exceedance probability is <= p. When every level
 * exceeds p (all samples tied at the top) the largest level is returned.
 * Needs at least 1/p samples.
 */
inline double papr_at(const CcdfCurve& c, double p) {
    if (!(p > 0.0 && p <= 1.0)) throw SampleDeficitError("papr_at: probability must lie in (0, 1]");
    if (c.n_samples == 0 || static_cast<double>(c.n_samples) * p < 1.0 - 1e-9)
        throw SampleDeficitError("papr_at: " + std::to_string(c.n_samples) +
                                 " samples cannot resolve CCDF level " + std::to_string(p));
    for (std::size_t i = 0; i < c.size(); ++i)
        if (c.exceed_prob[i] <= p * (1.0 + 1e-12)) return c.papr_db[i];
    return c.papr_db.back();
}

/// ||delta||_F / ||ref||_F
inline double evm_fraction(const TimeSignal& delta, const TimeSignal& ref) {
    if (delta.data.rows() != ref.data.rows() || delta.data.cols() != ref.data.cols())
        throw ShapeError("evm_fraction: shape mismatch");
    const double r = ref.data.norm();
    if (r == 0.0) throw MetricError("evm_fraction: reference is all zero");
    return delta.data.norm() / r;
}

/**
 * @brief Power spectral density in dB per FFT bin, averaged over symbols and streams.
 *
 * Bins are returned DC-centered: entry j corresponds to signed frequency
 * j - n_fft/2. Empty bins are floored at -300 dB.
 */
inline std::vector<double> spectrum(std::span<const TimeSignal> symbols) {
    if (symbols.empty()) throw ShapeError("spectrum: need at least one symbol");
    const std::size_t n = symbols.front().n_fft();
    std::vector<double> acc(n, 0.0);
    std::size_t count = 0;
    for (const auto& x : symbols) {
        if (x.n_fft() != n) throw ShapeError("spectrum: inconsistent symbol length");
        CMatrix f = x.data;
        fft::forward_rows(f);
        for (Eigen::Index s = 0; s < f.rows(); ++s)
            for (std::size_t k = 0; k < n; ++k) acc[k] += std::norm(f(s, static_cast<Eigen::Index>(k)));
        count += x.streams();
    }
    std::vector<double> psd(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = fft::bin_index(static_cast<long>(j) - static_cast<long>(n / 2), n);
        const double p = acc[k] / static_cast<double>(count);
        psd[j] = p > 0.0 ? std::max(10.0 * std::log10(p), -300.0) : -300.0;
    }
    return psd;
}

inline std::vector<double> spectrum(const TimeSignal& x) { return spectrum(std::span<const TimeSignal>(&x, 1)); }

// ---------------------------------------------------------------------------
// CSV emission. Numbers use fixed printf formats so that reruns are byte-identical.

inline std::string fmt_double(double v, const char* f = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

/// Columns: papr_db,ccdf
inline void write_ccdf_csv(std::ostream& os, const CcdfCurve& c) {
    os << "papr_db,ccdf\n";
    for (std::size_t i = 0; i < c.size(); ++i)
        os << fmt_double(c.papr_db[i]) << ',' << fmt_double(c.exceed_prob[i], "%.9g") << '\n';
}

/// Columns: bin_hz_normalized,psd_db; frequency is (j - n_fft/2) / n_fft.
inline void write_psd_csv(std::ostream& os, std::span<const double> psd) {
    os << "bin_hz_normalized,psd_db\n";
    const auto n = static_cast<double>(psd.size());
    for (std::size_t j = 0; j < psd.size(); ++j)
        os << fmt_double((static_cast<double>(j) - n / 2.0) / n, "%.8f") << ',' << fmt_double(psd[j]) << '\n';
}

}  // namespace hbfpapr
