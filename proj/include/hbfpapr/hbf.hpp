#pragma once

/**
 * @file hbf.hpp
 * @brief Fully-connected hybrid beamforming: precoder, digital twin,
 *        least-squares projections into the DAC subspace, and the
 *        end-to-end PAPR reduction pipeline.
 */

#include "core.hpp"
#include "fft.hpp"
#include "rng.hpp"
#include "signal.hpp"
#include "str.hpp"

#include <chrono>
#include <numeric>
#include <optional>
#include <vector>

namespace hbfpapr {

/**
 * @brief Analog phase-shifter network, n_ant x n_dac.
 *
 * Column b is the n_ant-point DFT vector of bin column_bins[b]:
 * P(a, b) = exp(2 pi i a column_bins[b] / n_ant). Hence P^H P = n_ant I.
 */
struct Precoder {
    CMatrix matrix;
    std::vector<std::size_t> column_bins;

    std::size_t n_ant() const { return static_cast<std::size_t>(matrix.rows()); }
    std::size_t n_dac() const { return static_cast<std::size_t>(matrix.cols()); }
};

inline Precoder precoder_from_bins(std::size_t n_ant, std::vector<std::size_t> bins) {
    Precoder p;
    p.column_bins = std::move(bins);
    p.matrix.resize(static_cast<Eigen::Index>(n_ant), static_cast<Eigen::Index>(p.column_bins.size()));
    for (std::size_t a = 0; a < n_ant; ++a)
        for (std::size_t b = 0; b < p.column_bins.size(); ++b) {
            // Reduce the exponent modulo n_ant first to keep the phase argument small.
            const auto e = (a * p.column_bins[b]) % n_ant;
            p.matrix(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                std::polar(1.0, 2.0 * kPi * static_cast<double>(e) / static_cast<double>(n_ant));
        }
    return p;
}

/// n_dac distinct DFT columns chosen uniformly without replacement (partial Fisher-Yates).
inline Precoder build_precoder(std::size_t n_ant, std::size_t n_dac, std::uint64_t seed) {
    if (n_dac == 0 || n_dac > n_ant) throw ShapeError("build_precoder: need 0 < n_dac <= n_ant");
    std::vector<std::size_t> pool(n_ant);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    CounterRng rng(seed, RngDomain::Precoder, 0);
    for (std::size_t i = 0; i < n_dac; ++i) {
        const auto j = i + static_cast<std::size_t>(rng.below(n_ant - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(n_dac);
    return precoder_from_bins(n_ant, std::move(pool));
}

// ---------------------------------------------------------------------------
// Digital twin

/// X = P Z by dense matrix product.
inline TimeSignal digital_twin_direct(const Precoder& p, const TimeSignal& z) {
    if (z.domain != Domain::Dac) throw ContractError("digital_twin: input must be a DAC-domain signal");
    if (z.streams() != p.n_dac()) throw ShapeError("digital_twin: stream count differs from n_dac");
    return TimeSignal(p.matrix * z.data, Domain::Antenna);
}

/**
 * X = P Z through one n_ant-point inverse DFT per time sample: each DAC
 * vector is embedded at the precoder's column bins of an n_ant spectrum.
 */
inline TimeSignal digital_twin(const Precoder& p, const TimeSignal& z) {
    if (z.domain != Domain::Dac) throw ContractError("digital_twin: input must be a DAC-domain signal");
    if (z.streams() != p.n_dac()) throw ShapeError("digital_twin: stream count differs from n_dac");
    TimeSignal x(p.n_ant(), z.n_fft(), Domain::Antenna);
    for (std::size_t b = 0; b < p.n_dac(); ++b)
        x.data.row(static_cast<Eigen::Index>(p.column_bins[b])) += z.data.row(static_cast<Eigen::Index>(b));
    fft::inverse_cols_unscaled(x.data);
    return x;
}

/// P^H X through one n_ant-point forward DFT per time sample.
inline CMatrix precoder_adjoint(const Precoder& p, const CMatrix& x) {
    if (static_cast<std::size_t>(x.rows()) != p.n_ant()) throw ShapeError("precoder_adjoint: row count differs");
    CMatrix f = x;
    fft::forward_cols(f);
    CMatrix out(static_cast<Eigen::Index>(p.n_dac()), x.cols());
    for (std::size_t b = 0; b < p.n_dac(); ++b)
        out.row(static_cast<Eigen::Index>(b)) = f.row(static_cast<Eigen::Index>(p.column_bins[b]));
    return out;
}

// ---------------------------------------------------------------------------
// Projections into the DAC subspace

/// One sparse amplitude row per antenna.
using AmplitudeGrid = std::vector<AmplitudeRow>;

/// Dense LS: dZ = (coef / n_ant) P^H dX.
inline TimeSignal ls1_project(const TimeSignal& dx, const Precoder& p, double coef) {
    if (dx.domain != Domain::Antenna) throw ContractError("ls1_project: input must be an antenna-domain signal");
    TimeSignal dz(precoder_adjoint(p, dx.data), Domain::Dac);
    dz.data *= coef / static_cast<double>(p.n_ant());
    return dz;
}

/**
 * Per-time-index DAC amplitudes dz_i = (coef / n_ant) P_i^H dx_i, where dx_i
 * stacks the nonzero antenna amplitudes at index i and P_i the matching rows.
 * Returned as an n_dac x n_fft matrix that is zero at indices without peaks.
 */
inline CMatrix ls2_amplitudes(const AmplitudeGrid& grid, const Precoder& p, double coef, std::size_t n_fft) {
    if (grid.size() != p.n_ant()) throw ShapeError("ls2_project: grid must hold one row per antenna");
    CMatrix d = CMatrix::Zero(static_cast<Eigen::Index>(p.n_dac()), static_cast<Eigen::Index>(n_fft));
    const double scale = coef / static_cast<double>(p.n_ant());
    for (std::size_t a = 0; a < grid.size(); ++a) {
        const auto prow = p.matrix.row(static_cast<Eigen::Index>(a));
        for (const auto& [i, amp] : grid[a]) {
            if (i >= n_fft) throw ShapeError("ls2_project: amplitude index out of range");
            d.col(static_cast<Eigen::Index>(i)) += (scale * amp) * prow.adjoint();
        }
    }
    return d;
}

/**
 * @brief Sparse LS: projects only the kernel amplitudes, then expands them
 *        with shifted unit-peak kernels in the DAC domain.
 *
 * dZ(:, t) = sum_i dz_i values[t - i] / n_sc. The unwindowed kernel is
 * applied as a band mask in the frequency domain; a windowed kernel is
 * applied tap by tap.
 */
inline TimeSignal ls2_project(const AmplitudeGrid& grid, const Precoder& p, double coef, const SincKernel& kernel) {
    const std::size_t n = kernel.n_fft();
    CMatrix d = ls2_amplitudes(grid, p, coef, n);
    TimeSignal dz(p.n_dac(), n, Domain::Dac);
    if (!kernel.windowed()) {
        CMatrix k(1, static_cast<Eigen::Index>(n));
        for (std::size_t t = 0; t < n; ++t) k(0, static_cast<Eigen::Index>(t)) = kernel.unit(t);
        fft::forward_rows(k);
        fft::forward_rows(d);
        for (Eigen::Index r = 0; r < d.rows(); ++r) d.row(r).array() *= k.row(0).array();
        fft::inverse_rows(d);
        dz.data = std::move(d);
        return dz;
    }
    for (std::size_t s = 0; s < p.n_dac(); ++s) {
        PeakSet peaks;
        for (std::size_t i = 0; i < n; ++i) {
            const Complex v = d(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i));
            if (v != Complex{}) peaks.push_back({i, v});
        }
        accumulate_kernels(dz.row(s), peaks, kernel);
    }
    return dz;
}

/// Expands an amplitude grid into the dense antenna-domain correction.
inline TimeSignal expand_amplitudes(const AmplitudeGrid& grid, const SincKernel& kernel) {
    TimeSignal dx(grid.size(), kernel.n_fft(), Domain::Antenna);
    for (std::size_t a = 0; a < grid.size(); ++a) {
        PeakSet peaks;
        for (const auto& [i, amp] : grid[a]) peaks.push_back({i, amp});
        accumulate_kernels(dx.row(a), peaks, kernel);
    }
    return dx;
}

// ---------------------------------------------------------------------------
// Pipeline

enum class Projection { Ls1, Ls2 };

inline const char* to_string(Projection p) { return p == Projection::Ls1 ? "ls1" : "ls2"; }

struct PipelineParams {
    ThresholdSchedule schedule{{1.76, 1.68}, 0.85, ThresholdNorm::Rms};
    Projection projection = Projection::Ls2;
    std::size_t window_len = 0;  ///< 0 disables kernel windowing
};

inline void validate(const PipelineParams& p, const SimConfig& c) {
    if (!(p.schedule.coef > 0.0)) throw SpecError("coef must be positive");
    if (p.schedule.tau_norm.size() != c.n_iter) throw SpecError("threshold schedule length must equal n_iter");
    for (double t : p.schedule.tau_norm)
        if (!(t > 0.0)) throw SpecError("thresholds must be positive");
    if (p.window_len > c.n_fft) throw SpecError("window_len must not exceed n_fft");
}

/// Per-symbol outcome. PAPR vectors hold one value per antenna.
struct SymbolReport {
    std::vector<double> papr_before;       ///< on the twin X
    std::vector<double> papr_antenna_str;  ///< X minus the per-antenna corrections, before projection
    std::vector<double> papr_after;        ///< on P * Zhat
    double evm = 0.0;                      ///< ||dZ||_F / ||Z||_F
    std::size_t peaks = 0;
    bool evm_over_budget = false;
    double runtime_ms = 0.0;
};

struct HbfResult {
    TimeSignal z_hat;
    TimeSignal dz;
    TimeSignal x;  ///< twin of the input
    SymbolReport report;
};

/**
 * @brief Full reduction of one OFDM symbol whose twin x = P z is already known.
 *
 * Iterative STR runs on every antenna independently; the per-antenna
 * amplitude records are projected into the DAC domain (LS2), or the dense
 * accumulated dX is (LS1); Zhat = Z - dZ.
 */
inline HbfResult reduce_papr_hbf(const TimeSignal& z, TimeSignal x, const Precoder& p, const PipelineParams& params,
                                 const SincKernel& kernel, double evm_budget, std::size_t n_b) {
    const auto t0 = std::chrono::steady_clock::now();
    if (z.n_fft() != kernel.n_fft() || x.n_fft() != kernel.n_fft())
        throw ShapeError("reduce_papr_hbf: symbol length differs from kernel");
    if (x.domain != Domain::Antenna || x.streams() != p.n_ant())
        throw ContractError("reduce_papr_hbf: twin must be an antenna-domain signal with n_ant streams");
    HbfResult r;
    r.x = std::move(x);
    const std::size_t n_ant = p.n_ant();

    AmplitudeGrid grid(n_ant);
    TimeSignal dx(n_ant, z.n_fft(), Domain::Antenna);
    r.report.papr_before.reserve(n_ant);
    r.report.papr_antenna_str.reserve(n_ant);
    for (std::size_t a = 0; a < n_ant; ++a) {
        const auto row = r.x.row(a);
        auto str = iterate_str(row, params.schedule, n_b, kernel);
        r.report.papr_before.push_back(papr_db(row));
        r.report.papr_antenna_str.push_back(papr_db(str.reduced));
        r.report.peaks += str.amplitudes.size();
        std::copy(str.delta.begin(), str.delta.end(), dx.row(a).begin());
        grid[a] = std::move(str.amplitudes);
    }

    r.dz = params.projection == Projection::Ls2 ? ls2_project(grid, p, params.schedule.coef, kernel)
                                                 : ls1_project(dx, p, params.schedule.coef);
    r.z_hat = TimeSignal(z.data - r.dz.data, Domain::Dac);

    // P Zhat = X - P dZ
    const auto x_hat = TimeSignal(r.x.data - digital_twin(p, r.dz).data, Domain::Antenna);
    r.report.papr_after.reserve(n_ant);
    for (std::size_t a = 0; a < n_ant; ++a) r.report.papr_after.push_back(papr_db(x_hat.row(a)));
    r.report.evm = evm_fraction(r.dz, z);
    r.report.evm_over_budget = r.report.evm > evm_budget;
    r.report.runtime_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

/// Full reduction of one OFDM symbol, starting with the digital twin X = P Z.
inline HbfResult reduce_papr_hbf(const TimeSignal& z, const Precoder& p, const PipelineParams& params,
                                 const SincKernel& kernel, double evm_budget, std::size_t n_b) {
    return reduce_papr_hbf(z, digital_twin(p, z), p, params, kernel, evm_budget, n_b);
}

/// Aggregate over a batch of symbols.
struct BatchReport {
    std::vector<SymbolReport> symbols;
    std::vector<double> papr_before;  ///< per (antenna, symbol)
    std::vector<double> papr_antenna_str;
    std::vector<double> papr_after;
    double evm = 0.0;  ///< sqrt(sum ||dZ||^2 / sum ||Z||^2)
    double runtime_ms = 0.0;
};

/// Shared read-only state for processing many symbols of one configuration.
struct HbfContext {
    SimConfig config;
    Precoder precoder;
    SincKernel kernel;

    explicit HbfContext(const SimConfig& c)
        : config(c), precoder(build_precoder(c.n_ant, c.n_dac, c.rng_seed)), kernel(build_sinc(c.n_fft, c.n_sc)) {}
};

/**
 * Runs the pipeline over symbols. twins, when nonempty, holds P z for every
 * symbol and skips recomputing it; antenna_out, when given, receives P Zhat
 * per symbol.
 */
inline BatchReport run_batch(const HbfContext& ctx, const PipelineParams& params, std::span<const TimeSignal> z,
                             std::vector<TimeSignal>* antenna_out = nullptr, std::span<const TimeSignal> twins = {}) {
    if (!twins.empty() && twins.size() != z.size()) throw ShapeError("run_batch: twin count differs from symbol count");
    BatchReport b;
    double e_dz = 0.0;
    double e_z = 0.0;
    const SincKernel* kernel = &ctx.kernel;
    SincKernel windowed;
    if (params.window_len != 0 && params.window_len < ctx.kernel.n_fft()) {
        windowed = windowed_kernel(ctx.kernel, params.window_len);
        kernel = &windowed;
    }
    for (std::size_t i = 0; i < z.size(); ++i) {
        const auto& zs = z[i];
        auto r = twins.empty()
                     ? reduce_papr_hbf(zs, ctx.precoder, params, *kernel, ctx.config.evm_budget, ctx.config.n_b)
                     : reduce_papr_hbf(zs, twins[i], ctx.precoder, params, *kernel, ctx.config.evm_budget,
                                       ctx.config.n_b);
        e_dz += r.dz.data.squaredNorm();
        e_z += zs.data.squaredNorm();
        const auto& s = r.report;
        b.papr_before.insert(b.papr_before.end(), s.papr_before.begin(), s.papr_before.end());
        b.papr_antenna_str.insert(b.papr_antenna_str.end(), s.papr_antenna_str.begin(), s.papr_antenna_str.end());
        b.papr_after.insert(b.papr_after.end(), s.papr_after.begin(), s.papr_after.end());
        b.runtime_ms += s.runtime_ms;
        if (antenna_out) antenna_out->push_back(digital_twin(ctx.precoder, r.z_hat));
        b.symbols.push_back(std::move(r.report));
    }
    b.evm = e_z > 0.0 ? std::sqrt(e_dz / e_z) : 0.0;
    return b;
}

/// Seeded DAC symbols [first, first + count).
inline std::vector<TimeSignal> make_dataset(const SimConfig& c, std::size_t count, std::size_t first = 0) {
    std::vector<TimeSignal> z;
    z.reserve(count);
    for (std::size_t s = 0; s < count; ++s) z.push_back(random_dac_symbol(c, first + s));
    return z;
}

}  // namespace hbfpapr
