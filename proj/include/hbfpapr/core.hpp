#pragma once

/**
 * @file core.hpp
 * @brief Shared numeric types, error classes and the simulation configuration.
 */

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace hbfpapr {

using Complex = std::complex<double>;
using CVector = std::vector<Complex>;

/// Streams x samples. Row-major so that one stream (one antenna or one DAC) is contiguous.
using CMatrix = Eigen::Matrix<Complex, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr double kPi = std::numbers::pi;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input has the wrong size or shape.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A metric is undefined for the given input (e.g. PAPR of an all-zero symbol).
class MetricError : public Error {
public:
    using Error::Error;
};

/// Too few samples to resolve the requested CCDF level.
class SampleDeficitError : public Error {
public:
    using Error::Error;
};

/// Caller violated an interface contract (e.g. wrong signal domain).
class ContractError : public Error {
public:
    using Error::Error;
};

/// Configuration failed validation.
class SpecError : public Error {
public:
    using Error::Error;
};

/// File system failure.
class IoError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Configuration

enum class Modulation { Qam16 };

/// How the normalized threshold gene is turned into an absolute threshold.
enum class ThresholdNorm {
    Rms,  ///< tau = gene * ||x||_2 / sqrt(n_fft)
    L2,   ///< tau = gene * ||x||_2 (literal reading, kept for comparison)
};

/**
 * @brief System and simulation parameters.
 *
 * Defaults reproduce the reference hybrid-beamforming scenario: 1024-point
 * symbols with 240 occupied subcarriers, 256 antennas driven by 64 DACs.
 */
struct SimConfig {
    std::size_t n_fft = 1024;
    std::size_t n_sc = 240;
    std::size_t n_up = 1;
    std::size_t n_ant = 256;
    std::size_t n_dac = 64;
    std::size_t n_lpf = 15;  // interpolation filter order; unused while n_up == 1
    std::size_t n_iter = 2;
    std::size_t n_b = 32;
    std::size_t n_ofdm = 120;
    Modulation modulation = Modulation::Qam16;
    double evm_budget = 0.135;
    std::uint64_t rng_seed = 1;

    std::size_t block_len() const { return n_fft / n_b; }
};

inline bool is_pow2(std::size_t v) { return v != 0 && (v & (v - 1)) == 0; }

/// Throws SpecError describing the first violated invariant.
inline void validate(const SimConfig& c) {
    if (c.n_fft == 0 || !is_pow2(c.n_fft)) throw SpecError("n_fft must be a power of two");
    if (c.n_ant == 0 || !is_pow2(c.n_ant)) throw SpecError("n_ant must be a power of two");
    if (c.n_sc == 0 || c.n_sc >= c.n_fft) throw SpecError("n_sc must satisfy 0 < n_sc < n_fft");
    if (c.n_dac == 0 || c.n_dac > c.n_ant) throw SpecError("n_dac must satisfy 0 < n_dac <= n_ant");
    if (c.n_b == 0 || c.n_fft % c.n_b != 0) throw SpecError("n_b must divide n_fft");
    if (c.n_up != 1) throw SpecError("only n_up = 1 is supported");
    if (c.n_iter == 0) throw SpecError("n_iter must be positive");
    if (c.n_ofdm == 0) throw SpecError("n_ofdm must be positive");
    if (!(c.evm_budget > 0.0 && c.evm_budget < 1.0)) throw SpecError("evm_budget must lie in (0, 1)");
}

inline const char* to_string(ThresholdNorm n) { return n == ThresholdNorm::Rms ? "rms" : "l2"; }

}  // namespace hbfpapr
