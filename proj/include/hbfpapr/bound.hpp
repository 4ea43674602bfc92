#pragma once

/**
 * @file bound.hpp
 * @brief Minimax performance bounds.
 *
 * Solves   min_{||dZ||_F <= R}  max_{a,t} |X - P dZ K|_{a,t}
 * where P is the precoder (or the identity on antennas) and K the band
 * projector of the occupied subcarriers (or the identity). The solver is a
 * primal-dual hybrid gradient method with adaptive step balancing; it
 * reports a certified duality gap. A brute-force projected subgradient
 * method on explicit dense matrices serves as the verification oracle for
 * small instances.
 */

#include "core.hpp"
#include "fft.hpp"
#include "hbf.hpp"
#include "rng.hpp"
#include "signal.hpp"
#include "str.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace hbfpapr {

enum class BoundVariant { LimitedBandAndSpace, UnlimitedSpace, UnlimitedBand };

inline constexpr BoundVariant kAllBoundVariants[] = {BoundVariant::LimitedBandAndSpace, BoundVariant::UnlimitedSpace,
                                                    BoundVariant::UnlimitedBand};

inline const char* to_string(BoundVariant v) {
    switch (v) {
        case BoundVariant::LimitedBandAndSpace: return "limited_band_and_space";
        case BoundVariant::UnlimitedSpace: return "unlimited_space";
        case BoundVariant::UnlimitedBand: return "unlimited_band";
    }
    return "?";
}

/// What the power budget constrains.
enum class BudgetMeasure {
    Total,   ///< ||dZ||_F <= R
    InBand,  ///< ||dZ K_b||_F <= R, K_b the occupied-band projector; out-of-band content is free
};

inline const char* to_string(BudgetMeasure m) { return m == BudgetMeasure::Total ? "total" : "inband"; }

/**
 * @brief One minimax instance.
 *
 * precoder empty means the variable lives directly on the antennas;
 * band empty means the kernel is the identity (full band). budget_band is
 * the mask used when budget == InBand.
 */
struct BoundProblem {
    CMatrix x;                               ///< antenna signal, n_ant x n_fft
    std::optional<CMatrix> precoder;         ///< n_ant x n_dac
    std::vector<std::size_t> precoder_bins;  ///< DFT column bins when the precoder is a DFT submatrix
    std::vector<char> band;                  ///< kernel band mask over FFT bins; empty = full band
    double max_power = 0.0;
    BoundVariant variant = BoundVariant::LimitedBandAndSpace;
    BudgetMeasure budget = BudgetMeasure::Total;
    std::vector<char> budget_band;

    Eigen::Index var_rows() const { return precoder ? precoder->cols() : x.rows(); }
    Eigen::Index n_fft() const { return x.cols(); }
};

/**
 * Builds a variant from the twin X, the precoder and the occupied band width.
 * ub_budget selects the budget measure of UnlimitedBand; the band-limited
 * variants only ever produce in-band corrections, where both measures agree.
 */
inline BoundProblem make_bound_problem(const CMatrix& x, const Precoder& p, std::size_t n_sc, double max_power,
                                       BoundVariant variant, BudgetMeasure ub_budget = BudgetMeasure::InBand) {
    BoundProblem b;
    b.x = x;
    b.max_power = max_power;
    b.variant = variant;
    if (variant != BoundVariant::UnlimitedSpace) {
        b.precoder = p.matrix;
        b.precoder_bins = p.column_bins;
    }
    const auto mask = band_mask(static_cast<std::size_t>(x.cols()), n_sc);
    if (variant != BoundVariant::UnlimitedBand) {
        b.band = mask;
    } else if (ub_budget == BudgetMeasure::InBand) {
        b.budget = BudgetMeasure::InBand;
        b.budget_band = mask;
    }
    return b;
}

struct BoundSolution {
    CMatrix dz;
    double objective = 0.0;      ///< max |X - A dZ| at dz
    double dual_bound = 0.0;     ///< certified lower bound on the optimum
    double certified_gap = 0.0;  ///< objective - dual_bound
    std::size_t iterations = 0;
    bool converged = false;
};

namespace detail {

/// Zeroes the FFT bins of every row where mask is false.
inline void mask_rows(CMatrix& w, const std::vector<char>& mask) {
    fft::forward_rows(w);
    for (Eigen::Index k = 0; k < w.cols(); ++k)
        if (!mask[static_cast<std::size_t>(k)]) w.col(k).setZero();
    fft::inverse_rows(w);
}

/// The linear map dZ -> P dZ K and its adjoint, with FFT fast paths.
class BoundOperator {
public:
    explicit BoundOperator(const BoundProblem& p) : prob_(p) {
        if (p.precoder && !p.precoder_bins.empty()) {
            precoder_.matrix = *p.precoder;
            precoder_.column_bins = p.precoder_bins;
            fast_precoder_ = true;
        }
    }

    CMatrix apply(const CMatrix& v) const {
        CMatrix w = v;
        if (!prob_.band.empty()) mask_rows(w, prob_.band);
        return precode(std::move(w));
    }

    CMatrix adjoint(const CMatrix& y) const {
        CMatrix w = precode_adjoint(y);
        if (!prob_.band.empty()) mask_rows(w, prob_.band);
        return w;
    }

    /// Orthogonal projection of y (antenna axis) onto the column space of the precoder.
    CMatrix range_project(const CMatrix& y) const {
        if (!prob_.precoder) return y;
        if (fast_precoder_) {
            CMatrix r = precode(precoder_adjoint(precoder_, y));
            r *= 1.0 / static_cast<double>(precoder_.n_ant());
            return r;
        }
        if (!basis_) {
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Eigen::MatrixXcd(*prob_.precoder), Eigen::ComputeThinU);
            const auto& sv = svd.singularValues();
            Eigen::Index rank = 0;
            while (rank < sv.size() && sv(rank) > 1e-10 * sv(0)) ++rank;
            basis_ = CMatrix(svd.matrixU().leftCols(rank));
        }
        return *basis_ * (basis_->adjoint() * y);
    }

    /// Largest singular value.
    double norm() const {
        double s = 1.0;
        if (prob_.precoder) {
            Eigen::JacobiSVD<Eigen::MatrixXcd> svd(Eigen::MatrixXcd(*prob_.precoder));
            s = svd.singularValues()(0);
        }
        if (!prob_.band.empty() && std::none_of(prob_.band.begin(), prob_.band.end(), [](char c) { return c != 0; }))
            s = 0.0;
        return s;
    }

private:
    CMatrix precode(CMatrix w) const {
        if (!prob_.precoder) return w;
        if (fast_precoder_) return digital_twin(precoder_, TimeSignal(std::move(w), Domain::Dac)).data;
        return *prob_.precoder * w;
    }

    CMatrix precode_adjoint(const CMatrix& y) const {
        if (!prob_.precoder) return y;
        if (fast_precoder_) return precoder_adjoint(precoder_, y);
        return prob_.precoder->adjoint() * y;
    }

    const BoundProblem& prob_;
    Precoder precoder_;
    bool fast_precoder_ = false;
    mutable std::optional<CMatrix> basis_;
};

inline double max_abs(const CMatrix& m) { return m.size() ? m.cwiseAbs().maxCoeff() : 0.0; }

inline double re_inner(const CMatrix& a, const CMatrix& b) {
    return (a.conjugate().cwiseProduct(b)).sum().real();
}

inline double l1_norm(const CMatrix& y) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) total += std::abs(y.data()[i]);
    return total;
}

/// Euclidean projection onto {y : sum |y_j| <= 1}: soft-thresholds moduli, keeps phases.
inline void project_l1_ball(CMatrix& y) {
    const Eigen::Index n = y.size();
    Complex* d = y.data();
    const double total = l1_norm(y);
    if (total <= 1.0) return;
    std::vector<double> m(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = std::abs(d[i]);
    // The threshold is at least (total - 1) / n, so smaller entries can never survive.
    std::vector<double> cand;
    cand.reserve(m.size());
    const double floor = (total - 1.0) / static_cast<double>(n);
    for (double v : m)
        if (v > floor) cand.push_back(v);
    std::sort(cand.begin(), cand.end(), std::greater<>());
    double cum = 0.0;
    double theta = 0.0;
    for (std::size_t k = 0; k < cand.size(); ++k) {
        cum += cand[k];
        const double t = (cum - 1.0) / static_cast<double>(k + 1);
        if (k + 1 == cand.size() || cand[k + 1] <= t) {
            theta = t;
            break;
        }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        const double a = m[static_cast<std::size_t>(i)];
        d[i] = a > theta ? d[i] * ((a - theta) / a) : Complex{};
    }
}

/// In-band part of every row.
inline CMatrix band_part(const CMatrix& v, const std::vector<char>& mask) {
    CMatrix w = v;
    mask_rows(w, mask);
    return w;
}

/// Projection onto the feasible set of the budget.
inline void project_budget(CMatrix& v, const BoundProblem& prob) {
    if (prob.budget == BudgetMeasure::Total) {
        const double nv = v.norm();
        if (nv > prob.max_power) v *= nv > 0.0 ? prob.max_power / nv : 0.0;
        return;
    }
    const CMatrix in = band_part(v, prob.budget_band);
    const double nb = in.norm();
    if (nb > prob.max_power) v -= in * (1.0 - prob.max_power / nb);
}

}  // namespace detail

/// The quantity the budget constrains: ||dZ||_F or its in-band part.
inline double budget_norm(const BoundProblem& prob, const CMatrix& dz) {
    return prob.budget == BudgetMeasure::Total ? dz.norm() : detail::band_part(dz, prob.budget_band).norm();
}

/// Residual X - P dZ K.
inline CMatrix bound_residual(const BoundProblem& prob, const CMatrix& dz) {
    detail::BoundOperator op(prob);
    return prob.x - op.apply(dz);
}

/// Objective max |X - P dZ K| evaluated through the fast operator.
inline double bound_objective(const BoundProblem& prob, const CMatrix& dz) {
    return detail::max_abs(bound_residual(prob, dz));
}

struct BoundSolverOptions {
    double tol = 1e-4;              ///< stop when gap <= tol * max|X|
    std::size_t max_iters = 20000;
    std::size_t check_every = 10;   ///< evaluate the dual bound every this many iterations
    double balance_ratio = 1.5;     ///< residual-balancing trigger
    double adapt_alpha = 0.5;       ///< initial step adaptation strength
    double adapt_decay = 0.95;
};

/**
 * @brief Primal-dual hybrid gradient on min_x g(x) + f(Ax).
 *
 * f(u) = ||X - u||_inf (max modulus) with conjugate Re<y, X> + indicator(||y||_1 <= 1);
 * g is the indicator of the budget set. Any y in the l1 ball gives the lower
 * bound -Re<y, X> - g*(-A^H y); for the Frobenius ball g*(w) = R ||w||_F.
 * For the in-band budget g* is finite only when A^H y is in band, so the
 * out-of-band part of y is first moved into the null space of P^H. The
 * returned gap is therefore certified. Primal and dual step sizes are
 * rebalanced from the residuals while keeping tau * sigma * ||A||^2 < 1.
 */
inline BoundSolution solve_bound(const BoundProblem& prob, const BoundSolverOptions& opt = {}) {
    if (!(prob.max_power >= 0.0)) throw ShapeError("solve_bound: max_power must be non-negative");
    if (prob.precoder && prob.precoder->rows() != prob.x.rows())
        throw ShapeError("solve_bound: precoder rows differ from antenna count");
    if (!prob.band.empty() && static_cast<Eigen::Index>(prob.band.size()) != prob.x.cols())
        throw ShapeError("solve_bound: band mask length differs from n_fft");
    if (prob.budget == BudgetMeasure::InBand && static_cast<Eigen::Index>(prob.budget_band.size()) != prob.x.cols())
        throw ShapeError("solve_bound: budget band mask length differs from n_fft");
    if (!(opt.tol > 0.0)) throw ShapeError("solve_bound: tol must be positive");

    BoundSolution best;
    const Eigen::Index rows = prob.var_rows();
    const Eigen::Index cols = prob.n_fft();
    best.dz = CMatrix::Zero(rows, cols);
    const double scale = detail::max_abs(prob.x);
    best.objective = scale;
    best.dual_bound = 0.0;
    detail::BoundOperator op(prob);
    const double lnorm = op.norm();
    const bool only_zero = prob.max_power == 0.0 && prob.budget == BudgetMeasure::Total;
    if (only_zero || scale == 0.0 || lnorm == 0.0) {
        // Nothing can be subtracted (or nothing needs to be): dZ = 0 is optimal.
        best.dual_bound = scale;
        best.converged = true;
        return best;
    }

    const double r = prob.max_power;

    auto dual_value = [&](const CMatrix& y, const CMatrix& aty) {
        if (prob.budget == BudgetMeasure::Total) return -detail::re_inner(y, prob.x) - r * aty.norm();
        CMatrix in = detail::band_part(y, prob.budget_band);
        CMatrix out = y - in;
        out -= op.range_project(out);
        CMatrix yf = in + out;
        const double l1 = detail::l1_norm(yf);
        if (l1 > 1.0) yf /= l1;
        return -detail::re_inner(yf, prob.x) - r * op.adjoint(yf).norm();
    };

    // Lower bound from y concentrated on the largest entry of X.
    {
        CMatrix y = CMatrix::Zero(prob.x.rows(), prob.x.cols());
        Eigen::Index ai = 0;
        Eigen::Index ti = 0;
        prob.x.cwiseAbs().maxCoeff(&ai, &ti);
        const Complex v = prob.x(ai, ti);
        y(ai, ti) = -v / std::abs(v);
        best.dual_bound = std::max(0.0, dual_value(y, op.adjoint(y)));
    }

    // tau / sigma ~ |x*| / |y*|; start from R with the dual spread over ~sqrt(n) entries.
    const double ratio0 = std::max(r, 1e-12 * scale) * std::sqrt(static_cast<double>(prob.x.size())) / 4.0;
    double tau = 0.95 * std::sqrt(ratio0) / lnorm;
    double sigma = 0.95 / (std::sqrt(ratio0) * lnorm);
    double alpha = opt.adapt_alpha;

    CMatrix x = CMatrix::Zero(rows, cols);
    CMatrix ax = CMatrix::Zero(prob.x.rows(), cols);
    CMatrix ax_bar = ax;
    CMatrix y = CMatrix::Zero(prob.x.rows(), cols);
    CMatrix aty = CMatrix::Zero(rows, cols);

    std::size_t k = 0;
    for (; k < opt.max_iters; ++k) {
        CMatrix y_new = y + sigma * (ax_bar - prob.x);
        detail::project_l1_ball(y_new);
        CMatrix aty_new = op.adjoint(y_new);
        CMatrix x_new = x - tau * aty_new;
        detail::project_budget(x_new, prob);
        CMatrix ax_new = op.apply(x_new);

        const double obj = detail::max_abs(prob.x - ax_new);
        if (obj < best.objective) {
            best.objective = obj;
            best.dz = x_new;
        }

        // Residual balancing of the primal and dual step sizes.
        const double pres = ((x - x_new) / tau - (aty - aty_new)).norm();
        const double dres = ((y - y_new) / sigma - (ax - ax_new)).norm();

        x = std::move(x_new);
        y = std::move(y_new);
        ax_bar = 2.0 * ax_new - ax;
        ax = std::move(ax_new);
        aty = std::move(aty_new);

        if (pres > opt.balance_ratio * dres) {
            tau /= (1.0 - alpha);
            sigma *= (1.0 - alpha);
            alpha *= opt.adapt_decay;
        } else if (dres > opt.balance_ratio * pres) {
            tau *= (1.0 - alpha);
            sigma /= (1.0 - alpha);
            alpha *= opt.adapt_decay;
        }

        if ((k + 1) % opt.check_every == 0) {
            best.dual_bound = std::max(best.dual_bound, dual_value(y, aty));
            if (best.objective - best.dual_bound <= opt.tol * scale) {
                ++k;
                best.converged = true;
                break;
            }
        }
    }
    best.iterations = k;
    best.certified_gap = std::max(0.0, best.objective - best.dual_bound);
    best.converged = best.certified_gap <= opt.tol * scale;
    return best;
}

// ---------------------------------------------------------------------------
// Verification oracle

struct OracleOptions {
    std::size_t starts = 4;
    std::size_t iterations = 60000;  ///< per start, split evenly over the rounds
    std::size_t rounds = 4;
    double round_shrink = 0.2;
    std::uint64_t seed = 7;
    std::size_t max_real_dims = 128;
};

/**
 * @brief Multi-start projected subgradient method on explicit dense matrices.
 *
 * Builds P and the circulant band projector K as dense matrices (K from the
 * closed-form DFT sum, not through FFTs) and minimizes max |X - P dZ K| over
 * the budget set with diminishing normalized steps c / sqrt(k + 1). Each start
 * runs several rounds, restarting from its best point with a smaller c.
 * Returns the best objective seen over all starts. Refuses instances with
 * more than max_real_dims real unknowns.
 */
inline double reference_oracle(const BoundProblem& prob, const OracleOptions& opt = {}) {
    const Eigen::Index rows = prob.var_rows();
    const Eigen::Index n = prob.n_fft();
    if (static_cast<std::size_t>(2 * rows * n) > opt.max_real_dims)
        throw ShapeError("reference_oracle: instance has " + std::to_string(2 * rows * n) +
                         " real unknowns, above the cap of " + std::to_string(opt.max_real_dims));

    Eigen::MatrixXcd p = prob.precoder ? Eigen::MatrixXcd(*prob.precoder) : Eigen::MatrixXcd::Identity(prob.x.rows(), rows);
    Eigen::MatrixXcd k = Eigen::MatrixXcd::Identity(n, n);
    if (!prob.band.empty()) {
        // K(j, t) = (1/n) sum_{m in band} e^{2 pi i m (t - j) / n}
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index t = 0; t < n; ++t) {
                Complex s{};
                for (Eigen::Index m = 0; m < n; ++m)
                    if (prob.band[static_cast<std::size_t>(m)])
                        s += std::polar(1.0, 2.0 * kPi * static_cast<double>(m * (t - j)) / static_cast<double>(n));
                k(j, t) = s / static_cast<double>(n);
            }
    }
    // Dense projector for the in-band budget measure, built the same way as K.
    Eigen::MatrixXcd kb = Eigen::MatrixXcd::Zero(n, n);
    if (prob.budget == BudgetMeasure::InBand)
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index t = 0; t < n; ++t) {
                Complex s{};
                for (Eigen::Index m = 0; m < n; ++m)
                    if (prob.budget_band[static_cast<std::size_t>(m)])
                        s += std::polar(1.0, 2.0 * kPi * static_cast<double>(m * (t - j)) / static_cast<double>(n));
                kb(j, t) = s / static_cast<double>(n);
            }

    const Eigen::MatrixXcd x = prob.x;
    auto objective = [&](const Eigen::MatrixXcd& dz) { return (x - p * dz * k).cwiseAbs().maxCoeff(); };
    const double r = prob.max_power;
    auto project = [&](Eigen::MatrixXcd& dz) {
        if (prob.budget == BudgetMeasure::Total) {
            const double nz = dz.norm();
            if (nz > r) dz *= r / nz;
            return;
        }
        const Eigen::MatrixXcd in = dz * kb;
        const double nb = in.norm();
        if (nb > r) dz -= in * (1.0 - r / nb);
    };

    double best = x.cwiseAbs().maxCoeff();
    if (r <= 0.0 && prob.budget == BudgetMeasure::Total) return best;
    // Step length scale: the budget radius, or the size of X when out-of-band content is unbounded.
    const double step_scale =
        prob.budget == BudgetMeasure::Total ? r : std::max(r, 0.25 * x.norm() / Eigen::JacobiSVD<Eigen::MatrixXcd>(p).singularValues()(0));

    CounterRng rng(opt.seed, RngDomain::Oracle, 0);
    for (std::size_t s = 0; s < opt.starts; ++s) {
        Eigen::MatrixXcd dz = Eigen::MatrixXcd::Zero(rows, n);
        if (s > 0) {
            for (Eigen::Index i = 0; i < dz.size(); ++i) dz(i) = rng.complex_normal();
            dz *= rng.uniform() * step_scale / dz.norm();
            project(dz);
        }
        // Rounds of diminishing steps, each restarted from the best point so far with a smaller scale.
        Eigen::MatrixXcd best_dz = dz;
        double best_start = objective(dz);
        const std::size_t per_round = std::max<std::size_t>(1, opt.iterations / opt.rounds);
        for (std::size_t round = 0; round < opt.rounds; ++round) {
            dz = best_dz;
            const double scale_r = step_scale * std::pow(opt.round_shrink, static_cast<double>(round));
            for (std::size_t it = 0; it < per_round; ++it) {
                const Eigen::MatrixXcd res = x - p * dz * k;
                Eigen::Index ai = 0;
                Eigen::Index ti = 0;
                const double f = res.cwiseAbs().maxCoeff(&ai, &ti);
                if (f < best_start) {
                    best_start = f;
                    best_dz = dz;
                }
                if (f == 0.0) break;
                // Subgradient of |res(ai, ti)|: -(res/|res|) conj(P(ai, :))^T conj(K(:, ti))^T
                const Complex u = res(ai, ti) / f;
                const Eigen::MatrixXcd g = -(p.row(ai).adjoint() * u) * k.col(ti).adjoint();
                const double gn = g.norm();
                if (gn == 0.0) break;
                dz -= (scale_r / std::sqrt(static_cast<double>(it) + 1.0)) * g / gn;
                project(dz);
            }
        }
        best = std::min(best, best_start);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Bound suite

struct BoundRecord {
    BoundVariant variant;
    std::size_t symbol;
    double objective;
    std::size_t iterations;
    double gap;
    bool converged;
};

struct BoundSuiteResult {
    std::vector<BoundVariant> variants;
    std::vector<std::vector<double>> papr;  ///< per variant, per (antenna, symbol)
    std::vector<CcdfCurve> curves;
    std::vector<BoundRecord> records;
    std::vector<double> papr_before;
};

/**
 * @brief Per-symbol bounds for each variant with the EVM-derived budget.
 *
 * Budget: evm_budget * ||Z||_F for variables in the DAC domain, and
 * evm_budget * ||X||_F for the antenna-domain variable of UnlimitedSpace,
 * so every variant injects the same relative error power on the occupied
 * subcarriers. UnlimitedBand may additionally spend any amount of power
 * outside the band unless ub_budget is Total.
 */
inline BoundSuiteResult bound_suite(const SimConfig& cfg, std::span<const TimeSignal> z, const Precoder& p,
                                    double evm_budget, std::span<const BoundVariant> variants,
                                    const BoundSolverOptions& opt = {},
                                    BudgetMeasure ub_budget = BudgetMeasure::InBand) {
    BoundSuiteResult out;
    out.variants.assign(variants.begin(), variants.end());
    out.papr.resize(variants.size());
    for (std::size_t s = 0; s < z.size(); ++s) {
        const auto x = digital_twin(p, z[s]);
        append_papr(x, out.papr_before);
        for (std::size_t v = 0; v < variants.size(); ++v) {
            const double energy = variants[v] == BoundVariant::UnlimitedSpace ? x.data.norm() : z[s].data.norm();
            const auto prob = make_bound_problem(x.data, p, cfg.n_sc, evm_budget * energy, variants[v], ub_budget);
            const auto sol = solve_bound(prob, opt);
            const TimeSignal xhat(bound_residual(prob, sol.dz), Domain::Antenna);
            append_papr(xhat, out.papr[v]);
            out.records.push_back({variants[v], s, sol.objective, sol.iterations, sol.certified_gap, sol.converged});
        }
    }
    for (auto& v : out.papr) out.curves.push_back(ccdf(v));
    return out;
}

}  // namespace hbfpapr
