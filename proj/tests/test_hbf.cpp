#include "hbfpapr/hbf.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hbfpapr;

namespace {

SimConfig small_config() {
    SimConfig c;
    c.n_fft = 128;
    c.n_sc = 32;
    c.n_ant = 16;
    c.n_dac = 4;
    c.n_b = 8;
    return c;
}

double max_diff(const CMatrix& a, const CMatrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

TimeSignal random_antenna(std::size_t n_ant, std::size_t n_fft, std::uint64_t seed) {
    CounterRng rng(seed, RngDomain::Test, 0);
    TimeSignal x(n_ant, n_fft, Domain::Antenna);
    for (Eigen::Index r = 0; r < x.data.rows(); ++r)
        for (Eigen::Index c = 0; c < x.data.cols(); ++c) x.data(r, c) = rng.complex_normal();
    return x;
}

// Largest out-of-band magnitude relative to the largest in-band one, over all rows.
double band_leakage(const CMatrix& rows, std::size_t n_sc) {
    const auto n = static_cast<std::size_t>(rows.cols());
    const auto mask = band_mask(n, n_sc);
    CMatrix f = rows;
    fft::forward_rows(f);
    double in = 0.0, out = 0.0;
    for (Eigen::Index r = 0; r < f.rows(); ++r)
        for (std::size_t k = 0; k < n; ++k) {
            const double v = std::abs(f(r, static_cast<Eigen::Index>(k)));
            (mask[k] ? in : out) = std::max(mask[k] ? in : out, v);
        }
    return in > 0.0 ? out / in : 0.0;
}

}  // namespace

TEST(Precoder, UnitModulusAndOrthogonalColumns) {
    const auto p = build_precoder(256, 64, 7);
    ASSERT_EQ(p.n_ant(), 256u);
    ASSERT_EQ(p.n_dac(), 64u);
    EXPECT_LT((p.matrix.cwiseAbs().array() - 1.0).abs().maxCoeff(), 1e-14);
    const CMatrix g = p.matrix.adjoint() * p.matrix;
    EXPECT_LT(max_diff(g, 256.0 * CMatrix::Identity(64, 64)), 1e-9);
}

TEST(Precoder, SeededAndDistinct) {
    const auto a = build_precoder(64, 16, 3), b = build_precoder(64, 16, 3), c = build_precoder(64, 16, 4);
    EXPECT_EQ(a.column_bins, b.column_bins);
    EXPECT_NE(a.column_bins, c.column_bins);
    auto bins = a.column_bins;
    std::sort(bins.begin(), bins.end());
    EXPECT_EQ(std::adjacent_find(bins.begin(), bins.end()), bins.end());
    EXPECT_THROW(build_precoder(16, 17, 1), ShapeError);
    EXPECT_THROW(build_precoder(16, 0, 1), ShapeError);
}

TEST(DigitalTwin, FastPathMatchesMatrixProduct) {
    const auto c = small_config();
    const auto p = build_precoder(c.n_ant, c.n_dac, 2);
    for (std::size_t s = 0; s < 5; ++s) {
        const auto z = random_dac_symbol(c, s);
        EXPECT_LT(max_diff(digital_twin(p, z).data, digital_twin_direct(p, z).data), 1e-12);
    }
}

TEST(DigitalTwin, ZeroSingleStreamAndLinearity) {
    const auto c = small_config();
    const auto p = build_precoder(c.n_ant, c.n_dac, 2);
    const TimeSignal zero(c.n_dac, c.n_fft, Domain::Dac);
    EXPECT_EQ(digital_twin(p, zero).data.cwiseAbs().maxCoeff(), 0.0);

    TimeSignal one(c.n_dac, c.n_fft, Domain::Dac);
    one.data(1, 5) = Complex(2.0, -1.0);
    const auto x = digital_twin(p, one);
    for (std::size_t a = 0; a < c.n_ant; ++a) {
        EXPECT_LT(std::abs(x.data(static_cast<Eigen::Index>(a), 5) - p.matrix(static_cast<Eigen::Index>(a), 1) * Complex(2.0, -1.0)), 1e-12);
        EXPECT_LT(std::abs(x.data(static_cast<Eigen::Index>(a), 6)), 1e-12);
    }

    const auto z1 = random_dac_symbol(c, 1), z2 = random_dac_symbol(c, 2);
    const Complex alpha(0.3, 1.2);
    const TimeSignal mix(alpha * z1.data + z2.data, Domain::Dac);
    EXPECT_LT(max_diff(digital_twin(p, mix).data, alpha * digital_twin(p, z1).data + digital_twin(p, z2).data), 1e-12);
}

TEST(DigitalTwin, RejectsWrongDomainAndShape) {
    const auto c = small_config();
    const auto p = build_precoder(c.n_ant, c.n_dac, 2);
    EXPECT_THROW(digital_twin(p, TimeSignal(c.n_dac, c.n_fft, Domain::Antenna)), ContractError);
    EXPECT_THROW(digital_twin(p, TimeSignal(c.n_dac + 1, c.n_fft, Domain::Dac)), ShapeError);
    EXPECT_THROW(ls1_project(TimeSignal(c.n_ant, c.n_fft, Domain::Dac), p, 1.0), ContractError);
}

TEST(Ls1, RecoversDacSignalAndLeavesOrthogonalResidual) {
    const auto c = small_config();
    const auto p = build_precoder(c.n_ant, c.n_dac, 9);
    const auto z = random_dac_symbol(c, 4);
    EXPECT_LT(max_diff(ls1_project(digital_twin(p, z), p, 1.0).data, z.data), 1e-12);
    EXPECT_EQ(ls1_project(TimeSignal(c.n_ant, c.n_fft, Domain::Antenna), p, 1.0).data.cwiseAbs().maxCoeff(), 0.0);

    const auto dx = random_antenna(c.n_ant, c.n_fft, 5);
    const auto dz = ls1_project(dx, p, 1.0);
    const CMatrix residual = dx.data - digital_twin(p, dz).data;
    EXPECT_LT((p.matrix.adjoint() * residual).cwiseAbs().maxCoeff(), 1e-10);
    // The least-squares solution from the normal equations.
    const CMatrix ls = (p.matrix.adjoint() * p.matrix).ldlt().solve(p.matrix.adjoint() * dx.data);
    EXPECT_LT(max_diff(dz.data, ls), 1e-12);
    EXPECT_LT(max_diff(ls1_project(dx, p, 0.5).data, 0.5 * dz.data), 1e-15);
}

TEST(Ls2, EmptyGridAndSinglePeak) {
    const auto c = small_config();
    const auto p = build_precoder(c.n_ant, c.n_dac, 9);
    const auto k = build_sinc(c.n_fft, c.n_sc);
    AmplitudeGrid grid(c.n_ant);
    EXPECT_LT(ls2_project(grid, p, 1.0, k).data.cwiseAbs().maxCoeff(), 1e-15);

    grid[3][20] = Complex(0.7, 0.2);
    const auto dz = ls2_project(grid, p, 1.0, k);
    for (std::size_t s = 0; s < c.n_dac; ++s) {
        const Complex amp = std::conj(p.matrix(3, static_cast<Eigen::Index>(s))) * Complex(0.7, 0.2) / 16.0;
        for (std::size_t t = 0; t < c.n_fft; ++t)
            EXPECT_LT(std::abs(dz.data(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(t)) -
                               amp * k.unit((t + c.n_fft - 20) % c.n_fft)),
                      1e-14);
    }
    AmplitudeGrid short_grid(c.n_ant - 1);
    EXPECT_THROW(ls2_project(short_grid, p, 1.0, k), ShapeError);
}

TEST(Ls2, EqualsLs1OnArbitraryGrids) {
    // Random sparse grids with independent index sets per antenna, not only STR outputs.
    const auto c = small_config();
    const auto k = build_sinc(c.n_fft, c.n_sc);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = build_precoder(c.n_ant, c.n_dac, seed);
        CounterRng rng(seed, RngDomain::Test, 1);
        AmplitudeGrid grid(c.n_ant);
        for (auto& row : grid) {
            const auto count = rng.below(6);
            for (std::uint64_t j = 0; j < count; ++j) row[static_cast<std::size_t>(rng.below(c.n_fft))] = rng.complex_normal();
        }
        const double coef = rng.uniform(0.2, 2.0);
        const auto via_ls2 = ls2_project(grid, p, coef, k);
        const auto via_ls1 = ls1_project(expand_amplitudes(grid, k), p, coef);
        EXPECT_LT(max_diff(via_ls2.data, via_ls1.data), 1e-12);
    }
}

TEST(Ls2, WindowedKernelMatchesTapByTapLs1) {
    const auto c = small_config();
    const auto p = build_precoder(c.n_ant, c.n_dac, 1);
    const auto k = windowed_kernel(build_sinc(c.n_fft, c.n_sc), 32);
    AmplitudeGrid grid(c.n_ant);
    grid[0][3] = 1.0;
    grid[7][100] = Complex(0.0, 2.0);
    grid[7][127] = Complex(-1.0, 0.5);
    EXPECT_LT(max_diff(ls2_project(grid, p, 1.3, k).data, ls1_project(expand_amplitudes(grid, k), p, 1.3).data), 1e-12);
}

TEST(Ls2, CorrectionIsBandLimited) {
    SimConfig c;
    c.n_ant = 64;
    c.n_dac = 16;
    const HbfContext ctx(c);
    for (auto proj : {Projection::Ls1, Projection::Ls2}) {
        PipelineParams params;
        params.projection = proj;
        const auto r = reduce_papr_hbf(random_dac_symbol(c, 0), ctx.precoder, params, ctx.kernel, c.evm_budget, c.n_b);
        EXPECT_LT(band_leakage(r.dz.data, c.n_sc), 1e-10);
    }
}

TEST(Pipeline, HighThresholdLeavesSymbolUnchanged) {
    const auto c = small_config();
    const HbfContext ctx(c);
    PipelineParams params;
    params.schedule.tau_norm = {50.0, 50.0};
    const auto z = random_dac_symbol(c, 3);
    const auto r = reduce_papr_hbf(z, ctx.precoder, params, ctx.kernel, c.evm_budget, c.n_b);
    EXPECT_EQ(r.report.peaks, 0u);
    EXPECT_EQ(r.report.evm, 0.0);
    EXPECT_LT(max_diff(r.z_hat.data, z.data), 1e-15);
    for (std::size_t a = 0; a < c.n_ant; ++a) EXPECT_NEAR(r.report.papr_after[a], r.report.papr_before[a], 1e-9);
}

TEST(Pipeline, ReportFieldsAreConsistent) {
    const auto c = small_config();
    const HbfContext ctx(c);
    PipelineParams params;
    params.schedule = {{1.5, 1.4}, 1.0, ThresholdNorm::Rms};
    const auto z = random_dac_symbol(c, 8);
    const auto r = reduce_papr_hbf(z, ctx.precoder, params, ctx.kernel, 0.01, c.n_b);
    ASSERT_EQ(r.report.papr_before.size(), c.n_ant);
    ASSERT_EQ(r.report.papr_after.size(), c.n_ant);
    ASSERT_EQ(r.report.papr_antenna_str.size(), c.n_ant);
    EXPECT_GT(r.report.peaks, 0u);
    EXPECT_LT(max_diff(r.z_hat.data + r.dz.data, z.data), 1e-15);
    EXPECT_NEAR(r.report.evm, r.dz.data.norm() / z.data.norm(), 1e-15);
    EXPECT_EQ(r.report.evm_over_budget, r.report.evm > 0.01);
    EXPECT_EQ(r.z_hat.domain, Domain::Dac);
}

TEST(Pipeline, Ls1AndLs2GiveTheSameSymbol) {
    SimConfig c;
    c.n_ant = 64;
    c.n_dac = 16;
    const HbfContext ctx(c);
    PipelineParams a, b;
    a.projection = Projection::Ls1;
    b.projection = Projection::Ls2;
    for (std::size_t s = 0; s < 3; ++s) {
        const auto z = random_dac_symbol(c, s);
        const auto ra = reduce_papr_hbf(z, ctx.precoder, a, ctx.kernel, c.evm_budget, c.n_b);
        const auto rb = reduce_papr_hbf(z, ctx.precoder, b, ctx.kernel, c.evm_budget, c.n_b);
        EXPECT_LT(max_diff(ra.z_hat.data, rb.z_hat.data), 1e-12);
    }
}

TEST(Pipeline, RunBatchAggregatesAndReusesTwins) {
    const auto c = small_config();
    const HbfContext ctx(c);
    PipelineParams params;
    params.schedule = {{1.5, 1.4}, 2.0, ThresholdNorm::Rms};
    const auto z = make_dataset(c, 4);
    std::vector<TimeSignal> twins, out;
    for (const auto& s : z) twins.push_back(digital_twin(ctx.precoder, s));
    const auto a = run_batch(ctx, params, z, &out);
    const auto b = run_batch(ctx, params, z, nullptr, twins);
    EXPECT_EQ(a.papr_after, b.papr_after);
    EXPECT_EQ(a.papr_after.size(), 4 * c.n_ant);
    ASSERT_EQ(out.size(), 4u);
    double e_dz = 0.0, e_z = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        e_dz += std::pow(a.symbols[i].evm * z[i].data.norm(), 2);
        e_z += z[i].data.squaredNorm();
    }
    EXPECT_NEAR(a.evm, std::sqrt(e_dz / e_z), 1e-12);
    for (std::size_t a_idx = 0; a_idx < c.n_ant; ++a_idx)
        EXPECT_NEAR(papr_db(out[0].row(a_idx)), a.symbols[0].papr_after[a_idx], 1e-9);
    twins.pop_back();
    EXPECT_THROW(run_batch(ctx, params, z, nullptr, twins), ShapeError);
}

TEST(Pipeline, ValidateParams) {
    const auto c = small_config();
    PipelineParams p;
    EXPECT_NO_THROW(validate(p, c));
    p.schedule.tau_norm = {1.5};
    EXPECT_THROW(validate(p, c), SpecError);
    p = {};
    p.schedule.coef = 0.0;
    EXPECT_THROW(validate(p, c), SpecError);
    p = {};
    p.window_len = c.n_fft + 1;
    EXPECT_THROW(validate(p, c), SpecError);
}

TEST(Pipeline, DeskGenesReduceCcdfWithinBudget) {
    // Regression floor at desk geometry for the genes in configs/desk.ini.
    SimConfig c;
    c.n_fft = 128;
    c.n_sc = 32;
    c.n_ant = 16;
    c.n_dac = 4;
    c.n_b = 8;
    const HbfContext ctx(c);
    PipelineParams params;
    params.schedule = {{1.995, 2.002}, 2.980, ThresholdNorm::Rms};
    const auto z = make_dataset(c, 64);
    const auto b = run_batch(ctx, params, z);
    const double before = papr_at(ccdf(b.papr_before), 1e-2);
    const double after = papr_at(ccdf(b.papr_after), 1e-2);
    EXPECT_GT(before - after, 1.0);
    EXPECT_LT(b.evm, c.evm_budget);
}
