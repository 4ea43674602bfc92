// Runs the reduction pipeline on a small array and prints the CCDF shift.

#include "hbfpapr/hbf.hpp"

#include <cstdio>

int main() {
    hbfpapr::SimConfig cfg;
    cfg.n_fft = 256;
    cfg.n_sc = 60;
    cfg.n_ant = 32;
    cfg.n_dac = 8;
    cfg.n_b = 16;

    const hbfpapr::HbfContext ctx(cfg);
    const auto z = hbfpapr::make_dataset(cfg, 32);

    hbfpapr::PipelineParams params;
    params.schedule.coef = 3.0;
    params.schedule.tau_norm = {2.0, 1.9};

    const auto batch = hbfpapr::run_batch(ctx, params, z);
    const auto before = hbfpapr::ccdf(batch.papr_before);
    const auto after = hbfpapr::ccdf(batch.papr_after);
    for (double p : {1e-1, 1e-2}) {
        std::printf("CCDF %-6g  before %6.2f dB  after %6.2f dB\n", p, hbfpapr::papr_at(before, p),
                    hbfpapr::papr_at(after, p));
    }
    std::printf("EVM %.2f %%, %.2f ms per symbol\n", 100.0 * batch.evm, batch.runtime_ms / z.size());
}
