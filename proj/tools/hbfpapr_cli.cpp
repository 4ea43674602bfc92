// Command-line front end: simulate | train | bound | selftest.
//
// Exit codes: 0 success, 1 selftest failure (or an unexpected error),
// 2 I/O error, 3 invalid configuration.

#include "hbfpapr/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

enum Exit { kOk = 0, kSelftestFailed = 1, kIo = 2, kSpec = 3 };

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::size_t> n_ofdm;
    std::optional<std::size_t> iters;
    std::optional<std::string> projection;
};

hbfpapr::ExperimentSpec resolve(const Overrides& o) {
    auto spec = o.config.empty() ? hbfpapr::ExperimentSpec{} : hbfpapr::load_spec(o.config);
    if (o.seed) {
        spec.sim.rng_seed = *o.seed;
        spec.ga.rng_seed = *o.seed;
    }
    if (o.out) spec.output.dir = *o.out;
    if (o.n_ofdm) spec.sim.n_ofdm = *o.n_ofdm;
    if (o.iters) spec.sim.n_iter = *o.iters;
    if (o.projection) spec.pipeline.projection = hbfpapr::parse_projection(*o.projection);
    hbfpapr::resolve_schedule(spec);
    return spec;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"PAPR reduction laboratory for hybrid-beamforming OFDM transmitters"};
    app.require_subcommand(1);
    Overrides o;
    std::string fault = "none";

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "config file (key = value with [sections])");
        sub->add_option("--seed", o.seed, "seed for data, precoder and GA");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--n-ofdm", o.n_ofdm, "OFDM symbols per run");
        sub->add_option("--iters", o.iters, "reduction iterations (n_iter)");
        sub->add_option("--projection", o.projection, "ls1 or ls2")->check(CLI::IsMember({"ls1", "ls2"}));
    };
    auto* sim = app.add_subcommand("simulate", "run the reduction pipeline and write CCDF/spectrum CSVs");
    auto* train = app.add_subcommand("train", "train [coef, tau...] with the genetic algorithm");
    auto* bound = app.add_subcommand("bound", "compute the convex performance bounds");
    auto* self = app.add_subcommand("selftest", "run the oracle-equivalence checks");
    for (auto* s : {sim, train, bound, self}) add_common(s);
    self->add_option("--inject-fault", fault, "deliberately corrupt a component (none, kernel)")
        ->check(CLI::IsMember({"none", "kernel"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kSpec;
    }

    try {
        if (self->parsed()) {
            const auto spec = resolve(o);
            const auto t0 = hbfpapr::Clock::now();
            const auto rows = hbfpapr::run_selftest(fault == "kernel" ? hbfpapr::Fault::Kernel : hbfpapr::Fault::None,
                                                    spec.sim.rng_seed);
            hbfpapr::print_selftest(std::cout, rows);
            bool ok = true;
            for (const auto& r : rows) ok = ok && r.pass;
            std::cout << (ok ? "selftest passed" : "selftest FAILED") << " in "
                      << hbfpapr::fmt_double(hbfpapr::seconds_since(t0), "%.2f") << " s\n";
            return ok ? kOk : kSelftestFailed;
        }
        const auto spec = resolve(o);
        if (sim->parsed()) hbfpapr::cmd_simulate(spec);
        else if (train->parsed()) hbfpapr::cmd_train(spec);
        else if (bound->parsed()) hbfpapr::cmd_bound(spec);
        return kOk;
    } catch (const hbfpapr::IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kIo;
    } catch (const hbfpapr::SpecError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kSpec;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kSelftestFailed;
    }
}
