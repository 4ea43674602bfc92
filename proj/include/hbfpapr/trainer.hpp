#pragma once

/**
 * @file trainer.hpp
 * @brief Real-coded genetic algorithm for the pipeline hyperparameters
 *        [coef, tau_1, ..., tau_n_iter].
 */

#include "core.hpp"
#include "hbf.hpp"
#include "rng.hpp"
#include "signal.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

namespace hbfpapr {

struct GeneBounds {
    double lo;
    double hi;
};

struct GaConfig {
    std::size_t population = 24;
    std::size_t generations = 40;
    GeneBounds coef_bounds{0.2, 5.0};
    GeneBounds tau_bounds{1.0, 3.0};
    double crossover_rate = 0.9;
    double mutation_rate = 0.2;
    double mutation_sigma = 0.1;  ///< standard deviation as a fraction of the gene range
    std::size_t elitism = 2;
    std::size_t tournament = 3;
    double blend_alpha = 0.5;     ///< BLX-alpha extension
    double target_ccdf = 1e-4;
    std::size_t training_n_ofdm = 30;
    double penalty_weight = 100.0;  ///< dB per unit of EVM above budget
    std::uint64_t rng_seed = 1;
};

inline void validate(const GaConfig& g) {
    if (g.population < 4) throw SpecError("ga population must be at least 4");
    if (g.generations == 0) throw SpecError("ga generations must be positive");
    for (auto b : {g.coef_bounds, g.tau_bounds})
        if (!(b.lo < b.hi)) throw SpecError("ga gene bounds need lo < hi");
    for (double r : {g.crossover_rate, g.mutation_rate})
        if (!(r >= 0.0 && r <= 1.0)) throw SpecError("ga rates must lie in [0, 1]");
    if (!(g.mutation_sigma >= 0.0)) throw SpecError("ga mutation_sigma must be non-negative");
    if (g.elitism >= g.population) throw SpecError("ga elitism must be below the population size");
    if (g.tournament == 0) throw SpecError("ga tournament size must be positive");
    if (!(g.target_ccdf > 0.0 && g.target_ccdf < 1.0)) throw SpecError("ga target_ccdf must lie in (0, 1)");
    if (g.training_n_ofdm == 0) throw SpecError("ga training_n_ofdm must be positive");
}

inline std::vector<GeneBounds> gene_bounds(const GaConfig& g, std::size_t n_iter) {
    std::vector<GeneBounds> b{g.coef_bounds};
    b.insert(b.end(), n_iter, g.tau_bounds);
    return b;
}

struct GaResult {
    std::vector<double> genes;
    double fitness = 0.0;
    std::vector<double> history;       ///< best-so-far fitness per generation
    std::vector<double> mean_history;  ///< population mean per generation
    std::vector<std::vector<double>> best_genes;  ///< best-so-far genes per generation
    std::size_t evaluations = 0;
};

using FitnessFn = std::function<double(std::span<const double>)>;

/**
 * @brief Minimizes fitness over the box with a generational GA.
 *
 * Tournament selection, BLX-alpha blend crossover, Gaussian mutation
 * clipped to the bounds, and elitism (the best `elitism` individuals are
 * copied unchanged). Every random draw is keyed on (seed, generation,
 * slot), so a run is fully determined by the configuration. Identical
 * genomes are evaluated once.
 */
inline GaResult ga_minimize(const GaConfig& ga, std::span<const GeneBounds> bounds, const FitnessFn& fitness) {
    validate(ga);
    const std::size_t n_genes = bounds.size();
    using Genome = std::vector<double>;
    std::map<Genome, double> cache;
    GaResult result;
    auto eval = [&](const Genome& g) {
        if (auto it = cache.find(g); it != cache.end()) return it->second;
        const double f = fitness(g);
        ++result.evaluations;
        cache.emplace(g, f);
        return f;
    };

    std::vector<Genome> pop(ga.population, Genome(n_genes));
    {
        CounterRng rng(ga.rng_seed, RngDomain::Genetic, 0);
        for (auto& g : pop)
            for (std::size_t j = 0; j < n_genes; ++j) g[j] = rng.uniform(bounds[j].lo, bounds[j].hi);
    }

    std::vector<double> fit(pop.size());
    Genome best;
    double best_fit = std::numeric_limits<double>::infinity();

    for (std::size_t gen = 0; gen < ga.generations; ++gen) {
        for (std::size_t i = 0; i < pop.size(); ++i) fit[i] = eval(pop[i]);
        std::vector<std::size_t> order(pop.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return fit[a] < fit[b]; });
        if (fit[order[0]] < best_fit) {
            best_fit = fit[order[0]];
            best = pop[order[0]];
        }
        result.history.push_back(best_fit);
        result.mean_history.push_back(std::accumulate(fit.begin(), fit.end(), 0.0) / static_cast<double>(fit.size()));
        result.best_genes.push_back(best);
        if (gen + 1 == ga.generations) break;

        CounterRng rng(ga.rng_seed, RngDomain::Genetic, gen + 1);
        auto tournament = [&]() -> const Genome& {
            std::size_t w = static_cast<std::size_t>(rng.below(pop.size()));
            for (std::size_t t = 1; t < ga.tournament; ++t) {
                const auto c = static_cast<std::size_t>(rng.below(pop.size()));
                if (fit[c] < fit[w]) w = c;
            }
            return pop[w];
        };

        std::vector<Genome> next;
        next.reserve(pop.size());
        for (std::size_t e = 0; e < ga.elitism; ++e) next.push_back(pop[order[e]]);
        while (next.size() < pop.size()) {
            const Genome& a = tournament();
            const Genome& b = tournament();
            Genome child = a;
            if (rng.uniform() < ga.crossover_rate) {
                for (std::size_t j = 0; j < n_genes; ++j) {
                    const double lo = std::min(a[j], b[j]);
                    const double hi = std::max(a[j], b[j]);
                    const double ext = ga.blend_alpha * (hi - lo);
                    child[j] = rng.uniform(lo - ext, hi + ext);
                }
            }
            for (std::size_t j = 0; j < n_genes; ++j) {
                if (rng.uniform() < ga.mutation_rate)
                    child[j] += rng.normal() * ga.mutation_sigma * (bounds[j].hi - bounds[j].lo);
                child[j] = std::clamp(child[j], bounds[j].lo, bounds[j].hi);
            }
            next.push_back(std::move(child));
        }
        pop = std::move(next);
    }
    result.genes = best;
    result.fitness = best_fit;
    return result;
}

// ---------------------------------------------------------------------------
// PAPR fitness

struct FitnessReport {
    double value = 0.0;         ///< papr + penalty
    double papr_db = 0.0;       ///< PAPR of the output at the effective CCDF level
    double evm = 0.0;
    double effective_ccdf = 0.0;
    bool fallback = false;      ///< target level was deeper than the dataset supports
};

inline PipelineParams params_from_genes(std::span<const double> genes, const PipelineParams& base) {
    if (genes.size() < 2) throw ShapeError("genes must hold coef and at least one threshold");
    PipelineParams p = base;
    p.schedule.coef = genes[0];
    p.schedule.tau_norm.assign(genes.begin() + 1, genes.end());
    return p;
}

/// Training symbols start here so they never overlap evaluation symbols, which start at 0.
inline constexpr std::size_t kTrainingSymbolOffset = std::size_t{1} << 20;

/**
 * @brief Pipeline fitness on a frozen seeded dataset.
 *
 * The dataset and its digital twins are generated once, so every candidate
 * sees the same symbols. The value is the output PAPR at target_ccdf (or at
 * the deepest level the dataset resolves, 1 / (n_ant * n_symbols)) plus
 * penalty_weight * max(0, evm - evm_budget).
 */
class PaprFitness {
public:
    PaprFitness(const SimConfig& cfg, const GaConfig& ga, PipelineParams base,
                std::size_t first_symbol = kTrainingSymbolOffset)
        : ctx_(cfg), ga_(ga), base_(std::move(base)) {
        dataset_ = make_dataset(cfg, ga.training_n_ofdm, first_symbol);
        twins_.reserve(dataset_.size());
        for (const auto& z : dataset_) twins_.push_back(digital_twin(ctx_.precoder, z));
    }

    FitnessReport evaluate(std::span<const double> genes) const {
        const auto params = params_from_genes(genes, base_);
        const auto batch = run_batch(ctx_, params, dataset_, nullptr, twins_);
        const auto curve = ccdf(batch.papr_after);
        FitnessReport r;
        r.effective_ccdf = ga_.target_ccdf;
        if (static_cast<double>(curve.n_samples) * ga_.target_ccdf < 1.0 - 1e-9) {
            r.effective_ccdf = min_resolvable_prob(curve);
            r.fallback = true;
        }
        r.papr_db = papr_at(curve, r.effective_ccdf);
        r.evm = batch.evm;
        r.value = r.papr_db + ga_.penalty_weight * std::max(0.0, r.evm - ctx_.config.evm_budget);
        return r;
    }

    /// Output PAPR of the unmodified dataset at the same CCDF level.
    double unreduced_papr() const {
        std::vector<double> v;
        for (const auto& x : twins_) append_papr(x, v);
        const auto c = ccdf(std::move(v));
        const double p = static_cast<double>(c.n_samples) * ga_.target_ccdf < 1.0 - 1e-9 ? min_resolvable_prob(c)
                                                                                           : ga_.target_ccdf;
        return papr_at(c, p);
    }

    double operator()(std::span<const double> genes) const { return evaluate(genes).value; }

    const HbfContext& context() const { return ctx_; }
    const PipelineParams& base() const { return base_; }

private:
    HbfContext ctx_;
    GaConfig ga_;
    PipelineParams base_;
    std::vector<TimeSignal> dataset_;
    std::vector<TimeSignal> twins_;
};

struct TrainResult {
    std::vector<double> genes;  ///< [coef, tau_1 .. tau_n_iter]
    double fitness = 0.0;
    double evm = 0.0;
    double papr_db = 0.0;
    double effective_ccdf = 0.0;
    bool fallback = false;
    std::vector<double> history;
    std::vector<double> mean_history;
    std::vector<std::vector<double>> best_genes;
    std::size_t evaluations = 0;
};

/// Trains [coef, tau_1 .. tau_n_iter] for cfg.n_iter iterations.
inline TrainResult ga_train(const GaConfig& ga, const SimConfig& cfg, const PipelineParams& base = {}) {
    validate(cfg);
    validate(ga);
    PaprFitness fitness(cfg, ga, base);
    const auto bounds = gene_bounds(ga, cfg.n_iter);
    const auto res = ga_minimize(ga, bounds, [&](std::span<const double> g) { return fitness(g); });
    const auto rep = fitness.evaluate(res.genes);
    TrainResult t;
    t.genes = res.genes;
    t.fitness = res.fitness;
    t.evm = rep.evm;
    t.papr_db = rep.papr_db;
    t.effective_ccdf = rep.effective_ccdf;
    t.fallback = rep.fallback;
    t.history = res.history;
    t.mean_history = res.mean_history;
    t.best_genes = res.best_genes;
    t.evaluations = res.evaluations;
    return t;
}

}  // namespace hbfpapr
