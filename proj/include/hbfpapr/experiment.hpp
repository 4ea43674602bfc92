#pragma once

/**
 * @file experiment.hpp
 * @brief Experiment specification, its text format, and the CLI commands.
 *
 * Config format: `[section]` headers followed by `key = value` lines; `#`
 * starts a comment. Sections are sim, pipeline, ga, bound and output.
 * Unknown sections and keys are errors.
 */

#include "bound.hpp"
#include "core.hpp"
#include "hbf.hpp"
#include "signal.hpp"
#include "str.hpp"
#include "trainer.hpp"

#include <charconv>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace hbfpapr {

struct BoundSpec {
    BoundSolverOptions solver{};
    std::vector<BoundVariant> variants{std::begin(kAllBoundVariants), std::end(kAllBoundVariants)};
    BudgetMeasure ub_budget = BudgetMeasure::InBand;
    std::size_t n_ofdm = 0;            ///< symbols to bound; 0 means sim.n_ofdm
    std::size_t oracle_instances = 0;  ///< small random solver-vs-oracle checks written to oracle.csv
};

struct OutputSpec {
    std::string dir = "out";
    bool plots = true;
};

struct ExperimentSpec {
    SimConfig sim;
    PipelineParams pipeline;
    GaConfig ga;
    BoundSpec bound;
    OutputSpec output;
    bool schedule_explicit = false;  ///< tau list came from the config rather than the defaults
};

// ---------------------------------------------------------------------------
// Parsing

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double d = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw SpecError(key + ": expected a number, got '" + v + "'");
    }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
        const auto u = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return u;
    } catch (const std::exception&) {
        throw SpecError(key + ": expected a non-negative integer, got '" + v + "'");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw SpecError(key + ": expected true or false, got '" + v + "'");
}

inline Projection parse_projection(const std::string& v) {
    if (v == "ls1") return Projection::Ls1;
    if (v == "ls2") return Projection::Ls2;
    throw SpecError("projection must be ls1 or ls2, got '" + v + "'");
}

inline BoundVariant parse_variant(const std::string& v) {
    for (auto b : kAllBoundVariants)
        if (v == to_string(b)) return b;
    throw SpecError("unknown bound variant '" + v + "'");
}

/// Shortest text that parses back to exactly v.
inline std::string fmt_exact(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace detail

inline Projection parse_projection(const std::string& v) { return detail::parse_projection(v); }

/// Applies one key of one section to spec.
inline void apply_setting(ExperimentSpec& s, const std::string& section, const std::string& key,
                          const std::string& value) {
    using namespace detail;
    const std::string full = section + "." + key;
    auto sz = [&] { return static_cast<std::size_t>(parse_u64(full, value)); };
    auto dbl = [&] { return parse_double(full, value); };

    static const std::map<std::string, std::function<void(ExperimentSpec&, const std::function<std::size_t()>&,
                                                          const std::function<double()>&, const std::string&)>>
        table = {
            {"sim.n_fft", [](auto& e, auto& u, auto&, auto&) { e.sim.n_fft = u(); }},
            {"sim.n_sc", [](auto& e, auto& u, auto&, auto&) { e.sim.n_sc = u(); }},
            {"sim.n_up", [](auto& e, auto& u, auto&, auto&) { e.sim.n_up = u(); }},
            {"sim.n_ant", [](auto& e, auto& u, auto&, auto&) { e.sim.n_ant = u(); }},
            {"sim.n_dac", [](auto& e, auto& u, auto&, auto&) { e.sim.n_dac = u(); }},
            {"sim.n_lpf", [](auto& e, auto& u, auto&, auto&) { e.sim.n_lpf = u(); }},
            {"sim.n_iter", [](auto& e, auto& u, auto&, auto&) { e.sim.n_iter = u(); }},
            {"sim.n_b", [](auto& e, auto& u, auto&, auto&) { e.sim.n_b = u(); }},
            {"sim.n_ofdm", [](auto& e, auto& u, auto&, auto&) { e.sim.n_ofdm = u(); }},
            {"sim.modulation",
             [](auto&, auto&, auto&, const std::string& v) {
                 if (v != "qam16") throw SpecError("sim.modulation: only qam16 is supported");
             }},
            {"sim.evm_budget", [](auto& e, auto&, auto& d, auto&) { e.sim.evm_budget = d(); }},
            {"sim.seed", [](auto& e, auto&, auto&, const std::string& v) { e.sim.rng_seed = parse_u64("sim.seed", v); }},
            {"pipeline.coef", [](auto& e, auto&, auto& d, auto&) { e.pipeline.schedule.coef = d(); }},
            {"pipeline.tau",
             [](auto& e, auto&, auto&, const std::string& v) {
                 e.pipeline.schedule.tau_norm.clear();
                 for (const auto& t : split_list(v)) e.pipeline.schedule.tau_norm.push_back(parse_double("pipeline.tau", t));
                 e.schedule_explicit = true;
             }},
            {"pipeline.projection",
             [](auto& e, auto&, auto&, const std::string& v) { e.pipeline.projection = detail::parse_projection(v); }},
            {"pipeline.threshold_norm",
             [](auto& e, auto&, auto&, const std::string& v) {
                 if (v == "rms") e.pipeline.schedule.norm = ThresholdNorm::Rms;
                 else if (v == "l2") e.pipeline.schedule.norm = ThresholdNorm::L2;
                 else throw SpecError("pipeline.threshold_norm must be rms or l2");
             }},
            {"pipeline.window_len", [](auto& e, auto& u, auto&, auto&) { e.pipeline.window_len = u(); }},
            {"ga.population", [](auto& e, auto& u, auto&, auto&) { e.ga.population = u(); }},
            {"ga.generations", [](auto& e, auto& u, auto&, auto&) { e.ga.generations = u(); }},
            {"ga.coef_lo", [](auto& e, auto&, auto& d, auto&) { e.ga.coef_bounds.lo = d(); }},
            {"ga.coef_hi", [](auto& e, auto&, auto& d, auto&) { e.ga.coef_bounds.hi = d(); }},
            {"ga.tau_lo", [](auto& e, auto&, auto& d, auto&) { e.ga.tau_bounds.lo = d(); }},
            {"ga.tau_hi", [](auto& e, auto&, auto& d, auto&) { e.ga.tau_bounds.hi = d(); }},
            {"ga.crossover_rate", [](auto& e, auto&, auto& d, auto&) { e.ga.crossover_rate = d(); }},
            {"ga.mutation_rate", [](auto& e, auto&, auto& d, auto&) { e.ga.mutation_rate = d(); }},
            {"ga.mutation_sigma", [](auto& e, auto&, auto& d, auto&) { e.ga.mutation_sigma = d(); }},
            {"ga.elitism", [](auto& e, auto& u, auto&, auto&) { e.ga.elitism = u(); }},
            {"ga.tournament", [](auto& e, auto& u, auto&, auto&) { e.ga.tournament = u(); }},
            {"ga.blend_alpha", [](auto& e, auto&, auto& d, auto&) { e.ga.blend_alpha = d(); }},
            {"ga.target_ccdf", [](auto& e, auto&, auto& d, auto&) { e.ga.target_ccdf = d(); }},
            {"ga.training_n_ofdm", [](auto& e, auto& u, auto&, auto&) { e.ga.training_n_ofdm = u(); }},
            {"ga.penalty_weight", [](auto& e, auto&, auto& d, auto&) { e.ga.penalty_weight = d(); }},
            {"ga.seed", [](auto& e, auto&, auto&, const std::string& v) { e.ga.rng_seed = parse_u64("ga.seed", v); }},
            {"bound.tol", [](auto& e, auto&, auto& d, auto&) { e.bound.solver.tol = d(); }},
            {"bound.max_iters", [](auto& e, auto& u, auto&, auto&) { e.bound.solver.max_iters = u(); }},
            {"bound.n_ofdm", [](auto& e, auto& u, auto&, auto&) { e.bound.n_ofdm = u(); }},
            {"bound.oracle_instances", [](auto& e, auto& u, auto&, auto&) { e.bound.oracle_instances = u(); }},
            {"bound.variants",
             [](auto& e, auto&, auto&, const std::string& v) {
                 e.bound.variants.clear();
                 for (const auto& t : split_list(v)) e.bound.variants.push_back(parse_variant(t));
             }},
            {"bound.ub_budget",
             [](auto& e, auto&, auto&, const std::string& v) {
                 if (v == "inband") e.bound.ub_budget = BudgetMeasure::InBand;
                 else if (v == "total") e.bound.ub_budget = BudgetMeasure::Total;
                 else throw SpecError("bound.ub_budget must be inband or total");
             }},
            {"output.dir", [](auto& e, auto&, auto&, const std::string& v) { e.output.dir = v; }},
            {"output.plots",
             [](auto& e, auto&, auto&, const std::string& v) { e.output.plots = parse_bool("output.plots", v); }},
        };
    const auto it = table.find(full);
    if (it == table.end()) throw SpecError("unknown config key '" + full + "'");
    it->second(s, sz, dbl, value);
}

/// Parses config text on top of the defaults.
inline ExperimentSpec parse_spec(std::istream& in, const std::string& origin = "<config>") {
    using namespace detail;
    static const char* kSections[] = {"sim", "pipeline", "ga", "bound", "output"};
    ExperimentSpec s;
    std::string section;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(lineno) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') throw SpecError(where + "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            if (std::find(std::begin(kSections), std::end(kSections), section) == std::end(kSections))
                throw SpecError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw SpecError(where + "expected key = value");
        if (section.empty()) throw SpecError(where + "key outside of a section");
        try {
            apply_setting(s, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        } catch (const SpecError& e) {
            throw SpecError(where + e.what());
        }
    }
    return s;
}

inline ExperimentSpec load_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read config '" + path + "'");
    return parse_spec(in, path);
}

/**
 * Makes the threshold schedule length follow n_iter when the schedule is the
 * built-in default (the last threshold is repeated or the list truncated).
 * An explicit schedule of the wrong length is left alone for validate() to reject.
 */
inline void resolve_schedule(ExperimentSpec& s) {
    auto& tau = s.pipeline.schedule.tau_norm;
    if (s.schedule_explicit || tau.empty() || tau.size() == s.sim.n_iter) return;
    tau.resize(s.sim.n_iter, tau.back());
}

inline void validate(const ExperimentSpec& s) {
    validate(s.sim);
    validate(s.pipeline, s.sim);
    validate(s.ga);
    if (!(s.bound.solver.tol > 0.0)) throw SpecError("bound.tol must be positive");
    if (s.bound.solver.max_iters == 0) throw SpecError("bound.max_iters must be positive");
    if (s.bound.variants.empty()) throw SpecError("bound.variants must not be empty");
    if (s.output.dir.empty()) throw SpecError("output.dir must not be empty");
}

/// Full config text; doubles are written so that the text parses back to identical values.
inline std::string to_config_text(const ExperimentSpec& s) {
    using detail::fmt_exact;
    std::ostringstream os;
    const auto& c = s.sim;
    os << "[sim]\n"
       << "n_fft = " << c.n_fft << "\nn_sc = " << c.n_sc << "\nn_up = " << c.n_up << "\nn_ant = " << c.n_ant
       << "\nn_dac = " << c.n_dac << "\nn_lpf = " << c.n_lpf << "\nn_iter = " << c.n_iter << "\nn_b = " << c.n_b
       << "\nn_ofdm = " << c.n_ofdm << "\nmodulation = qam16\nevm_budget = " << fmt_exact(c.evm_budget)
       << "\nseed = " << c.rng_seed << "\n\n";
    const auto& p = s.pipeline;
    os << "[pipeline]\ncoef = " << fmt_exact(p.schedule.coef) << "\ntau = ";
    for (std::size_t i = 0; i < p.schedule.tau_norm.size(); ++i)
        os << (i ? ", " : "") << fmt_exact(p.schedule.tau_norm[i]);
    os << "\nprojection = " << to_string(p.projection) << "\nthreshold_norm = " << to_string(p.schedule.norm)
       << "\nwindow_len = " << p.window_len << "\n\n";
    const auto& g = s.ga;
    os << "[ga]\npopulation = " << g.population << "\ngenerations = " << g.generations
       << "\ncoef_lo = " << fmt_exact(g.coef_bounds.lo) << "\ncoef_hi = " << fmt_exact(g.coef_bounds.hi)
       << "\ntau_lo = " << fmt_exact(g.tau_bounds.lo) << "\ntau_hi = " << fmt_exact(g.tau_bounds.hi)
       << "\ncrossover_rate = " << fmt_exact(g.crossover_rate) << "\nmutation_rate = " << fmt_exact(g.mutation_rate)
       << "\nmutation_sigma = " << fmt_exact(g.mutation_sigma) << "\nelitism = " << g.elitism
       << "\ntournament = " << g.tournament << "\nblend_alpha = " << fmt_exact(g.blend_alpha)
       << "\ntarget_ccdf = " << fmt_exact(g.target_ccdf) << "\ntraining_n_ofdm = " << g.training_n_ofdm
       << "\npenalty_weight = " << fmt_exact(g.penalty_weight) << "\nseed = " << g.rng_seed << "\n\n";
    const auto& b = s.bound;
    os << "[bound]\ntol = " << fmt_exact(b.solver.tol) << "\nmax_iters = " << b.solver.max_iters
       << "\nn_ofdm = " << b.n_ofdm << "\noracle_instances = " << b.oracle_instances << "\nvariants = ";
    for (std::size_t i = 0; i < b.variants.size(); ++i) os << (i ? ", " : "") << to_string(b.variants[i]);
    os << "\nub_budget = " << to_string(b.ub_budget) << "\n\n";
    os << "[output]\ndir = " << s.output.dir << "\nplots = " << (s.output.plots ? "true" : "false") << "\n";
    return os.str();
}

/// One-line rendering of the resolved spec for artifact headers. The output section is left out.
inline std::string provenance_line(const std::string& command, const ExperimentSpec& s) {
    std::istringstream in(to_config_text(s));
    std::string line;
    std::string section;
    std::string out = "# hbfpapr " + command;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '[') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        if (section == "output") continue;
        const auto eq = line.find(" = ");
        std::string value = line.substr(eq + 3);
        value.erase(std::remove(value.begin(), value.end(), ' '), value.end());
        out += " " + section + "." + line.substr(0, eq) + "=" + value;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Output helpers

class OutputDir {
public:
    OutputDir(const std::string& dir, std::string header) : dir_(dir), header_(std::move(header)) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec || !std::filesystem::is_directory(dir_)) throw IoError("cannot create output directory '" + dir + "'");
    }

    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    /// Writes a file whose first line is the provenance header (when with_header).
    void write(const std::string& name, const std::function<void(std::ostream&)>& body, bool with_header = true) const {
        const auto p = path(name);
        std::ofstream os(p, std::ios::binary);
        if (!os) throw IoError("cannot write '" + p.string() + "'");
        if (with_header) os << header_ << '\n';
        body(os);
        if (!os) throw IoError("write failed for '" + p.string() + "'");
    }

    const std::string& header() const { return header_; }

private:
    std::filesystem::path dir_;
    std::string header_;
};

struct PlotSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

/// Minimal SVG line plot. log_y plots log10(y) with decade labels.
inline void write_svg_plot(std::ostream& os, const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<PlotSeries>& series, bool log_y) {
    const double w = 640, h = 440, ml = 70, mr = 20, mt = 40, mb = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (log_y && !(s.y[i] > 0.0)) continue;
            x0 = std::min(x0, s.x[i]);
            x1 = std::max(x1, s.x[i]);
            y0 = std::min(y0, ty(s.y[i]));
            y1 = std::max(y1, ty(s.y[i]));
        }
    if (!(x1 > x0)) x1 = x0 + 1.0;
    if (!(y1 > y0)) y1 = y0 + 1.0;
    if (log_y) {
        y0 = std::floor(y0);
        y1 = std::ceil(y1);
    }
    auto px = [&](double v) { return ml + (v - x0) / (x1 - x0) * (w - ml - mr); };
    auto py = [&](double v) { return h - mb - (v - y0) / (y1 - y0) * (h - mt - mb); };
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << title << "</text>\n"
       << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-size=\"13\">" << xlabel
       << "</text>\n"
       << "<text x=\"16\" y=\"" << h / 2 << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 16 "
       << h / 2 << ")\">" << ylabel << "</text>\n"
       << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << w - ml - mr << "\" height=\"" << h - mt - mb
       << "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double xv = x0 + (x1 - x0) * t / 5.0;
        os << "<text x=\"" << px(xv) << "\" y=\"" << h - mb + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
           << fmt_double(xv, "%.3g") << "</text>\n";
    }
    const int ny = log_y ? static_cast<int>(y1 - y0) : 5;
    for (int t = 0; t <= ny; ++t) {
        const double yv = y0 + (y1 - y0) * t / std::max(ny, 1);
        const std::string label = log_y ? "1e" + fmt_double(yv, "%.0f") : fmt_double(yv, "%.3g");
        os << "<line x1=\"" << ml << "\" x2=\"" << w - mr << "\" y1=\"" << py(yv) << "\" y2=\"" << py(yv)
           << "\" stroke=\"#ddd\"/>\n"
           << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << label
           << "</text>\n";
    }
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* col = colors[k % std::size(colors)];
        os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (log_y && !(s.y[i] > 0.0)) continue;
            os << fmt_double(px(s.x[i]), "%.2f") << ',' << fmt_double(py(ty(s.y[i])), "%.2f") << ' ';
        }
        os << "\"/>\n<text x=\"" << w - mr - 8 << "\" y=\"" << mt + 18 + 16 * k << "\" text-anchor=\"end\" fill=\""
           << col << "\" font-size=\"12\">" << s.name << "</text>\n";
    }
    os << "</svg>\n";
}

inline PlotSeries ccdf_series(const std::string& name, const CcdfCurve& c) { return {name, c.papr_db, c.exceed_prob}; }

/// PAPR at p, or NaN when the curve cannot resolve p.
inline double papr_at_or_nan(const CcdfCurve& c, double p) {
    try {
        return papr_at(c, p);
    } catch (const SampleDeficitError&) {
        return std::numeric_limits<double>::quiet_NaN();
    }
}

inline constexpr double kReportLevels[] = {1e-2, 1e-3, 1e-4};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit status; library errors propagate.

struct SimulateOutcome {
    CcdfCurve before;
    CcdfCurve after;
    double evm = 0.0;
};

inline SimulateOutcome cmd_simulate(const ExperimentSpec& spec, std::ostream& log = std::cout) {
    validate(spec);
    const auto t0 = Clock::now();
    const OutputDir out(spec.output.dir, provenance_line("simulate", spec));
    const HbfContext ctx(spec.sim);
    const auto z = make_dataset(spec.sim, spec.sim.n_ofdm);
    std::vector<TimeSignal> antenna_out;
    const auto batch = run_batch(ctx, spec.pipeline, z, &antenna_out);

    std::vector<TimeSignal> twins;
    twins.reserve(z.size());
    for (const auto& s : z) twins.push_back(digital_twin(ctx.precoder, s));

    SimulateOutcome res{ccdf(batch.papr_before), ccdf(batch.papr_after), batch.evm};
    const auto psd_before = spectrum(twins);
    const auto psd_after = spectrum(antenna_out);

    out.write("ccdf_before.csv", [&](std::ostream& os) { write_ccdf_csv(os, res.before); });
    out.write("ccdf_after.csv", [&](std::ostream& os) { write_ccdf_csv(os, res.after); });
    out.write("ccdf_antenna_str.csv", [&](std::ostream& os) { write_ccdf_csv(os, ccdf(batch.papr_antenna_str)); });
    out.write("spectrum.csv", [&](std::ostream& os) { write_psd_csv(os, psd_after); });
    out.write("spectrum_before.csv", [&](std::ostream& os) { write_psd_csv(os, psd_before); });
    out.write("report.csv", [&](std::ostream& os) {
        os << "symbol,papr_before_max_db,papr_after_max_db,evm,peaks,evm_over_budget\n";
        for (std::size_t s = 0; s < batch.symbols.size(); ++s) {
            const auto& r = batch.symbols[s];
            os << s << ',' << fmt_double(*std::max_element(r.papr_before.begin(), r.papr_before.end())) << ','
               << fmt_double(*std::max_element(r.papr_after.begin(), r.papr_after.end())) << ','
               << fmt_double(r.evm, "%.9f") << ',' << r.peaks << ',' << (r.evm_over_budget ? 1 : 0) << '\n';
        }
    });
    out.write("report.txt", [&](std::ostream& os) {
        os << "symbols=" << z.size() << "\nsamples=" << res.after.n_samples << "\nevm=" << fmt_double(batch.evm, "%.9f")
           << "\nevm_budget=" << fmt_double(spec.sim.evm_budget, "%.6g")
           << "\nevm_over_budget=" << (batch.evm > spec.sim.evm_budget ? 1 : 0) << '\n';
        for (double p : kReportLevels)
            os << "papr_before_db@" << fmt_double(p, "%g") << '=' << fmt_double(papr_at_or_nan(res.before, p))
               << "\npapr_after_db@" << fmt_double(p, "%g") << '=' << fmt_double(papr_at_or_nan(res.after, p)) << '\n';
        os << "pipeline_runtime_ms=" << fmt_double(batch.runtime_ms, "%.3f")
           << "\nms_per_symbol=" << fmt_double(batch.runtime_ms / static_cast<double>(z.size()), "%.3f")
           << "\nwall_s=" << fmt_double(seconds_since(t0), "%.3f") << '\n';
    });
    if (spec.output.plots) {
        try {
            out.write("ccdf.svg", [&](std::ostream& os) {
                write_svg_plot(os, "PAPR CCDF", "PAPR (dB)", "CCDF",
                               {ccdf_series("before", res.before), ccdf_series("after", res.after)}, true);
            }, false);
            std::vector<double> f(psd_after.size());
            for (std::size_t j = 0; j < f.size(); ++j)
                f[j] = (static_cast<double>(j) - static_cast<double>(f.size()) / 2.0) / static_cast<double>(f.size());
            out.write("spectrum.svg", [&](std::ostream& os) {
                write_svg_plot(os, "Antenna spectrum", "normalized frequency", "PSD (dB)",
                               {{"before", f, psd_before}, {"after", f, psd_after}}, false);
            }, false);
        } catch (const IoError& e) {
            log << "warning: plot skipped: " << e.what() << '\n';
        }
    }
    log << "simulate: " << z.size() << " symbols, evm " << fmt_double(100.0 * batch.evm, "%.2f") << "%";
    for (double p : kReportLevels) {
        const double a = papr_at_or_nan(res.before, p), b = papr_at_or_nan(res.after, p);
        if (!std::isnan(a)) log << ", PAPR@" << fmt_double(p, "%g") << ' ' << fmt_double(a, "%.2f") << " -> " << fmt_double(b, "%.2f") << " dB";
    }
    log << "\n";
    return res;
}

inline TrainResult cmd_train(const ExperimentSpec& spec, std::ostream& log = std::cout) {
    auto checked = spec;
    checked.pipeline.schedule.tau_norm.assign(spec.sim.n_iter, 1.0);  // genes are trained, not read
    validate(checked);
    const auto t0 = Clock::now();
    const OutputDir out(spec.output.dir, provenance_line("train", spec));
    const auto res = ga_train(spec.ga, spec.sim, spec.pipeline);

    out.write("training_log.csv", [&](std::ostream& os) {
        os << "generation,best,mean";
        os << ",coef";
        for (std::size_t t = 1; t < res.genes.size(); ++t) os << ",tau_" << t;
        os << '\n';
        for (std::size_t g = 0; g < res.history.size(); ++g) {
            os << g << ',' << fmt_double(res.history[g], "%.9f") << ',' << fmt_double(res.mean_history[g], "%.9f");
            for (double v : res.best_genes[g]) os << ',' << fmt_double(v, "%.9f");
            os << '\n';
        }
    });
    auto trained = spec;
    trained.pipeline.schedule.coef = res.genes[0];
    trained.pipeline.schedule.tau_norm.assign(res.genes.begin() + 1, res.genes.end());
    trained.schedule_explicit = true;
    out.write("trained.ini", [&](std::ostream& os) {
        os << "# fitness=" << detail::fmt_exact(res.fitness) << " papr_db=" << detail::fmt_exact(res.papr_db)
           << " evm=" << detail::fmt_exact(res.evm) << " ccdf=" << detail::fmt_exact(res.effective_ccdf) << '\n'
           << to_config_text(trained);
    });
    out.write("report.txt", [&](std::ostream& os) {
        os << "coef=" << detail::fmt_exact(res.genes[0]) << '\n';
        for (std::size_t t = 1; t < res.genes.size(); ++t) os << "tau_" << t << '=' << detail::fmt_exact(res.genes[t]) << '\n';
        os << "fitness=" << fmt_double(res.fitness, "%.9f") << "\npapr_db=" << fmt_double(res.papr_db, "%.9f")
           << "\nevm=" << fmt_double(res.evm, "%.9f") << "\neffective_ccdf=" << fmt_double(res.effective_ccdf, "%g")
           << "\nccdf_fallback=" << (res.fallback ? 1 : 0) << "\nevaluations=" << res.evaluations
           << "\nwall_s=" << fmt_double(seconds_since(t0), "%.3f") << '\n';
    });
    log << "train: genes [" << fmt_double(res.genes[0], "%.4f");
    for (std::size_t t = 1; t < res.genes.size(); ++t) log << ", " << fmt_double(res.genes[t], "%.4f");
    log << "], fitness " << fmt_double(res.fitness, "%.3f") << " dB @ " << fmt_double(res.effective_ccdf, "%g")
        << (res.fallback ? " (fallback)" : "") << ", evm " << fmt_double(100.0 * res.evm, "%.2f") << "%\n";
    return res;
}

struct OracleCheck {
    BoundVariant variant;
    double solver = 0.0;
    double oracle = 0.0;
    double rel_diff = 0.0;
};

/// Random small instance (n_fft 16, n_sc 8, n_ant 4, n_dac 2) for solver/oracle comparison.
inline BoundProblem small_bound_instance(std::uint64_t seed, std::size_t index, BoundVariant v,
                                         BudgetMeasure ub_budget = BudgetMeasure::InBand) {
    SimConfig c;
    c.n_fft = 16;
    c.n_sc = 8;
    c.n_ant = 4;
    c.n_dac = 2;
    c.n_b = 4;
    c.rng_seed = seed + index;
    const auto p = build_precoder(c.n_ant, c.n_dac, c.rng_seed);
    const auto z = random_dac_symbol(c, index);
    const auto x = digital_twin(p, z);
    CounterRng rng(seed, RngDomain::Test, index);
    const double evm = rng.uniform(0.05, 0.4);
    const double energy = v == BoundVariant::UnlimitedSpace ? x.data.norm() : z.data.norm();
    return make_bound_problem(x.data, p, c.n_sc, evm * energy, v, ub_budget);
}

inline std::vector<OracleCheck> oracle_checks(std::uint64_t seed, std::size_t count, const BoundSolverOptions& opt,
                                              BudgetMeasure ub_budget = BudgetMeasure::InBand) {
    std::vector<OracleCheck> out;
    for (std::size_t i = 0; i < count; ++i)
        for (auto v : kAllBoundVariants) {
            const auto prob = small_bound_instance(seed, i, v, ub_budget);
            BoundSolverOptions tight = opt;
            tight.tol = std::min(opt.tol, 1e-5);
            tight.max_iters = std::max<std::size_t>(opt.max_iters, 50000);
            const double s = solve_bound(prob, tight).objective;
            OracleOptions oo;
            oo.seed = seed + i;
            const double o = reference_oracle(prob, oo);
            out.push_back({v, s, o, std::abs(s - o) / std::max(o, 1e-300)});
        }
    return out;
}

inline BoundSuiteResult cmd_bound(const ExperimentSpec& spec, std::ostream& log = std::cout) {
    validate(spec);
    const auto t0 = Clock::now();
    const OutputDir out(spec.output.dir, provenance_line("bound", spec));
    const HbfContext ctx(spec.sim);
    const std::size_t n = spec.bound.n_ofdm ? spec.bound.n_ofdm : spec.sim.n_ofdm;
    const auto z = make_dataset(spec.sim, n);
    const auto res = bound_suite(spec.sim, z, ctx.precoder, spec.sim.evm_budget, spec.bound.variants,
                                 spec.bound.solver, spec.bound.ub_budget);

    const auto before = ccdf(res.papr_before);
    out.write("ccdf_before.csv", [&](std::ostream& os) { write_ccdf_csv(os, before); });
    for (std::size_t v = 0; v < res.variants.size(); ++v)
        out.write(std::string("ccdf_bound_") + to_string(res.variants[v]) + ".csv",
                  [&](std::ostream& os) { write_ccdf_csv(os, res.curves[v]); });
    out.write("bound_records.csv", [&](std::ostream& os) {
        os << "variant,symbol,objective,iterations,gap\n";
        for (const auto& r : res.records)
            os << to_string(r.variant) << ',' << r.symbol << ',' << fmt_double(r.objective, "%.9g") << ','
               << r.iterations << ',' << fmt_double(r.gap, "%.3e") << '\n';
    });
    std::vector<OracleCheck> checks;
    if (spec.bound.oracle_instances) {
        checks = oracle_checks(spec.sim.rng_seed, spec.bound.oracle_instances, spec.bound.solver, spec.bound.ub_budget);
        out.write("oracle.csv", [&](std::ostream& os) {
            os << "variant,solver,oracle,rel_diff\n";
            for (const auto& c : checks)
                os << to_string(c.variant) << ',' << fmt_double(c.solver, "%.9g") << ','
                   << fmt_double(c.oracle, "%.9g") << ',' << fmt_double(c.rel_diff, "%.3e") << '\n';
        });
    }
    out.write("report.txt", [&](std::ostream& os) {
        os << "symbols=" << n << "\nub_budget=" << to_string(spec.bound.ub_budget) << '\n';
        for (double p : kReportLevels) {
            os << "papr_before_db@" << fmt_double(p, "%g") << '=' << fmt_double(papr_at_or_nan(before, p)) << '\n';
            for (std::size_t v = 0; v < res.variants.size(); ++v)
                os << "papr_" << to_string(res.variants[v]) << "_db@" << fmt_double(p, "%g") << '='
                   << fmt_double(papr_at_or_nan(res.curves[v], p)) << '\n';
        }
        double worst_gap = 0.0;
        std::size_t unconverged = 0;
        for (const auto& r : res.records) {
            worst_gap = std::max(worst_gap, r.gap / std::max(r.objective, 1e-300));
            unconverged += r.converged ? 0 : 1;
        }
        os << "worst_relative_gap=" << fmt_double(worst_gap, "%.3e") << "\nunconverged=" << unconverged << '\n';
        if (!checks.empty()) {
            double worst = 0.0;
            for (const auto& c : checks) worst = std::max(worst, c.rel_diff);
            os << "oracle_worst_rel_diff=" << fmt_double(worst, "%.3e") << '\n';
        }
        os << "wall_s=" << fmt_double(seconds_since(t0), "%.3f") << '\n';
    });
    if (spec.output.plots) {
        try {
            std::vector<PlotSeries> s{ccdf_series("no reduction", before)};
            for (std::size_t v = 0; v < res.variants.size(); ++v)
                s.push_back(ccdf_series(to_string(res.variants[v]), res.curves[v]));
            out.write("ccdf_bounds.svg",
                      [&](std::ostream& os) { write_svg_plot(os, "Bound CCDF (EVM-derived budget)", "PAPR (dB)", "CCDF", s, true); },
                      false);
        } catch (const IoError& e) {
            log << "warning: plot skipped: " << e.what() << '\n';
        }
    }
    log << "bound: " << n << " symbols";
    for (std::size_t v = 0; v < res.variants.size(); ++v)
        log << ", " << to_string(res.variants[v]) << ' ' << fmt_double(papr_at_or_nan(res.curves[v], 1e-2), "%.2f")
            << " dB@1e-2";
    log << '\n';
    return res;
}

// ---------------------------------------------------------------------------
// Self test

struct SelftestRow {
    std::string name;
    double value = 0.0;
    double limit = 0.0;
    bool pass = false;
};

enum class Fault { None, Kernel };

/**
 * Oracle-equivalence checks at desk scale. Fault::Kernel perturbs one kernel
 * tap so the band-limitation and sparse/dense checks must fail.
 */
inline std::vector<SelftestRow> run_selftest(Fault fault = Fault::None, std::uint64_t seed = 1) {
    SimConfig c;
    c.n_fft = 128;
    c.n_sc = 32;
    c.n_ant = 16;
    c.n_dac = 4;
    c.n_b = 8;
    c.rng_seed = seed;
    std::vector<SelftestRow> rows;
    auto add = [&](std::string name, double value, double limit) {
        rows.push_back({std::move(name), value, limit, value <= limit});
    };

    auto kernel = build_sinc(c.n_fft, c.n_sc);
    if (fault == Fault::Kernel) kernel.values[3] += Complex(0.5 * static_cast<double>(c.n_sc), 0.0);
    const auto bins = occupied_bins(c.n_fft, c.n_sc);
    const auto mask = band_mask(c.n_fft, c.n_sc);
    const double scale = static_cast<double>(c.n_sc) / static_cast<double>(c.n_fft);

    {
        const auto ref = sinc_from_rectangle(c.n_fft, c.n_sc);
        double d = 0.0;
        for (std::size_t i = 0; i < c.n_fft; ++i) d = std::max(d, std::abs(kernel.values[i] - ref.values[i]));
        add("sinc closed form vs IDFT of rectangle", d, 1e-9);
    }

    double sparse_err = 0.0, oob = 0.0, clip_err = 0.0;
    for (std::size_t t = 0; t < 50; ++t) {
        CounterRng rng(seed, RngDomain::Test, t);
        const std::size_t k = 1 + static_cast<std::size_t>(rng.below(c.n_b));
        CVector y(c.n_fft, Complex{});
        PeakSet peaks;
        for (std::size_t j = 0; j < k; ++j) {
            const auto idx = static_cast<std::size_t>(rng.below(c.n_fft));
            if (y[idx] != Complex{}) continue;
            y[idx] = rng.complex_normal();
            peaks.push_back({idx, y[idx]});
        }
        const CVector zero(c.n_fft, Complex{});
        const auto sr = sparse_reduce(zero, peaks, kernel);
        const auto dense = dense_ls_project(y, bins);
        double peak = 0.0, diff = 0.0;
        for (std::size_t i = 0; i < c.n_fft; ++i) {
            peak = std::max(peak, std::abs(dense[i]));
            diff = std::max(diff, std::abs(scale * sr.delta[i] - dense[i]));
        }
        sparse_err = std::max(sparse_err, diff / peak);

        CVector f = sr.delta;
        fft::forward(f);
        double in = 0.0, out = 0.0;
        for (std::size_t i = 0; i < c.n_fft; ++i) (mask[i] ? in : out) = std::max(mask[i] ? in : out, std::abs(f[i]));
        oob = std::max(oob, out / in);

        const auto x = random_dac_symbol(c, t);
        const auto row = x.row(0);
        double ms = 0.0;
        for (const auto& v : row) ms = std::max(ms, std::abs(v));
        const double tau = 0.7 * ms;
        const auto ex = threshold_excess(row, tau);
        double m = 0.0;
        for (std::size_t i = 0; i < c.n_fft; ++i) m = std::max(m, std::abs(row[i] - ex[i]));
        clip_err = std::max(clip_err, std::abs(m - tau) / tau);
    }
    add("sparse SINC sum vs dense LS projection (rel)", sparse_err, 1e-9);
    add("out-of-band / in-band peak of dx", oob, 1e-5);
    add("clipping identity max|x - y| = tau (rel)", clip_err, 1e-12);

    const auto p = build_precoder(c.n_ant, c.n_dac, seed);
    {
        const CMatrix g = p.matrix.adjoint() * p.matrix;
        const CMatrix e = g - static_cast<double>(c.n_ant) * CMatrix::Identity(c.n_dac, c.n_dac);
        add("P^H P = n_ant I", e.cwiseAbs().maxCoeff(), 1e-9);
        const auto z = random_dac_symbol(c, 0);
        const auto fast = digital_twin(p, z);
        const auto direct = digital_twin_direct(p, z);
        add("twin fast path vs direct product", (fast.data - direct.data).cwiseAbs().maxCoeff(), 1e-9);
        const auto back = ls1_project(fast, p, 1.0);
        add("ls1(twin(Z)) = Z", (back.data - z.data).cwiseAbs().maxCoeff(), 1e-9);
    }
    {
        // Identical index sets on every antenna make LS2 and LS1-on-expanded-dX coincide.
        CounterRng rng(seed, RngDomain::Test, 999);
        AmplitudeGrid grid(c.n_ant);
        std::vector<std::size_t> idx{5, 40, 77, 100};
        for (auto& row : grid)
            for (auto i : idx) row[i] = rng.complex_normal();
        const auto full = build_sinc(c.n_fft, c.n_sc);
        const auto a = ls2_project(grid, p, 0.85, full);
        const auto b = ls1_project(expand_amplitudes(grid, full), p, 0.85);
        add("ls2 vs ls1 on expanded amplitudes", (a.data - b.data).cwiseAbs().maxCoeff(), 1e-9);
    }
    {
        const auto checks = oracle_checks(seed, 1, BoundSolverOptions{});
        double worst = 0.0;
        for (const auto& ch : checks) worst = std::max(worst, ch.rel_diff);
        add("bound solver vs subgradient oracle (rel)", worst, 1e-3);
    }
    return rows;
}

inline void print_selftest(std::ostream& os, const std::vector<SelftestRow>& rows) {
    for (const auto& r : rows)
        os << (r.pass ? "PASS  " : "FAIL  ") << r.name << "  value=" << fmt_double(r.value, "%.3e")
           << "  limit=" << fmt_double(r.limit, "%.1e") << '\n';
}

}  // namespace hbfpapr
