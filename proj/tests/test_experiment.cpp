#include "hbfpapr/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

using namespace hbfpapr;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(
# small geometry for fast runs
[sim]
n_fft = 64
n_sc = 16
n_ant = 8
n_dac = 2
n_b = 4
n_ofdm = 4

[pipeline]
coef = 2.5
tau = 1.6, 1.5

[ga]
population = 6
generations = 3
training_n_ofdm = 4
target_ccdf = 0.05

[bound]
tol = 1e-3
n_ofdm = 2
variants = limited_band_and_space, unlimited_space
)";

ExperimentSpec parse_text(const std::string& text) {
    std::istringstream in(text);
    return parse_spec(in, "test.ini");
}

class TempDir {
public:
    TempDir() : path_(fs::temp_directory_path() / ("hbfpapr_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter_++))) {
        fs::remove_all(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    std::string str() const { return path_.string(); }
    const fs::path& path() const { return path_; }

private:
    static inline int counter_ = 0;
    fs::path path_;
};

std::vector<std::string> read_lines(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
}

std::string spec_error(const std::string& text) {
    try {
        parse_text(text);
    } catch (const SpecError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(SpecParse, ReadsValuesOverDefaults) {
    const auto s = parse_text(kTinyConfig);
    EXPECT_EQ(s.sim.n_fft, 64u);
    EXPECT_EQ(s.sim.n_iter, 2u);  // default kept
    EXPECT_EQ(s.pipeline.schedule.coef, 2.5);
    EXPECT_EQ(s.pipeline.schedule.tau_norm, (std::vector<double>{1.6, 1.5}));
    EXPECT_TRUE(s.schedule_explicit);
    EXPECT_EQ(s.bound.variants.size(), 2u);
    EXPECT_EQ(s.bound.variants[1], BoundVariant::UnlimitedSpace);
    EXPECT_NO_THROW(validate(s));
}

TEST(SpecParse, ErrorsNameFileAndLine) {
    EXPECT_NE(spec_error("[sim]\nn_fft = 64\nbogus = 3\n").find("test.ini:3"), std::string::npos);
    EXPECT_NE(spec_error("[sim]\nbogus = 3\n").find("sim.bogus"), std::string::npos);
    EXPECT_NE(spec_error("[nope]\n").find("unknown section"), std::string::npos);
    EXPECT_FALSE(spec_error("[sim]\nn_fft = abc\n").empty());
    EXPECT_FALSE(spec_error("[sim]\nn_fft = -4\n").empty());
    EXPECT_FALSE(spec_error("[sim]\nn_fft 64\n").empty());
    EXPECT_FALSE(spec_error("n_fft = 64\n").empty());
    EXPECT_FALSE(spec_error("[pipeline]\nprojection = ls3\n").empty());
    EXPECT_FALSE(spec_error("[bound]\nvariants = everything\n").empty());
}

TEST(SpecParse, ValidationCatchesInconsistentValues) {
    auto s = parse_text("[sim]\nn_iter = 3\n[pipeline]\ntau = 1.7, 1.6\n");
    EXPECT_THROW(validate(s), SpecError);
    s = parse_text("[sim]\nn_fft = 100\n");
    EXPECT_THROW(validate(s), SpecError);
    s = parse_text("[sim]\nn_dac = 512\n");
    EXPECT_THROW(validate(s), SpecError);
}

TEST(SpecParse, MissingFileIsIoError) { EXPECT_THROW(load_spec("/nonexistent/hbfpapr.ini"), IoError); }

TEST(SpecParse, DefaultScheduleFollowsIterationCount) {
    auto s = parse_text("[sim]\nn_iter = 4\n");
    resolve_schedule(s);
    EXPECT_EQ(s.pipeline.schedule.tau_norm, (std::vector<double>{1.76, 1.68, 1.68, 1.68}));
    s = parse_text("[sim]\nn_iter = 1\n");
    resolve_schedule(s);
    EXPECT_EQ(s.pipeline.schedule.tau_norm, (std::vector<double>{1.76}));
    s = parse_text("[sim]\nn_iter = 3\n[pipeline]\ntau = 1.7, 1.6\n");
    resolve_schedule(s);
    EXPECT_EQ(s.pipeline.schedule.tau_norm.size(), 2u);  // explicit lists are not altered
}

TEST(SpecText, RoundTripIsLossless) {
    auto s = parse_text(kTinyConfig);
    s.pipeline.schedule.coef = 0.1 + 0.2;
    s.pipeline.schedule.tau_norm = {1.0 / 3.0, 2.0 / 7.0};
    s.ga.mutation_sigma = 0.123456789012345678;
    s.bound.ub_budget = BudgetMeasure::Total;
    const auto text = to_config_text(s);
    const auto back = parse_text(text);
    EXPECT_EQ(to_config_text(back), text);
    EXPECT_EQ(back.pipeline.schedule.coef, s.pipeline.schedule.coef);
    EXPECT_EQ(back.pipeline.schedule.tau_norm, s.pipeline.schedule.tau_norm);
    EXPECT_EQ(back.ga.mutation_sigma, s.ga.mutation_sigma);
    EXPECT_EQ(back.bound.ub_budget, BudgetMeasure::Total);
}

TEST(SpecText, ProvenanceLineSkipsOutput) {
    auto s = parse_text(kTinyConfig);
    const auto a = provenance_line("simulate", s);
    EXPECT_EQ(a.rfind("# hbfpapr simulate ", 0), 0u);
    EXPECT_NE(a.find("sim.n_fft=64"), std::string::npos);
    EXPECT_NE(a.find("pipeline.tau=1.6,1.5"), std::string::npos);
    EXPECT_NE(a.find("ga.seed=1"), std::string::npos);
    EXPECT_EQ(a.find('\n'), std::string::npos);
    s.output.dir = "elsewhere";
    EXPECT_EQ(provenance_line("simulate", s), a);
}

TEST(Commands, SimulateWritesArtifacts) {
    TempDir dir;
    auto s = parse_text(kTinyConfig);
    s.output.dir = dir.str();
    std::ostringstream log;
    const auto r = cmd_simulate(s, log);
    for (const char* f : {"ccdf_before.csv", "ccdf_after.csv", "ccdf_antenna_str.csv", "spectrum.csv",
                          "spectrum_before.csv", "report.csv", "report.txt", "ccdf.svg", "spectrum.svg"})
        EXPECT_TRUE(fs::exists(dir.path() / f)) << f;

    const auto after = read_lines(dir.path() / "ccdf_after.csv");
    ASSERT_GE(after.size(), 2u);
    EXPECT_EQ(after[0], provenance_line("simulate", s));
    EXPECT_EQ(after[1], "papr_db,ccdf");
    EXPECT_EQ(after.size(), 2 + r.after.size());

    const auto report = read_lines(dir.path() / "report.csv");
    EXPECT_EQ(report[1], "symbol,papr_before_max_db,papr_after_max_db,evm,peaks,evm_over_budget");
    EXPECT_EQ(report.size(), 2 + s.sim.n_ofdm);
    EXPECT_EQ(read_lines(dir.path() / "spectrum.csv").size(), 2 + s.sim.n_fft);
    EXPECT_NE(log.str().find("simulate: 4 symbols"), std::string::npos);
}

TEST(Commands, TrainedGenesReproduceTheirFitness) {
    TempDir dir;
    auto s = parse_text(kTinyConfig);
    s.output.dir = dir.str();
    std::ostringstream log;
    const auto res = cmd_train(s, log);

    const auto trained = load_spec((dir.path() / "trained.ini").string());
    EXPECT_EQ(trained.pipeline.schedule.coef, res.genes[0]);
    EXPECT_EQ(trained.pipeline.schedule.tau_norm, std::vector<double>(res.genes.begin() + 1, res.genes.end()));
    const PaprFitness f(trained.sim, trained.ga, trained.pipeline);
    EXPECT_EQ(f(res.genes), res.fitness);

    const auto log_lines = read_lines(dir.path() / "training_log.csv");
    EXPECT_EQ(log_lines[1], "generation,best,mean,coef,tau_1,tau_2");
    EXPECT_EQ(log_lines.size(), 2 + s.ga.generations);
}

TEST(Commands, BoundWritesCurvesAndRecords) {
    TempDir dir;
    auto s = parse_text(kTinyConfig);
    s.output.dir = dir.str();
    s.output.plots = false;
    std::ostringstream log;
    cmd_bound(s, log);
    EXPECT_TRUE(fs::exists(dir.path() / "ccdf_bound_limited_band_and_space.csv"));
    EXPECT_TRUE(fs::exists(dir.path() / "ccdf_bound_unlimited_space.csv"));
    EXPECT_FALSE(fs::exists(dir.path() / "ccdf_bound_unlimited_band.csv"));
    EXPECT_FALSE(fs::exists(dir.path() / "ccdf_bounds.svg"));
    const auto rec = read_lines(dir.path() / "bound_records.csv");
    EXPECT_EQ(rec.size(), 2 + 2 * s.bound.n_ofdm);
}

TEST(Commands, UnwritableOutputIsIoError) {
    TempDir dir;
    fs::create_directories(dir.path());
    std::ofstream(dir.path() / "file") << "x";
    auto s = parse_text(kTinyConfig);
    s.output.dir = (dir.path() / "file" / "sub").string();
    std::ostringstream log;
    EXPECT_THROW(cmd_simulate(s, log), IoError);
}

TEST(Selftest, PassesAndDetectsKernelFault) {
    const auto good = run_selftest(Fault::None);
    ASSERT_FALSE(good.empty());
    for (const auto& r : good) EXPECT_TRUE(r.pass) << r.name << ' ' << r.value;
    const auto bad = run_selftest(Fault::Kernel);
    EXPECT_TRUE(std::any_of(bad.begin(), bad.end(), [](const SelftestRow& r) { return !r.pass; }));
    std::ostringstream os;
    print_selftest(os, good);
    EXPECT_NE(os.str().find("PASS"), std::string::npos);
}
