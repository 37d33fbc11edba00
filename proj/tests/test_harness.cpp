#include <doctest.h>

#include <fstream>
#include <sstream>

#include "somnoscope/harness.hpp"
#include "test_util.hpp"

using namespace somnoscope;

namespace {

// Noisy template spectra arranged by planned night sequences; skips audio.
Corpus tiny_corpus(int nights, std::uint64_t seed) {
    SynthSpec spec;
    spec.n_nights = nights;
    spec.events_min = 12;
    spec.events_max = 16;
    spec.seed = seed;
    const auto templates = template_spectra(spec);
    Rng rng(seed);
    std::normal_distribution<double> noise(0.0, 1e-4);
    Corpus c;
    c.spectra.resize(kSpectrumBins, 0);
    for (int i = 0; i < nights; ++i) {
        const auto plan = plan_night(spec, i);
        c.night_ids.push_back(plan.night_id);
        c.labels.push_back(plan.label);
        const Eigen::Index start = c.spectra.cols();
        c.spectra.conservativeResize(Eigen::NoChange, start + static_cast<Eigen::Index>(plan.templates.size()));
        for (std::size_t e = 0; e < plan.templates.size(); ++e) {
            Eigen::VectorXd s = templates[static_cast<std::size_t>(plan.templates[e])];
            for (auto& v : s) v = std::abs(v + noise(rng));
            c.spectra.col(start + static_cast<Eigen::Index>(e)) = (s / s.sum()).cast<float>();
            c.event_night.push_back(static_cast<std::size_t>(i));
            c.event_index.push_back(static_cast<std::int64_t>(e));
        }
    }
    return c;
}

ExperimentPlan tiny_plan() {
    ExperimentPlan p;
    p.name = "tiny";
    p.latent_dims = {2, 3, 4};
    p.cluster_counts = {2, 3, 4};
    p.factors = {0};
    p.folds = 4;
    p.repeats = 5;
    p.seed = 11;
    p.sample_size = 8;
    p.vae.hidden_dims = {8};
    p.vae.epochs = 1;
    p.vae.batch_size = 32;
    p.lstm.hidden = 4;
    p.lstm.epochs = 1;
    return p;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

RunRecord record(std::vector<double> acc, int d = 2, int k = 3) {
    RunRecord r;
    r.plan = "p";
    r.latent_dim = d;
    r.clusters = k;
    r.accuracies = std::move(acc);
    if (!r.accuracies.empty()) r.summary = aggregate(r.accuracies);
    return r;
}

} // namespace

TEST_CASE("3x3 grid with 4 folds x 5 repeats yields 9 records of 20 accuracies") {
    const Corpus corpus = tiny_corpus(16, 3);
    const ExperimentPlan plan = tiny_plan();
    const auto result = run_plans(corpus, std::span<const ExperimentPlan>(&plan, 1), 1);
    REQUIRE(result.records.size() == 9);
    for (const auto& r : result.records) {
        INFO(r.latent_dim, " ", r.clusters, " ", r.error);
        CHECK(r.ok());
        CHECK(r.accuracies.size() == 20);
        for (double a : r.accuracies) CHECK((a >= 0.0 && a <= 1.0));
        CHECK(r.summary.mean == doctest::Approx(aggregate(r.accuracies).mean));
    }
    CHECK(result.audits.size() == 20);
    for (const auto& a : result.audits) CHECK_NOTHROW(check_leakage(a));

    const auto dir = testutil::scratch_dir("harness_grid");
    ReportExtras extras;
    extras.plans = {plan};
    emit_report(result.records, dir, extras);
    std::ifstream table(dir / "table_tiny_f0.csv");
    std::string line;
    std::getline(table, line);
    CHECK(line == "latent_dim,K=2,K=3,K=4");
    int rows = 0;
    while (std::getline(table, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 3);
        CHECK(line.find("±") != std::string::npos);
    }
    CHECK(rows == 3);

    const Manifest m = read_manifest(dir / "manifest.json");
    REQUIRE(m.records.size() == 9);
    REQUIRE(m.plans.size() == 1);
    CHECK(to_json(m.plans[0]) == to_json(plan));
    for (std::size_t i = 0; i < 9; ++i) CHECK(to_json(m.records[i]) == to_json(result.records[i]));
}

TEST_CASE("sweep is deterministic and independent of worker count") {
    const Corpus corpus = tiny_corpus(12, 5);
    ExperimentPlan plan = tiny_plan();
    plan.latent_dims = {2};
    plan.cluster_counts = {2};
    plan.factors = {0, 3};
    plan.repeats = 2;
    const auto a = run_sweep(corpus, plan, 1);
    const auto b = run_sweep(corpus, plan, 3);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].accuracies == b[i].accuracies);

    const auto da = testutil::scratch_dir("harness_det_a"), db = testutil::scratch_dir("harness_det_b");
    emit_report(a, da);
    emit_report(b, db);
    CHECK(slurp(da / "runs.csv") == slurp(db / "runs.csv"));
    CHECK(slurp(da / "factors.csv") == slurp(db / "factors.csv"));
}

TEST_CASE("conventional plan has one record per latent dim and factor") {
    const Corpus corpus = tiny_corpus(12, 7);
    ExperimentPlan plan = tiny_plan();
    plan.method = Method::conventional;
    plan.latent_dims = {2, 3};
    plan.factors = {0, 2};
    plan.repeats = 1;
    const auto rs = run_sweep(corpus, plan, 1);
    REQUIRE(rs.size() == 4);
    for (const auto& r : rs) {
        CHECK(r.clusters == 0);
        CHECK(r.accuracies.size() == 4);
    }
    const auto dir = testutil::scratch_dir("harness_conv");
    emit_report(rs, dir);
    std::ifstream table(dir / "table_tiny_f2.csv");
    std::string line;
    std::getline(table, line);
    CHECK(line == "latent_dim,accuracy");
    CHECK(slurp(dir / "factors.csv").find(",none,") != std::string::npos);
}

TEST_CASE("a failing cell is recorded, the rest of the sweep continues") {
    const Corpus corpus = tiny_corpus(12, 9);
    ExperimentPlan plan = tiny_plan();
    plan.latent_dims = {2};
    plan.cluster_counts = {2, 100000};
    plan.repeats = 1;
    const auto rs = run_sweep(corpus, plan, 1);
    REQUIRE(rs.size() == 2);
    CHECK(rs[0].ok());
    CHECK_FALSE(rs[1].ok());
    CHECK(rs[1].accuracies.empty());
    const auto dir = testutil::scratch_dir("harness_err");
    emit_report(rs, dir);
    CHECK(slurp(dir / "table_tiny_f0.csv").find("error") != std::string::npos);
}

TEST_CASE("format_mean_std") {
    CHECK(format_mean_std({0.81234, 0.0456}) == "0.812±0.046");
    CHECK(format_mean_std({1.0, 0.0}, 2) == "1.00±0.00");
}

TEST_CASE("emit_report rejects empty records") {
    CHECK_THROWS_AS(emit_report({}, testutil::scratch_dir("harness_empty")), std::invalid_argument);
}

TEST_CASE("leakage audit") {
    SplitAudit a;
    a.test_nights = {"n1", "n2"};
    a.vae_nights = {"n3", "n4"};
    a.gmm_nights = {"n3", "n4"};
    a.lstm_nights = {"n3", "n4"};
    CHECK_NOTHROW(check_leakage(a));
    for (auto* stage : {&a.vae_nights, &a.gmm_nights, &a.lstm_nights}) {
        SplitAudit b = a;
        auto& v = stage == &a.vae_nights ? b.vae_nights : stage == &a.gmm_nights ? b.gmm_nights : b.lstm_nights;
        v.push_back("n2");
        CHECK_THROWS_AS(check_leakage(b), std::logic_error);
    }
}

TEST_CASE("plans with different folds cannot be compared") {
    ExperimentPlan a = tiny_plan(), b = tiny_plan();
    CHECK_NOTHROW(require_matching_folds(a, b));
    b.seed = a.seed + 1;
    CHECK_THROWS_AS(require_matching_folds(a, b), std::invalid_argument);
    b = a;
    b.folds = 5;
    CHECK_THROWS(require_matching_folds(a, b));
    b = a;
    b.seeds = {a.repeat_seed(0), a.repeat_seed(1), a.repeat_seed(2), a.repeat_seed(3), a.repeat_seed(4)};
    CHECK_NOTHROW(require_matching_folds(a, b));

    const Corpus corpus = tiny_corpus(8, 1);
    b.seed = 99;
    b.seeds.clear();
    const std::array<ExperimentPlan, 2> plans{a, b};
    CHECK_THROWS_AS(run_plans(corpus, plans, 1), std::invalid_argument);
}

TEST_CASE("compare_records") {
    SUBCASE("identical constant samples are not significant") {
        const std::vector<RunRecord> a{record(std::vector<double>(20, 0.5))};
        const std::vector<RunRecord> b{record(std::vector<double>(20, 0.5))};
        const auto c = compare_records(a, b);
        CHECK(c.test.p == 0.5);
        CHECK_FALSE(c.test.significant);
    }
    SUBCASE("best cell of each side is compared") {
        std::vector<double> hi, lo, mid;
        for (int i = 0; i < 20; ++i) {
            hi.push_back(0.9 + 0.01 * (i % 3));
            mid.push_back(0.7 + 0.01 * (i % 4));
            lo.push_back(0.5 + 0.01 * (i % 5));
        }
        const std::vector<RunRecord> a{record(lo, 2, 3), record(hi, 3, 6)};
        const std::vector<RunRecord> b{record(mid, 2, 0), record(lo, 3, 0)};
        const auto c = compare_records(a, b);
        CHECK(c.proposed.latent_dim == 3);
        CHECK(c.conventional.latent_dim == 2);
        CHECK(c.test.significant);
        CHECK(c.test.p < 1e-6);
    }
    SUBCASE("failed cells are skipped; all failed throws") {
        RunRecord bad = record({});
        bad.error = "boom";
        const std::vector<RunRecord> a{bad};
        const std::vector<RunRecord> b{record(std::vector<double>(4, 0.5))};
        CHECK_THROWS_AS(compare_records(a, b), std::invalid_argument);
    }
    SUBCASE("fold count mismatch throws") {
        const std::vector<RunRecord> a{record(std::vector<double>(4, 0.5))};
        const std::vector<RunRecord> b{record(std::vector<double>(5, 0.5))};
        CHECK_THROWS_AS(compare_records(a, b), std::invalid_argument);
    }
}

TEST_CASE("plan JSON round-trip and validation") {
    ExperimentPlan p = tiny_plan();
    p.method = Method::conventional;
    p.seeds = {1, 2, 3, 4, 5};
    p.lstm.dropout = 0.3;
    const ExperimentPlan q = plan_from_json(nlohmann::json::parse(to_json(p).dump()));
    CHECK(to_json(q) == to_json(p));
    CHECK(q.repeat_seed(2) == 3);

    const auto defaults = plan_from_json(nlohmann::json::object());
    CHECK(defaults.latent_dims == std::vector<int>{20, 100, 150});
    CHECK(defaults.factors.front() == 0);

    CHECK_THROWS(plan_from_json({{"method", "other"}}));
    CHECK_THROWS(plan_from_json({{"folds", 1}}));
    CHECK_THROWS(plan_from_json({{"factors", {-1}}}));
    CHECK_THROWS(plan_from_json({{"repeats", 3}, {"seeds", {1, 2}}}));
    CHECK_THROWS(plan_from_json({{"latent_dims", nlohmann::json::array()}}));
}

TEST_CASE("run record JSON round-trip") {
    RunRecord r = record({0.5, 0.75, 1.0});
    r.method = Method::conventional;
    r.factor = 200;
    r.seed = 0xFFFFFFFFFFFFFFFFULL;
    r.wall_seconds = 1.5;
    const RunRecord s = run_record_from_json(nlohmann::json::parse(to_json(r).dump()));
    CHECK(to_json(s) == to_json(r));
    CHECK(s.seed == r.seed);
}

TEST_CASE("corpus needs both labels") {
    Corpus c = tiny_corpus(8, 2);
    std::fill(c.labels.begin(), c.labels.end(), Label::satisfied);
    CHECK_THROWS_AS(run_sweep(c, tiny_plan(), 1), std::invalid_argument);
}

TEST_CASE("default_workers honours SOMNOSCOPE_WORKERS") {
    setenv("SOMNOSCOPE_WORKERS", "1", 1);
    CHECK(default_workers() == 1);
    unsetenv("SOMNOSCOPE_WORKERS");
    CHECK(default_workers() >= 1);
}
