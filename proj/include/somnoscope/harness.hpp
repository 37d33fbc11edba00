#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "somnoscope/burst.hpp"
#include "somnoscope/cluster.hpp"
#include "somnoscope/lstm.hpp"
#include "somnoscope/sequence.hpp"
#include "somnoscope/spectrum.hpp"
#include "somnoscope/stats.hpp"
#include "somnoscope/synth.hpp"
#include "somnoscope/timeshap.hpp"
#include "somnoscope/vae.hpp"

namespace somnoscope {

/// Per-event spectra of a labeled corpus (one subject).
struct Corpus {
    std::vector<std::string> night_ids;
    std::vector<Label> labels;               // per night
    std::vector<std::size_t> event_night;    // per event: position in night_ids
    std::vector<std::int64_t> event_index;   // per event: index_in_night
    Eigen::MatrixXf spectra;                 // kSpectrumBins x events

    std::size_t nights() const { return night_ids.size(); }
    Eigen::Index events() const { return spectra.cols(); }
};

/// Spectra of every event of the labeled nights; nights without a label are
/// dropped, a label without a night is an error.
Corpus corpus_from_spectra(const SpectraTable& table, std::span<const NightLabel> labels);

/// Burst extraction and spectra for every WAV in `dir`, labeled from `labels`.
Corpus corpus_from_audio(const std::filesystem::path& dir, const std::filesystem::path& labels,
                         const BurstParams& burst = {});

/// Generates, extracts and transforms each synthetic night in turn.
Corpus corpus_from_synth(const SynthSpec& spec, const BurstParams& burst = {});

enum class Method { proposed, conventional };

std::string_view method_name(Method m);
Method parse_method(std::string_view s);

/// One sweep over (latent_dim x cluster_count x factor) cells with
/// `repeats` rounds of `folds`-fold cross-validation. Factor 0 means no
/// augmentation: full nights for training and evaluation. The conventional
/// method feeds latents to the LSTM, so cluster counts do not apply to it.
struct ExperimentPlan {
    std::string name = "sweep";
    Method method = Method::proposed;
    std::vector<int> latent_dims{20, 100, 150};
    std::vector<int> cluster_counts{3, 6, 9};
    std::vector<int> factors{0, 200, 500, 1000, 2000, 5000};
    int folds = 4;
    int repeats = 5;
    std::vector<std::uint64_t> seeds;  // one fold seed per repeat; derived from `seed` when empty
    std::uint64_t seed = 0;
    Eigen::Index sample_size = 400;
    VaeConfig vae;
    GmmOptions gmm;
    LstmConfig lstm;

    void validate() const;
    std::uint64_t repeat_seed(int repeat) const;
};

nlohmann::json to_json(const ExperimentPlan& p);
ExperimentPlan plan_from_json(const nlohmann::json& j);

struct RunRecord {
    std::string plan;
    Method method = Method::proposed;
    int latent_dim = 0;
    int clusters = 0;  // 0 for the conventional method
    int factor = 0;
    Eigen::Index sample_size = 0;
    std::vector<double> accuracies;  // split order: repeat-major, then fold
    Summary summary;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    std::string error;  // non-empty when the cell failed

    bool ok() const { return error.empty(); }
};

nlohmann::json to_json(const RunRecord& r);
RunRecord run_record_from_json(const nlohmann::json& j);

/// Night ids whose data reached each training stage of one split.
struct SplitAudit {
    int repeat = 0;
    int fold = 0;
    std::vector<std::string> test_nights;
    std::vector<std::string> vae_nights;
    std::vector<std::string> gmm_nights;
    std::vector<std::string> lstm_nights;
};

/// Throws std::logic_error if a test night reached any training stage.
void check_leakage(const SplitAudit& audit);

struct SweepResult {
    std::vector<RunRecord> records;
    std::vector<SplitAudit> audits;
};

/// Runs plans that share folds and seeds; VAEs and GMMs are trained once per
/// split and reused by every cell and plan that needs them. Splits run in
/// parallel on up to `workers` threads (0: SOMNOSCOPE_WORKERS or the
/// hardware concurrency).
SweepResult run_plans(const Corpus& corpus, std::span<const ExperimentPlan> plans, unsigned workers = 0);

std::vector<RunRecord> run_sweep(const Corpus& corpus, const ExperimentPlan& plan, unsigned workers = 0);

struct Comparison {
    RunRecord proposed;
    RunRecord conventional;
    TTestResult test;
};

/// Best cell of each plan (by mean accuracy) and the one-sided Welch test of
/// proposed > conventional over their per-split accuracies.
Comparison compare_records(std::span<const RunRecord> proposed, std::span<const RunRecord> conventional);

/// Runs both plans on shared folds and compares them. The full sweep
/// (every cell of both plans) is stored in `sweep` when given.
Comparison compare_methods(const Corpus& corpus, const ExperimentPlan& proposed, const ExperimentPlan& conventional,
                           unsigned workers = 0, SweepResult* sweep = nullptr);

/// Throws unless both plans define identical folds.
void require_matching_folds(const ExperimentPlan& a, const ExperimentPlan& b);

struct ReportExtras {
    std::vector<ExperimentPlan> plans;
    std::vector<Comparison> comparisons;
    std::map<std::string, SatisfactionReport> shap;
};

/// Writes grid tables per (plan, factor), factors.csv, runs.csv,
/// comparison.csv (if any), shap_<name>.csv and manifest.json to `dir`.
void emit_report(std::span<const RunRecord> records, const std::filesystem::path& dir, const ReportExtras& extras = {});

struct Manifest {
    std::vector<ExperimentPlan> plans;
    std::vector<RunRecord> records;
};

Manifest read_manifest(const std::filesystem::path& path);

std::string format_mean_std(const Summary& s, int precision = 3);

unsigned default_workers();

} // namespace somnoscope
