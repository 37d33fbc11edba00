#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "somnoscope/lstm.hpp"
#include "somnoscope/sequence.hpp"

namespace somnoscope {

/// Batched model: probability for each (dim x length) sequence.
using Predictor = std::function<std::vector<double>(std::span<const Eigen::MatrixXd>)>;

template <typename Scalar>
Predictor lstm_predictor(const Lstm<Scalar>& model, std::size_t chunk = 256) {
    return [&model, chunk](std::span<const Eigen::MatrixXd> seqs) {
        std::vector<double> out;
        out.reserve(seqs.size());
        std::vector<const Eigen::MatrixXd*> ptrs;
        for (std::size_t s = 0; s < seqs.size(); s += chunk) {
            const std::size_t e = std::min(seqs.size(), s + chunk);
            ptrs.clear();
            for (std::size_t k = s; k < e; ++k) ptrs.push_back(&seqs[k]);
            const auto batch = model.make_batch(ptrs);
            Vec<Scalar> logits(batch.size());
            model.run(batch, nullptr, logits);
            for (Eigen::Index j = 0; j < logits.size(); ++j)
                out.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(logits[j]))));
        }
        return out;
    };
}

enum class ShapMode { feature, event };

std::string_view shap_mode_name(ShapMode m);
ShapMode parse_shap_mode(std::string_view s);

/// Active players of a coalition game.
struct Coalition {
    std::vector<std::uint8_t> active;

    Coalition() = default;
    explicit Coalition(std::size_t players, bool all = false) : active(players, all ? 1 : 0) {}
    std::size_t players() const { return active.size(); }
    bool contains(std::size_t j) const { return active[j] != 0; }
    std::size_t count() const;
    bool operator<(const Coalition& o) const { return active < o.active; }
    bool operator==(const Coalition& o) const { return active == o.active; }
};

/// Uniform posterior 1/K per cluster.
Eigen::VectorXd baseline_event(Eigen::Index K);

/// The coalition game of one sequence. Players are the clusters (feature
/// mode) or the events (event mode) after the first `prune_index` events; if
/// `prune_index > 0` the pruned prefix is one extra, last player.
class SequenceGame {
public:
    SequenceGame(Predictor predictor, Eigen::MatrixXd seq, ShapMode mode, Eigen::Index prune_index = 0,
                 std::optional<Eigen::VectorXd> baseline = std::nullopt);

    std::size_t players() const { return players_; }
    bool has_pruned_player() const { return prune_index_ > 0; }
    Eigen::Index prune_index() const { return prune_index_; }
    ShapMode mode() const { return mode_; }

    Eigen::MatrixXd perturb(const Coalition& c) const;
    double value(const Coalition& c) const;
    std::vector<double> values(std::span<const Coalition> cs) const;

private:
    Predictor predictor_;
    Eigen::MatrixXd seq_;
    ShapMode mode_;
    Eigen::Index prune_index_;
    Eigen::VectorXd baseline_;
    std::size_t players_ = 0;
};

double coalition_value(const Predictor& model, const Eigen::MatrixXd& seq, const Coalition& coalition, ShapMode mode,
                       std::optional<Eigen::VectorXd> baseline = std::nullopt);

struct ShapReport {
    std::vector<double> values;  // one per non-pruned player
    double pruned_value = 0.0;
    double base_value = 0.0;  // f(empty coalition)
    double prediction = 0.0;  // f(full coalition)
    Eigen::Index prune_index = 0;
    ShapMode mode = ShapMode::feature;

    double efficiency_gap() const;
};

inline constexpr std::size_t kMaxExactPlayers = 12;

ShapReport exact_shapley(const SequenceGame& game);

struct SingularSystemError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Shapley-kernel weighted least squares with efficiency as an equality
/// constraint. Paired coalition sizes are enumerated while the budget allows;
/// the rest is sampled. A budget of at least 2^players enumerates every
/// coalition.
ShapReport kernel_shap(const SequenceGame& game, std::size_t n_samples, std::uint64_t seed);

/// Largest prefix length t < l whose two-player (prefix, suffix) Shapley value
/// is below `eta` in magnitude; 0 if none.
Eigen::Index prune_events(const Predictor& model, const Eigen::MatrixXd& seq, double eta,
                          std::optional<Eigen::VectorXd> baseline = std::nullopt);

struct ExplainOptions {
    ShapMode mode = ShapMode::feature;
    double eta = 0.05;
    std::size_t n_samples = 5000;
    std::uint64_t seed = 0;
    std::optional<Eigen::VectorXd> baseline;  // defaults to the uniform posterior
};

ShapReport explain_sequence(const Predictor& model, const Eigen::MatrixXd& seq, const ExplainOptions& opt);

struct LabelGroupReport {
    Label label = Label::satisfied;
    std::size_t nights = 0;
    ShapReport mean;              // arithmetic mean of the per-night reports
    std::vector<std::size_t> ranking;  // players by signed mean value, largest first
};

struct SatisfactionReport {
    ShapMode mode = ShapMode::feature;
    std::vector<std::string> night_ids;
    std::vector<Label> labels;
    std::vector<ShapReport> per_night;
    std::array<LabelGroupReport, 2> groups;  // [unsatisfied, satisfied]
};

/// Mean report over nights; values must have equal length.
ShapReport average_reports(std::span<const ShapReport> reports);

/// Explains every night and averages per label. Fails when a label group is
/// empty.
SatisfactionReport explain_satisfaction(const Predictor& model, std::span<const NightSequence> nights,
                                        const ExplainOptions& opt);

/// Trains one model per third of the nights and explains each on its own
/// third. Nights are subsampled to `augment.sample_size` both for training
/// (augmented by `augment.factor`) and for explanation.
std::array<SatisfactionReport, 3> explain_segments(std::span<const NightSequence> nights, const LstmConfig& lstm,
                                                   const AugmentConfig& augment, const ExplainOptions& opt);

/// Explanation inputs: one fixed subsample per night, seeded by (seed, night_id).
std::vector<NightSequence> explanation_inputs(std::span<const NightSequence> nights, Eigen::Index sample_size,
                                              std::uint64_t seed);

nlohmann::json to_json(const ShapReport& r);
nlohmann::json to_json(const SatisfactionReport& r);
/// Long-format CSV: group,player,value (the pruned group is player "pruned").
void write_shap_csv(const SatisfactionReport& r, const std::filesystem::path& path);

} // namespace somnoscope
