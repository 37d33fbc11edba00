#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "somnoscope/common.hpp"
#include "somnoscope/ingest.hpp"

namespace somnoscope {

/// One night as an ordered event sequence. Column t of `events` is the
/// feature vector (cluster posterior, or latent for the baseline method) of
/// the t-th event; `source_index[t]` is its position in the original night.
struct NightSequence {
    std::string night_id;
    Eigen::MatrixXd events;
    Label label = Label::unsatisfied;
    std::vector<std::int64_t> source_index;

    Eigen::Index length() const { return events.cols(); }
    Eigen::Index dim() const { return events.rows(); }
};

struct AugmentConfig {
    Eigen::Index sample_size = 400;  // events kept per sampled sequence
    int factor = 1;                  // sequences generated per night
    std::uint64_t seed = 0;

    void validate() const {
        if (sample_size < 1) throw std::invalid_argument("sample size must be >= 1");
        if (factor < 1) throw std::invalid_argument("augmentation factor must be >= 1");
    }
};

/// Per-event features of one night, keyed by index_in_night.
struct NightEvents {
    std::string night_id;
    std::vector<std::int64_t> index_in_night;
    Eigen::MatrixXd features;  // one column per event, aligned with index_in_night
};

/// Sorts events by index_in_night and attaches labels. Unlabeled nights are
/// dropped; a label whose night has no events is an error.
std::vector<NightSequence> assemble_nights(std::span<const NightEvents> nights, std::span<const NightLabel> labels);

/// Sorted uniform n-subset of {0..length-1}; the identity when n >= length.
std::vector<Eigen::Index> subsample_positions(Eigen::Index length, Eigen::Index n, Rng& rng);

NightSequence subsample(const NightSequence& night, Eigen::Index n, Rng& rng);

/// `factor` subsamples per night, each drawn from a stream seeded by
/// (seed, night_id), so the result does not depend on night order.
std::vector<NightSequence> augment(std::span<const NightSequence> nights, const AugmentConfig& config);

struct FoldSplit {
    int repeat = 0;
    int fold = 0;
    std::vector<std::size_t> train;  // indices into the night list
    std::vector<std::size_t> test;
};

/// `repeats` seeded partitions of the nights into k folds. Stratified by
/// label when both classes have at least k nights.
std::vector<FoldSplit> make_folds(std::span<const Label> labels, int k, int repeats, std::uint64_t seed);

/// Contiguous thirds by event count; remainder events go to the earliest parts.
std::array<NightSequence, 3> segment_thirds(const NightSequence& night);

std::vector<NightSequence> select(std::span<const NightSequence> nights, std::span<const std::size_t> indices);

} // namespace somnoscope
