#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "somnoscope/ingest.hpp"

namespace somnoscope {

/// Two-state burst model over framed amplitude. State 0 draws samples from
/// N(0, noise_var); state 1 from N(0, variance_ratio * noise_var). Entering
/// state 1 costs transition_cost * ln(n_frames).
struct BurstParams {
    std::int64_t frame_len = 2400;
    std::int64_t hop = 2400;
    double variance_ratio = 2.0;
    double transition_cost = 1.0;
    std::int64_t min_event_frames = 2;
    double merge_gap = 0.5;  // seconds
    double noise_quantile = 0.2;

    void validate() const;
};

struct EventSpan {
    double start = 0.0;  // seconds
    double end = 0.0;
    std::string night_id;

    double duration() const { return end - start; }
};

struct SoundEvent {
    EventSpan span;
    std::vector<float> samples;
    std::int64_t index_in_night = 0;
};

double estimate_noise_floor(const AudioRecording& recording, const BurstParams& params);

/// Per-frame negative log-likelihood under each state; row 0 = noise, row 1 = burst.
Eigen::Matrix2Xd burst_emission_costs(const AudioRecording& recording, double noise_var,
                                      const BurstParams& params);

/// Minimum-cost state path (one entry per frame, 0 or 1).
std::vector<std::uint8_t> decode_burst_states(const Eigen::Matrix2Xd& emission, double transition_cost);

std::vector<EventSpan> detect_bursts(const AudioRecording& recording, double noise_var,
                                     const BurstParams& params);

std::vector<EventSpan> merge_events(std::span<const EventSpan> spans, double merge_gap);

std::vector<SoundEvent> slice_events(const AudioRecording& recording, std::span<const EventSpan> spans);

/// noise floor -> detect -> merge -> slice.
std::vector<SoundEvent> extract_events(const AudioRecording& recording, const BurstParams& params);

/// Intersection over union of two time intervals.
double interval_iou(const EventSpan& a, const EventSpan& b);

} // namespace somnoscope
