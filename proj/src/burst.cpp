#include "somnoscope/burst.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace somnoscope {

void BurstParams::validate() const {
    if (!(variance_ratio > 1.0)) throw std::invalid_argument("variance ratio must exceed 1");
    if (!(transition_cost >= 0.0)) throw std::invalid_argument("transition cost must be >= 0");
    if (hop <= 0 || frame_len < hop) throw std::invalid_argument("require frame_len >= hop > 0");
    if (!(merge_gap >= 0.0)) throw std::invalid_argument("merge gap must be >= 0");
    if (min_event_frames < 1) throw std::invalid_argument("min_event_frames must be >= 1");
    if (!(noise_quantile >= 0.0 && noise_quantile <= 1.0)) throw std::invalid_argument("noise quantile in [0,1]");
}

namespace {

std::int64_t frame_count(std::size_t n_samples, const BurstParams& p) {
    const auto n = static_cast<std::int64_t>(n_samples);
    if (n < p.frame_len) return 0;
    return (n - p.frame_len) / p.hop + 1;
}

} // namespace

double estimate_noise_floor(const AudioRecording& recording, const BurstParams& params) {
    params.validate();
    const std::int64_t frames = frame_count(recording.samples.size(), params);
    if (frames < 100) throw std::invalid_argument("noise floor needs at least 100 frames");

    std::vector<double> variances(static_cast<std::size_t>(frames));
    for (std::int64_t f = 0; f < frames; ++f) {
        const float* p = recording.samples.data() + f * params.hop;
        double sum = 0.0, sq = 0.0;
        for (std::int64_t i = 0; i < params.frame_len; ++i) {
            sum += p[i];
            sq += static_cast<double>(p[i]) * p[i];
        }
        const double n = static_cast<double>(params.frame_len);
        variances[f] = std::max(0.0, (sq - sum * sum / n) / (n - 1.0));
    }
    auto k = static_cast<std::size_t>(std::floor(params.noise_quantile * static_cast<double>(frames - 1)));
    std::nth_element(variances.begin(), variances.begin() + static_cast<std::ptrdiff_t>(k), variances.end());
    const double floor = variances[k];
    if (!(floor > 0.0)) throw std::runtime_error("noise floor is zero (silent or constant audio)");
    return floor;
}

Eigen::Matrix2Xd burst_emission_costs(const AudioRecording& recording, double noise_var,
                                      const BurstParams& params) {
    params.validate();
    if (!(noise_var > 0.0)) throw std::invalid_argument("noise variance must be positive");
    const std::int64_t frames = frame_count(recording.samples.size(), params);
    const double n = static_cast<double>(params.frame_len);
    const double burst_var = params.variance_ratio * noise_var;
    const double log2pi = std::log(2.0 * std::numbers::pi);

    Eigen::Matrix2Xd cost(2, frames);
    for (std::int64_t f = 0; f < frames; ++f) {
        const float* p = recording.samples.data() + f * params.hop;
        double sq = 0.0;
        for (std::int64_t i = 0; i < params.frame_len; ++i) sq += static_cast<double>(p[i]) * p[i];
        cost(0, f) = 0.5 * n * (log2pi + std::log(noise_var)) + 0.5 * sq / noise_var;
        cost(1, f) = 0.5 * n * (log2pi + std::log(burst_var)) + 0.5 * sq / burst_var;
    }
    return cost;
}

std::vector<std::uint8_t> decode_burst_states(const Eigen::Matrix2Xd& emission, double transition_cost) {
    const Eigen::Index frames = emission.cols();
    std::vector<std::uint8_t> states(static_cast<std::size_t>(frames), 0);
    if (frames == 0) return states;

    // Path starts in the noise state; only upward transitions are priced.
    const double up = std::isinf(transition_cost) ? transition_cost
                                                  : transition_cost * std::log(static_cast<double>(frames));
    std::vector<std::uint8_t> from1(static_cast<std::size_t>(frames));  // back-pointer into state 1
    std::vector<std::uint8_t> from0(static_cast<std::size_t>(frames));
    double c0 = emission(0, 0);
    double c1 = up + emission(1, 0);
    from0[0] = 0;
    from1[0] = 0;
    for (Eigen::Index t = 1; t < frames; ++t) {
        // into 0: from 0 (free) or from 1 (free); ties prefer 0
        double n0, n1;
        if (c0 <= c1) { n0 = c0; from0[t] = 0; } else { n0 = c1; from0[t] = 1; }
        const double via0 = c0 + up;
        if (via0 < c1) { n1 = via0; from1[t] = 0; } else { n1 = c1; from1[t] = 1; }
        c0 = n0 + emission(0, t);
        c1 = n1 + emission(1, t);
    }
    std::uint8_t s = c1 < c0 ? 1 : 0;
    for (Eigen::Index t = frames - 1; t >= 0; --t) {
        states[static_cast<std::size_t>(t)] = s;
        s = s == 0 ? from0[t] : from1[t];
    }
    return states;
}

std::vector<EventSpan> detect_bursts(const AudioRecording& recording, double noise_var, const BurstParams& params) {
    const auto cost = burst_emission_costs(recording, noise_var, params);
    const auto states = decode_burst_states(cost, params.transition_cost);

    std::vector<EventSpan> spans;
    const double fs = recording.sample_rate;
    std::size_t t = 0;
    while (t < states.size()) {
        if (states[t] == 0) { ++t; continue; }
        std::size_t run_end = t;
        while (run_end < states.size() && states[run_end] == 1) ++run_end;
        if (static_cast<std::int64_t>(run_end - t) >= params.min_event_frames) {
            const auto first = static_cast<std::int64_t>(t) * params.hop;
            const auto last = static_cast<std::int64_t>(run_end - 1) * params.hop + params.frame_len;
            spans.push_back({static_cast<double>(first) / fs, static_cast<double>(last) / fs, recording.night_id});
        }
        t = run_end;
    }
    // Overlapping frames can make adjacent runs touch; keep spans disjoint.
    return merge_events(spans, 0.0);
}

std::vector<EventSpan> merge_events(std::span<const EventSpan> spans, double merge_gap) {
    std::vector<EventSpan> out;
    for (const auto& s : spans) {
        if (!out.empty() && (s.start - out.back().end < merge_gap || s.start < out.back().end)) {
            out.back().end = std::max(out.back().end, s.end);
        } else {
            out.push_back(s);
        }
    }
    return out;
}

std::vector<SoundEvent> slice_events(const AudioRecording& recording, std::span<const EventSpan> spans) {
    std::vector<EventSpan> sorted(spans.begin(), spans.end());
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.start < b.start; });

    const double fs = recording.sample_rate;
    const auto total = static_cast<std::int64_t>(recording.samples.size());
    std::vector<SoundEvent> events;
    events.reserve(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        const auto& s = sorted[i];
        const auto first = static_cast<std::int64_t>(std::llround(s.start * fs));
        const auto len = static_cast<std::int64_t>(std::llround((s.end - s.start) * fs));
        if (s.end <= s.start || first < 0 || first + len > total) {
            throw std::out_of_range("event span out of recording bounds");
        }
        SoundEvent ev;
        ev.span = s;
        ev.span.night_id = recording.night_id;
        ev.samples.assign(recording.samples.begin() + first, recording.samples.begin() + first + len);
        ev.index_in_night = static_cast<std::int64_t>(i);
        events.push_back(std::move(ev));
    }
    return events;
}

std::vector<SoundEvent> extract_events(const AudioRecording& recording, const BurstParams& params) {
    const double noise = estimate_noise_floor(recording, params);
    const auto spans = detect_bursts(recording, noise, params);
    const auto merged = merge_events(spans, params.merge_gap);
    return slice_events(recording, merged);
}

double interval_iou(const EventSpan& a, const EventSpan& b) {
    const double inter = std::max(0.0, std::min(a.end, b.end) - std::max(a.start, b.start));
    const double uni = std::max(a.end, b.end) - std::min(a.start, b.start);
    return uni > 0.0 ? inter / uni : 0.0;
}

} // namespace somnoscope
