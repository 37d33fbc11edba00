#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "somnoscope/burst.hpp"
#include "somnoscope/ingest.hpp"
#include "somnoscope/sequence.hpp"

namespace somnoscope {

enum class LabelRule { cluster_frequency, temporal_segment, burst_density };

std::string_view label_rule_name(LabelRule r);
LabelRule parse_label_rule(std::string_view s);

/// Synthetic corpus description. Templates are narrowband tones; label rules
/// are evaluated on the per-night template sequence, so labels can always be
/// recomputed from the emitted data.
struct SynthSpec {
    int n_nights = 20;
    int events_min = 380;
    int events_max = 420;
    std::vector<double> template_hz = {250.0, 700.0, 1400.0, 2600.0, 4200.0, 7000.0};
    double noise_floor = 0.01;  // background standard deviation
    LabelRule label_rule = LabelRule::cluster_frequency;
    double rule_threshold = 0.2;
    int rule_template = 3;  // zero-based template driving the label
    int rule_segment = 2;   // third used by temporal_segment (0 early, 1 middle, 2 late)
    double sample_rate = 48000.0;
    double event_min_s = 0.6;  // 50 ms detector frames need events well above 0.5 s for IoU >= 0.9
    double event_max_s = 1.2;
    double gap_min_s = 0.8;
    double gap_max_s = 1.5;
    double tone_snr = 4.0;      // tone RMS / noise_floor
    double posterior_noise = 0.2;  // off-template mass of a posterior event, at most
    std::uint64_t seed = 0;

    int k_true() const { return static_cast<int>(template_hz.size()); }
    void validate() const;
};

nlohmann::json to_json(const SynthSpec& s);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

/// Template sequence and label of one night.
struct NightPlan {
    std::string night_id;
    std::vector<int> templates;
    Label label = Label::unsatisfied;
};

std::string synth_night_id(int night_index);
NightPlan plan_night(const SynthSpec& spec, int night_index);

/// Reapplies the label rule to a template sequence.
Label apply_label_rule(const SynthSpec& spec, std::span<const int> templates);

/// Template of each event as the argmax of its posterior.
std::vector<int> argmax_templates(const NightSequence& night);

struct AudioNight {
    AudioRecording recording;
    std::vector<EventSpan> spans;
    std::vector<int> templates;
    Label label = Label::unsatisfied;
};

AudioNight generate_audio_night(const SynthSpec& spec, int night_index);

/// Near-one-hot posterior sequences with argmax equal to the planned template.
std::vector<NightSequence> generate_posterior_nights(const SynthSpec& spec);

/// Clean (noise-free) reference spectrum of each template, normalized.
std::vector<Eigen::VectorXd> template_spectra(const SynthSpec& spec);

/// Writes <night_id>.wav for every night, labels.csv and truth.json.
void write_synth_corpus(const SynthSpec& spec, const std::filesystem::path& dir,
                        WavEncoding encoding = WavEncoding::float32);

} // namespace somnoscope
