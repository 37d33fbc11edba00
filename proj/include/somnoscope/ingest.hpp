#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "somnoscope/common.hpp"

namespace somnoscope {

struct AudioRecording {
    std::vector<float> samples;  // amplitude in [-1, 1]
    double sample_rate = 48000.0;
    std::string night_id;
    std::string subject_id;

    double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

struct NightLabel {
    std::string night_id;
    Label satisfaction = Label::unsatisfied;
};

enum class WavEncoding { pcm16, pcm32, float32 };

/// Reads a RIFF/WAVE file. Integer PCM is scaled to [-1, 1]; multi-channel
/// files contribute channel 0 only. night_id defaults to the file stem.
AudioRecording load_audio(const std::filesystem::path& path);

void write_wav(const AudioRecording& rec, const std::filesystem::path& path,
               WavEncoding encoding = WavEncoding::float32);

/// Collapses the five-point rating. Returns nullopt for "neutral".
std::optional<Label> collapse_rating(std::string_view token);

/// CSV with header `night_id,rating`. Neutral rows are dropped.
std::vector<NightLabel> load_labels(const std::filesystem::path& path);
std::vector<NightLabel> parse_labels(std::string_view csv_text);

} // namespace somnoscope
