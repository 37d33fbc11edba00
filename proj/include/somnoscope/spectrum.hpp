#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "somnoscope/common.hpp"

namespace somnoscope {

inline constexpr Eigen::Index kSpectrumBins = 2400;
inline constexpr double kBandWidthHz = 10.0;

/// Center frequency of band k: 10 (k + 1) Hz. Each band spans +-5 Hz.
inline double band_center_hz(Eigen::Index k) { return kBandWidthHz * static_cast<double>(k + 1); }

/// Welch-averaged periodogram aggregated into 2,400 bands of 10 Hz.
///
/// Segments are one second long (1 Hz FFT resolution) with 50% overlap and
/// a periodic Hann window. Events shorter than a segment are windowed over
/// their own length and zero-padded. When the hop grid leaves a tail, one
/// more segment aligned to the event end is added. Each periodogram is
/// one-sided and scaled so its bins sum to the windowed segment energy.
/// Content below 5 Hz (DC included) is dropped.
Eigen::VectorXd power_spectrum(std::span<const float> samples, double sample_rate);

/// Maps a spectrum onto the probability simplex. A floor of
/// `floor * sum(bins)` is added to every bin first, so the result is
/// strictly positive and invariant to rescaling of the input.
Eigen::VectorXd normalize_spectrum(const Eigen::VectorXd& bins, double floor = 1e-10);

/// Row-major spectra file: one event per row, 2,400 little-endian float32.
struct SpectraIndexEntry {
    std::string night_id;
    std::int64_t index_in_night = 0;
};

struct SpectraTable {
    Eigen::MatrixXf spectra;  // bins x events
    std::vector<SpectraIndexEntry> index;
};

void write_spectra(const SpectraTable& table, const std::filesystem::path& path);
SpectraTable read_spectra(const std::filesystem::path& path);

/// `<path>.json` alongside the binary matrix.
std::filesystem::path spectra_index_path(const std::filesystem::path& path);

} // namespace somnoscope
