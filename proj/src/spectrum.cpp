#include "somnoscope/spectrum.hpp"

#include <cmath>
#include <complex>
#include <fstream>
#include <numbers>

#include <unsupported/Eigen/FFT>
#include <json.hpp>

namespace somnoscope {
namespace {

void accumulate_segment(std::span<const float> seg, std::int64_t fft_len, double sample_rate,
                        Eigen::FFT<double>& fft, Eigen::VectorXd& bands) {
    const auto n = static_cast<std::int64_t>(seg.size());
    std::vector<double> buf(static_cast<std::size_t>(fft_len), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
        buf[i] = w * seg[i];
    }
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, buf);

    const double bin_hz = sample_rate / static_cast<double>(fft_len);
    const std::int64_t half = fft_len / 2;
    for (std::int64_t j = 1; j <= half; ++j) {
        const double f = static_cast<double>(j) * bin_hz;
        const auto k = static_cast<std::int64_t>(std::floor((f + 0.5 * kBandWidthHz) / kBandWidthHz)) - 1;
        if (k < 0) continue;
        if (k >= kSpectrumBins) break;
        double p = std::norm(spec[static_cast<std::size_t>(j)]) / static_cast<double>(fft_len);
        if (j < half || fft_len % 2 == 1) p *= 2.0;
        bands[k] += p;
    }
}

} // namespace

Eigen::VectorXd power_spectrum(std::span<const float> samples, double sample_rate) {
    if (samples.size() < 2) throw std::invalid_argument("power spectrum needs at least 2 samples");
    if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be positive");

    // one-second segments give 1 Hz resolution, ten FFT bins per band
    auto seg_len = static_cast<std::int64_t>(std::llround(sample_rate));
    seg_len += seg_len % 2;
    const auto n = static_cast<std::int64_t>(samples.size());

    thread_local Eigen::FFT<double> fft;
    Eigen::VectorXd bands = Eigen::VectorXd::Zero(kSpectrumBins);
    int segments = 0;
    if (n <= seg_len) {
        accumulate_segment(samples, seg_len, sample_rate, fft, bands);
        segments = 1;
    } else {
        const std::int64_t hop = seg_len / 2;
        std::int64_t start = 0;
        for (; start + seg_len <= n; start += hop) {
            accumulate_segment(samples.subspan(start, seg_len), seg_len, sample_rate, fft, bands);
            ++segments;
        }
        if (start - hop + seg_len < n) {
            accumulate_segment(samples.subspan(n - seg_len, seg_len), seg_len, sample_rate, fft, bands);
            ++segments;
        }
    }
    return bands / static_cast<double>(segments);
}

Eigen::VectorXd normalize_spectrum(const Eigen::VectorXd& bins, double floor) {
    if ((bins.array() < 0.0).any()) throw std::invalid_argument("negative spectrum bin");
    const double total = bins.sum();
    if (!(total > 0.0)) throw std::invalid_argument("cannot normalize an all-zero spectrum");
    Eigen::VectorXd out = bins.array() + floor * total;
    return out / out.sum();
}

std::filesystem::path spectra_index_path(const std::filesystem::path& path) {
    auto p = path;
    p += ".json";
    return p;
}

void write_spectra(const SpectraTable& table, const std::filesystem::path& path) {
    if (table.spectra.rows() != kSpectrumBins) throw std::invalid_argument("spectra must have 2400 bins");
    if (static_cast<std::size_t>(table.spectra.cols()) != table.index.size()) {
        throw std::invalid_argument("spectra/index size mismatch");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write spectra: " + path.string());
    // column-major storage makes each event column a contiguous row on disk
    out.write(reinterpret_cast<const char*>(table.spectra.data()),
              static_cast<std::streamsize>(table.spectra.size() * sizeof(float)));
    if (!out) throw std::runtime_error("write failed: " + path.string());

    nlohmann::json idx;
    idx["dim"] = kSpectrumBins;
    idx["dtype"] = "float32-le";
    auto& rows = idx["rows"] = nlohmann::json::array();
    for (const auto& e : table.index) rows.push_back({{"night_id", e.night_id}, {"index", e.index_in_night}});
    std::ofstream js(spectra_index_path(path));
    js << idx.dump(1) << '\n';
}

SpectraTable read_spectra(const std::filesystem::path& path) {
    std::ifstream js(spectra_index_path(path));
    if (!js) throw std::runtime_error("missing spectra index: " + spectra_index_path(path).string());
    const auto idx = nlohmann::json::parse(js);
    if (idx.at("dim").get<Eigen::Index>() != kSpectrumBins) throw std::runtime_error("unexpected spectra dim");

    SpectraTable table;
    for (const auto& r : idx.at("rows")) {
        table.index.push_back({r.at("night_id").get<std::string>(), r.at("index").get<std::int64_t>()});
    }
    const auto n = static_cast<Eigen::Index>(table.index.size());
    table.spectra.resize(kSpectrumBins, n);
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open spectra: " + path.string());
    in.read(reinterpret_cast<char*>(table.spectra.data()),
            static_cast<std::streamsize>(table.spectra.size() * sizeof(float)));
    if (in.gcount() != static_cast<std::streamsize>(table.spectra.size() * sizeof(float))) {
        throw std::runtime_error("truncated spectra file: " + path.string());
    }
    return table;
}

} // namespace somnoscope
