#include "somnoscope/ingest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace somnoscope {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
T read_le(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void put_le(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

AudioRecording load_audio(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open audio file: " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw std::runtime_error("not a RIFF/WAVE file: " + path.string());
    }

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    const unsigned char* data = nullptr;
    std::size_t data_len = 0;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        auto len = read_le<std::uint32_t>(chunk + 4);
        std::size_t body = pos + 8;
        std::size_t avail = std::min<std::size_t>(len, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (avail < 16) throw std::runtime_error("truncated fmt chunk");
            format = read_le<std::uint16_t>(chunk + 8);
            channels = read_le<std::uint16_t>(chunk + 10);
            rate = read_le<std::uint32_t>(chunk + 12);
            bits = read_le<std::uint16_t>(chunk + 22);
            if (format == 0xFFFE && avail >= 26) format = read_le<std::uint16_t>(chunk + 32);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = chunk + 8;
            data_len = avail;
        }
        pos = body + len + (len & 1u);
    }

    if (channels == 0 || rate == 0) throw std::runtime_error("missing fmt chunk: " + path.string());
    if (data == nullptr) throw std::runtime_error("missing data chunk: " + path.string());
    const bool pcm16 = format == 1 && bits == 16;
    const bool pcm32 = format == 1 && bits == 32;
    const bool f32 = format == 3 && bits == 32;
    if (!pcm16 && !pcm32 && !f32) {
        throw std::runtime_error("unsupported WAV encoding (format " + std::to_string(format) + ", " +
                                 std::to_string(bits) + " bits)");
    }

    const std::size_t frame_bytes = static_cast<std::size_t>(channels) * bits / 8;
    const std::size_t frames = data_len / frame_bytes;
    if (frames == 0) throw std::runtime_error("zero-length audio: " + path.string());

    AudioRecording rec;
    rec.sample_rate = rate;
    rec.night_id = path.stem().string();
    rec.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        const unsigned char* p = data + i * frame_bytes;
        if (pcm16) {
            rec.samples[i] = static_cast<float>(read_le<std::int16_t>(p) / 32768.0);
        } else if (pcm32) {
            rec.samples[i] = static_cast<float>(read_le<std::int32_t>(p) / 2147483648.0);
        } else {
            rec.samples[i] = read_le<float>(p);
        }
    }
    return rec;
}

void write_wav(const AudioRecording& rec, const std::filesystem::path& path, WavEncoding encoding) {
    if (rec.samples.empty()) throw std::invalid_argument("cannot write empty recording");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write audio file: " + path.string());

    const std::uint16_t bits = encoding == WavEncoding::pcm16 ? 16 : 32;
    const std::uint16_t format = encoding == WavEncoding::float32 ? 3 : 1;
    const auto rate = static_cast<std::uint32_t>(rec.sample_rate);
    const auto data_len = static_cast<std::uint32_t>(rec.samples.size() * bits / 8);

    out.write("RIFF", 4);
    put_le<std::uint32_t>(out, 36 + data_len);
    out.write("WAVEfmt ", 8);
    put_le<std::uint32_t>(out, 16);
    put_le<std::uint16_t>(out, format);
    put_le<std::uint16_t>(out, 1);
    put_le<std::uint32_t>(out, rate);
    put_le<std::uint32_t>(out, rate * bits / 8);
    put_le<std::uint16_t>(out, bits / 8);
    put_le<std::uint16_t>(out, bits);
    out.write("data", 4);
    put_le<std::uint32_t>(out, data_len);

    for (float s : rec.samples) {
        switch (encoding) {
        case WavEncoding::pcm16: {
            double v = std::clamp(static_cast<double>(s) * 32768.0, -32768.0, 32767.0);
            put_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(v)));
            break;
        }
        case WavEncoding::pcm32: {
            double v = std::clamp(static_cast<double>(s) * 2147483648.0, -2147483648.0, 2147483647.0);
            put_le<std::int32_t>(out, static_cast<std::int32_t>(std::llround(v)));
            break;
        }
        case WavEncoding::float32:
            put_le<float>(out, s);
            break;
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::optional<Label> collapse_rating(std::string_view token) {
    if (token == "very_satisfied" || token == "satisfied") return Label::satisfied;
    if (token == "very_unsatisfied" || token == "unsatisfied") return Label::unsatisfied;
    if (token == "neutral") return std::nullopt;
    throw std::invalid_argument("unknown rating token: " + std::string(token));
}

std::vector<NightLabel> parse_labels(std::string_view csv_text) {
    std::istringstream in{std::string(csv_text)};
    std::string line;
    std::vector<NightLabel> out;
    std::set<std::string> seen;
    bool header = true;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        if (header) {
            header = false;
            if (trim(line).rfind("night_id", 0) == 0) continue;
        }
        auto comma = line.find(',');
        if (comma == std::string::npos) {
            throw std::invalid_argument("labels line " + std::to_string(lineno) + ": expected night_id,rating");
        }
        std::string id = trim(std::string_view(line).substr(0, comma));
        std::string rating = trim(std::string_view(line).substr(comma + 1));
        if (!seen.insert(id).second) throw std::invalid_argument("duplicate night_id: " + id);
        if (auto label = collapse_rating(rating)) out.push_back({id, *label});
    }
    return out;
}

std::vector<NightLabel> load_labels(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open labels file: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_labels(ss.str());
}

} // namespace somnoscope
