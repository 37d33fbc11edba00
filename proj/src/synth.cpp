#include "somnoscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "somnoscope/spectrum.hpp"

namespace somnoscope {

std::string_view label_rule_name(LabelRule r) {
    switch (r) {
        case LabelRule::cluster_frequency: return "cluster_frequency";
        case LabelRule::temporal_segment: return "temporal_segment";
        case LabelRule::burst_density: return "burst_density";
    }
    return "cluster_frequency";
}

LabelRule parse_label_rule(std::string_view s) {
    if (s == "cluster_frequency") return LabelRule::cluster_frequency;
    if (s == "temporal_segment") return LabelRule::temporal_segment;
    if (s == "burst_density") return LabelRule::burst_density;
    throw std::invalid_argument("unknown label rule: " + std::string(s));
}

void SynthSpec::validate() const {
    if (n_nights < 0) throw std::invalid_argument("n_nights must be >= 0");
    if (events_min < 0 || events_max < events_min) throw std::invalid_argument("invalid events-per-night range");
    if (k_true() < 2) throw std::invalid_argument("need at least 2 templates");
    for (double f : template_hz)
        if (!(f > 10.0 && f < 24000.0 && f < sample_rate / 2)) throw std::invalid_argument("template frequency out of range");
    if (!(noise_floor > 0.0)) throw std::invalid_argument("noise floor must be > 0");
    if (rule_template < 0 || rule_template >= k_true()) throw std::invalid_argument("rule template out of range");
    if (rule_segment < 0 || rule_segment > 2) throw std::invalid_argument("rule segment must be 0, 1 or 2");
    if (!(sample_rate > 0.0)) throw std::invalid_argument("sample rate must be > 0");
    if (!(event_min_s > 0.01 && event_max_s >= event_min_s)) throw std::invalid_argument("invalid event duration range");
    if (!(gap_min_s >= 0.0 && gap_max_s >= gap_min_s)) throw std::invalid_argument("invalid gap range");
    if (!(tone_snr > 0.0)) throw std::invalid_argument("tone_snr must be > 0");
    if (!(posterior_noise >= 0.0 && posterior_noise < 0.5)) throw std::invalid_argument("posterior_noise must be in [0, 0.5)");
}

nlohmann::json to_json(const SynthSpec& s) {
    return {{"n_nights", s.n_nights},
            {"events_per_night", {s.events_min, s.events_max}},
            {"template_hz", s.template_hz},
            {"noise_floor", s.noise_floor},
            {"label_rule", std::string(label_rule_name(s.label_rule))},
            {"rule_threshold", s.rule_threshold},
            {"rule_template", s.rule_template},
            {"rule_segment", s.rule_segment},
            {"sample_rate", s.sample_rate},
            {"event_seconds", {s.event_min_s, s.event_max_s}},
            {"gap_seconds", {s.gap_min_s, s.gap_max_s}},
            {"tone_snr", s.tone_snr},
            {"posterior_noise", s.posterior_noise},
            {"seed", s.seed}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    s.n_nights = j.value("n_nights", s.n_nights);
    if (j.contains("events_per_night")) {
        s.events_min = j["events_per_night"].at(0).get<int>();
        s.events_max = j["events_per_night"].at(1).get<int>();
    }
    s.template_hz = j.value("template_hz", s.template_hz);
    s.noise_floor = j.value("noise_floor", s.noise_floor);
    if (j.contains("label_rule")) s.label_rule = parse_label_rule(j["label_rule"].get<std::string>());
    s.rule_threshold = j.value("rule_threshold", s.rule_threshold);
    s.rule_template = j.value("rule_template", s.rule_template);
    s.rule_segment = j.value("rule_segment", s.rule_segment);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    if (j.contains("event_seconds")) {
        s.event_min_s = j["event_seconds"].at(0).get<double>();
        s.event_max_s = j["event_seconds"].at(1).get<double>();
    }
    if (j.contains("gap_seconds")) {
        s.gap_min_s = j["gap_seconds"].at(0).get<double>();
        s.gap_max_s = j["gap_seconds"].at(1).get<double>();
    }
    s.tone_snr = j.value("tone_snr", s.tone_snr);
    s.posterior_noise = j.value("posterior_noise", s.posterior_noise);
    s.seed = j.value("seed", s.seed);
    s.validate();
    return s;
}

std::string synth_night_id(int night_index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "night_%03d", night_index);
    return buf;
}

namespace {

// [begin, end) of each third, remainder to the earliest parts.
std::array<std::size_t, 4> third_bounds(std::size_t l) {
    const std::size_t base = l / 3, rem = l % 3;
    std::array<std::size_t, 4> b{0, 0, 0, 0};
    for (std::size_t s = 0; s < 3; ++s) b[s + 1] = b[s] + base + (s < rem ? 1 : 0);
    return b;
}

double rule_fraction(const SynthSpec& spec, std::span<const int> templates) {
    if (templates.empty()) return 0.0;
    const auto hits = std::count(templates.begin(), templates.end(), spec.rule_template);
    return static_cast<double>(hits) / static_cast<double>(templates.size());
}

// Rule-template share for one stretch of events: bimodal around the threshold.
double draw_rule_share(const SynthSpec& spec, Rng& rng) {
    std::bernoulli_distribution high(0.5);
    const double t = std::clamp(spec.rule_threshold, 0.0, 1.0);
    return high(rng) ? t + 0.3 * (1.0 - t) : 0.4 * t;
}

void draw_templates(const SynthSpec& spec, double rule_share, std::size_t count, Rng& rng, std::vector<int>& out) {
    std::vector<double> w(static_cast<std::size_t>(spec.k_true()), (1.0 - rule_share) / (spec.k_true() - 1));
    w[static_cast<std::size_t>(spec.rule_template)] = rule_share;
    std::discrete_distribution<int> pick(w.begin(), w.end());
    for (std::size_t i = 0; i < count; ++i) out.push_back(pick(rng));
}

} // namespace

Label apply_label_rule(const SynthSpec& spec, std::span<const int> templates) {
    switch (spec.label_rule) {
        case LabelRule::cluster_frequency:
            return label_from_int(rule_fraction(spec, templates) > spec.rule_threshold);
        case LabelRule::temporal_segment: {
            if (templates.size() < 3) return Label::unsatisfied;
            const auto b = third_bounds(templates.size());
            const auto s = static_cast<std::size_t>(spec.rule_segment);
            return label_from_int(rule_fraction(spec, templates.subspan(b[s], b[s + 1] - b[s])) > spec.rule_threshold);
        }
        case LabelRule::burst_density: {
            // relative position of the night's event count inside the range
            const double span = std::max(1, spec.events_max - spec.events_min);
            const double density = (static_cast<double>(templates.size()) - spec.events_min) / span;
            return label_from_int(density > spec.rule_threshold);
        }
    }
    return Label::unsatisfied;
}

NightPlan plan_night(const SynthSpec& spec, int night_index) {
    spec.validate();
    Rng rng(derive_seed(derive_seed(spec.seed, "plan"), static_cast<std::uint64_t>(night_index)));
    NightPlan plan;
    plan.night_id = synth_night_id(night_index);
    std::uniform_int_distribution<int> count(spec.events_min, spec.events_max);
    const auto l = static_cast<std::size_t>(count(rng));
    plan.templates.reserve(l);
    if (spec.label_rule == LabelRule::temporal_segment) {
        const auto b = third_bounds(l);
        for (std::size_t s = 0; s < 3; ++s) draw_templates(spec, draw_rule_share(spec, rng), b[s + 1] - b[s], rng, plan.templates);
    } else if (spec.label_rule == LabelRule::cluster_frequency) {
        draw_templates(spec, draw_rule_share(spec, rng), l, rng, plan.templates);
    } else {
        draw_templates(spec, 1.0 / spec.k_true(), l, rng, plan.templates);
    }
    plan.label = apply_label_rule(spec, plan.templates);
    return plan;
}

std::vector<int> argmax_templates(const NightSequence& night) {
    std::vector<int> out(static_cast<std::size_t>(night.length()));
    for (Eigen::Index t = 0; t < night.length(); ++t) {
        Eigen::Index k = 0;
        night.events.col(t).maxCoeff(&k);
        out[static_cast<std::size_t>(t)] = static_cast<int>(k);
    }
    return out;
}

AudioNight generate_audio_night(const SynthSpec& spec, int night_index) {
    const NightPlan plan = plan_night(spec, night_index);
    Rng rng(derive_seed(derive_seed(spec.seed, "audio"), static_cast<std::uint64_t>(night_index)));
    std::uniform_real_distribution<double> dur(spec.event_min_s, spec.event_max_s);
    std::uniform_real_distribution<double> gap(spec.gap_min_s, spec.gap_max_s);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);

    const double fs = spec.sample_rate;
    struct Placed {
        std::size_t start, length;
        double phase;
    };
    std::vector<Placed> placed;
    std::size_t cursor = static_cast<std::size_t>(std::lround(fs));  // 1 s lead-in
    for (std::size_t e = 0; e < plan.templates.size(); ++e) {
        if (e > 0) cursor += static_cast<std::size_t>(std::lround(gap(rng) * fs));
        const auto len = static_cast<std::size_t>(std::lround(dur(rng) * fs));
        placed.push_back({cursor, len, phase(rng)});
        cursor += len;
    }
    const std::size_t total = cursor + static_cast<std::size_t>(std::lround(fs));  // 1 s tail

    AudioNight night;
    night.recording.night_id = plan.night_id;
    night.recording.subject_id = "synthetic";
    night.recording.sample_rate = fs;
    night.recording.samples.resize(total);
    std::normal_distribution<float> noise(0.0F, static_cast<float>(spec.noise_floor));
    for (auto& s : night.recording.samples) s = noise(rng);

    const double amp = spec.tone_snr * spec.noise_floor * std::numbers::sqrt2;
    const auto ramp = static_cast<std::size_t>(std::lround(0.005 * fs));
    for (std::size_t e = 0; e < placed.size(); ++e) {
        const auto& p = placed[e];
        const double f = spec.template_hz[static_cast<std::size_t>(plan.templates[e])];
        const double w = 2.0 * std::numbers::pi * f / fs;
        for (std::size_t i = 0; i < p.length; ++i) {
            double env = 1.0;
            const std::size_t edge = std::min(i, p.length - 1 - i);
            if (edge < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / static_cast<double>(ramp));
            night.recording.samples[p.start + i] += static_cast<float>(amp * env * std::sin(w * static_cast<double>(i) + p.phase));
        }
        night.spans.push_back({static_cast<double>(p.start) / fs, static_cast<double>(p.start + p.length) / fs, plan.night_id});
    }
    night.templates = plan.templates;
    night.label = plan.label;
    return night;
}

std::vector<NightSequence> generate_posterior_nights(const SynthSpec& spec) {
    spec.validate();
    std::vector<NightSequence> out;
    out.reserve(static_cast<std::size_t>(spec.n_nights));
    const Eigen::Index K = spec.k_true();
    for (int i = 0; i < spec.n_nights; ++i) {
        const NightPlan plan = plan_night(spec, i);
        Rng rng(derive_seed(derive_seed(spec.seed, "posterior"), static_cast<std::uint64_t>(i)));
        std::uniform_real_distribution<double> spread(0.0, spec.posterior_noise);
        std::exponential_distribution<double> gamma1(1.0);
        NightSequence n;
        n.night_id = plan.night_id;
        n.label = plan.label;
        n.events.resize(K, static_cast<Eigen::Index>(plan.templates.size()));
        for (std::size_t t = 0; t < plan.templates.size(); ++t) {
            Eigen::VectorXd w(K);
            for (Eigen::Index k = 0; k < K; ++k) w[k] = gamma1(rng);
            const double eps = spread(rng);
            w *= eps / w.sum();
            w[plan.templates[t]] += 1.0 - eps;
            n.events.col(static_cast<Eigen::Index>(t)) = w;
            n.source_index.push_back(static_cast<std::int64_t>(t));
        }
        out.push_back(std::move(n));
    }
    return out;
}

std::vector<Eigen::VectorXd> template_spectra(const SynthSpec& spec) {
    spec.validate();
    const auto n = static_cast<std::size_t>(std::lround(spec.sample_rate));
    std::vector<Eigen::VectorXd> out;
    for (double f : spec.template_hz) {
        std::vector<float> tone(n);
        for (std::size_t i = 0; i < n; ++i)
            tone[i] = static_cast<float>(std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / spec.sample_rate));
        out.push_back(normalize_spectrum(power_spectrum(tone, spec.sample_rate)));
    }
    return out;
}

void write_synth_corpus(const SynthSpec& spec, const std::filesystem::path& dir, WavEncoding encoding) {
    spec.validate();
    std::filesystem::create_directories(dir);
    std::ofstream labels(dir / "labels.csv");
    if (!labels) throw std::runtime_error("cannot write labels in " + dir.string());
    labels << "night_id,rating\n";
    nlohmann::json truth;
    truth["spec"] = to_json(spec);
    truth["nights"] = nlohmann::json::array();
    for (int i = 0; i < spec.n_nights; ++i) {
        const AudioNight night = generate_audio_night(spec, i);
        write_wav(night.recording, dir / (night.recording.night_id + ".wav"), encoding);
        labels << night.recording.night_id << ',' << label_name(night.label) << '\n';
        nlohmann::json spans = nlohmann::json::array();
        for (const auto& s : night.spans) spans.push_back({s.start, s.end});
        truth["nights"].push_back({{"night_id", night.recording.night_id},
                                   {"label", std::string(label_name(night.label))},
                                   {"templates", night.templates},
                                   {"spans", std::move(spans)}});
    }
    std::ofstream out(dir / "truth.json");
    out << truth.dump(1) << '\n';
}

} // namespace somnoscope
