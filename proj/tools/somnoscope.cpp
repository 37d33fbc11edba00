// somnoscope command-line interface.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <json.hpp>

#include "somnoscope/burst.hpp"
#include "somnoscope/cluster.hpp"
#include "somnoscope/harness.hpp"
#include "somnoscope/ingest.hpp"
#include "somnoscope/lstm.hpp"
#include "somnoscope/model_io.hpp"
#include "somnoscope/sequence.hpp"
#include "somnoscope/spectrum.hpp"
#include "somnoscope/synth.hpp"
#include "somnoscope/timeshap.hpp"
#include "somnoscope/vae.hpp"

namespace fs = std::filesystem;
using namespace somnoscope;
using nlohmann::json;

namespace {

std::vector<fs::path> wav_files(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        auto ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (e.is_regular_file() && ext == ".wav") out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    if (out.empty()) throw std::runtime_error("no .wav files in " + dir.string());
    return out;
}

json read_json(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return json::parse(in);
}

void write_json(const json& j, const fs::path& p) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << j.dump(1) << '\n';
}

std::map<std::string, std::vector<EventSpan>> read_events_jsonl(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    std::map<std::string, std::vector<EventSpan>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        EventSpan s{j.at("start").get<double>(), j.at("end").get<double>(), j.at("night_id").get<std::string>()};
        out[s.night_id].push_back(s);
    }
    return out;
}

struct BurstFlags {
    BurstParams p;
    void add(CLI::App* app) {
        app->add_option("--gamma", p.transition_cost, "Transition cost into the burst state (nats)");
        app->add_option("--ratio", p.variance_ratio, "Burst-state variance ratio");
        app->add_option("--merge-gap", p.merge_gap, "Merge spans closer than this (seconds)");
        app->add_option("--frame-len", p.frame_len, "Frame length (samples)");
        app->add_option("--hop", p.hop, "Frame hop (samples)");
        app->add_option("--min-frames", p.min_event_frames, "Minimum burst length (frames)");
    }
};

// Night sequences from a nights file; latent nights are mapped through a GMM when given.
std::vector<NightSequence> load_sequences(const fs::path& nights, const std::string& gmm_path) {
    NightsFile f = read_nights(nights);
    if (!gmm_path.empty()) {
        if (f.representation != "latent") throw std::runtime_error("--gmm needs a latent nights file");
        const auto gmm = load_gmm(gmm_path);
        for (auto& n : f.nights) n.events = posteriors<double>(gmm, n.events);
    }
    if (f.nights.empty()) throw std::runtime_error("nights file is empty");
    return std::move(f.nights);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"somnoscope: sleep-sound events to explainable sleep-satisfaction predictions"};
    app.require_subcommand(1);
    app.set_version_flag("--version", SOMNOSCOPE_VERSION);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Summarize recordings and labels");
    std::string audio_dir, labels_path;
    ingest->add_option("--audio", audio_dir, "Directory of WAV files")->required();
    ingest->add_option("--labels", labels_path, "Labels CSV (night_id,rating)")->required();
    ingest->callback([&] {
        const auto labels = load_labels(labels_path);
        std::map<std::string, std::string> by_id;
        for (const auto& l : labels) by_id[l.night_id] = std::string(label_name(l.satisfaction));
        json out = json::array();
        for (const auto& p : wav_files(audio_dir)) {
            const auto rec = load_audio(p);
            auto it = by_id.find(rec.night_id);
            out.push_back({{"night_id", rec.night_id},
                           {"sample_rate", rec.sample_rate},
                           {"seconds", rec.duration()},
                           {"label", it == by_id.end() ? json(nullptr) : json(it->second)}});
        }
        std::cout << out.dump(1) << '\n';
    });

    // extract
    auto* extract = app.add_subcommand("extract", "Detect sound events (JSON lines)");
    std::string in_dir, out_path;
    BurstFlags extract_flags;
    extract->add_option("--in", in_dir, "Directory of WAV files")->required();
    extract->add_option("--out", out_path, "Output events.jsonl")->required();
    extract_flags.add(extract);
    extract->callback([&] {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot write " + out_path);
        std::size_t total = 0;
        for (const auto& p : wav_files(in_dir)) {
            const auto rec = load_audio(p);
            for (const auto& e : extract_events(rec, extract_flags.p)) {
                out << json{{"night_id", rec.night_id}, {"start", e.span.start}, {"end", e.span.end}, {"index", e.index_in_night}}.dump()
                    << '\n';
                ++total;
            }
        }
        std::cerr << "extracted " << total << " events\n";
    });

    // spectra
    auto* spectra = app.add_subcommand("spectra", "Normalized 2,400-band power spectra of every event");
    std::string events_path;
    BurstFlags spectra_flags;
    spectra->add_option("--in", in_dir, "Directory of WAV files")->required();
    spectra->add_option("--events", events_path, "Event spans (events.jsonl); detected when omitted");
    spectra->add_option("--out", out_path, "Output spectra matrix (index written to <out>.json)")->required();
    spectra_flags.add(spectra);
    spectra->callback([&] {
        std::map<std::string, std::vector<EventSpan>> spans;
        if (!events_path.empty()) spans = read_events_jsonl(events_path);
        SpectraTable table;
        table.spectra.resize(kSpectrumBins, 0);
        for (const auto& p : wav_files(in_dir)) {
            const auto rec = load_audio(p);
            const auto events = events_path.empty() ? extract_events(rec, spectra_flags.p)
                                                    : slice_events(rec, spans[rec.night_id]);
            const Eigen::Index start = table.spectra.cols();
            table.spectra.conservativeResize(kSpectrumBins, start + static_cast<Eigen::Index>(events.size()));
            for (std::size_t e = 0; e < events.size(); ++e) {
                table.spectra.col(start + static_cast<Eigen::Index>(e)) =
                    normalize_spectrum(power_spectrum(events[e].samples, rec.sample_rate)).cast<float>();
                table.index.push_back({rec.night_id, events[e].index_in_night});
            }
        }
        write_spectra(table, out_path);
        std::cerr << "wrote " << table.spectra.cols() << " spectra\n";
    });

    // train-vae
    auto* train_vae_cmd = app.add_subcommand("train-vae", "Train the spectral VAE");
    std::string spectra_path;
    VaeConfig vae_cfg;
    train_vae_cmd->add_option("--spectra", spectra_path, "Spectra matrix")->required();
    train_vae_cmd->add_option("--latent-dim", vae_cfg.latent_dim, "Latent dimension");
    train_vae_cmd->add_option("--hidden", vae_cfg.hidden_dims, "Hidden layer widths");
    train_vae_cmd->add_option("--epochs", vae_cfg.epochs, "Epochs");
    train_vae_cmd->add_option("--batch", vae_cfg.batch_size, "Batch size");
    train_vae_cmd->add_option("--lr", vae_cfg.learning_rate, "Adam learning rate");
    train_vae_cmd->add_option("--kl-weight", vae_cfg.kl_weight, "Latent KL weight");
    train_vae_cmd->add_option("--seed", vae_cfg.seed, "Seed");
    train_vae_cmd->add_option("--out", out_path, "Output model file")->required();
    train_vae_cmd->callback([&] {
        const auto table = read_spectra(spectra_path);
        vae_cfg.input_dim = table.spectra.rows();
        Vae<float> model(vae_cfg);
        train_vae<float>(model, table.spectra, vae_cfg,
                         [](int e, double l) { std::cerr << "epoch " << e + 1 << " loss " << l << '\n'; });
        save_vae(model, out_path);
    });

    // cluster
    auto* cluster = app.add_subcommand("cluster", "Fit the GMM on VAE latents");
    std::string vae_path, latents_csv;
    int K = 6;
    std::uint64_t seed = 0;
    cluster->add_option("--model", vae_path, "VAE model")->required();
    cluster->add_option("--spectra", spectra_path, "Spectra matrix")->required();
    cluster->add_option("-K,--clusters", K, "Number of clusters");
    cluster->add_option("--seed", seed, "Seed");
    cluster->add_option("--out", out_path, "Output GMM file")->required();
    cluster->add_option("--latents-csv", latents_csv, "Also export latents and memberships as CSV");
    cluster->callback([&] {
        const auto vae = load_vae<float>(vae_path);
        const auto table = read_spectra(spectra_path);
        const Eigen::MatrixXd z = vae.encode(table.spectra).cast<double>();
        const auto fit = fit_gmm<double>(z, K, seed);
        save_gmm(fit.model, out_path);
        std::cerr << "EM iterations " << fit.iterations << ", log-likelihood " << fit.log_likelihood.back() << '\n';
        if (!latents_csv.empty()) export_latents(z, posteriors<double>(fit.model, z), latents_csv);
    });

    // nights
    auto* nights_cmd = app.add_subcommand("nights", "Assemble labeled night sequences");
    std::string gmm_path, representation = "posterior";
    nights_cmd->add_option("--model", vae_path, "VAE model")->required();
    nights_cmd->add_option("--spectra", spectra_path, "Spectra matrix")->required();
    nights_cmd->add_option("--labels", labels_path, "Labels CSV")->required();
    nights_cmd->add_option("--gmm", gmm_path, "GMM model (posterior nights)");
    nights_cmd->add_option("--representation", representation, "posterior or latent")
        ->check(CLI::IsMember({"posterior", "latent"}));
    nights_cmd->add_option("--out", out_path, "Output nights JSON")->required();
    nights_cmd->callback([&] {
        const auto vae = load_vae<float>(vae_path);
        const auto table = read_spectra(spectra_path);
        Eigen::MatrixXd feats = vae.encode(table.spectra).cast<double>();
        if (representation == "posterior") {
            if (gmm_path.empty()) throw std::runtime_error("posterior nights need --gmm");
            feats = posteriors<double>(load_gmm(gmm_path), feats);
        }
        std::map<std::string, NightEvents> grouped;
        for (std::size_t e = 0; e < table.index.size(); ++e) {
            auto& g = grouped[table.index[e].night_id];
            g.night_id = table.index[e].night_id;
            g.index_in_night.push_back(table.index[e].index_in_night);
        }
        for (auto& [id, g] : grouped) g.features.resize(feats.rows(), 0);
        for (std::size_t e = 0; e < table.index.size(); ++e) {
            auto& g = grouped[table.index[e].night_id];
            g.features.conservativeResize(Eigen::NoChange, g.features.cols() + 1);
            g.features.col(g.features.cols() - 1) = feats.col(static_cast<Eigen::Index>(e));
        }
        std::vector<NightEvents> list;
        for (auto& [id, g] : grouped) list.push_back(std::move(g));
        NightsFile f;
        f.representation = representation;
        f.nights = assemble_nights(list, load_labels(labels_path));
        write_nights(f, out_path);
        std::cerr << "wrote " << f.nights.size() << " nights\n";
    });

    // augment-preview
    auto* preview = app.add_subcommand("augment-preview", "Show augmentation output for a nights file");
    std::string nights_path;
    AugmentConfig aug;
    int show = 3;
    preview->add_option("--nights", nights_path, "Nights JSON")->required();
    preview->add_option("-n,--sample-size", aug.sample_size, "Events kept per sampled sequence");
    preview->add_option("-m,--factor", aug.factor, "Sequences per night");
    preview->add_option("--seed", aug.seed, "Seed");
    preview->add_option("--show", show, "Sequences listed per night");
    preview->callback([&] {
        const auto nights = read_nights(nights_path).nights;
        const auto out = augment(nights, aug);
        json j;
        j["input_nights"] = nights.size();
        j["output_sequences"] = out.size();
        j["preview"] = json::array();
        for (std::size_t i = 0; i < out.size(); ++i) {
            if (static_cast<int>(i % static_cast<std::size_t>(aug.factor)) >= show) continue;
            j["preview"].push_back({{"night_id", out[i].night_id},
                                    {"label", std::string(label_name(out[i].label))},
                                    {"length", out[i].length()},
                                    {"source_index", out[i].source_index}});
        }
        std::cout << j.dump(1) << '\n';
    });

    // train-lstm
    auto* train_lstm_cmd = app.add_subcommand("train-lstm", "Train the sequence classifier");
    LstmConfig lstm_cfg;
    AugmentConfig train_aug;
    train_lstm_cmd->add_option("--nights", nights_path, "Nights JSON")->required();
    train_lstm_cmd->add_option("--gmm", gmm_path, "GMM mapping latent nights to posteriors");
    train_lstm_cmd->add_option("-n,--sample-size", train_aug.sample_size, "Events kept per sampled sequence");
    train_lstm_cmd->add_option("-m,--factor", train_aug.factor, "Sequences per night (0: no augmentation)");
    train_lstm_cmd->add_option("--hidden", lstm_cfg.hidden, "Hidden units");
    train_lstm_cmd->add_option("--epochs", lstm_cfg.epochs, "Epochs");
    train_lstm_cmd->add_option("--batch", lstm_cfg.batch_size, "Batch size");
    train_lstm_cmd->add_option("--lr", lstm_cfg.learning_rate, "Adam learning rate");
    train_lstm_cmd->add_option("--dropout", lstm_cfg.dropout, "Dropout on the final hidden state");
    train_lstm_cmd->add_option("--seed", lstm_cfg.seed, "Seed");
    train_lstm_cmd->add_option("--out", out_path, "Output model file")->required();
    train_lstm_cmd->callback([&] {
        const auto nights = load_sequences(nights_path, gmm_path);
        lstm_cfg.input_dim = nights.front().dim();
        std::vector<NightSequence> data;
        if (train_aug.factor == 0) {
            data = nights;
        } else {
            train_aug.seed = derive_seed(lstm_cfg.seed, "augment");
            data = augment(nights, train_aug);
        }
        Lstm<float> model(lstm_cfg);
        train_lstm(model, data, lstm_cfg, [](int e, double l) { std::cerr << "epoch " << e + 1 << " loss " << l << '\n'; });
        save_lstm(model, out_path, {{"sample_size", train_aug.sample_size}, {"factor", train_aug.factor}});
    });

    // explain
    auto* explain = app.add_subcommand("explain", "SHAP explanations of satisfaction predictions");
    std::string lstm_path, mode = "feature", out_dir;
    int segments = 1;
    ExplainOptions xopt;
    explain->add_option("--lstm", lstm_path, "LSTM model")->required();
    explain->add_option("--nights", nights_path, "Nights JSON")->required();
    explain->add_option("--gmm", gmm_path, "GMM mapping latent nights to posteriors");
    explain->add_option("--mode", mode, "feature or event")->check(CLI::IsMember({"feature", "event"}));
    explain->add_option("--segments", segments, "1: explain the given model; 3: train and explain per third")
        ->check(CLI::IsMember({1, 3}));
    explain->add_option("--eta", xopt.eta, "Pruning tolerance");
    explain->add_option("--samples", xopt.n_samples, "Kernel SHAP coalition budget");
    explain->add_option("--seed", xopt.seed, "Seed");
    explain->add_option("--out", out_dir, "Output directory (JSON and CSV); stdout JSON when omitted");
    explain->callback([&] {
        xopt.mode = parse_shap_mode(mode);
        const auto nights = load_sequences(nights_path, gmm_path);
        json training;
        const auto model = load_lstm<float>(lstm_path, &training);
        const Eigen::Index n = training.value("sample_size", Eigen::Index{400});
        const int factor = training.value("factor", 1);
        json out;
        std::vector<std::pair<std::string, SatisfactionReport>> reports;
        if (segments == 1) {
            const auto inputs = factor == 0 ? nights : explanation_inputs(nights, n, derive_seed(xopt.seed, "explain-input"));
            if (xopt.mode == ShapMode::feature) {
                reports.emplace_back("all", explain_satisfaction(lstm_predictor(model), inputs, xopt));
                out = to_json(reports.back().second);
            } else {
                out = json::array();
                const auto predictor = lstm_predictor(model);
                for (const auto& night : inputs) {
                    ExplainOptions o = xopt;
                    o.seed = derive_seed(xopt.seed, night.night_id);
                    auto r = to_json(explain_sequence(predictor, night.events, o));
                    r["night_id"] = night.night_id;
                    out.push_back(std::move(r));
                }
            }
        } else {
            if (xopt.mode != ShapMode::feature) throw std::runtime_error("segment analysis uses feature mode");
            AugmentConfig a;
            a.sample_size = n;
            a.factor = std::max(1, factor);
            a.seed = derive_seed(model.config().seed, "augment");
            const auto parts = explain_segments(nights, model.config(), a, xopt);
            const char* names[3] = {"early", "middle", "late"};
            for (std::size_t s = 0; s < 3; ++s) {
                out[names[s]] = to_json(parts[s]);
                reports.emplace_back(names[s], parts[s]);
            }
        }
        if (out_dir.empty()) {
            std::cout << out.dump(1) << '\n';
            return;
        }
        fs::create_directories(out_dir);
        write_json(out, fs::path(out_dir) / "shap.json");
        for (const auto& [name, r] : reports) write_shap_csv(r, fs::path(out_dir) / ("shap_" + name + ".csv"));
    });

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus with planted structure");
    std::string spec_path, posterior_out;
    synth->add_option("--spec", spec_path, "Synthetic corpus spec JSON (defaults when omitted)");
    synth->add_option("--out", out_dir, "Output directory")->required();
    synth->add_option("--posterior-nights", posterior_out, "Also write posterior-level nights JSON");
    synth->callback([&] {
        const SynthSpec spec = spec_path.empty() ? SynthSpec{} : synth_spec_from_json(read_json(spec_path));
        write_synth_corpus(spec, out_dir);
        if (!posterior_out.empty()) write_nights({"posterior", generate_posterior_nights(spec)}, posterior_out);
        std::cerr << "wrote " << spec.n_nights << " nights to " << out_dir << '\n';
    });

    // experiment
    auto* experiment = app.add_subcommand("experiment", "Cross-validated sweeps and method comparison");
    std::string corpus_dir, plan_path;
    unsigned workers = 0;
    BurstFlags exp_flags;
    experiment->add_option("--corpus", corpus_dir, "Directory with WAV files and labels.csv");
    experiment->add_option("--spectra", spectra_path, "Precomputed spectra matrix (instead of --corpus)");
    experiment->add_option("--labels", labels_path, "Labels CSV (default <corpus>/labels.csv)");
    experiment->add_option("--plan", plan_path, "Plan JSON")->required();
    experiment->add_option("--out", out_dir, "Results directory")->required();
    experiment->add_option("--workers", workers, "Parallel splits (default SOMNOSCOPE_WORKERS or all cores)");
    exp_flags.add(experiment);
    experiment->callback([&] {
        const json pj = read_json(plan_path);
        std::vector<ExperimentPlan> plans;
        if (pj.contains("plans")) {
            for (const auto& p : pj["plans"]) plans.push_back(plan_from_json(p));
        } else {
            plans.push_back(plan_from_json(pj));
        }
        Corpus corpus;
        if (!spectra_path.empty()) {
            if (labels_path.empty()) throw std::runtime_error("--spectra needs --labels");
            corpus = corpus_from_spectra(read_spectra(spectra_path), load_labels(labels_path));
        } else {
            if (corpus_dir.empty()) throw std::runtime_error("need --corpus or --spectra");
            corpus = corpus_from_audio(corpus_dir, labels_path.empty() ? fs::path(corpus_dir) / "labels.csv" : fs::path(labels_path),
                                       exp_flags.p);
        }
        std::cerr << "corpus: " << corpus.nights() << " nights, " << corpus.events() << " events\n";
        const auto result = run_plans(corpus, plans, workers);
        ReportExtras extras;
        extras.plans = plans;
        if (pj.contains("compare")) {
            const auto a = pj["compare"].at("proposed").get<std::string>();
            const auto b = pj["compare"].at("conventional").get<std::string>();
            std::vector<RunRecord> ra, rb;
            for (const auto& r : result.records) {
                if (r.plan == a) ra.push_back(r);
                if (r.plan == b) rb.push_back(r);
            }
            extras.comparisons.push_back(compare_records(ra, rb));
        }
        emit_report(result.records, out_dir, extras);
        for (const auto& r : result.records)
            std::cerr << r.plan << " d=" << r.latent_dim << " K=" << r.clusters << " m=" << r.factor << ": "
                      << (r.ok() ? format_mean_std(r.summary) : "error: " + r.error) << '\n';
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
