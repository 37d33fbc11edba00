#include "somnoscope/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_map>
#include <unordered_set>

#include "somnoscope/model_io.hpp"

#ifndef SOMNOSCOPE_VERSION
#define SOMNOSCOPE_VERSION "0.0.0"
#endif

namespace somnoscope {

// ---------------------------------------------------------------- corpus

namespace {

void append_night(Corpus& c, const std::string& night_id, Label label, const std::vector<SoundEvent>& events,
                  double sample_rate) {
    if (events.empty()) throw std::runtime_error("labeled night " + night_id + " has no detected events");
    const std::size_t night = c.night_ids.size();
    c.night_ids.push_back(night_id);
    c.labels.push_back(label);
    const Eigen::Index start = c.spectra.cols();
    c.spectra.conservativeResize(kSpectrumBins, start + static_cast<Eigen::Index>(events.size()));
    for (std::size_t e = 0; e < events.size(); ++e) {
        const Eigen::VectorXd s = normalize_spectrum(power_spectrum(events[e].samples, sample_rate));
        c.spectra.col(start + static_cast<Eigen::Index>(e)) = s.cast<float>();
        c.event_night.push_back(night);
        c.event_index.push_back(events[e].index_in_night);
    }
}

} // namespace

Corpus corpus_from_spectra(const SpectraTable& table, std::span<const NightLabel> labels) {
    std::unordered_map<std::string, Label> by_id;
    for (const auto& l : labels) by_id.emplace(l.night_id, l.satisfaction);
    Corpus c;
    std::unordered_map<std::string, std::size_t> night_pos;
    std::vector<Eigen::Index> keep;
    for (std::size_t e = 0; e < table.index.size(); ++e) {
        const auto& entry = table.index[e];
        auto it = by_id.find(entry.night_id);
        if (it == by_id.end()) continue;
        auto [pos, inserted] = night_pos.emplace(entry.night_id, c.night_ids.size());
        if (inserted) {
            c.night_ids.push_back(entry.night_id);
            c.labels.push_back(it->second);
        }
        c.event_night.push_back(pos->second);
        c.event_index.push_back(entry.index_in_night);
        keep.push_back(static_cast<Eigen::Index>(e));
    }
    for (const auto& l : labels)
        if (!night_pos.count(l.night_id)) throw std::invalid_argument("label for night without events: " + l.night_id);
    c.spectra.resize(table.spectra.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t i = 0; i < keep.size(); ++i) c.spectra.col(static_cast<Eigen::Index>(i)) = table.spectra.col(keep[i]);
    return c;
}

Corpus corpus_from_audio(const std::filesystem::path& dir, const std::filesystem::path& labels_path,
                         const BurstParams& burst) {
    const auto labels = load_labels(labels_path);
    std::unordered_map<std::string, Label> by_id;
    for (const auto& l : labels) by_id.emplace(l.night_id, l.satisfaction);
    std::vector<std::filesystem::path> wavs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        auto ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
        if (entry.is_regular_file() && ext == ".wav") wavs.push_back(entry.path());
    }
    std::sort(wavs.begin(), wavs.end());
    Corpus c;
    c.spectra.resize(kSpectrumBins, 0);
    std::set<std::string> seen;
    for (const auto& path : wavs) {
        const auto night_id = path.stem().string();
        auto it = by_id.find(night_id);
        if (it == by_id.end()) continue;
        const AudioRecording rec = load_audio(path);
        append_night(c, night_id, it->second, extract_events(rec, burst), rec.sample_rate);
        seen.insert(night_id);
    }
    for (const auto& l : labels)
        if (!seen.count(l.night_id)) throw std::invalid_argument("label for missing recording: " + l.night_id);
    return c;
}

Corpus corpus_from_synth(const SynthSpec& spec, const BurstParams& burst) {
    spec.validate();
    Corpus c;
    c.spectra.resize(kSpectrumBins, 0);
    for (int i = 0; i < spec.n_nights; ++i) {
        const AudioNight night = generate_audio_night(spec, i);
        append_night(c, night.recording.night_id, night.label, extract_events(night.recording, burst),
                     night.recording.sample_rate);
    }
    return c;
}

// ---------------------------------------------------------------- plans

std::string_view method_name(Method m) { return m == Method::proposed ? "proposed" : "conventional"; }

Method parse_method(std::string_view s) {
    if (s == "proposed") return Method::proposed;
    if (s == "conventional") return Method::conventional;
    throw std::invalid_argument("unknown method: " + std::string(s));
}

void ExperimentPlan::validate() const {
    if (latent_dims.empty() || factors.empty()) throw std::invalid_argument("plan sweep lists must be non-empty");
    if (method == Method::proposed && cluster_counts.empty()) throw std::invalid_argument("plan needs cluster counts");
    for (int d : latent_dims)
        if (d < 1) throw std::invalid_argument("latent dims must be >= 1");
    for (int k : cluster_counts)
        if (k < 1) throw std::invalid_argument("cluster counts must be >= 1");
    for (int f : factors)
        if (f < 0) throw std::invalid_argument("factors must be >= 0 (0 = no augmentation)");
    if (folds < 2 || repeats < 1) throw std::invalid_argument("plan needs folds >= 2 and repeats >= 1");
    if (!seeds.empty() && seeds.size() < static_cast<std::size_t>(repeats))
        throw std::invalid_argument("plan has fewer seeds than repeats");
    if (sample_size < 1) throw std::invalid_argument("sample size must be >= 1");
    vae.validate();
    lstm.validate();
}

std::uint64_t ExperimentPlan::repeat_seed(int repeat) const {
    if (!seeds.empty()) return seeds[static_cast<std::size_t>(repeat)];
    return derive_seed(seed, static_cast<std::uint64_t>(repeat));
}

nlohmann::json to_json(const ExperimentPlan& p) {
    return {{"name", p.name},
            {"method", std::string(method_name(p.method))},
            {"latent_dims", p.latent_dims},
            {"cluster_counts", p.cluster_counts},
            {"factors", p.factors},
            {"folds", p.folds},
            {"repeats", p.repeats},
            {"seeds", p.seeds},
            {"seed", p.seed},
            {"sample_size", p.sample_size},
            {"vae", to_json(p.vae)},
            {"gmm",
             {{"max_iterations", p.gmm.max_iterations},
              {"tolerance", p.gmm.tolerance},
              {"variance_floor", p.gmm.variance_floor},
              {"kmeans_iterations", p.gmm.kmeans_iterations}}},
            {"lstm", to_json(p.lstm)}};
}

ExperimentPlan plan_from_json(const nlohmann::json& j) {
    ExperimentPlan p;
    p.name = j.value("name", p.name);
    if (j.contains("method")) p.method = parse_method(j["method"].get<std::string>());
    p.latent_dims = j.value("latent_dims", p.latent_dims);
    p.cluster_counts = j.value("cluster_counts", p.cluster_counts);
    p.factors = j.value("factors", p.factors);
    p.folds = j.value("folds", p.folds);
    p.repeats = j.value("repeats", p.repeats);
    p.seeds = j.value("seeds", p.seeds);
    p.seed = j.value("seed", p.seed);
    p.sample_size = j.value("sample_size", p.sample_size);
    if (j.contains("vae")) p.vae = vae_config_from_json(j["vae"]);
    if (j.contains("gmm")) {
        const auto& g = j["gmm"];
        p.gmm.max_iterations = g.value("max_iterations", p.gmm.max_iterations);
        p.gmm.tolerance = g.value("tolerance", p.gmm.tolerance);
        p.gmm.variance_floor = g.value("variance_floor", p.gmm.variance_floor);
        p.gmm.kmeans_iterations = g.value("kmeans_iterations", p.gmm.kmeans_iterations);
    }
    if (j.contains("lstm")) p.lstm = lstm_config_from_json(j["lstm"]);
    p.validate();
    return p;
}

nlohmann::json to_json(const RunRecord& r) {
    return {{"plan", r.plan},
            {"method", std::string(method_name(r.method))},
            {"latent_dim", r.latent_dim},
            {"clusters", r.clusters},
            {"factor", r.factor},
            {"sample_size", r.sample_size},
            {"accuracies", r.accuracies},
            {"mean", r.summary.mean},
            {"std", r.summary.std},
            {"wall_seconds", r.wall_seconds},
            {"seed", r.seed},
            {"error", r.error}};
}

RunRecord run_record_from_json(const nlohmann::json& j) {
    RunRecord r;
    r.plan = j.at("plan").get<std::string>();
    r.method = parse_method(j.at("method").get<std::string>());
    r.latent_dim = j.at("latent_dim").get<int>();
    r.clusters = j.at("clusters").get<int>();
    r.factor = j.at("factor").get<int>();
    r.sample_size = j.at("sample_size").get<Eigen::Index>();
    r.accuracies = j.at("accuracies").get<std::vector<double>>();
    r.summary.mean = j.at("mean").get<double>();
    r.summary.std = j.at("std").get<double>();
    r.wall_seconds = j.value("wall_seconds", 0.0);
    r.seed = j.at("seed").get<std::uint64_t>();
    r.error = j.value("error", "");
    return r;
}

void require_matching_folds(const ExperimentPlan& a, const ExperimentPlan& b) {
    bool same = a.folds == b.folds && a.repeats == b.repeats;
    for (int r = 0; same && r < a.repeats; ++r) same = a.repeat_seed(r) == b.repeat_seed(r);
    if (!same) throw std::invalid_argument("plans " + a.name + " and " + b.name + " use different folds");
}

void check_leakage(const SplitAudit& audit) {
    const std::unordered_set<std::string> test(audit.test_nights.begin(), audit.test_nights.end());
    auto check = [&](const std::vector<std::string>& used, const char* stage) {
        for (const auto& id : used)
            if (test.count(id))
                throw std::logic_error("test night " + id + " leaked into " + stage + " training (repeat " +
                                       std::to_string(audit.repeat) + ", fold " + std::to_string(audit.fold) + ")");
    };
    check(audit.vae_nights, "VAE");
    check(audit.gmm_nights, "GMM");
    check(audit.lstm_nights, "LSTM");
}

unsigned default_workers() {
    unsigned n = std::max(1U, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("SOMNOSCOPE_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) n = std::min(n, static_cast<unsigned>(v));
    }
    return n;
}

// ---------------------------------------------------------------- sweep

namespace {

struct Cell {
    std::size_t plan = 0;
    int latent_dim = 0;
    int clusters = 0;
    int factor = 0;
};

std::vector<Cell> enumerate_cells(std::span<const ExperimentPlan> plans) {
    std::vector<Cell> cells;
    for (std::size_t p = 0; p < plans.size(); ++p) {
        const auto& plan = plans[p];
        const std::vector<int> ks = plan.method == Method::proposed ? plan.cluster_counts : std::vector<int>{0};
        for (int d : plan.latent_dims)
            for (int k : ks)
                for (int f : plan.factors) cells.push_back({p, d, k, f});
    }
    return cells;
}

struct CellOutcome {
    double accuracy = 0.0;
    double seconds = 0.0;
    std::string error;
};

std::vector<NightSequence> build_sequences(const Corpus& corpus, const Eigen::MatrixXd& features) {
    std::vector<NightEvents> grouped(corpus.nights());
    for (std::size_t n = 0; n < corpus.nights(); ++n) {
        grouped[n].night_id = corpus.night_ids[n];
    }
    std::vector<std::vector<Eigen::Index>> cols(corpus.nights());
    for (std::size_t e = 0; e < corpus.event_night.size(); ++e) cols[corpus.event_night[e]].push_back(static_cast<Eigen::Index>(e));
    std::vector<NightLabel> labels;
    for (std::size_t n = 0; n < corpus.nights(); ++n) {
        grouped[n].features.resize(features.rows(), static_cast<Eigen::Index>(cols[n].size()));
        for (std::size_t i = 0; i < cols[n].size(); ++i) {
            grouped[n].features.col(static_cast<Eigen::Index>(i)) = features.col(cols[n][i]);
            grouped[n].index_in_night.push_back(corpus.event_index[static_cast<std::size_t>(cols[n][i])]);
        }
        labels.push_back({corpus.night_ids[n], corpus.labels[n]});
    }
    return assemble_nights(grouped, labels);
}

std::vector<std::string> ids_of(std::span<const NightSequence> seqs) {
    std::set<std::string> s;
    for (const auto& n : seqs) s.insert(n.night_id);
    return {s.begin(), s.end()};
}

void merge_ids(std::vector<std::string>& into, const std::vector<std::string>& more) {
    std::set<std::string> s(into.begin(), into.end());
    s.insert(more.begin(), more.end());
    into.assign(s.begin(), s.end());
}

class SplitRunner {
public:
    SplitRunner(const Corpus& corpus, std::span<const ExperimentPlan> plans, const FoldSplit& split,
                std::uint64_t split_seed)
        : corpus_(corpus), plans_(plans), split_(split), seed_(split_seed) {
        is_train_.assign(corpus.nights(), false);
        for (auto i : split.train) is_train_[i] = true;
        audit_.repeat = split.repeat;
        audit_.fold = split.fold;
        for (auto i : split.test) audit_.test_nights.push_back(corpus.night_ids[i]);
    }

    CellOutcome run(const Cell& cell) {
        const auto t0 = std::chrono::steady_clock::now();
        CellOutcome out;
        try {
            const auto& plan = plans_[cell.plan];
            const std::vector<NightSequence>& nights =
                plan.method == Method::proposed ? posterior_nights(plan, cell.latent_dim, cell.clusters)
                                                : latent_nights(plan, cell.latent_dim);
            const auto train = select(nights, split_.train);
            const auto test = select(nights, split_.test);

            LstmConfig cfg = plan.lstm;
            cfg.input_dim = nights.front().dim();
            cfg.seed = derive_seed(seed_, "lstm");
            Lstm<float> model(cfg);
            if (cell.factor == 0) {
                merge_ids(audit_.lstm_nights, ids_of(train));
                train_lstm(model, train, cfg);
                out.accuracy = accuracy(model, test);
            } else {
                AugmentConfig aug;
                aug.sample_size = plan.sample_size;
                aug.factor = cell.factor;
                aug.seed = derive_seed(seed_, "augment");
                const auto data = augment(train, aug);
                merge_ids(audit_.lstm_nights, ids_of(data));
                train_lstm(model, data, cfg);
                out.accuracy = evaluate(model, test, plan.sample_size, derive_seed(seed_, "evaluate"));
            }
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return out;
    }

    const SplitAudit& audit() const { return audit_; }

private:
    static std::string vae_key(const VaeConfig& c) { return to_json(c).dump(); }

    const Eigen::MatrixXd& latents(const ExperimentPlan& plan, int d) {
        VaeConfig cfg = plan.vae;
        cfg.latent_dim = d;
        cfg.input_dim = corpus_.spectra.rows();
        cfg.seed = derive_seed(seed_, "vae");
        const auto key = vae_key(cfg);
        if (auto it = latents_.find(key); it != latents_.end()) return it->second;

        std::vector<Eigen::Index> cols;
        std::vector<std::string> used;
        for (std::size_t e = 0; e < corpus_.event_night.size(); ++e)
            if (is_train_[corpus_.event_night[e]]) cols.push_back(static_cast<Eigen::Index>(e));
        for (std::size_t n = 0; n < corpus_.nights(); ++n)
            if (is_train_[n]) used.push_back(corpus_.night_ids[n]);
        merge_ids(audit_.vae_nights, used);

        Eigen::MatrixXf train(corpus_.spectra.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) train.col(static_cast<Eigen::Index>(i)) = corpus_.spectra.col(cols[i]);
        Vae<float> vae(cfg);
        train_vae<float>(vae, train, cfg);
        Eigen::MatrixXd z(d, corpus_.events());
        constexpr Eigen::Index chunk = 1024;
        for (Eigen::Index s = 0; s < corpus_.events(); s += chunk) {
            const Eigen::Index len = std::min(chunk, corpus_.events() - s);
            z.middleCols(s, len) = vae.encode(corpus_.spectra.middleCols(s, len)).cast<double>();
        }
        if (!z.allFinite()) throw std::runtime_error("VAE produced non-finite latents");
        return latents_.emplace(key, std::move(z)).first->second;
    }

    const std::vector<NightSequence>& latent_nights(const ExperimentPlan& plan, int d) {
        const auto& z = latents(plan, d);
        const auto key = std::to_string(reinterpret_cast<std::uintptr_t>(&z));
        if (auto it = sequences_.find(key); it != sequences_.end()) return it->second;
        return sequences_.emplace(key, build_sequences(corpus_, z)).first->second;
    }

    const std::vector<NightSequence>& posterior_nights(const ExperimentPlan& plan, int d, int K) {
        const auto& z = latents(plan, d);
        nlohmann::json g = to_json(plan)["gmm"];
        const auto key = std::to_string(reinterpret_cast<std::uintptr_t>(&z)) + "/" + std::to_string(K) + "/" + g.dump();
        if (auto it = sequences_.find(key); it != sequences_.end()) return it->second;

        std::vector<Eigen::Index> cols;
        std::vector<std::string> used;
        for (std::size_t e = 0; e < corpus_.event_night.size(); ++e)
            if (is_train_[corpus_.event_night[e]]) cols.push_back(static_cast<Eigen::Index>(e));
        for (std::size_t n = 0; n < corpus_.nights(); ++n)
            if (is_train_[n]) used.push_back(corpus_.night_ids[n]);
        merge_ids(audit_.gmm_nights, used);
        Eigen::MatrixXd train(z.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) train.col(static_cast<Eigen::Index>(i)) = z.col(cols[i]);
        const auto fit = fit_gmm<double>(train, K, derive_seed(seed_, "gmm"), plan.gmm);
        const Eigen::MatrixXd p = posteriors<double>(fit.model, z);
        return sequences_.emplace(key, build_sequences(corpus_, p)).first->second;
    }

    const Corpus& corpus_;
    std::span<const ExperimentPlan> plans_;
    FoldSplit split_;
    std::uint64_t seed_;
    std::vector<bool> is_train_;
    std::map<std::string, Eigen::MatrixXd> latents_;
    std::map<std::string, std::vector<NightSequence>> sequences_;
    SplitAudit audit_;
};

} // namespace

SweepResult run_plans(const Corpus& corpus, std::span<const ExperimentPlan> plans, unsigned workers) {
    if (plans.empty()) throw std::invalid_argument("no plans to run");
    for (const auto& p : plans) {
        p.validate();
        require_matching_folds(plans.front(), p);
    }
    bool has_pos = false, has_neg = false;
    for (Label l : corpus.labels) (l == Label::satisfied ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw std::invalid_argument("corpus needs both satisfied and unsatisfied nights");

    const auto& lead = plans.front();
    std::vector<FoldSplit> splits;
    for (int r = 0; r < lead.repeats; ++r) {
        for (auto s : make_folds(corpus.labels, lead.folds, 1, lead.repeat_seed(r))) {
            s.repeat = r;
            splits.push_back(std::move(s));
        }
    }
    const auto cells = enumerate_cells(plans);
    std::vector<std::vector<CellOutcome>> outcomes(splits.size());
    std::vector<SplitAudit> audits(splits.size());

    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr failure;
    auto worker = [&] {
        for (std::size_t s = next++; s < splits.size(); s = next++) {
            try {
                const auto seed = derive_seed(lead.repeat_seed(splits[s].repeat), static_cast<std::uint64_t>(splits[s].fold));
                SplitRunner runner(corpus, plans, splits[s], seed);
                std::vector<CellOutcome> out;
                out.reserve(cells.size());
                for (const auto& c : cells) out.push_back(runner.run(c));
                audits[s] = runner.audit();
                check_leakage(audits[s]);
                outcomes[s] = std::move(out);
            } catch (...) {
                std::lock_guard lock(err_mutex);
                if (!failure) failure = std::current_exception();
                next = splits.size();
            }
        }
    };
    const unsigned n_threads = std::max(1U, std::min<unsigned>(workers == 0 ? default_workers() : workers,
                                                               static_cast<unsigned>(splits.size())));
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    SweepResult result;
    result.audits = std::move(audits);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const auto& cell = cells[c];
        const auto& plan = plans[cell.plan];
        RunRecord r;
        r.plan = plan.name;
        r.method = plan.method;
        r.latent_dim = cell.latent_dim;
        r.clusters = cell.clusters;
        r.factor = cell.factor;
        r.sample_size = plan.sample_size;
        r.seed = plan.seed;
        for (std::size_t s = 0; s < splits.size(); ++s) {
            const auto& o = outcomes[s][c];
            r.wall_seconds += o.seconds;
            if (!o.error.empty()) {
                if (r.error.empty()) r.error = o.error;
                continue;
            }
            r.accuracies.push_back(o.accuracy);
        }
        if (r.ok()) r.summary = aggregate(r.accuracies);
        result.records.push_back(std::move(r));
    }
    return result;
}

std::vector<RunRecord> run_sweep(const Corpus& corpus, const ExperimentPlan& plan, unsigned workers) {
    return run_plans(corpus, std::span<const ExperimentPlan>(&plan, 1), workers).records;
}

Comparison compare_records(std::span<const RunRecord> proposed, std::span<const RunRecord> conventional) {
    auto best = [](std::span<const RunRecord> rs, const char* what) {
        const RunRecord* b = nullptr;
        for (const auto& r : rs)
            if (r.ok() && (b == nullptr || r.summary.mean > b->summary.mean)) b = &r;
        if (b == nullptr) throw std::invalid_argument(std::string("no successful ") + what + " cell to compare");
        return *b;
    };
    Comparison c;
    c.proposed = best(proposed, "proposed");
    c.conventional = best(conventional, "conventional");
    if (c.proposed.accuracies.size() != c.conventional.accuracies.size())
        throw std::invalid_argument("compared cells have different fold counts");
    const auto& a = c.proposed.accuracies;
    const auto& b = c.conventional.accuracies;
    const bool constant = std::adjacent_find(a.begin(), a.end(), std::not_equal_to<>()) == a.end() &&
                          std::adjacent_find(b.begin(), b.end(), std::not_equal_to<>()) == b.end();
    if (constant && !a.empty() && !b.empty() && a.front() == b.front()) {
        c.test = {0.0, static_cast<double>(a.size() + b.size() - 2), 0.5, false};
    } else {
        c.test = one_sided_t_test(a, b);
    }
    return c;
}

Comparison compare_methods(const Corpus& corpus, const ExperimentPlan& proposed, const ExperimentPlan& conventional,
                           unsigned workers, SweepResult* sweep) {
    if (proposed.name == conventional.name) throw std::invalid_argument("compared plans need distinct names");
    require_matching_folds(proposed, conventional);
    const std::array<ExperimentPlan, 2> plans{proposed, conventional};
    auto result = run_plans(corpus, plans, workers);
    std::vector<RunRecord> a, b;
    for (const auto& r : result.records) (r.plan == proposed.name ? a : b).push_back(r);
    auto c = compare_records(a, b);
    if (sweep) *sweep = std::move(result);
    return c;
}

// ---------------------------------------------------------------- report

std::string format_mean_std(const Summary& s, int precision) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << s.mean << "±" << s.std;
    return os.str();
}

namespace {

std::string safe_name(const std::string& s) {
    std::string out;
    for (char ch : s) out += (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') ? ch : '_';
    return out;
}

std::string cell_text(const RunRecord& r) { return r.ok() ? format_mean_std(r.summary) : "error"; }

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    return out;
}

} // namespace

void emit_report(std::span<const RunRecord> records, const std::filesystem::path& dir, const ReportExtras& extras) {
    if (records.empty()) throw std::invalid_argument("no records to report");
    std::filesystem::create_directories(dir);

    // one latent_dim x clusters grid per (plan, factor)
    std::map<std::pair<std::string, int>, std::vector<const RunRecord*>> grids;
    for (const auto& r : records) grids[{r.plan, r.factor}].push_back(&r);
    for (const auto& [key, rs] : grids) {
        std::vector<int> ds, ks;
        for (const auto* r : rs) {
            if (std::find(ds.begin(), ds.end(), r->latent_dim) == ds.end()) ds.push_back(r->latent_dim);
            if (std::find(ks.begin(), ks.end(), r->clusters) == ks.end()) ks.push_back(r->clusters);
        }
        auto out = open_out(dir / ("table_" + safe_name(key.first) + "_f" + std::to_string(key.second) + ".csv"));
        out << "latent_dim";
        for (int k : ks) out << (k == 0 ? std::string(",accuracy") : ",K=" + std::to_string(k));
        out << '\n';
        for (int d : ds) {
            out << d;
            for (int k : ks) {
                out << ',';
                for (const auto* r : rs)
                    if (r->latent_dim == d && r->clusters == k) out << cell_text(*r);
            }
            out << '\n';
        }
    }

    {
        auto out = open_out(dir / "factors.csv");
        out << "plan,method,latent_dim,clusters,factor,mean,std,cell\n" << std::setprecision(6) << std::fixed;
        for (const auto& r : records) {
            out << r.plan << ',' << method_name(r.method) << ',' << r.latent_dim << ',' << r.clusters << ','
                << (r.factor == 0 ? std::string("none") : std::to_string(r.factor)) << ',';
            if (r.ok()) out << r.summary.mean << ',' << r.summary.std;
            else out << ',';
            out << ',' << cell_text(r) << '\n';
        }
    }
    {
        auto out = open_out(dir / "runs.csv");
        out << "plan,method,latent_dim,clusters,factor,split,accuracy,error\n" << std::setprecision(6) << std::fixed;
        for (const auto& r : records) {
            for (std::size_t s = 0; s < r.accuracies.size(); ++s)
                out << r.plan << ',' << method_name(r.method) << ',' << r.latent_dim << ',' << r.clusters << ','
                    << r.factor << ',' << s << ',' << r.accuracies[s] << ",\n";
            if (!r.ok()) {
                std::string msg = r.error;
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                out << r.plan << ',' << method_name(r.method) << ',' << r.latent_dim << ',' << r.clusters << ','
                    << r.factor << ",,," << msg << '\n';
            }
        }
    }
    if (!extras.comparisons.empty()) {
        auto out = open_out(dir / "comparison.csv");
        out << "proposed_plan,proposed_cell,proposed,conventional_plan,conventional_cell,conventional,t,df,p,significant\n";
        out << std::setprecision(6) << std::fixed;
        auto cell = [](const RunRecord& r) {
            return "d" + std::to_string(r.latent_dim) + "/K" + std::to_string(r.clusters) + "/m" + std::to_string(r.factor);
        };
        for (const auto& c : extras.comparisons) {
            out << c.proposed.plan << ',' << cell(c.proposed) << ',' << format_mean_std(c.proposed.summary) << ','
                << c.conventional.plan << ',' << cell(c.conventional) << ',' << format_mean_std(c.conventional.summary)
                << ',' << c.test.t << ',' << c.test.df << ',' << c.test.p << ',' << (c.test.significant ? "yes" : "no")
                << '\n';
        }
    }
    for (const auto& [name, rep] : extras.shap) write_shap_csv(rep, dir / ("shap_" + safe_name(name) + ".csv"));

    nlohmann::json m;
    m["tool"] = "somnoscope";
    m["version"] = SOMNOSCOPE_VERSION;
    m["plans"] = nlohmann::json::array();
    for (const auto& p : extras.plans) m["plans"].push_back(to_json(p));
    m["records"] = nlohmann::json::array();
    for (const auto& r : records) m["records"].push_back(to_json(r));
    auto out = open_out(dir / "manifest.json");
    out << m.dump(1) << '\n';
}

Manifest read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest " + path.string());
    const auto j = nlohmann::json::parse(in);
    Manifest m;
    for (const auto& p : j.at("plans")) m.plans.push_back(plan_from_json(p));
    for (const auto& r : j.at("records")) m.records.push_back(run_record_from_json(r));
    return m;
}

} // namespace somnoscope
