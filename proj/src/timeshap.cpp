#include "somnoscope/timeshap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>

namespace somnoscope {

std::string_view shap_mode_name(ShapMode m) { return m == ShapMode::feature ? "feature" : "event"; }

ShapMode parse_shap_mode(std::string_view s) {
    if (s == "feature") return ShapMode::feature;
    if (s == "event") return ShapMode::event;
    throw std::invalid_argument("unknown explanation mode: " + std::string(s));
}

std::size_t Coalition::count() const {
    return static_cast<std::size_t>(std::count(active.begin(), active.end(), std::uint8_t{1}));
}

Eigen::VectorXd baseline_event(Eigen::Index K) {
    if (K < 1) throw std::invalid_argument("baseline needs K >= 1");
    return Eigen::VectorXd::Constant(K, 1.0 / static_cast<double>(K));
}

SequenceGame::SequenceGame(Predictor predictor, Eigen::MatrixXd seq, ShapMode mode, Eigen::Index prune_index,
                           std::optional<Eigen::VectorXd> baseline)
    : predictor_(std::move(predictor)), seq_(std::move(seq)), mode_(mode), prune_index_(prune_index) {
    if (seq_.cols() == 0) throw std::invalid_argument("cannot explain an empty sequence");
    if (prune_index_ < 0 || prune_index_ >= seq_.cols()) throw std::invalid_argument("prune index out of range");
    baseline_ = baseline ? *baseline : baseline_event(seq_.rows());
    if (baseline_.size() != seq_.rows()) throw std::invalid_argument("baseline dimension mismatch");
    const std::size_t base = mode_ == ShapMode::feature ? static_cast<std::size_t>(seq_.rows())
                                                        : static_cast<std::size_t>(seq_.cols() - prune_index_);
    players_ = base + (prune_index_ > 0 ? 1 : 0);
}

Eigen::MatrixXd SequenceGame::perturb(const Coalition& c) const {
    if (c.players() != players_) throw std::invalid_argument("coalition size does not match the game");
    Eigen::MatrixXd x = seq_;
    if (prune_index_ > 0 && !c.contains(players_ - 1)) x.leftCols(prune_index_).colwise() = baseline_;
    const Eigen::Index l = seq_.cols();
    if (mode_ == ShapMode::event) {
        for (Eigen::Index t = prune_index_; t < l; ++t)
            if (!c.contains(static_cast<std::size_t>(t - prune_index_))) x.col(t) = baseline_;
        return x;
    }
    const Eigen::Index K = seq_.rows();
    bool any_off = false;
    for (Eigen::Index j = 0; j < K; ++j) any_off |= !c.contains(static_cast<std::size_t>(j));
    if (!any_off) return x;
    for (Eigen::Index t = prune_index_; t < l; ++t) {
        auto col = x.col(t);
        bool changed = false;
        for (Eigen::Index j = 0; j < K; ++j) {
            if (c.contains(static_cast<std::size_t>(j)) || col[j] == baseline_[j]) continue;
            col[j] = baseline_[j];
            changed = true;
        }
        // untouched columns stay bit-identical so null players get exactly 0
        const double s = col.sum();
        if (changed && s > 0.0) col /= s;
    }
    return x;
}

double SequenceGame::value(const Coalition& c) const { return values(std::span<const Coalition>(&c, 1)).front(); }

std::vector<double> SequenceGame::values(std::span<const Coalition> cs) const {
    constexpr std::size_t chunk = 128;
    std::vector<double> out;
    out.reserve(cs.size());
    std::vector<Eigen::MatrixXd> xs;
    for (std::size_t s = 0; s < cs.size(); s += chunk) {
        const std::size_t e = std::min(cs.size(), s + chunk);
        xs.clear();
        for (std::size_t k = s; k < e; ++k) xs.push_back(perturb(cs[k]));
        const auto v = predictor_(xs);
        if (v.size() != xs.size()) throw std::runtime_error("predictor returned the wrong number of values");
        out.insert(out.end(), v.begin(), v.end());
    }
    return out;
}

double coalition_value(const Predictor& model, const Eigen::MatrixXd& seq, const Coalition& coalition, ShapMode mode,
                       std::optional<Eigen::VectorXd> baseline) {
    return SequenceGame(model, seq, mode, 0, std::move(baseline)).value(coalition);
}

double ShapReport::efficiency_gap() const {
    const double sum = std::accumulate(values.begin(), values.end(), 0.0) + pruned_value;
    return sum - (prediction - base_value);
}

namespace {

ShapReport make_report(const SequenceGame& game, const std::vector<double>& phi, double base, double full) {
    ShapReport r;
    r.mode = game.mode();
    r.prune_index = game.prune_index();
    r.base_value = base;
    r.prediction = full;
    r.values = phi;
    if (game.has_pruned_player()) {
        r.pruned_value = r.values.back();
        r.values.pop_back();
    }
    return r;
}

Coalition from_mask(std::uint64_t mask, std::size_t M) {
    Coalition c(M);
    for (std::size_t j = 0; j < M; ++j) c.active[j] = static_cast<std::uint8_t>((mask >> j) & 1U);
    return c;
}

double log_choose(double n, double k) { return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1); }

} // namespace

ShapReport exact_shapley(const SequenceGame& game) {
    const std::size_t M = game.players();
    if (M > kMaxExactPlayers) throw std::invalid_argument("too many players for exact Shapley enumeration");
    const std::uint64_t n = std::uint64_t{1} << M;
    std::vector<Coalition> all;
    all.reserve(n);
    for (std::uint64_t m = 0; m < n; ++m) all.push_back(from_mask(m, M));
    const auto v = game.values(all);

    // weight |S|! (M-|S|-1)! / M! for every coalition size
    std::vector<double> w(M);
    for (std::size_t s = 0; s < M; ++s)
        w[s] = std::exp(std::lgamma(s + 1.0) + std::lgamma(static_cast<double>(M - s)) - std::lgamma(M + 1.0));
    std::vector<double> phi(M, 0.0);
    for (std::uint64_t m = 0; m < n; ++m) {
        const auto s = static_cast<std::size_t>(std::popcount(m));
        for (std::size_t j = 0; j < M; ++j) {
            const std::uint64_t bit = std::uint64_t{1} << j;
            if (m & bit) continue;
            phi[j] += w[s] * (v[m | bit] - v[m]);
        }
    }
    return make_report(game, phi, v.front(), v.back());
}

ShapReport kernel_shap(const SequenceGame& game, std::size_t n_samples, std::uint64_t seed) {
    const std::size_t M = game.players();
    if (n_samples < 2 * M + 2) throw std::invalid_argument("kernel SHAP needs n_samples >= 2 * players + 2");
    const double f0 = game.value(Coalition(M, false));
    const double f1 = game.value(Coalition(M, true));
    const double delta = f1 - f0;
    if (M == 1) return make_report(game, {delta}, f0, f1);

    // coalition -> accumulated kernel weight
    std::map<Coalition, double> weight;
    const std::size_t n_levels = M / 2;  // sizes 1..n_levels paired with M - size
    const std::size_t n_paired = (M - 1) / 2;
    std::vector<double> level_w(n_levels + 1, 0.0);
    for (std::size_t s = 1; s <= n_levels; ++s) {
        level_w[s] = static_cast<double>(M - 1) / (static_cast<double>(s) * static_cast<double>(M - s));
        if (s <= n_paired) level_w[s] *= 2.0;
    }
    const double total_w = std::accumulate(level_w.begin(), level_w.end(), 0.0);
    for (auto& w : level_w) w /= total_w;

    const bool exhaustive = M < 63 && static_cast<double>(n_samples) >= std::ldexp(1.0, static_cast<int>(M));
    double left = static_cast<double>(n_samples - 2);
    std::size_t level = 1;
    double remaining_mass = 1.0;
    for (; level <= n_levels; ++level) {
        const bool paired = level <= n_paired;
        const double log_n = log_choose(static_cast<double>(M), static_cast<double>(level)) + (paired ? std::log(2.0) : 0.0);
        if (log_n > 40.0) break;
        const double n_sub = std::round(std::exp(log_n));
        if (!exhaustive && left * level_w[level] / remaining_mass < n_sub - 1e-8) break;
        // enumerate every subset of this size (and its complement)
        const double per = level_w[level] / n_sub;
        std::vector<std::size_t> idx(level);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        while (true) {
            Coalition c(M);
            for (auto j : idx) c.active[j] = 1;
            weight[c] += per;
            if (paired) {
                Coalition comp(M, true);
                for (auto j : idx) comp.active[j] = 0;
                weight[comp] += per;
            }
            std::size_t i = level;
            while (i > 0 && idx[i - 1] == M - level + i - 1) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t k = i; k < level; ++k) idx[k] = idx[k - 1] + 1;
        }
        left -= n_sub;
        remaining_mass -= level_w[level];
    }

    if (level <= n_levels && left >= 1.0) {
        Rng rng(derive_seed(seed, "kernel-shap"));
        std::vector<double> dist(level_w.begin() + static_cast<std::ptrdiff_t>(level), level_w.end());
        std::discrete_distribution<std::size_t> pick_level(dist.begin(), dist.end());
        std::vector<std::size_t> perm(M);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::map<Coalition, double> counts;
        double drawn = 0.0;
        const auto budget = static_cast<std::size_t>(left);
        std::size_t used = 0;
        while (used < budget) {
            const std::size_t s = level + pick_level(rng);
            for (std::size_t i = 0; i < s; ++i) {
                std::uniform_int_distribution<std::size_t> u(i, M - 1);
                std::swap(perm[i], perm[u(rng)]);
            }
            Coalition c(M);
            for (std::size_t i = 0; i < s; ++i) c.active[perm[i]] = 1;
            counts[c] += 1.0;
            drawn += 1.0;
            ++used;
            if (s <= n_paired && used < budget) {
                Coalition comp = c;
                for (auto& a : comp.active) a = static_cast<std::uint8_t>(1 - a);
                counts[comp] += 1.0;
                drawn += 1.0;
                ++used;
            }
        }
        for (const auto& [c, k] : counts) weight[c] += remaining_mass * k / drawn;
    }

    std::vector<Coalition> cs;
    std::vector<double> ws;
    cs.reserve(weight.size());
    for (const auto& [c, w] : weight) {
        cs.push_back(c);
        ws.push_back(w);
    }
    const auto v = game.values(cs);

    // eliminate the last player through the efficiency constraint
    const auto R = static_cast<Eigen::Index>(cs.size());
    const auto P = static_cast<Eigen::Index>(M - 1);
    if (R < P) throw SingularSystemError("kernel SHAP: fewer coalitions than unknowns");
    Eigen::MatrixXd X(R, P);
    Eigen::VectorXd y(R);
    for (Eigen::Index i = 0; i < R; ++i) {
        const auto& c = cs[static_cast<std::size_t>(i)];
        const double last = c.contains(M - 1) ? 1.0 : 0.0;
        const double sw = std::sqrt(ws[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < P; ++j) X(i, j) = sw * ((c.contains(static_cast<std::size_t>(j)) ? 1.0 : 0.0) - last);
        y[i] = sw * (v[static_cast<std::size_t>(i)] - f0 - last * delta);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < P) throw SingularSystemError("kernel SHAP: singular regression system; increase n_samples");
    const Eigen::VectorXd sol = qr.solve(y);
    std::vector<double> phi(M);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < P; ++j) {
        phi[static_cast<std::size_t>(j)] = sol[j];
        acc += sol[j];
    }
    phi[M - 1] = delta - acc;
    return make_report(game, phi, f0, f1);
}

Eigen::Index prune_events(const Predictor& model, const Eigen::MatrixXd& seq, double eta,
                          std::optional<Eigen::VectorXd> baseline) {
    if (!(eta >= 0.0)) throw std::invalid_argument("pruning tolerance must be >= 0");
    const Eigen::Index l = seq.cols();
    if (l == 0) throw std::invalid_argument("cannot prune an empty sequence");
    if (eta == 0.0 || l == 1) return 0;
    const Eigen::VectorXd base = baseline ? *baseline : baseline_event(seq.rows());

    // f(suffix only) for every split t; f(full) and f(empty) are shared
    std::vector<Eigen::MatrixXd> xs;
    xs.reserve(2 * static_cast<std::size_t>(l) + 1);
    Eigen::MatrixXd empty = seq;
    empty.colwise() = base;
    xs.push_back(seq);
    xs.push_back(empty);
    for (Eigen::Index t = 1; t < l; ++t) {
        Eigen::MatrixXd prefix_only = seq, suffix_only = seq;
        prefix_only.rightCols(l - t).colwise() = base;
        suffix_only.leftCols(t).colwise() = base;
        xs.push_back(std::move(prefix_only));
        xs.push_back(std::move(suffix_only));
    }
    const auto v = model(xs);
    const double full = v[0], none = v[1];
    Eigen::Index best = 0;
    for (Eigen::Index t = 1; t < l; ++t) {
        const double p_only = v[static_cast<std::size_t>(2 * t)], s_only = v[static_cast<std::size_t>(2 * t + 1)];
        const double phi_prefix = 0.5 * ((p_only - none) + (full - s_only));
        if (std::abs(phi_prefix) < eta) best = t;
    }
    return best;
}

ShapReport explain_sequence(const Predictor& model, const Eigen::MatrixXd& seq, const ExplainOptions& opt) {
    const Eigen::Index t = prune_events(model, seq, opt.eta, opt.baseline);
    const SequenceGame game(model, seq, opt.mode, t, opt.baseline);
    if (game.players() <= kMaxExactPlayers && static_cast<double>(opt.n_samples) >= std::ldexp(1.0, static_cast<int>(game.players())))
        return exact_shapley(game);
    return kernel_shap(game, std::max(opt.n_samples, 2 * game.players() + 2), opt.seed);
}

ShapReport average_reports(std::span<const ShapReport> reports) {
    if (reports.empty()) throw std::invalid_argument("cannot average zero reports");
    ShapReport m;
    m.mode = reports.front().mode;
    m.values.assign(reports.front().values.size(), 0.0);
    double prune = 0.0;
    for (const auto& r : reports) {
        if (r.values.size() != m.values.size()) throw std::invalid_argument("reports have different player counts");
        for (std::size_t j = 0; j < m.values.size(); ++j) m.values[j] += r.values[j];
        m.pruned_value += r.pruned_value;
        m.base_value += r.base_value;
        m.prediction += r.prediction;
        prune += static_cast<double>(r.prune_index);
    }
    const auto n = static_cast<double>(reports.size());
    for (auto& v : m.values) v /= n;
    m.pruned_value /= n;
    m.base_value /= n;
    m.prediction /= n;
    m.prune_index = static_cast<Eigen::Index>(std::lround(prune / n));
    return m;
}

SatisfactionReport explain_satisfaction(const Predictor& model, std::span<const NightSequence> nights,
                                        const ExplainOptions& opt) {
    if (opt.mode != ShapMode::feature)
        throw std::invalid_argument("per-label aggregation needs feature mode (events differ between nights)");
    SatisfactionReport out;
    out.mode = opt.mode;
    for (const auto& n : nights) {
        ExplainOptions o = opt;
        o.seed = derive_seed(opt.seed, n.night_id);
        out.night_ids.push_back(n.night_id);
        out.labels.push_back(n.label);
        out.per_night.push_back(explain_sequence(model, n.events, o));
    }
    for (Label lab : {Label::unsatisfied, Label::satisfied}) {
        std::vector<ShapReport> group;
        for (std::size_t i = 0; i < nights.size(); ++i)
            if (out.labels[i] == lab) group.push_back(out.per_night[i]);
        if (group.empty()) throw std::invalid_argument("no " + std::string(label_name(lab)) + " nights to explain");
        auto& g = out.groups[static_cast<std::size_t>(to_int(lab))];
        g.label = lab;
        g.nights = group.size();
        g.mean = average_reports(group);
        g.ranking.resize(g.mean.values.size());
        std::iota(g.ranking.begin(), g.ranking.end(), std::size_t{0});
        std::stable_sort(g.ranking.begin(), g.ranking.end(),
                         [&](auto a, auto b) { return g.mean.values[a] > g.mean.values[b]; });
    }
    return out;
}

std::vector<NightSequence> explanation_inputs(std::span<const NightSequence> nights, Eigen::Index sample_size,
                                              std::uint64_t seed) {
    std::vector<NightSequence> out;
    out.reserve(nights.size());
    for (const auto& n : nights) {
        Rng rng(derive_seed(seed, n.night_id));
        out.push_back(subsample(n, sample_size, rng));
    }
    return out;
}

std::array<SatisfactionReport, 3> explain_segments(std::span<const NightSequence> nights, const LstmConfig& lstm,
                                                   const AugmentConfig& augment, const ExplainOptions& opt) {
    std::array<std::vector<NightSequence>, 3> parts;
    for (const auto& n : nights) {
        auto thirds = segment_thirds(n);
        for (std::size_t s = 0; s < 3; ++s) parts[s].push_back(std::move(thirds[s]));
    }
    std::array<SatisfactionReport, 3> out;
    for (std::size_t s = 0; s < 3; ++s) {
        AugmentConfig aug = augment;
        aug.seed = derive_seed(augment.seed, static_cast<std::uint64_t>(s));
        const auto train = somnoscope::augment(parts[s], aug);
        LstmConfig cfg = lstm;
        cfg.input_dim = parts[s].front().dim();
        Lstm<float> model(cfg);
        train_lstm(model, train, cfg);
        const auto inputs = explanation_inputs(parts[s], augment.sample_size, derive_seed(opt.seed, "explain-input"));
        out[s] = explain_satisfaction(lstm_predictor(model), inputs, opt);
    }
    return out;
}

nlohmann::json to_json(const ShapReport& r) {
    return {{"mode", std::string(shap_mode_name(r.mode))},
            {"values", r.values},
            {"pruned_value", r.pruned_value},
            {"base_value", r.base_value},
            {"prediction", r.prediction},
            {"prune_index", r.prune_index}};
}

nlohmann::json to_json(const SatisfactionReport& r) {
    nlohmann::json j;
    j["mode"] = std::string(shap_mode_name(r.mode));
    for (const auto& g : r.groups) {
        j["groups"][std::string(label_name(g.label))] = {
            {"nights", g.nights}, {"mean", to_json(g.mean)}, {"ranking", g.ranking}};
    }
    auto& per = j["nights"] = nlohmann::json::array();
    for (std::size_t i = 0; i < r.per_night.size(); ++i) {
        auto e = to_json(r.per_night[i]);
        e["night_id"] = r.night_ids[i];
        e["label"] = std::string(label_name(r.labels[i]));
        per.push_back(std::move(e));
    }
    return j;
}

void write_shap_csv(const SatisfactionReport& r, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << std::setprecision(10);
    out << "group,player,value\n";
    for (const auto& g : r.groups) {
        const auto name = label_name(g.label);
        for (std::size_t j = 0; j < g.mean.values.size(); ++j) out << name << ",cluster" << j << ',' << g.mean.values[j] << '\n';
        out << name << ",pruned," << g.mean.pruned_value << '\n';
    }
}

} // namespace somnoscope
