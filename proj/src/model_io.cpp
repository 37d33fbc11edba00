#include "somnoscope/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace somnoscope {
namespace {

constexpr char kMagic[8] = {'S', 'O', 'M', 'N', 'O', 'S', 'C', 'P'};

static_assert(std::endian::native == std::endian::little, "little-endian host required");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw std::runtime_error("truncated model file");
    return v;
}

} // namespace

void write_model_file(const std::filesystem::path& path, const std::string& kind, nlohmann::json config,
                      std::span<const float> params) {
    config["kind"] = kind;
    const std::string cfg = config.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write model: " + path.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, kModelFormatVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
    out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
    put<std::uint64_t>(out, params.size());
    out.write(reinterpret_cast<const char*>(params.data()), static_cast<std::streamsize>(params.size_bytes()));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

ModelFile read_model_file(const std::filesystem::path& path, const std::string& expected_kind) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model: " + path.string());
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw std::runtime_error("not a model file: " + path.string());
    const auto version = get<std::uint32_t>(in);
    if (version != kModelFormatVersion) throw std::runtime_error("unsupported model format version " + std::to_string(version));
    const auto cfg_len = get<std::uint32_t>(in);
    std::string cfg(cfg_len, '\0');
    in.read(cfg.data(), cfg_len);
    if (!in) throw std::runtime_error("truncated model config");

    ModelFile f;
    f.config = nlohmann::json::parse(cfg);
    f.kind = f.config.value("kind", "");
    if (f.kind != expected_kind) throw std::runtime_error("expected a " + expected_kind + " model, found " + f.kind);
    const auto n = get<std::uint64_t>(in);
    f.params.resize(n);
    in.read(reinterpret_cast<char*>(f.params.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw std::runtime_error("truncated model parameters");
    return f;
}

nlohmann::json to_json(const VaeConfig& c) {
    return {{"input_dim", c.input_dim}, {"hidden_dims", c.hidden_dims}, {"latent_dim", c.latent_dim},
            {"kl_weight", c.kl_weight}, {"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
            {"epochs", c.epochs},       {"seed", c.seed}};
}

VaeConfig vae_config_from_json(const nlohmann::json& j) {
    VaeConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.hidden_dims = j.value("hidden_dims", c.hidden_dims);
    c.latent_dim = j.value("latent_dim", c.latent_dim);
    c.kl_weight = j.value("kl_weight", c.kl_weight);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

nlohmann::json to_json(const LstmConfig& c) {
    return {{"input_dim", c.input_dim}, {"hidden", c.hidden},         {"dropout", c.dropout},
            {"learning_rate", c.learning_rate}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
            {"clip_norm", c.clip_norm}, {"seed", c.seed}};
}

LstmConfig lstm_config_from_json(const nlohmann::json& j) {
    LstmConfig c;
    c.input_dim = j.value("input_dim", c.input_dim);
    c.hidden = j.value("hidden", c.hidden);
    c.dropout = j.value("dropout", c.dropout);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

void save_gmm(const GaussianMixture<double>& model, const std::filesystem::path& path) {
    const Eigen::Index K = model.components(), d = model.dim();
    std::vector<float> blob;
    blob.reserve(static_cast<std::size_t>(K + 2 * K * d));
    for (Eigen::Index k = 0; k < K; ++k) blob.push_back(static_cast<float>(model.weights[k]));
    for (Eigen::Index i = 0; i < model.means.size(); ++i) blob.push_back(static_cast<float>(model.means.data()[i]));
    for (Eigen::Index i = 0; i < model.variances.size(); ++i) blob.push_back(static_cast<float>(model.variances.data()[i]));
    write_model_file(path, "gmm", {{"components", K}, {"dim", d}, {"covariance", "diagonal"}}, blob);
}

GaussianMixture<double> load_gmm(const std::filesystem::path& path) {
    auto f = read_model_file(path, "gmm");
    const auto K = f.config.at("components").get<Eigen::Index>();
    const auto d = f.config.at("dim").get<Eigen::Index>();
    if (static_cast<Eigen::Index>(f.params.size()) != K + 2 * K * d) throw std::runtime_error("GMM parameter count mismatch");
    GaussianMixture<double> m;
    m.weights.resize(K);
    m.means.resize(d, K);
    m.variances.resize(d, K);
    std::size_t p = 0;
    for (Eigen::Index k = 0; k < K; ++k) m.weights[k] = f.params[p++];
    for (Eigen::Index i = 0; i < m.means.size(); ++i) m.means.data()[i] = f.params[p++];
    for (Eigen::Index i = 0; i < m.variances.size(); ++i) m.variances.data()[i] = f.params[p++];
    m.weights /= m.weights.sum();
    return m;
}

void write_nights(const NightsFile& file, const std::filesystem::path& path) {
    nlohmann::json j;
    j["representation"] = file.representation;
    auto& arr = j["nights"] = nlohmann::json::array();
    for (const auto& n : file.nights) {
        nlohmann::json events = nlohmann::json::array();
        for (Eigen::Index t = 0; t < n.length(); ++t) {
            std::vector<double> col(n.events.col(t).data(), n.events.col(t).data() + n.dim());
            events.push_back(std::move(col));
        }
        arr.push_back({{"night_id", n.night_id},
                       {"label", std::string(label_name(n.label))},
                       {"index", n.source_index},
                       {"events", std::move(events)}});
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write nights: " + path.string());
    out << j.dump() << '\n';
}

NightsFile read_nights(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open nights: " + path.string());
    const auto j = nlohmann::json::parse(in);
    NightsFile f;
    f.representation = j.value("representation", "posterior");
    for (const auto& n : j.at("nights")) {
        NightSequence s;
        s.night_id = n.at("night_id").get<std::string>();
        s.label = parse_label_name(n.at("label").get<std::string>());
        const auto& ev = n.at("events");
        const auto l = static_cast<Eigen::Index>(ev.size());
        const auto d = l > 0 ? static_cast<Eigen::Index>(ev[0].size()) : 0;
        s.events.resize(d, l);
        for (Eigen::Index t = 0; t < l; ++t) {
            const auto col = ev[static_cast<std::size_t>(t)].get<std::vector<double>>();
            if (static_cast<Eigen::Index>(col.size()) != d) throw std::runtime_error("ragged event vectors in " + s.night_id);
            for (Eigen::Index i = 0; i < d; ++i) s.events(i, t) = col[static_cast<std::size_t>(i)];
        }
        if (n.contains("index")) s.source_index = n.at("index").get<std::vector<std::int64_t>>();
        f.nights.push_back(std::move(s));
    }
    return f;
}

} // namespace somnoscope
