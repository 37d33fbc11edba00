#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "somnoscope/cluster.hpp"
#include "somnoscope/lstm.hpp"
#include "somnoscope/sequence.hpp"
#include "somnoscope/vae.hpp"

namespace somnoscope {

/// Versioned model container:
///   8-byte magic "SOMNOSCP" | u32 format version | u32 config length |
///   config JSON (UTF-8, carries "kind") | u64 parameter count |
///   parameters as little-endian float32.
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelFile {
    std::string kind;
    nlohmann::json config;
    std::vector<float> params;
};

void write_model_file(const std::filesystem::path& path, const std::string& kind, nlohmann::json config,
                      std::span<const float> params);
ModelFile read_model_file(const std::filesystem::path& path, const std::string& expected_kind);

nlohmann::json to_json(const VaeConfig& c);
VaeConfig vae_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LstmConfig& c);
LstmConfig lstm_config_from_json(const nlohmann::json& j);

template <typename Derived>
std::vector<float> to_float_blob(const Eigen::MatrixBase<Derived>& v) {
    std::vector<float> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] = static_cast<float>(v(i));
    return out;
}

template <typename Scalar>
void save_vae(const Vae<Scalar>& model, const std::filesystem::path& path) {
    write_model_file(path, "vae", to_json(model.config()), to_float_blob(model.parameters()));
}

template <typename Scalar>
Vae<Scalar> load_vae(const std::filesystem::path& path) {
    auto f = read_model_file(path, "vae");
    Vae<Scalar> model(vae_config_from_json(f.config));
    if (static_cast<Eigen::Index>(f.params.size()) != model.parameter_count())
        throw std::runtime_error("VAE parameter count mismatch");
    for (Eigen::Index i = 0; i < model.parameter_count(); ++i)
        model.parameters()[i] = static_cast<Scalar>(f.params[static_cast<std::size_t>(i)]);
    return model;
}

/// Extra fields (e.g. sample size, factor) may be stored with the LSTM.
template <typename Scalar>
void save_lstm(const Lstm<Scalar>& model, const std::filesystem::path& path, nlohmann::json extra = {}) {
    auto cfg = to_json(model.config());
    if (!extra.is_null()) cfg["training"] = std::move(extra);
    write_model_file(path, "lstm", std::move(cfg), to_float_blob(model.parameters()));
}

template <typename Scalar>
Lstm<Scalar> load_lstm(const std::filesystem::path& path, nlohmann::json* extra = nullptr) {
    auto f = read_model_file(path, "lstm");
    Lstm<Scalar> model(lstm_config_from_json(f.config));
    if (static_cast<Eigen::Index>(f.params.size()) != model.parameter_count())
        throw std::runtime_error("LSTM parameter count mismatch");
    for (Eigen::Index i = 0; i < model.parameter_count(); ++i)
        model.parameters()[i] = static_cast<Scalar>(f.params[static_cast<std::size_t>(i)]);
    if (extra != nullptr) *extra = f.config.value("training", nlohmann::json::object());
    return model;
}

void save_gmm(const GaussianMixture<double>& model, const std::filesystem::path& path);
GaussianMixture<double> load_gmm(const std::filesystem::path& path);

/// Nights file: JSON with "representation" ("posterior" or "latent") and a
/// list of nights, each {night_id, label, events: [[...], ...]}.
struct NightsFile {
    std::string representation = "posterior";
    std::vector<NightSequence> nights;
};

void write_nights(const NightsFile& file, const std::filesystem::path& path);
NightsFile read_nights(const std::filesystem::path& path);

} // namespace somnoscope
