#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "somnoscope/adam.hpp"
#include "somnoscope/common.hpp"

namespace somnoscope {

struct VaeConfig {
    Eigen::Index input_dim = 2400;
    std::vector<Eigen::Index> hidden_dims{512};
    Eigen::Index latent_dim = 20;
    double kl_weight = 1.0;
    double learning_rate = 1e-3;
    Eigen::Index batch_size = 64;
    int epochs = 30;
    std::uint64_t seed = 0;

    void validate() const {
        if (input_dim < 1) throw std::invalid_argument("VAE input_dim must be >= 1");
        if (latent_dim < 1) throw std::invalid_argument("VAE latent_dim must be >= 1");
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("VAE learning rate must be >= 0");
        if (!(kl_weight >= 0.0)) throw std::invalid_argument("VAE kl_weight must be >= 0");
        if (batch_size < 1 || epochs < 0) throw std::invalid_argument("VAE batch/epochs invalid");
        for (auto h : hidden_dims)
            if (h < 1) throw std::invalid_argument("VAE hidden width must be >= 1");
    }
};

struct VaeLoss {
    double total = 0.0;
    double recon_kld = 0.0;
    double latent_kl = 0.0;
};

/// sum_i p_i ln(p_i / q_i), with 0 ln 0 = 0.
template <typename DerivedP, typename DerivedQ>
double kl_divergence(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double pi = static_cast<double>(p(i));
        if (pi > 0.0) s += pi * (std::log(pi) - std::log(static_cast<double>(q(i))));
    }
    return s;
}

/// KL(N(mu, exp(logvar)) || N(0, I)).
template <typename DerivedM, typename DerivedV>
double gaussian_kl(const Eigen::MatrixBase<DerivedM>& mu, const Eigen::MatrixBase<DerivedV>& logvar) {
    const auto m = mu.template cast<double>().array();
    const auto lv = logvar.template cast<double>().array();
    return -0.5 * (1.0 + lv - m.square() - lv.exp()).sum();
}

/// Variational autoencoder on simplex-valued spectra.
///
/// Encoder: sqrt(D x) -> tanh hidden layers -> (mu, log sigma^2) heads.
/// Decoder: z -> tanh hidden layers (mirrored) -> softmax over D bins.
/// Reconstruction loss is KL(x || x_hat); log sigma^2 is clamped to [-10, 10].
/// All parameters live in one flat vector; layers view into it.
template <typename Scalar>
class Vae {
public:
    using Matrix = Mat<Scalar>;
    using Vector = Vec<Scalar>;

    static constexpr double kLogVarMin = -10.0;
    static constexpr double kLogVarMax = 10.0;

    struct Layer {
        Eigen::Index in = 0, out = 0, offset = 0;
        Eigen::Index size() const { return out * in + out; }
    };

    explicit Vae(VaeConfig config) : config_(std::move(config)) {
        config_.validate();
        build_layout();
        params_ = Vector::Zero(n_params_);
        Rng rng(derive_seed(config_.seed, "vae-init"));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        for_each_layer([&](const Layer& l) {
            const double limit = std::sqrt(3.0 / static_cast<double>(l.in));
            auto w = weight(l);
            for (Eigen::Index j = 0; j < w.cols(); ++j)
                for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = static_cast<Scalar>(limit * u(rng));
        });
    }

    const VaeConfig& config() const { return config_; }
    Eigen::Index latent_dim() const { return config_.latent_dim; }
    Eigen::Index input_dim() const { return config_.input_dim; }
    Eigen::Index parameter_count() const { return n_params_; }
    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }

    const std::vector<Layer>& encoder_layers() const { return enc_; }
    const std::vector<Layer>& decoder_layers() const { return dec_; }
    const Layer& mu_head() const { return mu_; }
    const Layer& logvar_head() const { return lv_; }

    Eigen::Map<Matrix> weight(const Layer& l) { return {params_.data() + l.offset, l.out, l.in}; }
    Eigen::Map<const Matrix> weight(const Layer& l) const { return {params_.data() + l.offset, l.out, l.in}; }
    Eigen::Map<Vector> bias(const Layer& l) { return {params_.data() + l.offset + l.out * l.in, l.out}; }
    Eigen::Map<const Vector> bias(const Layer& l) const {
        return {params_.data() + l.offset + l.out * l.in, l.out};
    }

    /// Encoder mean for each column of X (one spectrum per column).
    Matrix encode(const Eigen::Ref<const Matrix>& X) const {
        check_input(X);
        Matrix h = input_map(X);
        for (const auto& l : enc_) h = affine(l, h).array().tanh().matrix();
        return affine(mu_, h);
    }

    Vector encode_one(const Eigen::Ref<const Vector>& x) const { return encode(x).col(0); }

    /// Decoder output (columns on the simplex) for latent columns Z.
    Matrix decode(const Eigen::Ref<const Matrix>& Z) const {
        Matrix g = Z;
        for (std::size_t i = 0; i + 1 < dec_.size(); ++i) g = affine(dec_[i], g).array().tanh().matrix();
        Matrix logits = affine(dec_.back(), g);
        return softmax_columns(logits);
    }

    /// Batch-mean losses with reparameterization noise `eps` (latent_dim x B).
    /// When `grad` is non-null it receives d(total)/d(params).
    VaeLoss loss(const Eigen::Ref<const Matrix>& X, const Eigen::Ref<const Matrix>& eps, Vector* grad = nullptr) const {
        check_input(X);
        const Eigen::Index B = X.cols();
        if (eps.rows() != config_.latent_dim || eps.cols() != B) throw std::invalid_argument("noise shape mismatch");
        if ((X.array() <= Scalar(0)).any()) throw std::invalid_argument("VAE input must be strictly positive");
        const Scalar beta = static_cast<Scalar>(config_.kl_weight);

        std::vector<Matrix> acts;
        acts.reserve(enc_.size() + 1);
        acts.push_back(input_map(X));
        for (const auto& l : enc_) acts.push_back(affine(l, acts.back()).array().tanh().matrix());
        const Matrix mu = affine(mu_, acts.back());
        const Matrix lv_raw = affine(lv_, acts.back());
        const Matrix lv = lv_raw.array().max(Scalar(kLogVarMin)).min(Scalar(kLogVarMax)).matrix();
        const Matrix sd = (Scalar(0.5) * lv.array()).exp().matrix();
        const Matrix z = mu + sd.cwiseProduct(eps);

        std::vector<Matrix> dacts;
        dacts.reserve(dec_.size());
        dacts.push_back(z);
        for (std::size_t i = 0; i + 1 < dec_.size(); ++i)
            dacts.push_back(affine(dec_[i], dacts.back()).array().tanh().matrix());
        const Matrix logits = affine(dec_.back(), dacts.back());
        const Matrix log_xhat = log_softmax_columns(logits);

        VaeLoss out;
        for (Eigen::Index b = 0; b < B; ++b) {
            double r = 0.0;
            for (Eigen::Index i = 0; i < X.rows(); ++i) {
                const double xi = static_cast<double>(X(i, b));
                if (xi > 0.0) r += xi * (std::log(xi) - static_cast<double>(log_xhat(i, b)));
            }
            out.recon_kld += r;
            out.latent_kl += gaussian_kl(mu.col(b), lv.col(b));
        }
        out.recon_kld /= static_cast<double>(B);
        out.latent_kl /= static_cast<double>(B);
        out.total = out.recon_kld + config_.kl_weight * out.latent_kl;
        if (grad == nullptr) return out;

        grad->setZero(n_params_);
        const Scalar inv_b = Scalar(1) / static_cast<Scalar>(B);
        const Vector xsum = X.colwise().sum().transpose();
        Matrix d = (log_xhat.array().exp().rowwise() * xsum.transpose().array() - X.array()).matrix() * inv_b;

        // decoder
        for (std::size_t i = dec_.size(); i-- > 0;) {
            const Layer& l = dec_[i];
            accumulate(l, d, dacts[i], *grad);
            Matrix dprev = weight(l).transpose() * d;
            if (i > 0) d = dprev.cwiseProduct((Scalar(1) - dacts[i].array().square()).matrix());
            else d = std::move(dprev);
        }
        // d is now d/dz
        Matrix dmu = d + beta * inv_b * mu;
        Matrix dlv = (Scalar(0.5) * d.array() * eps.array() * sd.array() +
                      beta * inv_b * Scalar(0.5) * (lv.array().exp() - Scalar(1)))
                         .matrix();
        for (Eigen::Index j = 0; j < dlv.cols(); ++j)
            for (Eigen::Index i = 0; i < dlv.rows(); ++i)
                if (lv_raw(i, j) < Scalar(kLogVarMin) || lv_raw(i, j) > Scalar(kLogVarMax)) dlv(i, j) = 0;

        accumulate(mu_, dmu, acts.back(), *grad);
        accumulate(lv_, dlv, acts.back(), *grad);
        Matrix dh = weight(mu_).transpose() * dmu + weight(lv_).transpose() * dlv;
        for (std::size_t i = enc_.size(); i-- > 0;) {
            const Layer& l = enc_[i];
            Matrix dpre = dh.cwiseProduct((Scalar(1) - acts[i + 1].array().square()).matrix());
            accumulate(l, dpre, acts[i], *grad);
            if (i > 0) dh = weight(l).transpose() * dpre;
        }
        return out;
    }

    static Matrix softmax_columns(const Matrix& logits) { return log_softmax_columns(logits).array().exp().matrix(); }

    static Matrix log_softmax_columns(const Matrix& logits) {
        Matrix out(logits.rows(), logits.cols());
        for (Eigen::Index b = 0; b < logits.cols(); ++b) {
            const Scalar m = logits.col(b).maxCoeff();
            const Scalar lse = m + std::log((logits.col(b).array() - m).exp().sum());
            out.col(b) = logits.col(b).array() - lse;
        }
        return out;
    }

private:
    void build_layout() {
        Eigen::Index off = 0;
        auto add = [&](Eigen::Index in, Eigen::Index out) {
            Layer l{in, out, off};
            off += l.size();
            return l;
        };
        Eigen::Index prev = config_.input_dim;
        for (auto h : config_.hidden_dims) {
            enc_.push_back(add(prev, h));
            prev = h;
        }
        mu_ = add(prev, config_.latent_dim);
        lv_ = add(prev, config_.latent_dim);
        prev = config_.latent_dim;
        for (auto it = config_.hidden_dims.rbegin(); it != config_.hidden_dims.rend(); ++it) {
            dec_.push_back(add(prev, *it));
            prev = *it;
        }
        dec_.push_back(add(prev, config_.input_dim));
        n_params_ = off;
    }

    template <typename F>
    void for_each_layer(F&& f) {
        for (const auto& l : enc_) f(l);
        f(mu_);
        f(lv_);
        for (const auto& l : dec_) f(l);
    }

    void check_input(const Eigen::Ref<const Matrix>& X) const {
        if (X.rows() != config_.input_dim) throw std::invalid_argument("VAE input dimension mismatch");
    }

    Matrix input_map(const Eigen::Ref<const Matrix>& X) const {
        return (X.array() * static_cast<Scalar>(config_.input_dim)).sqrt().matrix();
    }

    Matrix affine(const Layer& l, const Matrix& in) const {
        Matrix out = weight(l) * in;
        out.colwise() += bias(l);
        return out;
    }

    void accumulate(const Layer& l, const Matrix& d, const Matrix& in, Vector& grad) const {
        Eigen::Map<Matrix>(grad.data() + l.offset, l.out, l.in).noalias() += d * in.transpose();
        Eigen::Map<Vector>(grad.data() + l.offset + l.out * l.in, l.out) += d.rowwise().sum();
    }

    VaeConfig config_;
    std::vector<Layer> enc_;
    Layer mu_, lv_;
    std::vector<Layer> dec_;
    Eigen::Index n_params_ = 0;
    Vector params_;
};

template <typename Scalar>
Mat<Scalar> standard_normal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(n(rng));
    return m;
}

/// Loss on a batch with one fresh reparameterization sample per datum.
template <typename Scalar>
VaeLoss vae_loss(const Vae<Scalar>& model, const Eigen::Ref<const Mat<Scalar>>& X, Rng& rng) {
    return model.loss(X, standard_normal<Scalar>(model.latent_dim(), X.cols(), rng));
}

/// Encoder means for a batch of spectra.
template <typename Scalar>
Mat<Scalar> encode(const Vae<Scalar>& model, const Eigen::Ref<const Mat<Scalar>>& X) {
    return model.encode(X);
}

/// Adam training. Returns one entry per epoch: the mean total loss over the
/// whole data set, evaluated after the epoch with a fixed noise draw so that
/// entries are comparable across epochs.
template <typename Scalar>
std::vector<double> train_vae(Vae<Scalar>& model, const Eigen::Ref<const Mat<Scalar>>& data,
                              const VaeConfig& config,
                              const std::function<void(int, double)>& on_epoch = {}) {
    config.validate();
    const Eigen::Index n = data.cols();
    if (n < config.batch_size) throw std::invalid_argument("fewer spectra than batch size");

    Rng rng(derive_seed(config.seed, "vae-train"));
    Rng eval_rng(derive_seed(config.seed, "vae-eval"));
    const Mat<Scalar> eval_eps = standard_normal<Scalar>(model.latent_dim(), n, eval_rng);

    AdamOptions opt;
    opt.learning_rate = config.learning_rate;
    Adam<Scalar> adam(model.parameter_count(), opt);

    auto full_loss = [&] {
        constexpr Eigen::Index chunk = 512;
        double sum = 0.0;
        for (Eigen::Index s = 0; s < n; s += chunk) {
            const Eigen::Index len = std::min(chunk, n - s);
            sum += model.loss(data.middleCols(s, len), eval_eps.middleCols(s, len)).total * static_cast<double>(len);
        }
        return sum / static_cast<double>(n);
    };

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    Vec<Scalar> grad;
    Mat<Scalar> batch;
    std::vector<double> history;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index s = 0; s < n; s += config.batch_size) {
            const Eigen::Index len = std::min(config.batch_size, n - s);
            batch.resize(data.rows(), len);
            for (Eigen::Index j = 0; j < len; ++j) batch.col(j) = data.col(order[static_cast<std::size_t>(s + j)]);
            const auto eps = standard_normal<Scalar>(model.latent_dim(), len, rng);
            const VaeLoss l = model.loss(batch, eps, &grad);
            if (!std::isfinite(l.total) || !grad.allFinite()) {
                throw std::runtime_error("VAE loss diverged (non-finite) at epoch " + std::to_string(epoch));
            }
            adam.step(model.parameters(), grad);
        }
        const double epoch_loss = full_loss();
        if (!std::isfinite(epoch_loss)) throw std::runtime_error("VAE loss is non-finite after epoch " + std::to_string(epoch));
        history.push_back(epoch_loss);
        if (on_epoch) on_epoch(epoch, epoch_loss);
    }
    return history;
}

} // namespace somnoscope
