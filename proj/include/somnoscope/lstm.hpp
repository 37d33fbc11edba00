#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "somnoscope/adam.hpp"
#include "somnoscope/common.hpp"
#include "somnoscope/sequence.hpp"

namespace somnoscope {

struct LstmConfig {
    Eigen::Index input_dim = 6;
    Eigen::Index hidden = 50;
    double dropout = 0.2;
    double learning_rate = 1e-3;
    int epochs = 10;
    Eigen::Index batch_size = 32;
    double clip_norm = 0.0;  // 0 disables gradient clipping
    std::uint64_t seed = 0;

    void validate() const {
        if (input_dim < 1 || hidden < 1) throw std::invalid_argument("LSTM dimensions must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
        if (!(learning_rate >= 0.0)) throw std::invalid_argument("LSTM learning rate must be >= 0");
        if (epochs < 0 || batch_size < 1) throw std::invalid_argument("LSTM epochs/batch invalid");
    }
};

/// Single-layer sequence-to-one LSTM with a sigmoid readout.
///
/// Gate rows are stacked [input; forget; cell; output]. Sequences in a batch
/// may differ in length: they are right-aligned, and the leading padding steps
/// are masked so each sequence starts from a zero state.
template <typename Scalar>
class Lstm {
public:
    using Matrix = Mat<Scalar>;
    using Vector = Vec<Scalar>;

    explicit Lstm(LstmConfig config) : config_(config) {
        config_.validate();
        const Eigen::Index D = config_.input_dim, H = config_.hidden;
        n_params_ = 4 * H * D + 4 * H * H + 4 * H + H + 1;
        params_ = Vector::Zero(n_params_);
        Rng rng(derive_seed(config_.seed, "lstm-init"));
        const double limit = 1.0 / std::sqrt(static_cast<double>(H));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index i = 0; i < n_params_; ++i) params_[i] = static_cast<Scalar>(u(rng));
        b().segment(H, H).setConstant(Scalar(1));
    }

    const LstmConfig& config() const { return config_; }
    Eigen::Index input_dim() const { return config_.input_dim; }
    Eigen::Index hidden() const { return config_.hidden; }
    Eigen::Index parameter_count() const { return n_params_; }
    Vector& parameters() { return params_; }
    const Vector& parameters() const { return params_; }

    Eigen::Map<Matrix> W() { return {params_.data(), 4 * hidden(), input_dim()}; }
    Eigen::Map<const Matrix> W() const { return {params_.data(), 4 * hidden(), input_dim()}; }
    Eigen::Map<Matrix> U() { return {params_.data() + u_off(), 4 * hidden(), hidden()}; }
    Eigen::Map<const Matrix> U() const { return {params_.data() + u_off(), 4 * hidden(), hidden()}; }
    Eigen::Map<Vector> b() { return {params_.data() + b_off(), 4 * hidden()}; }
    Eigen::Map<const Vector> b() const { return {params_.data() + b_off(), 4 * hidden()}; }
    Eigen::Map<Vector> readout() { return {params_.data() + v_off(), hidden()}; }
    Eigen::Map<const Vector> readout() const { return {params_.data() + v_off(), hidden()}; }
    Scalar& readout_bias() { return params_[n_params_ - 1]; }
    Scalar readout_bias() const { return params_[n_params_ - 1]; }

    /// Batch of sequences laid out step-major for the recurrence.
    struct Batch {
        std::vector<Matrix> steps;  // T entries, each D x B
        Matrix mask;                // T x B, 1 where the sequence is active
        bool ragged = false;
        Eigen::Index size() const { return mask.cols(); }
    };

    Batch make_batch(std::span<const Eigen::MatrixXd* const> seqs) const {
        Batch batch;
        const auto B = static_cast<Eigen::Index>(seqs.size());
        Eigen::Index T = 0;
        for (const auto* s : seqs) {
            if (s->rows() != input_dim()) throw std::invalid_argument("LSTM input dimension mismatch");
            if (s->cols() == 0) throw std::invalid_argument("LSTM input sequence is empty");
            T = std::max(T, s->cols());
        }
        batch.steps.assign(static_cast<std::size_t>(T), Matrix::Zero(input_dim(), B));
        batch.mask = Matrix::Zero(T, B);
        for (Eigen::Index j = 0; j < B; ++j) {
            const auto& s = *seqs[static_cast<std::size_t>(j)];
            const Eigen::Index offset = T - s.cols();
            if (offset > 0) batch.ragged = true;
            for (Eigen::Index t = 0; t < s.cols(); ++t) {
                batch.steps[static_cast<std::size_t>(offset + t)].col(j) = s.col(t).template cast<Scalar>();
                batch.mask(offset + t, j) = Scalar(1);
            }
        }
        return batch;
    }

    /// Logits a = v . (dropout(h_T)) + c for every sequence of the batch.
    /// With `targets` and `grad`, also returns mean BCE and its gradient.
    double run(const Batch& batch, const Matrix* dropout_mask, Eigen::Ref<Vector> logits,
               const Vector* targets = nullptr, Vector* grad = nullptr) const {
        const Eigen::Index H = hidden(), B = batch.size();
        const auto T = batch.steps.size();
        const bool backprop = grad != nullptr;

        std::vector<Matrix> gates, cells, tanh_cells, hs;
        if (backprop) {
            gates.reserve(T);
            cells.reserve(T);
            tanh_cells.reserve(T);
            hs.reserve(T);
        }
        Matrix h = Matrix::Zero(H, B), c = Matrix::Zero(H, B);
        Matrix z(4 * H, B);
        for (std::size_t t = 0; t < T; ++t) {
            z.noalias() = W() * batch.steps[t];
            z.noalias() += U() * h;
            z.colwise() += b();
            z.topRows(2 * H) = sigmoid(z.topRows(2 * H));
            z.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh().matrix();
            z.bottomRows(H) = sigmoid(z.bottomRows(H));
            Matrix c_new = z.middleRows(H, H).cwiseProduct(c) + z.topRows(H).cwiseProduct(z.middleRows(2 * H, H));
            if (batch.ragged) c_new = c_new * batch.mask.row(static_cast<Eigen::Index>(t)).asDiagonal();
            Matrix tc = c_new.array().tanh().matrix();
            Matrix h_new = z.bottomRows(H).cwiseProduct(tc);
            if (backprop) {
                gates.push_back(z);
                cells.push_back(c_new);
                tanh_cells.push_back(tc);
                hs.push_back(h_new);
            }
            c = std::move(c_new);
            h = std::move(h_new);
        }
        const Matrix h_out = dropout_mask ? Matrix(h.cwiseProduct(*dropout_mask)) : h;
        logits = (readout().transpose() * h_out).transpose();
        logits.array() += readout_bias();
        if (targets == nullptr) return 0.0;

        double loss = 0.0;
        for (Eigen::Index j = 0; j < B; ++j) {
            const double a = static_cast<double>(logits[j]), y = static_cast<double>((*targets)[j]);
            loss += std::max(a, 0.0) + std::log1p(std::exp(-std::abs(a))) - y * a;
        }
        loss /= static_cast<double>(B);
        if (!backprop) return loss;

        grad->setZero(n_params_);
        Eigen::Map<Matrix> dW(grad->data(), 4 * H, input_dim());
        Eigen::Map<Matrix> dU(grad->data() + u_off(), 4 * H, H);
        Eigen::Map<Vector> db(grad->data() + b_off(), 4 * H);
        Eigen::Map<Vector> dv(grad->data() + v_off(), H);

        const Vector da = (sigmoid(logits) - *targets) / static_cast<Scalar>(B);
        dv = h_out * da;
        (*grad)[n_params_ - 1] = da.sum();
        Matrix dh = readout() * da.transpose();
        if (dropout_mask) dh = dh.cwiseProduct(*dropout_mask);
        Matrix dc = Matrix::Zero(H, B);
        Matrix dz(4 * H, B);
        const Matrix zero_state = Matrix::Zero(H, B);
        for (std::size_t t = T; t-- > 0;) {
            const Matrix& g = gates[t];
            const Matrix& c_prev = t > 0 ? cells[t - 1] : zero_state;
            const Matrix& h_prev = t > 0 ? hs[t - 1] : zero_state;
            if (batch.ragged) {
                dh = dh * batch.mask.row(static_cast<Eigen::Index>(t)).asDiagonal();
                dc = dc * batch.mask.row(static_cast<Eigen::Index>(t)).asDiagonal();
            }
            const auto i = g.topRows(H).array();
            const auto f = g.middleRows(H, H).array();
            const auto gg = g.middleRows(2 * H, H).array();
            const auto o = g.bottomRows(H).array();
            const auto tc = tanh_cells[t].array();

            dc.array() += dh.array() * o * (Scalar(1) - tc.square());
            dz.bottomRows(H) = (dh.array() * tc * o * (Scalar(1) - o)).matrix();
            dz.topRows(H) = (dc.array() * gg * i * (Scalar(1) - i)).matrix();
            dz.middleRows(H, H) = (dc.array() * c_prev.array() * f * (Scalar(1) - f)).matrix();
            dz.middleRows(2 * H, H) = (dc.array() * i * (Scalar(1) - gg.square())).matrix();
            dc = (dc.array() * f).matrix();

            dW.noalias() += dz * batch.steps[t].transpose();
            dU.noalias() += dz * h_prev.transpose();
            db += dz.rowwise().sum();
            dh.noalias() = U().transpose() * dz;
        }
        return loss;
    }

    /// Eval-mode probability for one sequence (dim x length).
    double predict(const Eigen::MatrixXd& seq) const {
        const Eigen::MatrixXd* p = &seq;
        const Batch batch = make_batch(std::span<const Eigen::MatrixXd* const>(&p, 1));
        Vector logit(1);
        run(batch, nullptr, logit);
        return 1.0 / (1.0 + std::exp(-static_cast<double>(logit[0])));
    }

    /// Eval-mode probabilities for many sequences.
    std::vector<double> predict(std::span<const NightSequence> seqs, Eigen::Index chunk = 256) const {
        std::vector<double> out;
        out.reserve(seqs.size());
        std::vector<const Eigen::MatrixXd*> ptrs;
        for (std::size_t s = 0; s < seqs.size(); s += static_cast<std::size_t>(chunk)) {
            const std::size_t e = std::min(seqs.size(), s + static_cast<std::size_t>(chunk));
            ptrs.clear();
            for (std::size_t k = s; k < e; ++k) ptrs.push_back(&seqs[k].events);
            const Batch batch = make_batch(ptrs);
            Vector logits(batch.size());
            run(batch, nullptr, logits);
            for (Eigen::Index j = 0; j < logits.size(); ++j)
                out.push_back(1.0 / (1.0 + std::exp(-static_cast<double>(logits[j]))));
        }
        return out;
    }

    static Matrix sigmoid(const Matrix& x) {
        return (Scalar(1) / (Scalar(1) + (-x.array()).exp())).matrix();
    }

private:
    Eigen::Index u_off() const { return 4 * hidden() * input_dim(); }
    Eigen::Index b_off() const { return u_off() + 4 * hidden() * hidden(); }
    Eigen::Index v_off() const { return b_off() + 4 * hidden(); }

    LstmConfig config_;
    Eigen::Index n_params_ = 0;
    Vector params_;
};

/// Inverted-dropout mask: entries are 0 or 1 / (1 - rate).
template <typename Scalar>
Mat<Scalar> dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
    if (rate <= 0.0) return Mat<Scalar>::Ones(rows, cols);
    std::bernoulli_distribution keep(1.0 - rate);
    const auto scale = static_cast<Scalar>(1.0 / (1.0 - rate));
    Mat<Scalar> m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = keep(rng) ? scale : Scalar(0);
    return m;
}

/// Probability for one sequence. Train mode draws a dropout mask from `rng`.
template <typename Scalar>
double lstm_forward(const Lstm<Scalar>& model, const Eigen::MatrixXd& seq, bool train_mode, Rng* rng = nullptr) {
    if (!train_mode) return model.predict(seq);
    if (rng == nullptr) throw std::invalid_argument("train-mode forward needs an rng");
    const Eigen::MatrixXd* p = &seq;
    const auto batch = model.make_batch(std::span<const Eigen::MatrixXd* const>(&p, 1));
    const Mat<Scalar> mask = dropout_mask<Scalar>(model.hidden(), 1, model.config().dropout, *rng);
    Vec<Scalar> logit(1);
    model.run(batch, &mask, logit);
    return 1.0 / (1.0 + std::exp(-static_cast<double>(logit[0])));
}

/// BCE + Adam with backpropagation through time over full sequences. Returns
/// the mean training loss of each epoch.
template <typename Scalar>
std::vector<double> train_lstm(Lstm<Scalar>& model, std::span<const NightSequence> data, const LstmConfig& config,
                               const std::function<void(int, double)>& on_epoch = {}) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("empty LSTM training set");
    bool has_pos = false, has_neg = false;
    for (const auto& s : data) (s.label == Label::satisfied ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg) throw std::invalid_argument("LSTM training data needs both labels");

    Rng rng(derive_seed(config.seed, "lstm-train"));
    AdamOptions opt;
    opt.learning_rate = config.learning_rate;
    Adam<Scalar> adam(model.parameter_count(), opt);

    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::vector<const Eigen::MatrixXd*> ptrs;
    Vec<Scalar> grad, targets, logits;
    std::vector<double> history;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sum = 0.0;
        for (std::size_t s = 0; s < order.size(); s += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t e = std::min(order.size(), s + static_cast<std::size_t>(config.batch_size));
            ptrs.clear();
            targets.resize(static_cast<Eigen::Index>(e - s));
            for (std::size_t k = s; k < e; ++k) {
                ptrs.push_back(&data[order[k]].events);
                targets[static_cast<Eigen::Index>(k - s)] = static_cast<Scalar>(to_int(data[order[k]].label));
            }
            const auto batch = model.make_batch(ptrs);
            const Mat<Scalar> mask = dropout_mask<Scalar>(model.hidden(), batch.size(), config.dropout, rng);
            logits.resize(batch.size());
            const double loss = model.run(batch, &mask, logits, &targets, &grad);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw std::runtime_error("LSTM loss diverged (non-finite) at epoch " + std::to_string(epoch));
            }
            if (config.clip_norm > 0.0) {
                const double norm = static_cast<double>(grad.norm());
                if (norm > config.clip_norm) grad *= static_cast<Scalar>(config.clip_norm / norm);
            }
            adam.step(model.parameters(), grad);
            sum += loss * static_cast<double>(e - s);
        }
        history.push_back(sum / static_cast<double>(data.size()));
        if (on_epoch) on_epoch(epoch, history.back());
    }
    return history;
}

/// Fraction of sequences whose thresholded prediction (p >= 0.5 -> satisfied)
/// matches the label.
template <typename Scalar>
double accuracy(const Lstm<Scalar>& model, std::span<const NightSequence> test) {
    if (test.empty()) throw std::invalid_argument("empty test set");
    const auto probs = model.predict(test);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Label pred = probs[i] >= 0.5 ? Label::satisfied : Label::unsatisfied;
        if (pred == test[i].label) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(test.size());
}

/// Night-level accuracy: each test night is subsampled once to `sample_size`
/// with a stream seeded by (eval_seed, night_id).
template <typename Scalar>
double evaluate(const Lstm<Scalar>& model, std::span<const NightSequence> test_nights, Eigen::Index sample_size,
                std::uint64_t eval_seed) {
    std::vector<NightSequence> seqs;
    seqs.reserve(test_nights.size());
    for (const auto& n : test_nights) {
        Rng rng(derive_seed(eval_seed, n.night_id));
        seqs.push_back(subsample(n, sample_size, rng));
    }
    return accuracy(model, seqs);
}

} // namespace somnoscope
