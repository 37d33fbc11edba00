#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <vector>

#include "somnoscope/common.hpp"

namespace somnoscope {

struct GmmOptions {
    int max_iterations = 200;
    double tolerance = 1e-6;  // relative log-likelihood improvement
    double variance_floor = 1e-6;
    int kmeans_iterations = 10;
};

/// Diagonal-covariance Gaussian mixture. Column k of `means`/`variances`
/// describes component k.
template <typename Scalar>
struct GaussianMixture {
    Vec<Scalar> weights;
    Mat<Scalar> means;
    Mat<Scalar> variances;

    Eigen::Index components() const { return weights.size(); }
    Eigen::Index dim() const { return means.rows(); }

    /// log(pi_k) + log N(z; mu_k, diag sigma_k^2) for every component.
    Vec<Scalar> log_joint(const Eigen::Ref<const Vec<Scalar>>& z) const {
        const auto K = components();
        Vec<Scalar> out(K);
        const Scalar log2pi = static_cast<Scalar>(std::log(2.0 * std::numbers::pi));
        for (Eigen::Index k = 0; k < K; ++k) {
            const auto var = variances.col(k).array();
            const Scalar quad = ((z.array() - means.col(k).array()).square() / var).sum();
            out[k] = std::log(weights[k]) - Scalar(0.5) * (static_cast<Scalar>(dim()) * log2pi + var.log().sum() + quad);
        }
        return out;
    }

    Scalar log_likelihood(const Eigen::Ref<const Mat<Scalar>>& Z) const {
        Scalar ll = 0;
        for (Eigen::Index n = 0; n < Z.cols(); ++n) ll += log_sum_exp(log_joint(Z.col(n)));
        return ll;
    }

    static Scalar log_sum_exp(const Vec<Scalar>& v) {
        const Scalar m = v.maxCoeff();
        if (!std::isfinite(m)) return m;
        return m + std::log((v.array() - m).exp().sum());
    }
};

/// Posterior membership probabilities p_k for one latent, via log-sum-exp.
template <typename Scalar>
Vec<Scalar> responsibilities(const GaussianMixture<Scalar>& model, const Eigen::Ref<const Vec<Scalar>>& z) {
    if (z.size() != model.dim()) throw std::invalid_argument("latent dimension mismatch");
    Vec<Scalar> lj = model.log_joint(z);
    const Scalar lse = GaussianMixture<Scalar>::log_sum_exp(lj);
    Vec<Scalar> p = (lj.array() - lse).exp().matrix();
    return p / p.sum();
}

/// Responsibilities for every column of Z (K x N).
template <typename Scalar>
Mat<Scalar> posteriors(const GaussianMixture<Scalar>& model, const Eigen::Ref<const Mat<Scalar>>& Z) {
    Mat<Scalar> out(model.components(), Z.cols());
    for (Eigen::Index n = 0; n < Z.cols(); ++n) out.col(n) = responsibilities<Scalar>(model, Z.col(n));
    return out;
}

/// Most probable component; ties resolve to the lowest index.
template <typename Derived>
Eigen::Index argmax_cluster(const Eigen::MatrixBase<Derived>& p) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < p.size(); ++k)
        if (p(k) > p(best)) best = k;
    return best;
}

template <typename Scalar>
Eigen::Index count_distinct_columns(const Eigen::Ref<const Mat<Scalar>>& Z) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(Z.cols()));
    for (Eigen::Index i = 0; i < Z.cols(); ++i) idx[static_cast<std::size_t>(i)] = i;
    auto less = [&](Eigen::Index a, Eigen::Index b) {
        for (Eigen::Index r = 0; r < Z.rows(); ++r) {
            if (Z(r, a) < Z(r, b)) return true;
            if (Z(r, b) < Z(r, a)) return false;
        }
        return false;
    };
    std::sort(idx.begin(), idx.end(), less);
    Eigen::Index distinct = idx.empty() ? 0 : 1;
    for (std::size_t i = 1; i < idx.size(); ++i)
        if (less(idx[i - 1], idx[i])) ++distinct;
    return distinct;
}

template <typename Scalar>
struct GmmFit {
    GaussianMixture<Scalar> model;
    std::vector<double> log_likelihood;  // one entry per E-step, non-decreasing
    int iterations = 0;
};

namespace detail {

template <typename Scalar>
Mat<Scalar> kmeans_plus_plus(const Eigen::Ref<const Mat<Scalar>>& Z, Eigen::Index K, Rng& rng) {
    const Eigen::Index N = Z.cols();
    Mat<Scalar> centers(Z.rows(), K);
    std::uniform_int_distribution<Eigen::Index> first(0, N - 1);
    centers.col(0) = Z.col(first(rng));
    Vec<double> d2(N);
    for (Eigen::Index n = 0; n < N; ++n) d2[n] = static_cast<double>((Z.col(n) - centers.col(0)).squaredNorm());
    for (Eigen::Index k = 1; k < K; ++k) {
        const double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            std::uniform_real_distribution<double> u(0.0, total);
            double r = u(rng);
            for (pick = 0; pick < N - 1; ++pick) {
                r -= d2[pick];
                if (r <= 0.0 && d2[pick] > 0.0) break;
            }
            while (d2[pick] == 0.0 && pick > 0) --pick;
        }
        centers.col(k) = Z.col(pick);
        for (Eigen::Index n = 0; n < N; ++n)
            d2[n] = std::min(d2[n], static_cast<double>((Z.col(n) - centers.col(k)).squaredNorm()));
    }
    return centers;
}

template <typename Scalar>
std::vector<Eigen::Index> assign_nearest(const Eigen::Ref<const Mat<Scalar>>& Z, const Mat<Scalar>& centers) {
    std::vector<Eigen::Index> a(static_cast<std::size_t>(Z.cols()));
    for (Eigen::Index n = 0; n < Z.cols(); ++n) {
        Eigen::Index best = 0;
        Scalar bd = std::numeric_limits<Scalar>::max();
        for (Eigen::Index k = 0; k < centers.cols(); ++k) {
            const Scalar d = (Z.col(n) - centers.col(k)).squaredNorm();
            if (d < bd) { bd = d; best = k; }
        }
        a[static_cast<std::size_t>(n)] = best;
    }
    return a;
}

} // namespace detail

/// EM for a diagonal Gaussian mixture, seeded by k-means++ and a few Lloyd
/// iterations. Stops when the relative log-likelihood gain drops below
/// `tolerance` or after `max_iterations` E-steps.
template <typename Scalar>
GmmFit<Scalar> fit_gmm(const Eigen::Ref<const Mat<Scalar>>& Z, Eigen::Index K, std::uint64_t seed,
                       const GmmOptions& opt = {}) {
    if (K < 1) throw std::invalid_argument("K must be >= 1");
    const Eigen::Index N = Z.cols(), d = Z.rows();
    if (count_distinct_columns<Scalar>(Z) < K) throw std::invalid_argument("fewer distinct latents than clusters");
    const auto floor = static_cast<Scalar>(opt.variance_floor);

    Rng rng(derive_seed(seed, "gmm-init"));
    Mat<Scalar> centers = detail::kmeans_plus_plus<Scalar>(Z, K, rng);
    std::vector<Eigen::Index> assign = detail::assign_nearest<Scalar>(Z, centers);
    for (int it = 0; it < opt.kmeans_iterations; ++it) {
        Mat<Scalar> sum = Mat<Scalar>::Zero(d, K);
        Vec<Scalar> cnt = Vec<Scalar>::Zero(K);
        for (Eigen::Index n = 0; n < N; ++n) {
            sum.col(assign[n]) += Z.col(n);
            cnt[assign[n]] += 1;
        }
        for (Eigen::Index k = 0; k < K; ++k)
            if (cnt[k] > 0) centers.col(k) = sum.col(k) / cnt[k];
        assign = detail::assign_nearest<Scalar>(Z, centers);
    }

    GmmFit<Scalar> fit;
    auto& m = fit.model;
    m.weights = Vec<Scalar>::Zero(K);
    m.means = centers;
    m.variances = Mat<Scalar>::Zero(d, K);
    for (Eigen::Index n = 0; n < N; ++n) {
        m.weights[assign[n]] += 1;
        m.variances.col(assign[n]) += (Z.col(n) - centers.col(assign[n])).cwiseAbs2();
    }
    const Vec<Scalar> global_mean = Z.rowwise().mean();
    const Vec<Scalar> global_var =
        ((Z.colwise() - global_mean).cwiseAbs2().rowwise().sum() / static_cast<Scalar>(N)).cwiseMax(floor);
    for (Eigen::Index k = 0; k < K; ++k) {
        if (m.weights[k] > 1) m.variances.col(k) = (m.variances.col(k) / m.weights[k]).cwiseMax(floor);
        else m.variances.col(k) = global_var;
        m.weights[k] = std::max(m.weights[k], Scalar(1));
    }
    m.weights /= m.weights.sum();

    Mat<Scalar> resp(K, N);
    double prev = -std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.max_iterations; ++it) {
        // E-step
        double ll = 0.0;
        for (Eigen::Index n = 0; n < N; ++n) {
            Vec<Scalar> lj = m.log_joint(Z.col(n));
            const Scalar lse = GaussianMixture<Scalar>::log_sum_exp(lj);
            ll += static_cast<double>(lse);
            resp.col(n) = (lj.array() - lse).exp().matrix();
        }
        fit.log_likelihood.push_back(ll);
        fit.iterations = it + 1;
        if (it > 0 && (ll - prev) <= opt.tolerance * std::abs(prev)) break;
        prev = ll;

        // M-step
        const Vec<Scalar> nk = resp.rowwise().sum();
        for (Eigen::Index k = 0; k < K; ++k) {
            if (!(nk[k] > std::numeric_limits<Scalar>::min() * 1e6)) continue;  // empty component: keep parameters
            const Vec<Scalar> mean = Z * resp.row(k).transpose() / nk[k];
            Vec<Scalar> var = Vec<Scalar>::Zero(d);
            for (Eigen::Index n = 0; n < N; ++n) var += resp(k, n) * (Z.col(n) - mean).cwiseAbs2();
            m.means.col(k) = mean;
            m.variances.col(k) = (var / nk[k]).cwiseMax(floor);
        }
        m.weights = nk / nk.sum();
    }
    return fit;
}

/// CSV of latent components, argmax cluster and membership probabilities,
/// one row per event (columns of `latents` / `posteriors`).
void export_latents(const Eigen::MatrixXd& latents, const Eigen::MatrixXd& posteriors,
                    const std::filesystem::path& path);

struct LatentTable {
    Eigen::MatrixXd latents;
    std::vector<Eigen::Index> cluster;
    Eigen::MatrixXd posteriors;
};

LatentTable read_latents_csv(const std::filesystem::path& path);

} // namespace somnoscope
