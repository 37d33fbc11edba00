#include <doctest.h>

#include <cmath>
#include <random>

#include "somnoscope/vae.hpp"
#include "test_util.hpp"

using namespace somnoscope;

namespace {

// Spectra built from a few Gaussian bumps over `dim` bins with a jittered
// peak and a flat background; columns sum to one.
Eigen::MatrixXf template_spectra(Eigen::Index dim, int templates, int per_template, std::uint64_t seed,
                                 std::vector<int>* which = nullptr) {
    Rng rng(seed);
    std::normal_distribution<double> jitter(0.0, 1.5);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    Eigen::MatrixXf X(dim, templates * per_template);
    for (int t = 0; t < templates; ++t) {
        const double centre = static_cast<double>(dim) * (t + 0.5) / templates;
        for (int r = 0; r < per_template; ++r) {
            const double c = centre + jitter(rng);
            Eigen::VectorXd col(dim);
            for (Eigen::Index i = 0; i < dim; ++i) {
                const double d = (static_cast<double>(i) - c) / 3.0;
                col[i] = std::exp(-0.5 * d * d) + 1e-3 * u(rng);
            }
            X.col(t * per_template + r) = (col / col.sum()).cast<float>();
            if (which) which->push_back(t);
        }
    }
    return X;
}

VaeConfig tiny_config() {
    VaeConfig c;
    c.input_dim = 6;
    c.hidden_dims = {4};
    c.latent_dim = 2;
    c.seed = 3;
    return c;
}

} // namespace

TEST_CASE("analytic VAE gradient matches finite differences") {
    Vae<double> vae(tiny_config());
    Rng rng(1);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Eigen::MatrixXd X(6, 3);
    for (auto& v : X.reshaped()) v = u(rng);
    X = X.array().rowwise() / X.colwise().sum().array();
    const Eigen::MatrixXd eps = standard_normal<double>(2, 3, rng);

    Eigen::VectorXd grad;
    vae.loss(X, eps, &grad);
    const Eigen::VectorXd theta = vae.parameters();
    const auto numeric = testutil::numeric_gradient(
        [&](const Eigen::VectorXd& p) {
            Vae<double> probe = vae;
            probe.parameters() = p;
            return probe.loss(X, eps).total;
        },
        theta, 1e-6);
    CHECK(testutil::max_relative_error(grad, numeric, 1e-7) < 1e-4);

    SUBCASE("also without hidden layers and with a KL weight") {
        auto c = tiny_config();
        c.hidden_dims = {};
        c.kl_weight = 0.3;
        Vae<double> flat(c);
        flat.loss(X, eps, &grad);
        const auto fd = testutil::numeric_gradient(
            [&](const Eigen::VectorXd& p) {
                Vae<double> probe = flat;
                probe.parameters() = p;
                return probe.loss(X, eps).total;
            },
            flat.parameters(), 1e-6);
        CHECK(testutil::max_relative_error(grad, fd, 1e-7) < 1e-4);
    }
}

TEST_CASE("KL divergence reference values") {
    Eigen::Vector2d p(0.5, 0.5), q(0.25, 0.75);
    CHECK(kl_divergence(p, q) == doctest::Approx(0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0)).epsilon(1e-12));
    CHECK(std::abs(kl_divergence(p, q) - 0.1438) <= 1e-4);
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(gaussian_kl(Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()) == 0.0);
    CHECK(gaussian_kl(Eigen::Vector3d(0.1, 0, 0), Eigen::Vector3d::Zero()) > 0.0);
    CHECK(gaussian_kl(Eigen::Vector3d::Zero(), Eigen::Vector3d(0.2, -0.3, 0)) > 0.0);
}

TEST_CASE("reconstruction loss vanishes when the decoder returns the input") {
    auto c = tiny_config();
    c.hidden_dims = {};
    Vae<double> vae(c);
    Rng rng(2);
    std::uniform_real_distribution<double> u(0.05, 1.0);
    for (int trial = 0; trial < 100; ++trial) {
        Eigen::VectorXd x(6);
        for (auto& v : x) v = u(rng);
        x /= x.sum();
        const auto& out = vae.decoder_layers().back();
        vae.weight(out).setZero();
        vae.bias(out) = x.array().log().matrix();
        const auto l = vae.loss(x, standard_normal<double>(2, 1, rng));
        CHECK(std::abs(l.recon_kld) <= 1e-9);
        CHECK(l.latent_kl >= 0.0);
        const Eigen::VectorXd xhat = vae.decode(Eigen::VectorXd::Zero(2)).col(0);
        CHECK(std::abs(xhat.sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("VAE construction") {
    auto c = tiny_config();
    Vae<float> a(c), b(c);
    CHECK(a.parameters() == b.parameters());
    c.seed = 4;
    CHECK(Vae<float>(c).parameters() != a.parameters());

    VaeConfig full;
    full.latent_dim = 20;
    Vae<float> big(full);
    CHECK(big.mu_head().out == 20);
    CHECK(big.encode(Eigen::MatrixXf::Constant(2400, 1, 1.0F / 2400)).rows() == 20);

    c.hidden_dims = {};
    Vae<float> flat(c);
    CHECK(flat.encoder_layers().empty());
    CHECK(flat.decoder_layers().size() == 1);

    CHECK_THROWS(Vae<float>(VaeConfig{.latent_dim = 0}));
    CHECK_THROWS(flat.loss(Eigen::MatrixXf::Zero(6, 1), Eigen::MatrixXf::Zero(2, 1)));
}

TEST_CASE("VAE training") {
    VaeConfig c;
    c.input_dim = 2400;
    c.hidden_dims = {32};
    c.latent_dim = 4;
    c.batch_size = 50;
    c.learning_rate = 2e-3;
    c.epochs = 30;
    c.seed = 9;
    const Eigen::MatrixXf X = template_spectra(2400, 2, 250, 17);

    Vae<float> model(c);
    const auto history = train_vae<float>(model, X, c);
    REQUIRE(history.size() == 30);
    CHECK(history.back() < history.front());

    SUBCASE("zero learning rate leaves the loss unchanged") {
        auto frozen_cfg = c;
        frozen_cfg.learning_rate = 0.0;
        frozen_cfg.epochs = 3;
        Vae<float> frozen(frozen_cfg);
        const auto before = frozen.parameters();
        const auto h = train_vae<float>(frozen, X, frozen_cfg);
        CHECK(h[0] == h[1]);
        CHECK(h[1] == h[2]);
        CHECK(frozen.parameters() == before);
    }
    SUBCASE("same seed, same history and encodings") {
        auto short_cfg = c;
        short_cfg.epochs = 3;
        Vae<float> m1(short_cfg), m2(short_cfg);
        CHECK(train_vae<float>(m1, X, short_cfg) == train_vae<float>(m2, X, short_cfg));
        CHECK(m1.encode(X.leftCols(5)) == m2.encode(X.leftCols(5)));
        CHECK(m1.encode(X.leftCols(5)) == m1.encode(X.leftCols(5)));
    }
}

TEST_CASE("latent distances follow spectral divergence between templates") {
    VaeConfig c;
    c.input_dim = 2400;
    c.hidden_dims = {32};
    c.latent_dim = 4;
    c.batch_size = 10;
    c.learning_rate = 2e-3;
    c.epochs = 30;
    c.seed = 10;
    // at unit KL weight the encoder mean shrinks toward zero on near-discrete
    // data; a weaker prior keeps the template geometry well above noise
    c.kl_weight = 0.1;
    std::vector<int> which;
    const Eigen::MatrixXf X = template_spectra(2400, 3, 150, 23, &which);
    Vae<float> model(c);
    train_vae<float>(model, X, c);
    const Eigen::MatrixXf Z = model.encode(X);

    Rng rng(29);
    std::uniform_int_distribution<Eigen::Index> pick(0, X.cols() - 1);
    int checked = 0, satisfied = 0;
    while (checked < 200) {
        const auto i = pick(rng), j = pick(rng), k = pick(rng);
        if (i == j || which[i] != which[j] || which[k] == which[i]) continue;
        const double d12 = kl_divergence(X.col(i).cast<double>(), X.col(j).cast<double>());
        const double d13 = kl_divergence(X.col(i).cast<double>(), X.col(k).cast<double>());
        REQUIRE(d12 < d13);
        ++checked;
        if ((Z.col(i) - Z.col(j)).norm() < (Z.col(i) - Z.col(k)).norm()) ++satisfied;
    }
    CHECK(satisfied >= 180);
}
