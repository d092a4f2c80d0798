#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "shellvae/checkpoint.hpp"
#include "shellvae/vae.hpp"
#include "support/probes.hpp"

using namespace shellvae;

namespace {

VaeModel zero_weight_vae(std::size_t d, std::size_t n) {
    Rng rng(1);
    VaeModel model = make_vae(d, n, {4}, {4}, 1.0, 1);
    for (Layer& l : model.encoder.layers) {
        for (double& w : l.weight.v) w = 0.0;
    }
    for (Layer& l : model.decoder.layers) {
        for (double& w : l.weight.v) w = 0.0;
    }
    return model;
}

// Closed-form KL of N(mu, s^2) against N(0, 1) via direct quadrature of the
// integrand q(z) * (log q(z) - log p(z)).
double kl_by_quadrature(double mu, double logvar) {
    const double var = std::exp(logvar);
    const double sd = std::sqrt(var);
    const double lo = mu - 12.0 * sd - 12.0;
    const double hi = mu + 12.0 * sd + 12.0;
    const std::size_t steps = 200000;
    const double h = (hi - lo) / static_cast<double>(steps);
    const double log_norm_q = -0.5 * std::log(2.0 * 3.14159265358979323846 * var);
    const double log_norm_p = -0.5 * std::log(2.0 * 3.14159265358979323846);
    double acc = 0.0;
    for (std::size_t i = 0; i <= steps; ++i) {
        const double z = lo + h * static_cast<double>(i);
        const double log_q = log_norm_q - (z - mu) * (z - mu) / (2.0 * var);
        const double log_p = log_norm_p - z * z / 2.0;
        const double f = std::exp(log_q) * (log_q - log_p);
        const double w = (i == 0 || i == steps) ? 0.5 : 1.0;  // trapezoid
        acc += w * f;
    }
    return acc * h;
}

}  // namespace

TEST_CASE("encode: zero-weight encoder maps everything to mu = 0, logvar = 0") {
    VaeModel model = zero_weight_vae(5, 3);
    Rng rng(2);
    DataMatrix x = testsupport::random_matrix(7, 5, rng);
    auto [mu, logvar] = encode(model, x);
    CHECK(mu.rows == 7);
    CHECK(mu.cols == 3);
    CHECK(logvar.rows == 7);
    CHECK(logvar.cols == 3);
    for (double v : mu.v) CHECK(v == 0.0);
    for (double v : logvar.v) CHECK(v == 0.0);
}

TEST_CASE("encode: identity single-layer encoder splits the input halves into the heads") {
    // d = 2n, encoder = single identity layer: mu is the first half of the
    // input, logvar the second half.
    const std::size_t n = 2;
    VaeModel model;
    Layer l;
    l.weight = Matrix(2 * n, 2 * n, 0.0);
    for (std::size_t i = 0; i < 2 * n; ++i) l.weight.at(i, i) = 1.0;
    l.bias = Vec(2 * n, 0.0);
    l.act = Activation::identity;
    model.encoder.layers.push_back(l);
    model.decoder = make_vae(2 * n, n, {3}, {3}, 1.0, 1).decoder;
    model.latent_dim = n;
    model.sigma_sq = 1.0;

    DataMatrix x(1, 4);
    x.at(0, 0) = 0.3;
    x.at(0, 1) = -0.7;
    x.at(0, 2) = 1.1;
    x.at(0, 3) = 2.2;
    auto [mu, logvar] = encode(model, x);
    CHECK(mu.at(0, 0) == doctest::Approx(0.3));
    CHECK(mu.at(0, 1) == doctest::Approx(-0.7));
    CHECK(logvar.at(0, 0) == doctest::Approx(1.1));
    CHECK(logvar.at(0, 1) == doctest::Approx(2.2));
}

TEST_CASE("encode: logvar head is clamped to [-10, 10]") {
    const std::size_t n = 1;
    VaeModel model;
    Layer l;
    l.weight = Matrix(2, 2, 0.0);
    l.bias = {0.0, 25.0};  // raw logvar head fixed at 25
    l.act = Activation::identity;
    model.encoder.layers.push_back(l);
    model.decoder = make_vae(2, n, {2}, {2}, 1.0, 1).decoder;
    model.latent_dim = n;
    model.sigma_sq = 1.0;

    DataMatrix x(1, 2, 0.0);
    auto logvar = encode(model, x).second;
    CHECK(logvar.at(0, 0) == 10.0);
}

TEST_CASE("reparameterize: forced noise fixtures") {
    Matrix mu(2, 2);
    mu.v = {0.5, -1.0, 2.0, 0.0};
    Matrix logvar(2, 2, 0.0);

    Matrix eps0(2, 2, 0.0);
    LatentBatch lb = reparameterize_with_noise(mu, logvar, eps0);
    CHECK(lb.z.v == mu.v);

    Matrix eps1(2, 2, 1.0);
    lb = reparameterize_with_noise(mu, logvar, eps1);
    for (std::size_t i = 0; i < 4; ++i) CHECK(lb.z.v[i] == doctest::Approx(mu.v[i] + 1.0));
}

TEST_CASE("reparameterize: empirical mean and variance of the noise stream") {
    const std::size_t draws = 100000;
    Matrix mu(draws, 2, 0.0);
    Matrix logvar(draws, 2, 0.0);
    Rng noise(20250808);
    LatentBatch lb = reparameterize(mu, logvar, noise);

    for (std::size_t j = 0; j < 2; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < draws; ++i) mean += lb.z.at(i, j);
        mean /= static_cast<double>(draws);
        double var = 0.0;
        for (std::size_t i = 0; i < draws; ++i) {
            const double d = lb.z.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(draws);
        CHECK(std::abs(mean) < 0.02);
        CHECK(var > 0.97);
        CHECK(var < 1.03);
    }
}

TEST_CASE("decode: zero-weight decoder returns its bias for any latent") {
    VaeModel model = zero_weight_vae(4, 2);
    Vec& bias = model.decoder.layers.back().bias;
    bias = {0.1, -0.2, 0.3, 0.4};
    Rng rng(3);
    Matrix z = testsupport::random_matrix(6, 2, rng);
    DataMatrix xhat = decode(model, z);
    CHECK(xhat.rows == 6);
    CHECK(xhat.cols == 4);
    for (std::size_t i = 0; i < 6; ++i) {
        for (std::size_t j = 0; j < 4; ++j) CHECK(xhat.at(i, j) == doctest::Approx(bias[j]));
    }
}

TEST_CASE("decode: matches a duplicate straight-line evaluation") {
    Rng rng(4);
    VaeModel model = make_vae(5, 3, {6}, {6}, 1.0, 99);
    Matrix z = testsupport::random_matrix(4, 3, rng);
    DataMatrix xhat = decode(model, z);

    for (std::size_t i = 0; i < z.rows; ++i) {
        // hidden = relu(W0 z + b0); out = W1 hidden + b1
        const Layer& l0 = model.decoder.layers[0];
        const Layer& l1 = model.decoder.layers[1];
        Vec h(l0.out_size());
        for (std::size_t o = 0; o < l0.out_size(); ++o) {
            double s = l0.bias[o];
            for (std::size_t j = 0; j < 3; ++j) s += l0.weight.at(o, j) * z.at(i, j);
            h[o] = s > 0.0 ? s : 0.0;
        }
        for (std::size_t o = 0; o < l1.out_size(); ++o) {
            double s = l1.bias[o];
            for (std::size_t j = 0; j < l0.out_size(); ++j) s += l1.weight.at(o, j) * h[j];
            CHECK(xhat.at(i, o) == doctest::Approx(s).epsilon(1e-12));
        }
    }
}

TEST_CASE("kl_gaussian: closed-form fixtures") {
    Matrix mu(1, 1, 0.0);
    Matrix logvar(1, 1, 0.0);
    CHECK(kl_gaussian(mu, logvar) == 0.0);

    mu.at(0, 0) = 1.0;
    CHECK(kl_gaussian(mu, logvar) == doctest::Approx(0.5));
}

TEST_CASE("kl_gaussian: matches 1D quadrature on random inputs") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        const double m = 2.0 * rng.normal();
        const double lv = rng.uniform() * 2.0 - 1.0;
        Matrix mu(1, 1, m);
        Matrix logvar(1, 1, lv);
        const double closed = kl_gaussian(mu, logvar);
        const double integral = kl_by_quadrature(m, lv);
        CHECK(std::abs(closed - integral) < 1e-4);
    }
}

TEST_CASE("kl_gaussian: nonnegative, zero only at the prior") {
    Rng rng(6);
    for (int trial = 0; trial < 200; ++trial) {
        Matrix mu = testsupport::random_matrix(3, 4, rng);
        Matrix logvar = testsupport::random_matrix(3, 4, rng, 0.8);
        const double kl = kl_gaussian(mu, logvar);
        CHECK(kl >= 0.0);
        double magnitude = 0.0;
        for (double v : mu.v) magnitude += std::abs(v);
        for (double v : logvar.v) magnitude += std::abs(v);
        if (magnitude > 1e-6) CHECK(kl > 0.0);
    }
    Matrix mu(2, 3, 0.0);
    Matrix logvar(2, 3, 0.0);
    CHECK(kl_gaussian(mu, logvar) < 1e-12);
}

TEST_CASE("recon_nll: fixtures and sigma^2 monotonicity") {
    // Perfect reconstruction leaves only the normalizing constant.
    Rng rng(7);
    DataMatrix x = testsupport::random_matrix(5, 3, rng);
    const double sigma_sq = 0.7;
    CHECK(recon_nll(x, x, sigma_sq) ==
          doctest::Approx(1.5 * std::log(2.0 * 3.14159265358979323846 * sigma_sq)));

    // d = 1, sigma^2 = 1, residual 2.
    DataMatrix a(1, 1, 0.0), b(1, 1, 2.0);
    CHECK(recon_nll(a, b, 1.0) ==
          doctest::Approx(2.0 + 0.5 * std::log(2.0 * 3.14159265358979323846)));

    // Doubling sigma^2 halves the quadratic part.
    const double quad1 = recon_nll(a, b, 1.0) - 0.5 * std::log(2.0 * 3.14159265358979323846);
    const double quad2 =
        recon_nll(a, b, 2.0) - 0.5 * std::log(2.0 * 3.14159265358979323846 * 2.0);
    CHECK(quad2 == doctest::Approx(0.5 * quad1));
}

TEST_CASE("checkpoint: save/load round-trip is bit-exact") {
    VaeModel model = make_vae(6, 3, {8, 5}, {5, 8}, 0.123456789012345, 77);
    Seeds seeds{11, 22, 33, 44, 55};
    const std::string path = "roundtrip_test.ckpt";
    save_checkpoint(model, seeds, path);
    auto [loaded, lseeds] = load_checkpoint(path);
    std::remove(path.c_str());

    CHECK(loaded.latent_dim == model.latent_dim);
    CHECK(loaded.sigma_sq == model.sigma_sq);
    CHECK(lseeds.init == 11);
    CHECK(lseeds.kmeans == 55);
    REQUIRE(loaded.encoder.layers.size() == model.encoder.layers.size());
    for (std::size_t k = 0; k < model.encoder.layers.size(); ++k) {
        CHECK(loaded.encoder.layers[k].weight.v == model.encoder.layers[k].weight.v);
        CHECK(loaded.encoder.layers[k].bias == model.encoder.layers[k].bias);
        CHECK(loaded.encoder.layers[k].act == model.encoder.layers[k].act);
    }
    for (std::size_t k = 0; k < model.decoder.layers.size(); ++k) {
        CHECK(loaded.decoder.layers[k].weight.v == model.decoder.layers[k].weight.v);
        CHECK(loaded.decoder.layers[k].bias == model.decoder.layers[k].bias);
    }
}

TEST_CASE("checkpoint: bad magic is rejected") {
    const std::string path = "bad_magic_test.ckpt";
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOTACKPTxxxxxxxxxxxxxxxx";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), std::runtime_error);
    std::remove(path.c_str());
}

TEST_CASE("fixed noise makes the objective a deterministic function of parameters") {
    Rng rng(9);
    auto probe = testsupport::make_smooth_probe(rng);
    const double a = probe.loss_at(probe.flat_params());
    const double b = probe.loss_at(probe.flat_params());
    CHECK(a == b);
}
