#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "shellvae/metrics.hpp"
#include "support/probes.hpp"

using namespace shellvae;

namespace {

VaeModel constant_encoder_vae(std::size_t d, std::size_t n, double mu_value) {
    VaeModel model = make_vae(d, n, {3}, {3}, 1.0, 1);
    for (Layer& l : model.encoder.layers) {
        for (double& w : l.weight.v) w = 0.0;
        for (double& b : l.bias) b = 0.0;
    }
    for (std::size_t j = 0; j < n; ++j) model.encoder.layers.back().bias[j] = mu_value;
    return model;
}

}  // namespace

TEST_CASE("avg_kl: collapsed-to-prior encoder scores exactly zero") {
    VaeModel model = constant_encoder_vae(4, 3, 0.0);
    Rng rng(1);
    DataMatrix x = testsupport::random_matrix(10, 4, rng);
    CHECK(avg_kl(model, x) == 0.0);
}

TEST_CASE("avg_kl: constant mu = 1 with one latent dim gives 0.5") {
    VaeModel model = constant_encoder_vae(4, 1, 1.0);
    Rng rng(2);
    DataMatrix x = testsupport::random_matrix(10, 4, rng);
    CHECK(avg_kl(model, x) == doctest::Approx(0.5));
}

TEST_CASE("avg_kl: agrees with kl_gaussian on the full batch") {
    Rng rng(3);
    VaeModel model = make_vae(5, 3, {6}, {6}, 1.0, 7);
    DataMatrix x = testsupport::random_matrix(30, 5, rng);
    auto [mu, logvar] = encode(model, x);
    CHECK(std::abs(avg_kl(model, x) - kl_gaussian(mu, logvar)) < 1e-12);
}

TEST_CASE("active_units: constant encoder has none") {
    VaeModel model = constant_encoder_vae(4, 5, 3.0);
    Rng rng(4);
    DataMatrix x = testsupport::random_matrix(20, 4, rng);
    CHECK(active_units(model, x) == 0);
}

TEST_CASE("active_units: identity encoder passes unit variance through") {
    // One latent dim fed unit-variance data through an identity weight.
    VaeModel model;
    Layer l;
    l.weight = Matrix(2, 1, 0.0);
    l.weight.at(0, 0) = 1.0;  // mu head = x, logvar head = 0
    l.bias = Vec(2, 0.0);
    l.act = Activation::identity;
    model.encoder.layers.push_back(l);
    model.decoder = make_vae(1, 1, {2}, {2}, 1.0, 1).decoder;
    model.latent_dim = 1;
    model.sigma_sq = 1.0;

    Rng rng(5);
    DataMatrix x(2000, 1);
    for (double& v : x.v) v = rng.normal();
    CHECK(active_units(model, x) == 1);
    CHECK(active_units(model, x, std::numeric_limits<double>::infinity()) == 0);
}

TEST_CASE("coverage and norm satisfaction on constructed reconstructions") {
    // Shell data with a known clustering; drive the metric layer with
    // hand-picked reconstruction matrices.
    Rng rng(6);
    DataMatrix raw = testsupport::random_matrix(100, 4, rng);
    for (std::size_t i = 0; i < 50; ++i) raw.at(i, 0) += 7.0;
    auto centered = center(raw).first;
    ShellDataset shell = shell_transform(centered, ShellParams{}, 8);
    const Clustering c = kmeans(shell.data, 2, 9);
    const FeasibleRegion region = feasible_region(shell.data, c);

    // Ideal decoder: per-sample values are the actual within distances.
    {
        const ClusterLossResult cl = cluster_loss(shell.data, c.assignments, c.centers);
        std::size_t inside = 0;
        for (double v : cl.per_sample) {
            if (v >= region.w && v <= region.delta_collapse) ++inside;
        }
        const double expected = 100.0 * static_cast<double>(inside) / 100.0;
        CHECK(coverage_from_recons(shell.data, c.assignments, c.centers, region.w,
                                   region.delta_collapse) == doctest::Approx(expected));
    }

    // Collapse decoder: every reconstruction is the data mean.
    {
        DataMatrix collapse(100, 4);
        for (std::size_t i = 0; i < 100; ++i) {
            for (std::size_t j = 0; j < 4; ++j) collapse.at(i, j) = region.data_mean[j];
        }
        const ClusterLossResult cl = cluster_loss(collapse, c.assignments, c.centers);
        std::size_t inside = 0;
        for (double v : cl.per_sample) {
            if (v >= region.w && v <= region.delta_collapse) ++inside;
        }
        const double expected = 100.0 * static_cast<double>(inside) / 100.0;
        CHECK(coverage_from_recons(collapse, c.assignments, c.centers, region.w,
                                   region.delta_collapse) == doctest::Approx(expected));
    }

    // Degenerate interval W = delta counts only exact hits.
    CHECK(coverage_from_recons(shell.data, c.assignments, c.centers, 0.123, 0.123) ==
          doctest::Approx(0.0));

    // Norm satisfaction: shell data itself is fully inside, zeros are not,
    // a constructed half/half split scores 50.
    CHECK(norm_satisfaction_from_recons(shell.data, shell.params) == doctest::Approx(100.0));
    DataMatrix zeros(10, 4, 0.0);
    CHECK(norm_satisfaction_from_recons(zeros, shell.params) == doctest::Approx(0.0));
    DataMatrix half(10, 4, 0.0);
    for (std::size_t i = 0; i < 5; ++i) half.at(i, 0) = 0.9;   // inside
    for (std::size_t i = 5; i < 10; ++i) half.at(i, 0) = 3.0;  // outside
    CHECK(norm_satisfaction_from_recons(half, shell.params) == doctest::Approx(50.0));
}

TEST_CASE("norm_satisfaction: decoder with on-shell bias scores 100") {
    VaeModel model = make_vae(4, 2, {3}, {3}, 1.0, 1);
    for (Layer& l : model.decoder.layers) {
        for (double& w : l.weight.v) w = 0.0;
        for (double& b : l.bias) b = 0.0;
    }
    model.decoder.layers.back().bias[0] = 0.925;  // output norm fixed at r_target

    Rng rng(7);
    DataMatrix raw = testsupport::random_matrix(30, 4, rng);
    ShellDataset shell = shell_from_raw(raw, ShellParams{}, 3);
    CHECK(norm_satisfaction(model, shell) == doctest::Approx(100.0));
}

TEST_CASE("collapse_verdict: threshold semantics") {
    CHECK(collapse_verdict(0.01, 0));
    CHECK_FALSE(collapse_verdict(1.80, 6));
    CHECK_FALSE(collapse_verdict(0.05, 5));  // both conditions required
    CHECK_FALSE(collapse_verdict(0.5, 0));
    CHECK(collapse_verdict(0.09, 1));
}

TEST_CASE("evaluate: coverage recomputed from cluster_loss per-sample values matches exactly") {
    Rng rng(8);
    DataMatrix raw = testsupport::random_matrix(80, 5, rng);
    for (std::size_t i = 0; i < 40; ++i) raw.at(i, 2) += 6.0;
    ShellDataset shell = shell_from_raw(raw, ShellParams{}, 2);
    const Clustering c = kmeans(shell.data, 3, 4);
    const FeasibleRegion region = feasible_region(shell.data, c);
    VaeModel model = make_vae(5, 2, {8}, {8}, 1.0, 5);

    const EvalResult res = evaluate(model, shell.data, c.assignments, region, shell.params);

    const DataMatrix xhat = mean_latent_recons(model, shell.data);
    const ClusterLossResult cl = cluster_loss(xhat, c.assignments, c.centers);
    std::size_t inside = 0;
    for (double v : cl.per_sample) {
        if (v >= region.w && v <= region.delta_collapse) ++inside;
    }
    CHECK(res.feasible_coverage_pct ==
          doctest::Approx(100.0 * static_cast<double>(inside) / 80.0));
    CHECK(res.per_dim_variance.size() == 2);
    CHECK(res.active_units <= 2);

    // Metrics are deterministic: a second evaluation is bit-identical.
    const EvalResult res2 = evaluate(model, shell.data, c.assignments, region, shell.params);
    CHECK(res.avg_kl == res2.avg_kl);
    CHECK(res.feasible_coverage_pct == res2.feasible_coverage_pct);
    CHECK(res.norm_satisfaction_pct == res2.norm_satisfaction_pct);
    CHECK(res.recon_error == res2.recon_error);
}
