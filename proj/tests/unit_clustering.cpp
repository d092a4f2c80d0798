#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "shellvae/clustering.hpp"
#include "shellvae/geometry.hpp"
#include "support/probes.hpp"

using namespace shellvae;

namespace {

// The 4-point fixture used throughout: (+-0.9, 0), (+-1.0, 0).
DataMatrix four_point_fixture() {
    DataMatrix x(4, 2, 0.0);
    x.at(0, 0) = 0.9;
    x.at(1, 0) = -0.9;
    x.at(2, 0) = 1.0;
    x.at(3, 0) = -1.0;
    return x;
}

}  // namespace

TEST_CASE("kmeans: 4-point fixture splits by sign with centers at +-0.95") {
    const DataMatrix x = four_point_fixture();
    const Clustering c = kmeans(x, 2, 1);
    REQUIRE(c.k == 2);

    // One center at (0.95, 0), the other at (-0.95, 0), in either order.
    std::set<double> center_x{c.centers.at(0, 0), c.centers.at(1, 0)};
    CHECK(std::abs(*center_x.begin() + 0.95) < 1e-12);
    CHECK(std::abs(*center_x.rbegin() - 0.95) < 1e-12);

    // Assignments split by sign of the x coordinate.
    CHECK(c.assignments[0] == c.assignments[2]);
    CHECK(c.assignments[1] == c.assignments[3]);
    CHECK(c.assignments[0] != c.assignments[1]);
}

TEST_CASE("kmeans: K = N puts every point in its own cluster with W = 0") {
    Rng rng(3);
    DataMatrix x = testsupport::random_matrix(6, 3, rng);
    const Clustering c = kmeans(x, 6, 17);
    std::set<std::size_t> used(c.assignments.begin(), c.assignments.end());
    CHECK(used.size() == 6);
    const FeasibleRegion region = feasible_region(x, c);
    CHECK(region.w == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("kmeans: K = 1 returns the data mean") {
    Rng rng(4);
    DataMatrix x = testsupport::random_matrix(25, 4, rng);
    const Clustering c = kmeans(x, 1, 5);
    const Vec mean = column_means(x);
    for (std::size_t j = 0; j < 4; ++j) {
        CHECK(c.centers.at(0, j) == doctest::Approx(mean[j]).epsilon(1e-12));
    }
    CHECK(c.proportions[0] == doctest::Approx(1.0));
}

TEST_CASE("kmeans: K > N is rejected") {
    DataMatrix x(3, 2, 1.0);
    CHECK_THROWS_AS(kmeans(x, 4, 1), std::invalid_argument);
}

TEST_CASE("kmeans: deterministic given the seed") {
    Rng rng(6);
    DataMatrix x = testsupport::random_matrix(120, 5, rng);
    const Clustering a = kmeans(x, 4, 42);
    const Clustering b = kmeans(x, 4, 42);
    CHECK(a.assignments == b.assignments);
    CHECK(a.centers.v == b.centers.v);
}

TEST_CASE("kmeans: WCSS is non-increasing across Lloyd iterations") {
    Rng rng(8);
    DataMatrix x = testsupport::random_matrix(300, 6, rng);
    const Clustering c = kmeans(x, 5, 11);
    REQUIRE(c.wcss_trace.size() >= 1);
    for (std::size_t i = 1; i < c.wcss_trace.size(); ++i) {
        CHECK(c.wcss_trace[i] <= c.wcss_trace[i - 1] + 1e-9);
    }
}

TEST_CASE("kmeans: centers equal the means of their assigned rows, clusters non-empty") {
    Rng rng(10);
    DataMatrix x = testsupport::random_matrix(90, 4, rng);
    const Clustering c = kmeans(x, 7, 23);

    std::vector<std::size_t> counts(c.k, 0);
    Matrix sums(c.k, 4, 0.0);
    for (std::size_t i = 0; i < x.rows; ++i) {
        ++counts[c.assignments[i]];
        for (std::size_t j = 0; j < 4; ++j) sums.at(c.assignments[i], j) += x.at(i, j);
    }
    double prop_total = 0.0;
    for (std::size_t k = 0; k < c.k; ++k) {
        CHECK(counts[k] > 0);
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(std::abs(c.centers.at(k, j) - sums.at(k, j) / counts[k]) < 1e-10);
        }
        prop_total += c.proportions[k];
    }
    CHECK(std::abs(prop_total - 1.0) < 1e-12);
}

TEST_CASE("kmeans: duplicate points still yield non-empty clusters") {
    DataMatrix x(6, 2, 0.0);
    for (std::size_t i = 0; i < 3; ++i) x.at(i, 0) = 1.0;  // two distinct locations, K = 4
    const Clustering c = kmeans(x, 4, 9);
    std::vector<std::size_t> counts(4, 0);
    for (std::size_t a : c.assignments) ++counts[a];
    for (std::size_t k = 0; k < 4; ++k) CHECK(counts[k] > 0);
}

TEST_CASE("feasible_region: 4-point fixture gives TSS 0.905, W 0.0025, delta 0.9025") {
    const DataMatrix x = four_point_fixture();
    const Clustering c = kmeans(x, 2, 1);
    const FeasibleRegion region = feasible_region(x, c);
    CHECK(region.tss == doctest::Approx(0.905).epsilon(1e-12));
    CHECK(region.w == doctest::Approx(0.0025).epsilon(1e-12));
    CHECK(region.delta_collapse == doctest::Approx(0.9025).epsilon(1e-12));
    CHECK(verify_identity(region) < 1e-12);
    CHECK(region.feasible());
}

TEST_CASE("feasible_region: identical points collapse all three statistics to zero") {
    DataMatrix x(8, 3, 2.5);
    const Clustering c = kmeans(x, 1, 2);
    const FeasibleRegion region = feasible_region(x, c);
    CHECK(region.tss == 0.0);
    CHECK(region.w == 0.0);
    CHECK(region.delta_collapse == 0.0);
    CHECK(verify_identity(region) == 0.0);  // tiny floor guards 0/0
}

TEST_CASE("feasible_region: assignment length mismatch is rejected") {
    Rng rng(1);
    DataMatrix x = testsupport::random_matrix(10, 2, rng);
    Clustering c = kmeans(x, 2, 1);
    c.assignments.pop_back();
    CHECK_THROWS_AS(feasible_region(x, c), std::invalid_argument);
}

TEST_CASE("identity TSS = W + delta holds for random assignments, not only K-means") {
    Rng rng(77);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 10 + rng.below(120);
        const std::size_t d = 2 + rng.below(6);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(n, 8));
        DataMatrix x = testsupport::random_matrix(n, d, rng);

        const auto assignments = testsupport::random_assignments(n, k, rng);
        const Clustering c = clustering_from_assignments(x, assignments, k);
        const FeasibleRegion region = feasible_region(x, c);
        CHECK(verify_identity(region) < 1e-9);

        // delta computed the second way: TSS - W.
        CHECK(std::abs((region.tss - region.w) - region.delta_collapse) <
              1e-9 * std::max(region.tss, 1e-30));
    }
}

TEST_CASE("identity residual stays below 1e-9 on shell data with converged K-means") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 30 + rng.below(200);
        const std::size_t d = 2 + rng.below(10);
        DataMatrix raw = testsupport::random_matrix(n, d, rng);
        auto centered = center(raw).first;
        ShellDataset shell = shell_transform(centered, ShellParams{}, rng.next_u64());
        const std::size_t k = 1 + rng.below(8);
        const Clustering c = kmeans(shell.data, std::min(k, n), rng.next_u64());
        const FeasibleRegion region = feasible_region(shell.data, c);
        CHECK(verify_identity(region) < 1e-9);
    }
}

TEST_CASE("K = 1 region has delta_collapse 0 and an empty feasible interval") {
    Rng rng(12);
    DataMatrix x = testsupport::random_matrix(40, 3, rng);
    const Clustering c = kmeans(x, 1, 3);
    const FeasibleRegion region = feasible_region(x, c);
    CHECK(region.delta_collapse == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(region.feasible());
}
