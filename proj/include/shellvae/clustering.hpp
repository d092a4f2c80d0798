// Lloyd's K-means with k-means++ seeding, and the feasible-region
// statistics computed from a clustering: total sum of squares TSS, the
// within-cluster variance W and the collapse loss delta_collapse. All three
// use the actual mean of the clustered data (the shell transform does not
// preserve a zero mean exactly), which makes TSS = W + delta_collapse hold
// to floating-point accuracy for any assignment whose centers are the
// assignment means.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "shellvae/matrix.hpp"
#include "shellvae/rng.hpp"

namespace shellvae {

struct Clustering {
    std::size_t k{0};
    std::vector<std::size_t> assignments;  // c(x'_i), length N
    Matrix centers;                        // K x d
    Vec proportions;                       // pi_k = |C_k| / N
    std::size_t iterations_run{0};
    Vec wcss_trace;                        // within-cluster sum of squares per Lloyd iteration
};

struct FeasibleRegion {
    double tss{0.0};
    double w{0.0};
    double delta_collapse{0.0};
    Vec data_mean;  // actual mean of the clustered data
    Clustering clustering;

    // Theorem precondition, reported but not enforced.
    bool feasible() const { return w < delta_collapse; }
};

namespace detail {

inline std::size_t nearest_center(const double* x, const Matrix& centers) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.rows; ++k) {
        const double d = squared_distance(x, centers.row(k), centers.cols);
        if (d < best_d) {  // strict: ties keep the lowest index
            best_d = d;
            best = k;
        }
    }
    return best;
}

inline Matrix centers_from_assignments(const DataMatrix& data,
                                       const std::vector<std::size_t>& assignments,
                                       std::size_t k, std::vector<std::size_t>& counts) {
    Matrix centers(k, data.cols, 0.0);
    counts.assign(k, 0);
    for (std::size_t i = 0; i < data.rows; ++i) {
        const std::size_t c = assignments[i];
        ++counts[c];
        const double* r = data.row(i);
        double* cr = centers.row(c);
        for (std::size_t j = 0; j < data.cols; ++j) cr[j] += r[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) continue;
        double* cr = centers.row(c);
        for (std::size_t j = 0; j < data.cols; ++j) cr[j] /= static_cast<double>(counts[c]);
    }
    return centers;
}

// k-means++ seeding: first center uniform, then D^2 sampling. When all
// remaining distances are zero (duplicate points), fall back to the lowest
// unchosen index.
inline Matrix kmeanspp_seed(const DataMatrix& data, std::size_t k, Rng& rng) {
    const std::size_t n = data.rows;
    Matrix centers(k, data.cols);
    std::vector<std::size_t> chosen;

    const std::size_t first = static_cast<std::size_t>(rng.below(n));
    chosen.push_back(first);
    std::copy_n(data.row(first), data.cols, centers.row(0));

    Vec dist2(n);
    for (std::size_t i = 0; i < n; ++i) {
        dist2[i] = squared_distance(data.row(i), centers.row(0), data.cols);
    }

    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double d : dist2) total += d;

        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += dist2[i];
                if (cum > r) {
                    pick = i;
                    break;
                }
            }
        } else {
            for (std::size_t i = 0; i < n; ++i) {
                if (std::find(chosen.begin(), chosen.end(), i) == chosen.end()) {
                    pick = i;
                    break;
                }
            }
        }
        chosen.push_back(pick);
        std::copy_n(data.row(pick), data.cols, centers.row(c));
        for (std::size_t i = 0; i < n; ++i) {
            dist2[i] = std::min(dist2[i], squared_distance(data.row(i), centers.row(c), data.cols));
        }
    }
    return centers;
}

}  // namespace detail

// Recompute centers and proportions from a given assignment. Used for the
// identity property (which holds for any assignment, not only converged
// K-means) and by the random-assignment sweeps.
inline Clustering clustering_from_assignments(const DataMatrix& data,
                                              const std::vector<std::size_t>& assignments,
                                              std::size_t k) {
    require(assignments.size() == data.rows, "clustering_from_assignments: length mismatch");
    for (std::size_t a : assignments) {
        require(a < k, "clustering_from_assignments: assignment index out of range");
    }
    std::vector<std::size_t> counts;
    Clustering out;
    out.k = k;
    out.assignments = assignments;
    out.centers = detail::centers_from_assignments(data, assignments, k, counts);
    for (std::size_t c = 0; c < k; ++c) {
        require(counts[c] > 0,
                "clustering_from_assignments: cluster " + std::to_string(c) + " is empty");
    }
    out.proportions.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        out.proportions[c] = static_cast<double>(counts[c]) / static_cast<double>(data.rows);
    }
    return out;
}

inline Clustering kmeans(const DataMatrix& data, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters = 300, double tol = 1e-8) {
    require(k >= 1, "kmeans: K must be at least 1");
    require(k <= data.rows, "kmeans: K = " + std::to_string(k) + " exceeds N = " +
                                std::to_string(data.rows));

    Rng rng(seed);
    Matrix centers = detail::kmeanspp_seed(data, k, rng);

    const std::size_t n = data.rows;
    std::vector<std::size_t> assignments(n, 0);
    std::vector<std::size_t> counts;
    Clustering out;
    out.k = k;

    for (std::size_t iter = 0; iter < max_iters; ++iter) {
        for (std::size_t i = 0; i < n; ++i) {
            assignments[i] = detail::nearest_center(data.row(i), centers);
        }

        // Empty-cluster repair: hand the point farthest from its center to
        // the empty cluster, then continue Lloyd.
        counts.assign(k, 0);
        for (std::size_t a : assignments) ++counts[a];
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) continue;
            double far_d = -1.0;
            std::size_t far_i = n;
            for (std::size_t i = 0; i < n; ++i) {
                if (counts[assignments[i]] < 2) continue;
                const double d =
                    squared_distance(data.row(i), centers.row(assignments[i]), data.cols);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            if (far_i == n) {
                throw std::runtime_error("kmeans: cluster " + std::to_string(c) +
                                         " cannot be repopulated");
            }
            --counts[assignments[far_i]];
            assignments[far_i] = c;
            ++counts[c];
        }

        Matrix new_centers = detail::centers_from_assignments(data, assignments, k, counts);
        double max_move = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            max_move = std::max(
                max_move, std::sqrt(squared_distance(new_centers.row(c), centers.row(c), data.cols)));
        }
        centers = std::move(new_centers);
        out.iterations_run = iter + 1;

        double wcss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            wcss += squared_distance(data.row(i), centers.row(assignments[i]), data.cols);
        }
        out.wcss_trace.push_back(wcss);

        if (max_move < tol) break;
    }

    out.assignments = std::move(assignments);
    out.centers = std::move(centers);
    out.proportions.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        out.proportions[c] = static_cast<double>(counts[c]) / static_cast<double>(n);
    }
    return out;
}

// TSS, W and delta_collapse of a clustering, all against the actual data
// mean. TSS = W + delta_collapse is the identity the pipeline later verifies.
inline FeasibleRegion feasible_region(const DataMatrix& data, const Clustering& clustering) {
    require(clustering.assignments.size() == data.rows,
            "feasible_region: assignment length does not match data");

    FeasibleRegion region;
    region.data_mean = column_means(data);
    region.clustering = clustering;

    const std::size_t n = data.rows;
    double tss = 0.0;
    double w = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* r = data.row(i);
        tss += squared_distance(r, region.data_mean.data(), data.cols);
        w += squared_distance(r, clustering.centers.row(clustering.assignments[i]), data.cols);
    }
    region.tss = tss / static_cast<double>(n);
    region.w = w / static_cast<double>(n);

    double delta = 0.0;
    for (std::size_t c = 0; c < clustering.k; ++c) {
        delta += clustering.proportions[c] *
                 squared_distance(region.data_mean.data(), clustering.centers.row(c), data.cols);
    }
    region.delta_collapse = delta;
    return region;
}

// Relative residual of the TSS = W + delta identity; callers assert < 1e-9.
// The tiny floor guards the zero-variance case against 0/0.
inline double verify_identity(const FeasibleRegion& region) {
    const double tiny = 1e-30;
    return std::abs(region.tss - (region.w + region.delta_collapse)) / std::max(region.tss, tiny);
}

}  // namespace shellvae
