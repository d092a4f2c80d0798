// Evaluation metrics: average KL against the prior, active latent units,
// feasible-region coverage and norm satisfaction, plus the collapse
// verdict. Everything is evaluated at the mean latent (eps = 0), so all
// metrics are deterministic.

#pragma once

#include <cmath>
#include <vector>

#include "shellvae/clustering.hpp"
#include "shellvae/constraints.hpp"
#include "shellvae/geometry.hpp"
#include "shellvae/matrix.hpp"
#include "shellvae/vae.hpp"

namespace shellvae {

inline constexpr double kActiveUnitThreshold = 0.01;
inline constexpr double kCollapseKlThreshold = 0.1;
inline constexpr std::size_t kCollapseActiveUnitThreshold = 1;

struct EvalResult {
    double avg_kl{0.0};
    std::size_t active_units{0};
    double feasible_coverage_pct{0.0};
    double norm_satisfaction_pct{0.0};
    Vec per_dim_variance;
    double recon_error{0.0};  // per-dimension mean squared reconstruction error
};

// Mean per-sample KL; encoder outputs only, no sampling.
inline double avg_kl(const VaeModel& model, const DataMatrix& data) {
    require(data.rows >= 1, "avg_kl: empty data");
    auto [mu, logvar] = encode(model, data);
    return kl_gaussian(mu, logvar);
}

// Variance of the posterior mean across the dataset, per latent dimension.
inline Vec posterior_mean_variances(const Matrix& mu) {
    require(mu.rows >= 2, "posterior_mean_variances: need at least 2 samples");
    const Vec mean = column_means(mu);
    Vec var(mu.cols, 0.0);
    for (std::size_t i = 0; i < mu.rows; ++i) {
        const double* r = mu.row(i);
        for (std::size_t j = 0; j < mu.cols; ++j) {
            const double d = r[j] - mean[j];
            var[j] += d * d;
        }
    }
    for (double& v : var) v /= static_cast<double>(mu.rows);
    return var;
}

inline std::size_t active_units(const VaeModel& model, const DataMatrix& data,
                                double threshold = kActiveUnitThreshold) {
    auto [mu, logvar] = encode(model, data);
    (void)logvar;
    const Vec var = posterior_mean_variances(mu);
    std::size_t count = 0;
    for (double v : var) {
        if (v > threshold) ++count;
    }
    return count;
}

// Fraction (in percent) of reconstructions whose per-sample cluster loss
// falls inside [W, delta], both ends inclusive.
inline double coverage_from_recons(const DataMatrix& xhat,
                                   const std::vector<std::size_t>& assignments,
                                   const Matrix& centers, double w, double delta) {
    const ClusterLossResult cl = cluster_loss(xhat, assignments, centers);
    std::size_t inside = 0;
    for (double v : cl.per_sample) {
        if (v >= w && v <= delta) ++inside;
    }
    return 100.0 * static_cast<double>(inside) / static_cast<double>(cl.per_sample.size());
}

// Fraction (in percent) of reconstructions with norm in [r_min, r_max].
inline double norm_satisfaction_from_recons(const DataMatrix& xhat, const ShellParams& params) {
    std::size_t inside = 0;
    for (std::size_t i = 0; i < xhat.rows; ++i) {
        const double norm = std::sqrt(squared_norm(xhat.row(i), xhat.cols));
        if (norm >= params.r_min && norm <= params.r_max) ++inside;
    }
    return 100.0 * static_cast<double>(inside) / static_cast<double>(xhat.rows);
}

// Mean-latent reconstructions of the given rows.
inline DataMatrix mean_latent_recons(const VaeModel& model, const DataMatrix& data) {
    auto [mu, logvar] = encode(model, data);
    (void)logvar;
    return decode(model, mu);
}

inline double feasible_coverage(const VaeModel& model, const ShellDataset& shell,
                                const FeasibleRegion& region) {
    const DataMatrix xhat = mean_latent_recons(model, shell.data);
    return coverage_from_recons(xhat, region.clustering.assignments, region.clustering.centers,
                                region.w, region.delta_collapse);
}

inline double norm_satisfaction(const VaeModel& model, const ShellDataset& shell) {
    const DataMatrix xhat = mean_latent_recons(model, shell.data);
    return norm_satisfaction_from_recons(xhat, shell.params);
}

// Collapsed iff the posterior hugs the prior AND essentially no latent
// dimension varies. Both conditions are required.
inline bool collapse_verdict(double avg_kl_value, std::size_t active_unit_count,
                             double kl_threshold = kCollapseKlThreshold,
                             std::size_t au_threshold = kCollapseActiveUnitThreshold) {
    return avg_kl_value < kl_threshold && active_unit_count <= au_threshold;
}

inline bool collapse_verdict(const EvalResult& result,
                             double kl_threshold = kCollapseKlThreshold,
                             std::size_t au_threshold = kCollapseActiveUnitThreshold) {
    return collapse_verdict(result.avg_kl, result.active_units, kl_threshold, au_threshold);
}

// Full metric suite over the given rows (with their region assignments).
inline EvalResult evaluate(const VaeModel& model, const DataMatrix& data,
                           const std::vector<std::size_t>& assignments,
                           const FeasibleRegion& region, const ShellParams& shell_params,
                           double au_threshold = kActiveUnitThreshold) {
    require(data.rows >= 2, "evaluate: need at least 2 samples");
    auto [mu, logvar] = encode(model, data);

    EvalResult res;
    res.avg_kl = kl_gaussian(mu, logvar);
    res.per_dim_variance = posterior_mean_variances(mu);
    for (double v : res.per_dim_variance) {
        if (v > au_threshold) ++res.active_units;
    }

    const DataMatrix xhat = decode(model, mu);
    res.feasible_coverage_pct = coverage_from_recons(xhat, assignments,
                                                     region.clustering.centers, region.w,
                                                     region.delta_collapse);
    res.norm_satisfaction_pct = norm_satisfaction_from_recons(xhat, shell_params);

    double sq = 0.0;
    for (std::size_t i = 0; i < data.rows; ++i) {
        sq += squared_distance(data.row(i), xhat.row(i), data.cols);
    }
    res.recon_error = sq / (static_cast<double>(data.rows) * static_cast<double>(data.cols));
    return res;
}

}  // namespace shellvae
