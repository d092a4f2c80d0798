// The cluster-aware reconstruction loss, the boundary penalty that confines
// it to [W, delta_collapse], the norm penalty that keeps decoder outputs
// near the shell, and the assembled training objective. Hard projection of
// outputs onto the shell is deliberately absent: all shaping is via these
// soft terms.

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "shellvae/clustering.hpp"
#include "shellvae/matrix.hpp"

namespace shellvae {

struct ConstraintConfig {
    double lambda_boundary{200.0};
    double lambda_norm{200.0};
    double r_target{0.925};  // (r_min + r_max) / 2 unless overridden
    FeasibleRegion region;
};

struct LossBreakdown {
    double recon_nll{0.0};
    double kl{0.0};
    double boundary_penalty{0.0};
    double norm_penalty{0.0};
    double total{0.0};
    double l_c{0.0};
};

struct ClusterLossResult {
    double value{0.0};        // batch mean, the l_C the boundary penalty acts on
    Vec per_sample;           // ||xhat_i - mu_c(i)||^2, kept for the coverage metric
};

// l_C = (1/B) sum ||xhat_i - mu_c(i)||^2, where c(i) is the cluster of the
// INPUT sample — reconstructions must align with the input's cluster, never
// with whichever center happens to be nearest.
inline ClusterLossResult cluster_loss(const DataMatrix& xhat,
                                      const std::vector<std::size_t>& batch_assignments,
                                      const Matrix& centers) {
    require(batch_assignments.size() == xhat.rows, "cluster_loss: assignment/batch length mismatch");
    require(centers.cols == xhat.cols, "cluster_loss: center dimension mismatch");

    ClusterLossResult res;
    res.per_sample.resize(xhat.rows);
    double total = 0.0;
    for (std::size_t i = 0; i < xhat.rows; ++i) {
        const std::size_t c = batch_assignments[i];
        if (c >= centers.rows) {
            throw std::invalid_argument("cluster_loss: assignment " + std::to_string(c) +
                                        " out of range at row " + std::to_string(i));
        }
        const double d = squared_distance(xhat.row(i), centers.row(c), xhat.cols);
        res.per_sample[i] = d;
        total += d;
    }
    res.value = total / static_cast<double>(xhat.rows);
    return res;
}

// Hinge on both ends of the feasible interval:
// max(0, W - l_C) + max(0, l_C - delta). Zero iff l_C lies in [W, delta].
inline double boundary_penalty(double l_c, double w, double delta) {
    return std::max(0.0, w - l_c) + std::max(0.0, l_c - delta);
}

inline double boundary_penalty(double l_c, const FeasibleRegion& region) {
    return boundary_penalty(l_c, region.w, region.delta_collapse);
}

// d P_boundary / d l_C. Piecewise constant; the subgradient at both kinks is
// taken as 0.
inline double boundary_penalty_slope(double l_c, double w, double delta) {
    if (l_c < w) return -1.0;
    if (l_c > delta) return 1.0;
    return 0.0;
}

// Per-sample form of the boundary penalty: the mean hinge over individual
// cluster-loss values. Zero iff every sample's value lies in [W, delta], so
// minimizing it directly maximizes feasible-region coverage. By Jensen it
// upper-bounds the aggregate hinge, so the collapse-exclusion argument is
// preserved.
inline double boundary_penalty_per_sample(const Vec& per_sample, double w, double delta) {
    double total = 0.0;
    for (double v : per_sample) total += boundary_penalty(v, w, delta);
    return total / static_cast<double>(per_sample.size());
}

// (1/B) sum (||xhat_i|| - r_target)^2.
inline double norm_penalty(const DataMatrix& xhat, double r_target) {
    require(r_target > 0.0, "norm_penalty: r_target must be positive");
    double total = 0.0;
    for (std::size_t i = 0; i < xhat.rows; ++i) {
        const double dev = std::sqrt(squared_norm(xhat.row(i), xhat.cols)) - r_target;
        total += dev * dev;
    }
    return total / static_cast<double>(xhat.rows);
}

// total = recon_nll + beta * kl + lambda_b * P_boundary + lambda_n * P_norm.
inline LossBreakdown total_loss(double recon, double kl, double l_c, double boundary_pen,
                                double norm_pen, double beta, double lambda_boundary,
                                double lambda_norm) {
    const auto check = [](double v, const char* name) {
        if (!std::isfinite(v)) {
            throw std::runtime_error(std::string("total_loss: non-finite component '") + name + "'");
        }
    };
    check(recon, "recon_nll");
    check(kl, "kl");
    check(l_c, "l_c");
    check(boundary_pen, "boundary_penalty");
    check(norm_pen, "norm_penalty");

    LossBreakdown out;
    out.recon_nll = recon;
    out.kl = kl;
    out.l_c = l_c;
    out.boundary_penalty = boundary_pen;
    out.norm_penalty = norm_pen;
    out.total = recon + beta * kl + lambda_boundary * boundary_pen + lambda_norm * norm_pen;
    check(out.total, "total");
    return out;
}

}  // namespace shellvae
