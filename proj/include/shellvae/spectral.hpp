// Covariance matrix and its largest eigenvalue. The top eigenvalue of the
// data covariance sets the decoder-variance dial for the violating
// conditions, so this is the one spectral quantity the pipeline needs.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "shellvae/matrix.hpp"
#include "shellvae/rng.hpp"

namespace shellvae {

// Population covariance (1/N) * sum (x_i - mean)(x_i - mean)^T.
inline Matrix covariance_matrix(const DataMatrix& data) {
    require(data.rows >= 2, "covariance_matrix: need at least 2 samples");
    const std::size_t d = data.cols;
    const Vec mean = column_means(data);

    Matrix cov(d, d, 0.0);
    Vec centered(d);
    for (std::size_t i = 0; i < data.rows; ++i) {
        const double* r = data.row(i);
        for (std::size_t j = 0; j < d; ++j) centered[j] = r[j] - mean[j];
        for (std::size_t a = 0; a < d; ++a) {
            const double ca = centered[a];
            double* crow = cov.row(a);
            for (std::size_t b = 0; b < d; ++b) crow[b] += ca * centered[b];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(data.rows);
    for (double& x : cov.v) x *= inv_n;
    return cov;
}

struct EigenNonConvergence : std::runtime_error {
    double last_estimate;
    explicit EigenNonConvergence(double estimate, std::size_t iters)
        : std::runtime_error("top_eigenvalue: no convergence after " + std::to_string(iters) +
                             " iterations, last estimate " + std::to_string(estimate)),
          last_estimate(estimate) {}
};

namespace detail {

inline bool power_iterate(const Matrix& m, Vec v, double tol, std::size_t max_iters,
                          double& lambda_out, std::size_t& iters_used) {
    const std::size_t d = m.rows;
    Vec w(d);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t it = 0; it < max_iters; ++it) {
        for (std::size_t a = 0; a < d; ++a) w[a] = dot(m.row(a), v.data(), d);
        const double rayleigh = dot(v.data(), w.data(), d);
        const double wnorm = std::sqrt(squared_norm(w.data(), d));
        iters_used = it + 1;
        if (wnorm < 1e-300) {
            // v lies in the nullspace; caller decides whether to restart.
            lambda_out = 0.0;
            return true;
        }
        if (std::abs(rayleigh - prev) < tol) {
            lambda_out = rayleigh;
            return true;
        }
        prev = rayleigh;
        for (std::size_t a = 0; a < d; ++a) v[a] = w[a] / wnorm;
    }
    lambda_out = prev;
    return false;
}

}  // namespace detail

// Largest eigenvalue of a symmetric PSD matrix by power iteration.
// Start vector is the normalized all-ones vector; if that run stalls in the
// nullspace or converges suspiciously fast (the start vector may be an exact
// non-top eigenvector), one fixed-seed random restart is taken and the
// larger estimate wins.
inline double top_eigenvalue(const Matrix& m, double tol = 1e-10, std::size_t max_iters = 10000) {
    require(m.rows == m.cols && m.rows >= 1, "top_eigenvalue: matrix must be square");

    const std::size_t d = m.rows;
    Vec ones(d, 1.0 / std::sqrt(static_cast<double>(d)));

    double lambda = 0.0;
    std::size_t iters = 0;
    const bool converged = detail::power_iterate(m, ones, tol, max_iters, lambda, iters);
    if (!converged) throw EigenNonConvergence(lambda, max_iters);

    if (iters <= 3) {
        Rng rng(0x5EEDFACEULL);
        Vec probe(d);
        for (double& x : probe) x = rng.normal();
        const double pnorm = std::sqrt(squared_norm(probe.data(), d));
        for (double& x : probe) x /= pnorm;

        double lambda2 = 0.0;
        std::size_t iters2 = 0;
        if (!detail::power_iterate(m, probe, tol, max_iters, lambda2, iters2)) {
            throw EigenNonConvergence(lambda2, max_iters);
        }
        lambda = std::max(lambda, lambda2);
    }
    return lambda;
}

}  // namespace shellvae
