// Centering and the spherical-shell transform. Each centered sample is
// rescaled onto a shell of radii [r_min, r_max]: the direction is kept, the
// radius is drawn once per sample from a seeded uniform stream and fixed
// thereafter (the transform is a dataset construction step, not a per-epoch
// augmentation).

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "shellvae/matrix.hpp"
#include "shellvae/rng.hpp"

namespace shellvae {

// Rows below this norm cannot be projected onto the shell and are a hard
// error; silently jittering them would corrupt the downstream statistics.
inline constexpr double kZeroNormTolerance = 1e-9;

struct ShellParams {
    double r_min{0.85};
    double r_max{1.0};

    double r_target() const { return 0.5 * (r_min + r_max); }
    bool valid() const { return 0.0 < r_min && r_min < r_max; }
};

struct ShellDataset {
    DataMatrix data;        // transformed samples x'
    ShellParams params;
    Vec original_mean;      // pre-transform global mean of the raw data
    Vec shell_draws;        // the u_i actually used, for reproducibility
};

struct ZeroNormRowError : std::runtime_error {
    std::size_t row_index;
    explicit ZeroNormRowError(std::size_t row)
        : std::runtime_error("shell_transform: row " + std::to_string(row) +
                             " has near-zero norm and cannot be projected onto the shell"),
          row_index(row) {}
};

// Subtract the global mean. Returns the centered data and the mean itself.
inline std::pair<DataMatrix, Vec> center(const DataMatrix& data) {
    require(data.rows >= 1, "center: empty dataset");
    const Vec mean = column_means(data);
    DataMatrix centered(data.rows, data.cols);
    for (std::size_t i = 0; i < data.rows; ++i) {
        const double* src = data.row(i);
        double* dst = centered.row(i);
        for (std::size_t j = 0; j < data.cols; ++j) dst[j] = src[j] - mean[j];
    }
    return {std::move(centered), mean};
}

// x'_i = x^c_i * (r_min + (r_max - r_min) * u_i) / ||x^c_i||, with u_i drawn
// in row order from Rng(seed). Output norms land in [r_min, r_max] and each
// row keeps the direction of its source.
inline ShellDataset shell_transform(const DataMatrix& centered, const ShellParams& params,
                                    std::uint64_t seed) {
    require(params.valid(), "shell_transform: need 0 < r_min < r_max");

    ShellDataset out;
    out.data = DataMatrix(centered.rows, centered.cols);
    out.params = params;
    out.shell_draws.resize(centered.rows);

    Rng rng(seed);
    for (std::size_t i = 0; i < centered.rows; ++i) {
        const double u = rng.uniform();
        out.shell_draws[i] = u;
        const double* src = centered.row(i);
        const double norm = std::sqrt(squared_norm(src, centered.cols));
        if (norm <= kZeroNormTolerance) throw ZeroNormRowError(i);
        const double scale = (params.r_min + (params.r_max - params.r_min) * u) / norm;
        double* dst = out.data.row(i);
        for (std::size_t j = 0; j < centered.cols; ++j) dst[j] = src[j] * scale;
    }
    return out;
}

// Convenience pipeline step: center raw data, transform, and record the
// pre-transform mean in the result.
inline ShellDataset shell_from_raw(const DataMatrix& raw, const ShellParams& params,
                                   std::uint64_t seed) {
    auto [centered, mean] = center(raw);
    ShellDataset shell = shell_transform(centered, params, seed);
    shell.original_mean = std::move(mean);
    return shell;
}

}  // namespace shellvae
