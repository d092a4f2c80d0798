// The optimization loop: Adam over the penalized objective, the two-stage
// protocol with its linear beta ramp, violating-condition setup (sigma^2 as
// a multiple of the data covariance's top eigenvalue), mini-batching and
// checkpointing. The feasible region is computed once in preprocessing and
// stays frozen for the whole run.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shellvae/checkpoint.hpp"
#include "shellvae/clustering.hpp"
#include "shellvae/constraints.hpp"
#include "shellvae/geometry.hpp"
#include "shellvae/matrix.hpp"
#include "shellvae/metrics.hpp"
#include "shellvae/mlp.hpp"
#include "shellvae/rng.hpp"
#include "shellvae/spectral.hpp"
#include "shellvae/vae.hpp"

namespace shellvae {

enum class ConstraintVariant { none, boundary_only, norm_only, full };

// Which decoder pass the penalties act on: the Monte-Carlo reconstruction
// of the ELBO, the representative decode(mu) reconstruction, or both.
enum class PenaltyPath { sampled, mean, both };

inline const char* penalty_path_name(PenaltyPath p) {
    switch (p) {
        case PenaltyPath::sampled: return "sampled";
        case PenaltyPath::mean: return "mean";
        case PenaltyPath::both: return "both";
    }
    return "both";
}

inline PenaltyPath penalty_path_from_name(const std::string& name) {
    if (name == "sampled") return PenaltyPath::sampled;
    if (name == "mean") return PenaltyPath::mean;
    if (name == "both") return PenaltyPath::both;
    throw std::invalid_argument("unknown penalty path '" + name + "'");
}

inline const char* variant_name(ConstraintVariant v) {
    switch (v) {
        case ConstraintVariant::none: return "none";
        case ConstraintVariant::boundary_only: return "boundary";
        case ConstraintVariant::norm_only: return "norm";
        case ConstraintVariant::full: return "full";
    }
    return "full";
}

inline ConstraintVariant variant_from_name(const std::string& name) {
    if (name == "none") return ConstraintVariant::none;
    if (name == "boundary") return ConstraintVariant::boundary_only;
    if (name == "norm") return ConstraintVariant::norm_only;
    if (name == "full") return ConstraintVariant::full;
    throw std::invalid_argument("unknown constraint variant '" + name + "'");
}

struct TrainConfig {
    std::size_t epochs{100};
    std::size_t batch_size{128};
    double learning_rate{1e-3};

    double beta_start{0.1};
    double beta_end{1.0};
    std::size_t beta_ramp_epochs{100};

    bool two_stage{true};
    double stage_one_fraction{0.6};
    bool stage_one_penalties{true};  // strict reading (penalties only in stage two) via false

    // sigma^2 = violation_factor * lambda_max of the training data
    // covariance; 0 disables the rule and sigma_sq_override applies.
    double violation_factor{2.0};
    double sigma_sq_override{1.0};

    ConstraintVariant variant{ConstraintVariant::full};
    double lambda_boundary{200.0};
    double lambda_norm{200.0};
    PenaltyPath penalty_path{PenaltyPath::both};

    std::size_t latent_dim{8};
    std::vector<std::size_t> encoder_hidden{256, 128};
    std::vector<std::size_t> decoder_hidden{128, 256};

    double holdout_fraction{0.1};
    Seeds seeds;

    double adam_beta1{0.9};
    double adam_beta2{0.999};
    double adam_eps{1e-8};

    std::size_t checkpoint_every{0};  // 0 = only at termination (when path set)
    std::string checkpoint_path;
};

struct EpochRecord {
    std::size_t epoch{0};
    double recon_nll{0.0};
    double kl{0.0};
    double l_c{0.0};
    double boundary_penalty{0.0};
    double norm_penalty{0.0};
    double total{0.0};
    double beta{0.0};
    int stage{1};
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double avg_kl{0.0};
    std::size_t active_units{0};
    double feasible_coverage_pct{0.0};
    double norm_satisfaction_pct{0.0};
    double recon_error{0.0};
    bool collapse_verdict{false};
    double w{0.0};
    double delta_collapse{0.0};
    double tss{0.0};
    double sigma_sq_used{0.0};
    TrainConfig config;
};

struct TrainDivergenceError : std::runtime_error {
    std::size_t epoch;
    std::size_t batch;
    TrainDivergenceError(std::size_t e, std::size_t b, const std::string& what)
        : std::runtime_error("training diverged at epoch " + std::to_string(e) + ", batch " +
                             std::to_string(b) + ": " + what),
          epoch(e),
          batch(b) {}
};

// sigma^2 = factor * lambda_max(cov(data)).
inline double sigma_from_violation(const DataMatrix& data, double factor) {
    require(factor > 0.0, "sigma_from_violation: factor must be positive");
    return factor * top_eigenvalue(covariance_matrix(data));
}

inline std::size_t stage_one_epochs(const TrainConfig& cfg) {
    if (!cfg.two_stage) return 0;
    return static_cast<std::size_t>(cfg.stage_one_fraction * static_cast<double>(cfg.epochs));
}

// Linear ramp from beta_start to beta_end over beta_ramp_epochs, constant
// thereafter. In a two-stage run, stage one holds beta at beta_start
// (minimal KL regularization) and the full schedule runs from its start
// once stage two begins, so there is no jump at the stage boundary.
inline double beta_at(std::size_t epoch, const TrainConfig& cfg) {
    std::size_t position = epoch;
    if (cfg.two_stage) {
        const std::size_t boundary = stage_one_epochs(cfg);
        if (epoch < boundary) return cfg.beta_start;
        position = epoch - boundary;
    }
    if (cfg.beta_ramp_epochs == 0 || position >= cfg.beta_ramp_epochs) return cfg.beta_end;
    const double t = static_cast<double>(position) / static_cast<double>(cfg.beta_ramp_epochs);
    return cfg.beta_start + (cfg.beta_end - cfg.beta_start) * t;
}

// Penalty weights with the constraint variant applied.
inline std::pair<double, double> effective_lambdas(const TrainConfig& cfg) {
    switch (cfg.variant) {
        case ConstraintVariant::none: return {0.0, 0.0};
        case ConstraintVariant::boundary_only: return {cfg.lambda_boundary, 0.0};
        case ConstraintVariant::norm_only: return {0.0, cfg.lambda_norm};
        case ConstraintVariant::full: return {cfg.lambda_boundary, cfg.lambda_norm};
    }
    return {cfg.lambda_boundary, cfg.lambda_norm};
}

// Flat Adam update with bias correction; t is the post-increment timestep.
inline void adam_step(Vec& params, const Vec& grads, Vec& m, Vec& v, long t, double lr,
                      double beta1, double beta2, double eps) {
    require(params.size() == grads.size() && params.size() == m.size() && params.size() == v.size(),
            "adam_step: size mismatch");
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

// Adam state for one MLP, moments stored per layer.
struct AdamState {
    std::vector<Matrix> m_w, v_w;
    std::vector<Vec> m_b, v_b;
    long t{0};

    static AdamState zeros_like(const MlpParams& params) {
        AdamState s;
        for (const Layer& l : params.layers) {
            s.m_w.emplace_back(l.weight.rows, l.weight.cols, 0.0);
            s.v_w.emplace_back(l.weight.rows, l.weight.cols, 0.0);
            s.m_b.emplace_back(l.bias.size(), 0.0);
            s.v_b.emplace_back(l.bias.size(), 0.0);
        }
        return s;
    }
};

inline void adam_step(MlpParams& params, const GradientBundle& grads, AdamState& state, double lr,
                      double beta1, double beta2, double eps) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.layers.size(); ++k) {
        auto update = [&](double* p, const double* g, double* m, double* v, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                p[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            }
        };
        Layer& l = params.layers[k];
        update(l.weight.v.data(), grads.weight_grad[k].v.data(), state.m_w[k].v.data(),
               state.v_w[k].v.data(), l.weight.v.size());
        update(l.bias.data(), grads.bias_grad[k].data(), state.m_b[k].data(), state.v_b[k].data(),
               l.bias.size());
    }
}

namespace detail {

inline void add_into(GradientBundle& acc, const GradientBundle& extra) {
    for (std::size_t k = 0; k < acc.weight_grad.size(); ++k) {
        for (std::size_t i = 0; i < acc.weight_grad[k].v.size(); ++i) {
            acc.weight_grad[k].v[i] += extra.weight_grad[k].v[i];
        }
        for (std::size_t i = 0; i < acc.bias_grad[k].size(); ++i) {
            acc.bias_grad[k][i] += extra.bias_grad[k][i];
        }
    }
}

// Penalty weights per decoder pass. The sampled pass sees the Monte-Carlo
// reconstruction the ELBO is computed on; the mean pass sees decode(mu),
// the representative reconstruction the metrics evaluate.
struct PenaltyWiring {
    double boundary_sampled{0.0};
    double norm_sampled{0.0};
    double boundary_mean{0.0};
    double norm_mean{0.0};

    bool sampled_active() const { return boundary_sampled != 0.0 || norm_sampled != 0.0; }
    bool mean_active() const { return boundary_mean != 0.0 || norm_mean != 0.0; }
};

// One forward/backward pass over a batch. Returns the loss breakdown and
// accumulates nothing; gradients go straight into the bundles.
struct BatchResult {
    LossBreakdown loss;
};

inline BatchResult train_batch(const VaeModel& model, const DataMatrix& x,
                               const std::vector<std::size_t>& batch_assignments,
                               const FeasibleRegion& region, double beta,
                               const PenaltyWiring& wiring, double r_target, const Matrix& eps,
                               GradientBundle& enc_grads, GradientBundle& dec_grads) {
    const std::size_t batch = x.rows;
    const std::size_t n = model.latent_dim;
    const double inv_b = 1.0 / static_cast<double>(batch);
    const Matrix& centers = region.clustering.centers;

    EncoderPass enc = encode_pass(model, x);
    LatentBatch lat = reparameterize_with_noise(enc.mu, enc.logvar, eps);
    auto [xhat, dec_tape] = mlp_forward(model.decoder, lat.z);
    auto [xhat_mean, dec_mean_tape] = mlp_forward(model.decoder, enc.mu);

    const double recon = recon_nll(x, xhat, model.sigma_sq);
    const double kl = kl_gaussian(enc.mu, enc.logvar);

    const ClusterLossResult cl_sampled = cluster_loss(xhat, batch_assignments, centers);
    const ClusterLossResult cl_mean = cluster_loss(xhat_mean, batch_assignments, centers);
    const double bpen_sampled =
        boundary_penalty_per_sample(cl_sampled.per_sample, region.w, region.delta_collapse);
    const double bpen_mean =
        boundary_penalty_per_sample(cl_mean.per_sample, region.w, region.delta_collapse);
    const double npen_sampled = norm_penalty(xhat, r_target);
    const double npen_mean = norm_penalty(xhat_mean, r_target);

    // The objective charges each pass its own weight. The recorded
    // breakdown normalizes the weighted sums by the in-force lambda (the
    // max over passes; in trainer wiring each pass carries either 0 or the
    // full lambda), so the recorded total stays recomputable as
    // recon + beta*kl + lambda_b*bpen + lambda_n*npen. With no weighted
    // pass the mean-path value is recorded as a diagnostic. l_c is always
    // the mean-path (metric-aligned) value.
    const double lambda_b = std::max(wiring.boundary_sampled, wiring.boundary_mean);
    const double lambda_n = std::max(wiring.norm_sampled, wiring.norm_mean);
    const double weighted_b =
        wiring.boundary_sampled * bpen_sampled + wiring.boundary_mean * bpen_mean;
    const double weighted_n = wiring.norm_sampled * npen_sampled + wiring.norm_mean * npen_mean;
    const double bpen_report = lambda_b > 0.0 ? weighted_b / lambda_b : bpen_mean;
    const double npen_report = lambda_n > 0.0 ? weighted_n / lambda_n : npen_mean;

    BatchResult res;
    res.loss = total_loss(recon, kl, cl_mean.value, bpen_report, npen_report, beta, lambda_b,
                          lambda_n);

    // Sampled pass upstream: reconstruction quadratic plus any sampled-path
    // penalties. The hinge slope is evaluated per sample; the norm gradient
    // is defined as 0 at the origin.
    Matrix g_xhat(batch, x.cols);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* xi = x.row(i);
        const double* xh = xhat.row(i);
        const double* mu_c = centers.row(batch_assignments[i]);
        double* g = g_xhat.row(i);

        double norm_coef = 0.0;
        if (wiring.norm_sampled != 0.0) {
            const double norm = std::sqrt(squared_norm(xh, x.cols));
            norm_coef =
                (norm > 0.0) ? wiring.norm_sampled * 2.0 * inv_b * (norm - r_target) / norm : 0.0;
        }
        const double slope =
            boundary_penalty_slope(cl_sampled.per_sample[i], region.w, region.delta_collapse);
        const double hinge_coef = wiring.boundary_sampled * slope * 2.0 * inv_b;
        for (std::size_t j = 0; j < x.cols; ++j) {
            g[j] = (xh[j] - xi[j]) * inv_b / model.sigma_sq + hinge_coef * (xh[j] - mu_c[j]) +
                   norm_coef * xh[j];
        }
    }
    auto [d_grads, g_z] = mlp_backward(model.decoder, dec_tape, g_xhat);
    dec_grads = std::move(d_grads);

    // Mean pass upstream: penalties on decode(mu), skipped when unweighted.
    Matrix g_z_mean(batch, n, 0.0);
    if (wiring.mean_active()) {
        Matrix g_xhat_mean(batch, x.cols);
        for (std::size_t i = 0; i < batch; ++i) {
            const double* xh = xhat_mean.row(i);
            const double* mu_c = centers.row(batch_assignments[i]);
            double* g = g_xhat_mean.row(i);

            double norm_coef = 0.0;
            if (wiring.norm_mean != 0.0) {
                const double norm = std::sqrt(squared_norm(xh, x.cols));
                norm_coef =
                    (norm > 0.0) ? wiring.norm_mean * 2.0 * inv_b * (norm - r_target) / norm : 0.0;
            }
            const double slope =
                boundary_penalty_slope(cl_mean.per_sample[i], region.w, region.delta_collapse);
            const double hinge_coef = wiring.boundary_mean * slope * 2.0 * inv_b;
            for (std::size_t j = 0; j < x.cols; ++j) {
                g[j] = hinge_coef * (xh[j] - mu_c[j]) + norm_coef * xh[j];
            }
        }
        auto [d_grads_mean, gzm] = mlp_backward(model.decoder, dec_mean_tape, g_xhat_mean);
        add_into(dec_grads, d_grads_mean);
        g_z_mean = std::move(gzm);
    }

    // Through the reparameterization plus the direct KL terms, then the
    // clamp mask on the log-variance head. The mean pass feeds the mu head
    // directly (its latent is mu itself).
    Matrix g_head(batch, 2 * n);
    for (std::size_t i = 0; i < batch; ++i) {
        const double* gz = g_z.row(i);
        const double* gzm = g_z_mean.row(i);
        const double* mu = enc.mu.row(i);
        const double* lv = enc.logvar.row(i);
        const double* raw = enc.raw_logvar.row(i);
        const double* ep = lat.eps.row(i);
        double* gh = g_head.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            gh[j] = gz[j] + gzm[j] + beta * mu[j] * inv_b;
            double g_lv = gz[j] * ep[j] * 0.5 * std::exp(0.5 * lv[j]) +
                          beta * 0.5 * (std::exp(lv[j]) - 1.0) * inv_b;
            const bool inside = raw[j] > -kLogvarClampLimit && raw[j] < kLogvarClampLimit;
            gh[n + j] = inside ? g_lv : 0.0;
        }
    }

    auto [e_grads, g_in] = mlp_backward(model.encoder, enc.tape, g_head);
    (void)g_in;
    enc_grads = std::move(e_grads);
    return res;
}

}  // namespace detail

// Full training run over a preprocessed shell dataset and its frozen
// feasible region. Deterministic given the seeds in the config.
inline std::pair<VaeModel, TrainReport> train(const ShellDataset& shell,
                                              const FeasibleRegion& region,
                                              const TrainConfig& cfg) {
    require(region.clustering.assignments.size() == shell.data.rows,
            "train: region was not computed on this dataset");
    require(cfg.batch_size >= 1, "train: batch_size must be at least 1");
    require(cfg.holdout_fraction >= 0.0 && cfg.holdout_fraction < 1.0,
            "train: holdout_fraction must lie in [0, 1)");
    if (cfg.two_stage) {
        require(cfg.stage_one_fraction > 0.0 && cfg.stage_one_fraction < 1.0,
                "train: stage_one_fraction must lie in (0, 1) when two-stage is enabled");
    }
    require(cfg.beta_start <= cfg.beta_end, "train: beta_start must not exceed beta_end");

    const std::size_t n_rows = shell.data.rows;
    const std::size_t d = shell.data.cols;

    const double sigma_sq = cfg.violation_factor > 0.0
                                ? sigma_from_violation(shell.data, cfg.violation_factor)
                                : cfg.sigma_sq_override;

    VaeModel model = make_vae(d, cfg.latent_dim, cfg.encoder_hidden, cfg.decoder_hidden, sigma_sq,
                              cfg.seeds.init);

    // Seeded split: one shuffle, holdout taken from the tail; the same
    // stream then drives the per-epoch shuffles.
    Rng shuffle_rng(cfg.seeds.shuffle);
    Rng noise_rng(cfg.seeds.noise);
    std::vector<std::size_t> order(n_rows);
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);

    std::size_t holdout = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(n_rows));
    if (cfg.holdout_fraction > 0.0) holdout = std::max<std::size_t>(holdout, 2);
    require(holdout < n_rows, "train: holdout split leaves no training data");

    std::vector<std::size_t> train_idx(order.begin(), order.end() - static_cast<long>(holdout));
    std::vector<std::size_t> hold_idx(order.end() - static_cast<long>(holdout), order.end());
    if (holdout == 0) hold_idx = order;  // fraction 0: evaluate on everything

    const auto [lambda_b_base, lambda_n_base] = effective_lambdas(cfg);
    const std::size_t stage1 = stage_one_epochs(cfg);
    const double r_target = shell.params.r_target();

    AdamState enc_state = AdamState::zeros_like(model.encoder);
    AdamState dec_state = AdamState::zeros_like(model.decoder);

    TrainReport report;
    report.config = cfg;
    report.sigma_sq_used = sigma_sq;
    report.w = region.w;
    report.delta_collapse = region.delta_collapse;
    report.tss = region.tss;

    GradientBundle enc_grads, dec_grads;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const int stage = (cfg.two_stage && epoch < stage1) ? 1 : 2;
        const double beta = beta_at(epoch, cfg);
        const bool penalties_on = stage == 2 || cfg.stage_one_penalties;
        const double lambda_b = penalties_on ? lambda_b_base : 0.0;
        const double lambda_n = penalties_on ? lambda_n_base : 0.0;

        detail::PenaltyWiring wiring;
        if (cfg.penalty_path != PenaltyPath::mean) {
            wiring.boundary_sampled = lambda_b;
            wiring.norm_sampled = lambda_n;
        }
        if (cfg.penalty_path != PenaltyPath::sampled) {
            wiring.boundary_mean = lambda_b;
            wiring.norm_mean = lambda_n;
        }

        shuffle_rng.shuffle(train_idx);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.beta = beta;
        rec.stage = stage;
        double weight_sum = 0.0;

        for (std::size_t start = 0, batch_no = 0; start < train_idx.size();
             start += cfg.batch_size, ++batch_no) {
            const std::size_t end = std::min(start + cfg.batch_size, train_idx.size());
            const std::vector<std::size_t> rows(train_idx.begin() + static_cast<long>(start),
                                                train_idx.begin() + static_cast<long>(end));
            const DataMatrix x = gather_rows(shell.data, rows);
            std::vector<std::size_t> batch_assign(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                batch_assign[i] = region.clustering.assignments[rows[i]];
            }

            Matrix eps(x.rows, cfg.latent_dim);
            for (double& e : eps.v) e = noise_rng.normal();

            detail::BatchResult batch;
            try {
                batch = detail::train_batch(model, x, batch_assign, region, beta, wiring,
                                            r_target, eps, enc_grads, dec_grads);
            } catch (const std::runtime_error& e) {
                throw TrainDivergenceError(epoch, batch_no, e.what());
            }
            if (!std::isfinite(batch.loss.total)) {
                throw TrainDivergenceError(epoch, batch_no, "non-finite total loss");
            }

            adam_step(model.encoder, enc_grads, enc_state, cfg.learning_rate, cfg.adam_beta1,
                      cfg.adam_beta2, cfg.adam_eps);
            adam_step(model.decoder, dec_grads, dec_state, cfg.learning_rate, cfg.adam_beta1,
                      cfg.adam_beta2, cfg.adam_eps);

            const double wgt = static_cast<double>(rows.size());
            rec.recon_nll += wgt * batch.loss.recon_nll;
            rec.kl += wgt * batch.loss.kl;
            rec.l_c += wgt * batch.loss.l_c;
            rec.boundary_penalty += wgt * batch.loss.boundary_penalty;
            rec.norm_penalty += wgt * batch.loss.norm_penalty;
            rec.total += wgt * batch.loss.total;
            weight_sum += wgt;
        }

        if (weight_sum > 0.0) {
            rec.recon_nll /= weight_sum;
            rec.kl /= weight_sum;
            rec.l_c /= weight_sum;
            rec.boundary_penalty /= weight_sum;
            rec.norm_penalty /= weight_sum;
            rec.total /= weight_sum;
        }
        report.epochs.push_back(rec);

        if (!cfg.checkpoint_path.empty() && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0) {
            save_checkpoint(model, cfg.seeds, cfg.checkpoint_path);
        }
    }

    // Held-out metrics at the mean latent.
    const DataMatrix hold_data = gather_rows(shell.data, hold_idx);
    std::vector<std::size_t> hold_assign(hold_idx.size());
    for (std::size_t i = 0; i < hold_idx.size(); ++i) {
        hold_assign[i] = region.clustering.assignments[hold_idx[i]];
    }
    const EvalResult eval = evaluate(model, hold_data, hold_assign, region, shell.params);
    report.avg_kl = eval.avg_kl;
    report.active_units = eval.active_units;
    report.feasible_coverage_pct = eval.feasible_coverage_pct;
    report.norm_satisfaction_pct = eval.norm_satisfaction_pct;
    report.recon_error = eval.recon_error;
    report.collapse_verdict = collapse_verdict(eval);

    if (!cfg.checkpoint_path.empty()) save_checkpoint(model, cfg.seeds, cfg.checkpoint_path);
    return {std::move(model), std::move(report)};
}

}  // namespace shellvae
