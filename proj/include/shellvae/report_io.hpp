// Run persistence: training reports as JSON Lines (one object per epoch
// plus a final summary object), a fixed-header CSV of the per-epoch table
// for external plotting, region files as JSON, and run manifests. JSON key
// order is alphabetical and doubles serialize shortest-round-trip, so equal
// runs produce byte-identical files.

#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "shellvae/clustering.hpp"
#include "shellvae/data_io.hpp"
#include "shellvae/geometry.hpp"
#include "shellvae/trainer.hpp"

namespace shellvae {

using json = nlohmann::json;

inline constexpr const char* kCsvHeader =
    "epoch,recon_nll,kl,l_c,boundary_penalty,norm_penalty,total,beta,stage";

namespace detail {

inline void ensure_parent(const std::string& path, bool create_dirs) {
    const auto dir = std::filesystem::path(path).parent_path();
    if (dir.empty()) return;
    if (create_dirs) {
        std::filesystem::create_directories(dir);
    } else if (!std::filesystem::exists(dir)) {
        throw std::runtime_error("output directory '" + dir.string() + "' does not exist");
    }
}

}  // namespace detail

inline json to_json(const TrainConfig& cfg) {
    return json{
        {"epochs", cfg.epochs},
        {"batch_size", cfg.batch_size},
        {"learning_rate", cfg.learning_rate},
        {"beta_start", cfg.beta_start},
        {"beta_end", cfg.beta_end},
        {"beta_ramp_epochs", cfg.beta_ramp_epochs},
        {"two_stage", cfg.two_stage},
        {"stage_one_fraction", cfg.stage_one_fraction},
        {"stage_one_penalties", cfg.stage_one_penalties},
        {"violation_factor", cfg.violation_factor},
        {"sigma_sq_override", cfg.sigma_sq_override},
        {"variant", variant_name(cfg.variant)},
        {"lambda_boundary", cfg.lambda_boundary},
        {"lambda_norm", cfg.lambda_norm},
        {"penalty_path", penalty_path_name(cfg.penalty_path)},
        {"latent_dim", cfg.latent_dim},
        {"encoder_hidden", cfg.encoder_hidden},
        {"decoder_hidden", cfg.decoder_hidden},
        {"holdout_fraction", cfg.holdout_fraction},
        {"seeds",
         json{{"init", cfg.seeds.init},
              {"shuffle", cfg.seeds.shuffle},
              {"noise", cfg.seeds.noise},
              {"shell", cfg.seeds.shell},
              {"kmeans", cfg.seeds.kmeans}}},
        {"adam_beta1", cfg.adam_beta1},
        {"adam_beta2", cfg.adam_beta2},
        {"adam_eps", cfg.adam_eps},
        {"checkpoint_every", cfg.checkpoint_every},
    };
}

inline TrainConfig config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.epochs = j.at("epochs").get<std::size_t>();
    cfg.batch_size = j.at("batch_size").get<std::size_t>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.beta_start = j.at("beta_start").get<double>();
    cfg.beta_end = j.at("beta_end").get<double>();
    cfg.beta_ramp_epochs = j.at("beta_ramp_epochs").get<std::size_t>();
    cfg.two_stage = j.at("two_stage").get<bool>();
    cfg.stage_one_fraction = j.at("stage_one_fraction").get<double>();
    cfg.stage_one_penalties = j.at("stage_one_penalties").get<bool>();
    cfg.violation_factor = j.at("violation_factor").get<double>();
    cfg.sigma_sq_override = j.at("sigma_sq_override").get<double>();
    cfg.variant = variant_from_name(j.at("variant").get<std::string>());
    cfg.lambda_boundary = j.at("lambda_boundary").get<double>();
    cfg.lambda_norm = j.at("lambda_norm").get<double>();
    cfg.penalty_path = penalty_path_from_name(j.at("penalty_path").get<std::string>());
    cfg.latent_dim = j.at("latent_dim").get<std::size_t>();
    cfg.encoder_hidden = j.at("encoder_hidden").get<std::vector<std::size_t>>();
    cfg.decoder_hidden = j.at("decoder_hidden").get<std::vector<std::size_t>>();
    cfg.holdout_fraction = j.at("holdout_fraction").get<double>();
    const json& s = j.at("seeds");
    cfg.seeds.init = s.at("init").get<std::uint64_t>();
    cfg.seeds.shuffle = s.at("shuffle").get<std::uint64_t>();
    cfg.seeds.noise = s.at("noise").get<std::uint64_t>();
    cfg.seeds.shell = s.at("shell").get<std::uint64_t>();
    cfg.seeds.kmeans = s.at("kmeans").get<std::uint64_t>();
    cfg.adam_beta1 = j.at("adam_beta1").get<double>();
    cfg.adam_beta2 = j.at("adam_beta2").get<double>();
    cfg.adam_eps = j.at("adam_eps").get<double>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<std::size_t>();
    return cfg;
}

inline json to_json(const EpochRecord& rec) {
    return json{
        {"epoch", rec.epoch},
        {"recon_nll", rec.recon_nll},
        {"kl", rec.kl},
        {"l_c", rec.l_c},
        {"boundary_penalty", rec.boundary_penalty},
        {"norm_penalty", rec.norm_penalty},
        {"total", rec.total},
        {"beta", rec.beta},
        {"stage", rec.stage},
    };
}

inline EpochRecord epoch_from_json(const json& j) {
    EpochRecord rec;
    rec.epoch = j.at("epoch").get<std::size_t>();
    rec.recon_nll = j.at("recon_nll").get<double>();
    rec.kl = j.at("kl").get<double>();
    rec.l_c = j.at("l_c").get<double>();
    rec.boundary_penalty = j.at("boundary_penalty").get<double>();
    rec.norm_penalty = j.at("norm_penalty").get<double>();
    rec.total = j.at("total").get<double>();
    rec.beta = j.at("beta").get<double>();
    rec.stage = j.at("stage").get<int>();
    return rec;
}

inline json summary_to_json(const TrainReport& report) {
    return json{
        {"summary", true},
        {"avg_kl", report.avg_kl},
        {"active_units", report.active_units},
        {"feasible_coverage_pct", report.feasible_coverage_pct},
        {"norm_satisfaction_pct", report.norm_satisfaction_pct},
        {"recon_error", report.recon_error},
        {"collapse_verdict", report.collapse_verdict},
        {"w", report.w},
        {"delta_collapse", report.delta_collapse},
        {"tss", report.tss},
        {"sigma_sq", report.sigma_sq_used},
        {"config", to_json(report.config)},
    };
}

// One JSON object per epoch, then the summary object.
inline void write_series(const std::string& path, const TrainReport& report,
                         bool create_dirs = false) {
    detail::ensure_parent(path, create_dirs);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_series: cannot open '" + path + "'");
    for (const EpochRecord& rec : report.epochs) os << to_json(rec).dump() << "\n";
    os << summary_to_json(report).dump() << "\n";
    if (!os) throw std::runtime_error("write_series: write to '" + path + "' failed");
}

inline TrainReport read_series(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("read_series: cannot open '" + path + "'");
    TrainReport report;
    bool saw_summary = false;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        if (j.contains("summary")) {
            report.avg_kl = j.at("avg_kl").get<double>();
            report.active_units = j.at("active_units").get<std::size_t>();
            report.feasible_coverage_pct = j.at("feasible_coverage_pct").get<double>();
            report.norm_satisfaction_pct = j.at("norm_satisfaction_pct").get<double>();
            report.recon_error = j.at("recon_error").get<double>();
            report.collapse_verdict = j.at("collapse_verdict").get<bool>();
            report.w = j.at("w").get<double>();
            report.delta_collapse = j.at("delta_collapse").get<double>();
            report.tss = j.at("tss").get<double>();
            report.sigma_sq_used = j.at("sigma_sq").get<double>();
            report.config = config_from_json(j.at("config"));
            saw_summary = true;
        } else {
            report.epochs.push_back(epoch_from_json(j));
        }
    }
    if (!saw_summary) throw std::runtime_error("read_series: '" + path + "' has no summary object");
    return report;
}

// Per-epoch table with a fixed header row.
inline void write_csv(const std::string& path, const TrainReport& report,
                      bool create_dirs = false) {
    detail::ensure_parent(path, create_dirs);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_csv: cannot open '" + path + "'");
    os << kCsvHeader << "\n";
    char buf[512];
    for (const EpochRecord& r : report.epochs) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n",
                      r.epoch, r.recon_nll, r.kl, r.l_c, r.boundary_penalty, r.norm_penalty,
                      r.total, r.beta, r.stage);
        os << buf;
    }
    if (!os) throw std::runtime_error("write_csv: write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Region files: the feasible-region statistics plus everything needed to
// reproduce the shell transform and bind the region to its dataset.

struct RegionFile {
    FeasibleRegion region;
    ShellParams shell_params;
    std::uint64_t shell_seed{0};
    std::uint64_t kmeans_seed{0};
    std::size_t max_iters{300};
    double tol{1e-8};
    std::string dataset_fingerprint;
    std::string shell_data_fingerprint;
};

inline std::string matrix_fingerprint(const Matrix& m) {
    std::uint64_t h = fnv1a(&m.rows, sizeof(m.rows));
    h = fnv1a(&m.cols, sizeof(m.cols), h);
    h = fnv1a(m.v.data(), m.v.size() * sizeof(double), h);
    return to_hex64(h);
}

inline void save_region(const std::string& path, const RegionFile& rf, bool create_dirs = false) {
    detail::ensure_parent(path, create_dirs);
    const Clustering& c = rf.region.clustering;
    std::vector<std::vector<double>> centers(c.k);
    for (std::size_t k = 0; k < c.k; ++k) {
        centers[k].assign(c.centers.row(k), c.centers.row(k) + c.centers.cols);
    }
    const json j{
        {"version", 1},
        {"dataset_fingerprint", rf.dataset_fingerprint},
        {"shell_data_fingerprint", rf.shell_data_fingerprint},
        {"shell", json{{"r_min", rf.shell_params.r_min},
                       {"r_max", rf.shell_params.r_max},
                       {"seed", rf.shell_seed}}},
        {"kmeans", json{{"k", c.k},
                        {"seed", rf.kmeans_seed},
                        {"max_iters", rf.max_iters},
                        {"tol", rf.tol},
                        {"iterations_run", c.iterations_run}}},
        {"tss", rf.region.tss},
        {"w", rf.region.w},
        {"delta_collapse", rf.region.delta_collapse},
        {"identity_residual", verify_identity(rf.region)},
        {"feasible", rf.region.feasible()},
        {"data_mean", rf.region.data_mean},
        {"centers", centers},
        {"proportions", c.proportions},
        {"assignments", c.assignments},
    };
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("save_region: cannot open '" + path + "'");
    os << j.dump(2) << "\n";
    if (!os) throw std::runtime_error("save_region: write to '" + path + "' failed");
}

inline RegionFile load_region(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("load_region: cannot open '" + path + "'");
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw std::runtime_error("load_region: cannot parse '" + path + "': " + e.what());
    }

    RegionFile rf;
    rf.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
    rf.shell_data_fingerprint = j.at("shell_data_fingerprint").get<std::string>();
    rf.shell_params.r_min = j.at("shell").at("r_min").get<double>();
    rf.shell_params.r_max = j.at("shell").at("r_max").get<double>();
    rf.shell_seed = j.at("shell").at("seed").get<std::uint64_t>();
    rf.kmeans_seed = j.at("kmeans").at("seed").get<std::uint64_t>();
    rf.max_iters = j.at("kmeans").at("max_iters").get<std::size_t>();
    rf.tol = j.at("kmeans").at("tol").get<double>();

    Clustering c;
    c.k = j.at("kmeans").at("k").get<std::size_t>();
    c.iterations_run = j.at("kmeans").at("iterations_run").get<std::size_t>();
    c.assignments = j.at("assignments").get<std::vector<std::size_t>>();
    c.proportions = j.at("proportions").get<Vec>();
    const auto centers = j.at("centers").get<std::vector<std::vector<double>>>();
    require(centers.size() == c.k, "load_region: center count mismatch");
    const std::size_t d = centers.empty() ? 0 : centers[0].size();
    c.centers = Matrix(c.k, d);
    for (std::size_t k = 0; k < c.k; ++k) {
        require(centers[k].size() == d, "load_region: ragged centers");
        std::copy(centers[k].begin(), centers[k].end(), c.centers.row(k));
    }

    rf.region.tss = j.at("tss").get<double>();
    rf.region.w = j.at("w").get<double>();
    rf.region.delta_collapse = j.at("delta_collapse").get<double>();
    rf.region.data_mean = j.at("data_mean").get<Vec>();
    rf.region.clustering = std::move(c);
    return rf;
}

inline void write_manifest(const std::string& path, const json& manifest,
                           bool create_dirs = false) {
    detail::ensure_parent(path, create_dirs);
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("write_manifest: cannot open '" + path + "'");
    os << manifest.dump(2) << "\n";
    if (!os) throw std::runtime_error("write_manifest: write to '" + path + "' failed");
}

}  // namespace shellvae
