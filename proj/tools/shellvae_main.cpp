// Command-line front end wiring the pipeline together:
//
//   synth          generate the synthetic Gaussian-mixture dataset
//   import-idx     convert IDX image/label files into a dataset container
//   cluster        shell-transform a dataset, run K-means, write the region
//   train          run the constrained training loop, emit report/checkpoint
//   eval           metrics of a checkpoint against a dataset + region
//   ablate         the four constraint variants under shared seeds
//   verify-theorem numerical check of the collapse-exclusion argument
//
// Exit codes: 0 success, 1 usage error, 2 data/parse error, 3 verification
// failure, 4 theorem precondition unmet (empty feasible interval).

#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "shellvae/shellvae.hpp"

namespace sv = shellvae;
using sv::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerification = 3;
constexpr int kExitPrecondition = 4;

struct LoadedPipeline {
    sv::DataMatrix data;
    std::vector<std::size_t> labels;
    std::string fingerprint;
    sv::ShellDataset shell;
    sv::RegionFile region_file;
};

// Load dataset + region, check the fingerprint binding, and rebuild the
// shell dataset from the recorded transform parameters.
LoadedPipeline load_pipeline(const std::string& data_path, const std::string& region_path) {
    LoadedPipeline p;
    std::tie(p.data, p.labels) = sv::load_dataset(data_path);
    p.fingerprint = sv::file_fingerprint(data_path);
    p.region_file = sv::load_region(region_path);

    if (p.region_file.dataset_fingerprint != p.fingerprint) {
        throw std::runtime_error("region file '" + region_path + "' was computed from dataset " +
                                 p.region_file.dataset_fingerprint + ", but '" + data_path +
                                 "' has fingerprint " + p.fingerprint);
    }
    p.shell = sv::shell_from_raw(p.data, p.region_file.shell_params, p.region_file.shell_seed);
    const std::string shell_fp = sv::matrix_fingerprint(p.shell.data);
    if (shell_fp != p.region_file.shell_data_fingerprint) {
        throw std::runtime_error("rebuilt shell data does not match the region file (got " +
                                 shell_fp + ", expected " + p.region_file.shell_data_fingerprint +
                                 ")");
    }
    return p;
}

json seeds_to_json(const sv::Seeds& s) {
    return json{{"init", s.init},
                {"shuffle", s.shuffle},
                {"noise", s.noise},
                {"shell", s.shell},
                {"kmeans", s.kmeans}};
}

json region_summary_json(const sv::FeasibleRegion& region) {
    return json{{"tss", region.tss},
                {"w", region.w},
                {"delta_collapse", region.delta_collapse},
                {"feasible", region.feasible()}};
}

// Replicates the trainer's holdout split from the shuffle seed, so eval can
// score exactly the rows a training run held out.
std::vector<std::size_t> holdout_rows(std::size_t n_rows, double holdout_fraction,
                                      std::uint64_t shuffle_seed) {
    std::vector<std::size_t> order(n_rows);
    std::iota(order.begin(), order.end(), 0);
    sv::Rng rng(shuffle_seed);
    rng.shuffle(order);
    std::size_t holdout =
        static_cast<std::size_t>(holdout_fraction * static_cast<double>(n_rows));
    if (holdout_fraction > 0.0) holdout = std::max<std::size_t>(holdout, 2);
    if (holdout == 0) return order;
    return {order.end() - static_cast<long>(holdout), order.end()};
}

json eval_to_json(const sv::EvalResult& res) {
    return json{{"avg_kl", res.avg_kl},
                {"active_units", res.active_units},
                {"feasible_coverage_pct", res.feasible_coverage_pct},
                {"norm_satisfaction_pct", res.norm_satisfaction_pct},
                {"recon_error", res.recon_error},
                {"per_dim_variance", res.per_dim_variance},
                {"collapse_verdict", sv::collapse_verdict(res)}};
}

// ---------------------------------------------------------------------------

int cmd_synth(const sv::GmmSpec& spec, const std::string& out, bool create_dirs) {
    auto [data, labels] = sv::synth_gmm(spec);
    sv::save_dataset(data, labels, out, create_dirs);
    std::cout << "wrote " << out << " (" << data.rows << " x " << data.cols << ")\n";
    std::cout << "fingerprint: " << sv::file_fingerprint(out) << "\n";
    return kExitOk;
}

int cmd_import_idx(const std::string& images, const std::string& labels_path, std::size_t subset,
                   std::uint64_t seed, const std::string& out, bool create_dirs) {
    std::optional<std::string> labels_opt;
    if (!labels_path.empty()) labels_opt = labels_path;
    auto [data, labels] = sv::load_idx(images, labels_opt);
    if (subset > 0 && subset < data.rows) {
        std::tie(data, labels) = sv::subset_rows(data, labels, subset, seed);
    }
    sv::save_dataset(data, labels, out, create_dirs);
    std::cout << "wrote " << out << " (" << data.rows << " x " << data.cols << ")\n";
    std::cout << "fingerprint: " << sv::file_fingerprint(out) << "\n";
    return kExitOk;
}

int cmd_cluster(const std::string& data_path, std::size_t k, const sv::ShellParams& params,
                std::uint64_t shell_seed, std::uint64_t kmeans_seed, std::size_t max_iters,
                double tol, const std::string& out, bool create_dirs) {
    auto [data, labels] = sv::load_dataset(data_path);
    const std::string fingerprint = sv::file_fingerprint(data_path);
    sv::ShellDataset shell = sv::shell_from_raw(data, params, shell_seed);
    const sv::Clustering clustering = sv::kmeans(shell.data, k, kmeans_seed, max_iters, tol);

    sv::RegionFile rf;
    rf.region = sv::feasible_region(shell.data, clustering);
    rf.shell_params = params;
    rf.shell_seed = shell_seed;
    rf.kmeans_seed = kmeans_seed;
    rf.max_iters = max_iters;
    rf.tol = tol;
    rf.dataset_fingerprint = fingerprint;
    rf.shell_data_fingerprint = sv::matrix_fingerprint(shell.data);
    sv::save_region(out, rf, create_dirs);

    std::cout << "tss: " << rf.region.tss << "\n";
    std::cout << "w: " << rf.region.w << "\n";
    std::cout << "delta_collapse: " << rf.region.delta_collapse << "\n";
    std::cout << "identity_residual: " << sv::verify_identity(rf.region) << "\n";
    std::cout << "feasible: " << (rf.region.feasible() ? "true" : "false") << "\n";
    std::cout << "wrote " << out << "\n";
    return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& region_path, sv::TrainConfig cfg,
              const std::string& out_prefix, bool create_dirs) {
    LoadedPipeline p = load_pipeline(data_path, region_path);
    cfg.seeds.shell = p.region_file.shell_seed;
    cfg.seeds.kmeans = p.region_file.kmeans_seed;
    cfg.checkpoint_path = out_prefix + ".ckpt";

    auto [model, report] = sv::train(p.shell, p.region_file.region, cfg);

    sv::write_series(out_prefix + ".jsonl", report, create_dirs);
    sv::write_csv(out_prefix + ".csv", report, create_dirs);
    const json manifest{{"tool_version", sv::kToolVersion},
                        {"command", "train"},
                        {"dataset", data_path},
                        {"dataset_fingerprint", p.fingerprint},
                        {"region", region_summary_json(p.region_file.region)},
                        {"seeds", seeds_to_json(cfg.seeds)},
                        {"config", sv::to_json(cfg)}};
    sv::write_manifest(out_prefix + ".manifest.json", manifest, create_dirs);

    for (const sv::EpochRecord& rec : report.epochs) {
        if (rec.epoch % 10 == 0 || rec.epoch + 1 == report.epochs.size()) {
            std::printf("epoch %3zu  stage %d  beta %.3f  recon %.4f  kl %.4f  l_c %.4f  total %.4f\n",
                        rec.epoch, rec.stage, rec.beta, rec.recon_nll, rec.kl, rec.l_c, rec.total);
        }
    }
    std::cout << "avg_kl: " << report.avg_kl << "\n";
    std::cout << "active_units: " << report.active_units << "\n";
    std::cout << "feasible_coverage_pct: " << report.feasible_coverage_pct << "\n";
    std::cout << "norm_satisfaction_pct: " << report.norm_satisfaction_pct << "\n";
    std::cout << "collapse_verdict: " << (report.collapse_verdict ? "true" : "false") << "\n";
    std::cout << "wrote " << out_prefix << ".jsonl, .csv, .ckpt, .manifest.json\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_path,
             const std::string& region_path, const std::string& split, double holdout_fraction,
             bool json_only) {
    LoadedPipeline p = load_pipeline(data_path, region_path);
    auto [model, seeds] = sv::load_checkpoint(ckpt_path);
    if (model.data_dim() != p.shell.data.cols) {
        throw std::runtime_error("checkpoint is for data dimension " +
                                 std::to_string(model.data_dim()) + ", dataset has " +
                                 std::to_string(p.shell.data.cols));
    }

    std::vector<std::size_t> rows;
    if (split == "holdout") {
        rows = holdout_rows(p.shell.data.rows, holdout_fraction, seeds.shuffle);
    } else {
        rows.resize(p.shell.data.rows);
        std::iota(rows.begin(), rows.end(), 0);
    }
    const sv::DataMatrix subset = sv::gather_rows(p.shell.data, rows);
    std::vector<std::size_t> assign(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        assign[i] = p.region_file.region.clustering.assignments[rows[i]];
    }
    const sv::EvalResult res =
        sv::evaluate(model, subset, assign, p.region_file.region, p.shell.params);

    if (json_only) {
        std::cout << eval_to_json(res).dump() << "\n";
    } else {
        std::cout << "split: " << split << " (" << rows.size() << " rows)\n";
        std::cout << "avg_kl: " << res.avg_kl << "\n";
        std::cout << "active_units: " << res.active_units << "\n";
        std::cout << "feasible_coverage_pct: " << res.feasible_coverage_pct << "\n";
        std::cout << "norm_satisfaction_pct: " << res.norm_satisfaction_pct << "\n";
        std::cout << "recon_error: " << res.recon_error << "\n";
        std::cout << "collapse_verdict: " << (sv::collapse_verdict(res) ? "true" : "false") << "\n";
    }
    return kExitOk;
}

int cmd_ablate(const std::string& data_path, const std::string& region_path, sv::TrainConfig base,
               const std::vector<std::uint64_t>& base_seeds, const std::string& out,
               bool create_dirs) {
    LoadedPipeline p = load_pipeline(data_path, region_path);
    base.seeds.shell = p.region_file.shell_seed;
    base.seeds.kmeans = p.region_file.kmeans_seed;
    base.checkpoint_path.clear();

    const sv::ConstraintVariant variants[] = {
        sv::ConstraintVariant::none, sv::ConstraintVariant::boundary_only,
        sv::ConstraintVariant::norm_only, sv::ConstraintVariant::full};

    std::ostringstream csv;
    csv << "seed,variant,avg_kl,active_units,feasible_coverage_pct,norm_satisfaction_pct,"
           "recon_error,collapse_verdict\n";
    std::printf("%6s %-9s %9s %7s %10s %9s %11s\n", "seed", "variant", "avg_kl", "active",
                "coverage", "norm_sat", "recon_err");
    for (std::uint64_t seed : base_seeds) {
        for (sv::ConstraintVariant variant : variants) {
            sv::TrainConfig cfg = base;
            cfg.variant = variant;
            cfg.seeds.init = seed;
            cfg.seeds.shuffle = seed + 1000;
            cfg.seeds.noise = seed + 2000;
            const sv::TrainReport report = sv::train(p.shell, p.region_file.region, cfg).second;
            char line[256];
            std::snprintf(line, sizeof(line), "%llu,%s,%.17g,%zu,%.17g,%.17g,%.17g,%s\n",
                          static_cast<unsigned long long>(seed), sv::variant_name(variant),
                          report.avg_kl, report.active_units, report.feasible_coverage_pct,
                          report.norm_satisfaction_pct, report.recon_error,
                          report.collapse_verdict ? "true" : "false");
            csv << line;
            std::printf("%6llu %-9s %9.4f %7zu %9.1f%% %8.1f%% %11.5f\n",
                        static_cast<unsigned long long>(seed), sv::variant_name(variant),
                        report.avg_kl, report.active_units, report.feasible_coverage_pct,
                        report.norm_satisfaction_pct, report.recon_error);
        }
    }

    sv::detail::ensure_parent(out, create_dirs);
    std::ofstream os(out, std::ios::trunc);
    if (!os) throw std::runtime_error("ablate: cannot open '" + out + "'");
    os << csv.str();
    if (!os) throw std::runtime_error("ablate: write to '" + out + "' failed");

    const json manifest{{"tool_version", sv::kToolVersion},
                        {"command", "ablate"},
                        {"dataset", data_path},
                        {"dataset_fingerprint", p.fingerprint},
                        {"region", region_summary_json(p.region_file.region)},
                        {"base_seeds", base_seeds},
                        {"config", sv::to_json(base)}};
    sv::write_manifest(out + ".manifest.json", manifest, create_dirs);
    std::cout << "wrote " << out << "\n";
    return kExitOk;
}

int cmd_verify_theorem(const std::string& data_path, const std::string& region_path,
                       std::optional<double> epsilon_flag) {
    LoadedPipeline p = load_pipeline(data_path, region_path);
    const sv::FeasibleRegion& region = p.region_file.region;
    const sv::Clustering& c = region.clustering;

    std::cout << "w: " << region.w << "\n";
    std::cout << "delta_collapse: " << region.delta_collapse << "\n";
    std::cout << "tss: " << region.tss << "\n";
    std::cout << "identity_residual: " << sv::verify_identity(region) << "\n";

    if (!(region.w < region.delta_collapse)) {
        std::cout << "feasible interval is empty (w >= delta_collapse); "
                     "theorem precondition unmet\n";
        return kExitPrecondition;
    }

    const double epsilon =
        epsilon_flag.value_or(0.5 * (region.w + region.delta_collapse));
    std::cout << "epsilon: " << epsilon << "\n";

    // Collapse decoder: every reconstruction is the data mean.
    sv::DataMatrix collapse(p.shell.data.rows, p.shell.data.cols);
    for (std::size_t i = 0; i < collapse.rows; ++i) {
        for (std::size_t j = 0; j < collapse.cols; ++j) collapse.at(i, j) = region.data_mean[j];
    }
    const double l_collapse = sv::cluster_loss(collapse, c.assignments, c.centers).value;
    const double l_ideal = sv::cluster_loss(p.shell.data, c.assignments, c.centers).value;

    std::cout << "l_c(collapse): " << l_collapse << "  (delta_collapse " << region.delta_collapse
              << ")\n";
    std::cout << "l_c(ideal): " << l_ideal << "  (w " << region.w << ")\n";

    bool ok = true;
    auto expect = [&](bool cond, const std::string& what) {
        std::cout << (cond ? "  [ok] " : "  [FAIL] ") << what << "\n";
        ok = ok && cond;
    };
    expect(std::abs(l_collapse - region.delta_collapse) < 1e-9,
           "l_c(collapse) = delta_collapse within 1e-9, diff = " +
               std::to_string(std::abs(l_collapse - region.delta_collapse)));
    expect(std::abs(l_ideal - region.w) < 1e-9,
           "l_c(ideal) = w within 1e-9, diff = " + std::to_string(std::abs(l_ideal - region.w)));
    expect(region.w < epsilon && epsilon < region.delta_collapse,
           "w < epsilon < delta_collapse strictly");
    expect(l_collapse > epsilon, "collapse decoder is infeasible (l_c > epsilon)");
    expect(l_ideal < epsilon, "ideal decoder is feasible (l_c < epsilon)");

    std::cout << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? kExitOk : kExitVerification;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Collapse-resistant VAE training on spherical-shell data"};
    app.require_subcommand(1);

    // --- synth ---
    auto* synth = app.add_subcommand("synth", "Generate the synthetic Gaussian-mixture dataset");
    sv::GmmSpec gmm;
    std::string synth_out;
    bool synth_dirs = false;
    synth->add_option("--n", gmm.n_samples, "Number of samples")->capture_default_str();
    synth->add_option("--dim", gmm.dim, "Data dimension")->capture_default_str();
    synth->add_option("--components", gmm.n_components, "Mixture components")
        ->capture_default_str();
    synth->add_option("--separation", gmm.component_separation, "Center norm")
        ->capture_default_str();
    synth->add_option("--std", gmm.component_std, "Component standard deviation")
        ->capture_default_str();
    synth->add_option("--seed", gmm.seed, "Generator seed")->capture_default_str();
    synth->add_option("--out", synth_out, "Output dataset file")->required();
    synth->add_flag("--create-dirs", synth_dirs, "Create missing output directories");

    // --- import-idx ---
    auto* import_idx = app.add_subcommand("import-idx", "Convert IDX files into a dataset");
    std::string idx_images, idx_labels, idx_out;
    std::size_t idx_subset = 6000;
    std::uint64_t idx_seed = 1;
    bool idx_dirs = false;
    import_idx->add_option("--images", idx_images, "IDX image file")->required();
    import_idx->add_option("--labels", idx_labels, "IDX label file (optional)");
    import_idx->add_option("--subset", idx_subset, "Seeded row subset, 0 keeps all rows")
        ->capture_default_str();
    import_idx->add_option("--seed", idx_seed, "Subset seed")->capture_default_str();
    import_idx->add_option("--out", idx_out, "Output dataset file")->required();
    import_idx->add_flag("--create-dirs", idx_dirs, "Create missing output directories");

    // --- cluster ---
    auto* cluster = app.add_subcommand("cluster", "Shell-transform, cluster, write the region");
    std::string cluster_data, cluster_out;
    std::size_t cluster_k = 8;
    sv::ShellParams shell_params;
    std::uint64_t shell_seed = 4, kmeans_seed = 5;
    std::size_t kmeans_iters = 300;
    double kmeans_tol = 1e-8;
    bool cluster_dirs = false;
    cluster->add_option("--data", cluster_data, "Dataset file")->required();
    cluster->add_option("--k", cluster_k, "Number of clusters")->capture_default_str();
    cluster->add_option("--rmin", shell_params.r_min, "Inner shell radius")->capture_default_str();
    cluster->add_option("--rmax", shell_params.r_max, "Outer shell radius")->capture_default_str();
    cluster->add_option("--shell-seed", shell_seed, "Shell draw seed")->capture_default_str();
    cluster->add_option("--kmeans-seed", kmeans_seed, "K-means seed")->capture_default_str();
    cluster->add_option("--max-iters", kmeans_iters, "Lloyd iteration cap")->capture_default_str();
    cluster->add_option("--tol", kmeans_tol, "Center movement tolerance")->capture_default_str();
    cluster->add_option("--out", cluster_out, "Output region file")->required();
    cluster->add_flag("--create-dirs", cluster_dirs, "Create missing output directories");

    // --- shared training options ---
    sv::TrainConfig cfg;
    auto add_train_options = [&](CLI::App* cmd, bool with_variant) {
        if (with_variant) {
            cmd->add_option_function<std::string>(
                   "--variant",
                   [&](const std::string& v) { cfg.variant = sv::variant_from_name(v); },
                   "Constraint variant: none|boundary|norm|full")
                ->default_str("full");
        }
        cmd->add_option("--violation", cfg.violation_factor,
                        "sigma^2 = factor * lambda_max; 0 uses --sigma-sq")
            ->capture_default_str();
        cmd->add_option("--sigma-sq", cfg.sigma_sq_override,
                        "Decoder variance when --violation 0")
            ->capture_default_str();
        cmd->add_option("--lambda-boundary", cfg.lambda_boundary, "Boundary penalty weight")
            ->capture_default_str();
        cmd->add_option("--lambda-norm", cfg.lambda_norm, "Norm penalty weight")
            ->capture_default_str();
        cmd->add_option_function<std::string>(
               "--penalty-path",
               [&](const std::string& v) { cfg.penalty_path = sv::penalty_path_from_name(v); },
               "Reconstruction the penalties act on: sampled|mean|both")
            ->check(CLI::IsMember({"sampled", "mean", "both"}))
            ->default_str(sv::penalty_path_name(sv::TrainConfig{}.penalty_path));
        cmd->add_option("--epochs", cfg.epochs, "Training epochs")->capture_default_str();
        cmd->add_option("--batch", cfg.batch_size, "Mini-batch size")->capture_default_str();
        cmd->add_option("--lr", cfg.learning_rate, "Adam learning rate")->capture_default_str();
        cmd->add_option("--beta-start", cfg.beta_start, "Beta ramp start")->capture_default_str();
        cmd->add_option("--beta-end", cfg.beta_end, "Beta ramp end")->capture_default_str();
        cmd->add_option("--beta-ramp", cfg.beta_ramp_epochs, "Beta ramp length in epochs")
            ->capture_default_str();
        cmd->add_flag("--single-stage{false}", cfg.two_stage,
                      "Disable the two-stage protocol")
            ->default_val(true);
        cmd->add_option("--stage-one-fraction", cfg.stage_one_fraction,
                        "Fraction of epochs in stage one")
            ->capture_default_str();
        cmd->add_option_function<std::string>(
               "--stage-one-penalties",
               [&](const std::string& v) {
                   if (v == "on") {
                       cfg.stage_one_penalties = true;
                   } else if (v == "off") {
                       cfg.stage_one_penalties = false;
                   } else {
                       throw CLI::ValidationError("--stage-one-penalties must be on or off");
                   }
               },
               "Apply penalties during stage one: on|off")
            ->default_str("on");
        cmd->add_option("--latent", cfg.latent_dim, "Latent dimension")->capture_default_str();
        cmd->add_option("--hidden-enc", cfg.encoder_hidden, "Encoder hidden sizes")
            ->delimiter(',')
            ->capture_default_str();
        cmd->add_option("--hidden-dec", cfg.decoder_hidden, "Decoder hidden sizes")
            ->delimiter(',')
            ->capture_default_str();
        cmd->add_option("--holdout", cfg.holdout_fraction, "Held-out fraction for final metrics")
            ->capture_default_str();
        cmd->add_option("--checkpoint-every", cfg.checkpoint_every,
                        "Write a checkpoint every k epochs (0 = only at the end)")
            ->capture_default_str();
    };

    // --- train ---
    auto* tr = app.add_subcommand("train", "Run constrained VAE training");
    std::string train_data, train_region, train_prefix;
    bool train_dirs = false;
    tr->add_option("--data", train_data, "Dataset file")->required();
    tr->add_option("--region", train_region, "Region file from `cluster`")->required();
    add_train_options(tr, true);
    tr->add_option("--seed-init", cfg.seeds.init, "Weight init seed")->capture_default_str();
    tr->add_option("--seed-shuffle", cfg.seeds.shuffle, "Shuffle/split seed")
        ->capture_default_str();
    tr->add_option("--seed-noise", cfg.seeds.noise, "Reparameterization noise seed")
        ->capture_default_str();
    tr->add_option("--out-prefix", train_prefix,
                   "Prefix for .jsonl/.csv/.ckpt/.manifest.json outputs")
        ->required();
    tr->add_flag("--create-dirs", train_dirs, "Create missing output directories");

    // --- eval ---
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
    std::string eval_ckpt, eval_data, eval_region, eval_split = "holdout";
    double eval_holdout = 0.1;
    bool eval_json = false;
    ev->add_option("--checkpoint", eval_ckpt, "Model checkpoint")->required();
    ev->add_option("--data", eval_data, "Dataset file")->required();
    ev->add_option("--region", eval_region, "Region file")->required();
    ev->add_option("--split", eval_split, "Rows to score: holdout|all")
        ->check(CLI::IsMember({"holdout", "all"}))
        ->capture_default_str();
    ev->add_option("--holdout", eval_holdout, "Holdout fraction used at training time")
        ->capture_default_str();
    ev->add_flag("--json", eval_json, "Emit machine-readable JSON only");

    // --- ablate ---
    auto* ab = app.add_subcommand("ablate", "Run the four constraint variants under shared seeds");
    std::string ablate_data, ablate_region, ablate_out;
    std::vector<std::uint64_t> ablate_seeds{1, 2, 3};
    bool ablate_dirs = false;
    ab->add_option("--data", ablate_data, "Dataset file")->required();
    ab->add_option("--region", ablate_region, "Region file")->required();
    add_train_options(ab, false);
    ab->add_option("--seeds", ablate_seeds, "Base seeds, one grid row per seed")
        ->delimiter(',')
        ->capture_default_str();
    ab->add_option("--out", ablate_out, "Comparison table CSV")->required();
    ab->add_flag("--create-dirs", ablate_dirs, "Create missing output directories");

    // --- verify-theorem ---
    auto* vt = app.add_subcommand("verify-theorem",
                                  "Check the collapse-exclusion argument numerically");
    std::string vt_data, vt_region;
    double vt_epsilon = -1.0;
    vt->add_option("--data", vt_data, "Dataset file")->required();
    vt->add_option("--region", vt_region, "Region file")->required();
    vt->add_option("--epsilon", vt_epsilon, "Threshold inside (w, delta); default (w+delta)/2");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (synth->parsed()) return cmd_synth(gmm, synth_out, synth_dirs);
        if (import_idx->parsed()) {
            return cmd_import_idx(idx_images, idx_labels, idx_subset, idx_seed, idx_out, idx_dirs);
        }
        if (cluster->parsed()) {
            return cmd_cluster(cluster_data, cluster_k, shell_params, shell_seed, kmeans_seed,
                               kmeans_iters, kmeans_tol, cluster_out, cluster_dirs);
        }
        if (tr->parsed()) return cmd_train(train_data, train_region, cfg, train_prefix, train_dirs);
        if (ev->parsed()) {
            return cmd_eval(eval_ckpt, eval_data, eval_region, eval_split, eval_holdout, eval_json);
        }
        if (ab->parsed()) {
            return cmd_ablate(ablate_data, ablate_region, cfg, ablate_seeds, ablate_out,
                              ablate_dirs);
        }
        if (vt->parsed()) {
            std::optional<double> eps;
            if (vt_epsilon >= 0.0) eps = vt_epsilon;
            return cmd_verify_theorem(vt_data, vt_region, eps);
        }
    } catch (const sv::TrainDivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitVerification;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
