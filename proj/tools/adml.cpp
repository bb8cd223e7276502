// adml - train, check and evaluate angular-margin metric-learning models.
//
// Exit codes: 0 success, 1 validation / usage error, 2 numerical-check
// failure.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "adml/driver.hpp"

namespace {

adml::RunConfig build_config(const std::string& config_path,
                             const std::vector<std::string>& overrides, bool has_seed,
                             std::uint64_t seed) {
    adml::RunConfig cfg;
    if (!config_path.empty()) cfg = adml::parse_config_file(config_path);
    for (const std::string& s : overrides) adml::apply_override(cfg, s);
    if (has_seed) cfg.seed = seed;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"angular-margin deep metric learning toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool has_seed = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (key = value lines)");
        cmd->add_option("--set", overrides, "override a config key, e.g. --set loss.lambda=0.1");
        cmd->add_option("--seed", seed, "override the run seed")->each([&](const std::string&) {
            has_seed = true;
        });
    };

    // train
    auto* train_cmd = app.add_subcommand("train", "train a model and write checkpoint + log");
    std::string train_out = "run";
    std::string warm_start;
    add_common(train_cmd);
    train_cmd->add_option("--out", train_out, "output prefix for .ckpt/.log.csv/.cfg");
    train_cmd->add_option("--warm-start", warm_start, "checkpoint to fine-tune from");

    // gradcheck
    auto* grad_cmd =
        app.add_subcommand("gradcheck", "compare analytic gradients against finite differences");
    std::string grad_variant = "all";
    int grad_trials = 100;
    bool grad_corrupt = false;
    add_common(grad_cmd);
    grad_cmd->add_option("--variant", grad_variant,
                         "softmax|lmc|hlmc|malmc|nlmc|nlmc_malmc|dlmc|all");
    grad_cmd->add_option("--trials", grad_trials, "random instances per variant");
    grad_cmd->add_flag("--corrupt", grad_corrupt,
                       "skew one analytic gradient entry (harness self-test, must fail)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "run an evaluation protocol over a checkpoint");
    std::string eval_ckpt;
    std::string eval_out = "eval";
    std::string eval_protocol;
    add_common(eval_cmd);
    eval_cmd->add_option("--checkpoint", eval_ckpt, "trained checkpoint")->required();
    eval_cmd->add_option("--out", eval_out, "output prefix for report and CSV files");
    eval_cmd->add_option("--protocol", eval_protocol,
                         "verify|identify|video|template (same as --set eval.protocol=...)");

    // export-features
    auto* export_cmd =
        app.add_subcommand("export-features", "embed a dataset and write a feature file");
    std::string export_ckpt, export_out = "features.csv";
    int export_dim = 0;
    bool export_binary = false;
    add_common(export_cmd);
    export_cmd->add_option("--checkpoint", export_ckpt, "trained checkpoint")->required();
    export_cmd->add_option("--out", export_out, "output feature file");
    export_cmd->add_option("--dim", export_dim, "project through PCA to this dimension (0 = raw)");
    export_cmd->add_flag("--binary", export_binary, "write the binary feature format");

    // margins-trace
    auto* trace_cmd = app.add_subcommand(
        "margins-trace", "extract per-class margins from an adaptive-margin training log");
    std::string trace_log, trace_out = "margins.csv";
    trace_cmd->add_option("--log", trace_log, "training log CSV from an adaptive-margin run")
        ->required();
    trace_cmd->add_option("--out", trace_out, "output CSV (iteration,class,margin)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (*train_cmd) {
            adml::RunConfig cfg = build_config(config_path, overrides, has_seed, seed);
            if (!warm_start.empty()) cfg.warm_start = warm_start;
            const adml::TrainArtifacts art = adml::run_train(cfg, train_out);
            const double final_loss =
                art.result.log.entries.empty() ? 0.0 : art.result.log.entries.back().loss;
            std::printf("trained %zu iterations, final loss %.6f\n",
                        art.result.log.entries.size(), final_loss);
            std::printf("checkpoint: %s\nlog: %s\nconfig: %s\n", art.checkpoint_path.c_str(),
                        art.log_path.c_str(), art.config_path.c_str());
        } else if (*grad_cmd) {
            adml::RunConfig cfg = build_config(config_path, overrides, has_seed, seed);
            std::vector<adml::LossVariant> variants;
            if (grad_variant == "all") {
                variants = adml::all_variants();
            } else {
                const auto v = adml::parse_variant(grad_variant);
                if (!v) throw std::invalid_argument("unknown variant \"" + grad_variant + "\"");
                variants.push_back(*v);
            }
            const adml::GradcheckRun run =
                adml::run_gradcheck(variants, cfg.seed, grad_trials, grad_corrupt);
            for (const adml::VariantCheck& c : run.checks)
                std::printf("%-11s %4d instances  max rel err %.3e  tol %.1e  %s%s\n",
                            adml::variant_name(c.variant), c.instances, c.max_rel_err,
                            c.tolerance, c.pass ? "ok" : "FAIL",
                            c.variant == adml::LossVariant::DLMC
                                ? (c.reduction_ok ? "  (triplet reduction ok)"
                                                  : "  (triplet reduction FAILED)")
                                : "");
            if (!run.pass) {
                std::fprintf(stderr, "gradient check failed\n");
                return 2;
            }
        } else if (*eval_cmd) {
            if (!eval_protocol.empty()) overrides.push_back("eval.protocol=" + eval_protocol);
            const adml::RunConfig cfg = build_config(config_path, overrides, has_seed, seed);
            const adml::EvalArtifacts art = adml::run_eval(cfg, eval_ckpt, eval_out);
            std::printf("report: %s\n", art.report_path.c_str());
            if (!art.roc_path.empty()) std::printf("roc: %s\n", art.roc_path.c_str());
            if (!art.cmc_path.empty()) std::printf("cmc: %s\n", art.cmc_path.c_str());
            if (!art.report.fold_accuracies.empty())
                std::printf("mean accuracy: %.6f\n", art.report.mean_accuracy);
            if (!art.report.cmc.empty()) std::printf("rank-1 rate: %.6f\n", art.report.cmc[0]);
        } else if (*export_cmd) {
            const adml::RunConfig cfg = build_config(config_path, overrides, has_seed, seed);
            adml::run_export_features(cfg, export_ckpt, export_out, export_dim, export_binary);
            std::printf("features: %s\n", export_out.c_str());
        } else if (*trace_cmd) {
            adml::run_margins_trace(trace_log, trace_out);
            std::printf("margins: %s\n", trace_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
