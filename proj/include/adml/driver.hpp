#pragma once

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "adml/checkpoint.hpp"
#include "adml/config.hpp"
#include "adml/dataio.hpp"
#include "adml/evalkit.hpp"
#include "adml/features_io.hpp"
#include "adml/gradcheck.hpp"
#include "adml/train.hpp"

namespace adml {

inline Dataset load_dataset(const RunConfig& cfg) {
    if (cfg.data_kind == "idx") {
        ADML_CHECK(!cfg.data_images.empty(), "data.images is required when data.kind = idx");
        ADML_CHECK(!cfg.data_labels.empty(), "data.labels is required when data.kind = idx");
        return load_idx(cfg.data_images, cfg.data_labels);
    }
    return synth_blobs(cfg.blob_classes, cfg.blob_dim, cfg.blob_per_class, cfg.blob_spread,
                       cfg.seed);
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw std::runtime_error("short write to file: " + path);
}

}  // namespace detail

inline std::string training_log_csv(const TrainLog& log, int class_count) {
    std::ostringstream out;
    out << "iteration,lr,loss,violation_count,hard_count";
    if (log.has_margins())
        for (int j = 0; j < class_count; ++j) out << ",margin_" << j;
    out << '\n';
    for (std::size_t i = 0; i < log.entries.size(); ++i) {
        const TrainLogEntry& e = log.entries[i];
        out << e.iteration << ',' << format_double(e.lr) << ',' << format_double(e.loss) << ','
            << e.violation_count << ',' << e.hard_count;
        if (log.has_margins())
            for (double m : log.margin_snapshots[i]) out << ',' << format_double(m);
        out << '\n';
    }
    return out.str();
}

struct TrainArtifacts {
    TrainResult result;
    std::string checkpoint_path;
    std::string log_path;
    std::string config_path;
};

/// Full training run: loads the dataset, optionally warm-starts from a
/// checkpoint, trains, and writes <out>.ckpt, <out>.log.csv and the effective
/// config <out>.cfg.
inline TrainArtifacts run_train(const RunConfig& cfg, const std::string& out_prefix) {
    cfg.validate();
    const Dataset ds = load_dataset(cfg);

    Checkpoint warm;
    const bool has_warm = !cfg.warm_start.empty();
    if (has_warm) warm = load_checkpoint(cfg.warm_start);

    TrainArtifacts art;
    art.result = train(ds, cfg.network_spec(), cfg.loss, cfg.sgd, cfg.seed,
                       has_warm ? &warm.net : nullptr, has_warm ? &warm.head : nullptr,
                       cfg.augment_flip);

    art.checkpoint_path = out_prefix + ".ckpt";
    art.log_path = out_prefix + ".log.csv";
    art.config_path = out_prefix + ".cfg";
    save_checkpoint(art.checkpoint_path, art.result.net, art.result.head);
    detail::write_text_file(art.log_path,
                            training_log_csv(art.result.log, art.result.head.class_count()));
    detail::write_text_file(art.config_path, dump_config(cfg));
    return art;
}

struct EvalArtifacts {
    EvalReport report;
    std::string report_path;
    std::string roc_path;  // empty when the protocol produces no ROC
    std::string cmc_path;  // empty when the protocol produces no CMC
};

namespace detail {

inline Matrix eval_features(const RunConfig& cfg, const Checkpoint& ck, const Dataset& ds) {
    const bool flip = cfg.flip_merge && ds.image_shape.has_value();
    Matrix features = extract_features(ck.net, ds, flip);
    // pca_dim 0 keeps the full dimension (a pure rotation of the features)
    const int out_dim = cfg.pca_dim > 0 ? cfg.pca_dim : features.cols;
    if (features.rows >= 2) {
        const PcaModel model = pca_fit(features, out_dim);
        features = pca_apply(model, features);
    }
    return features;
}

inline void fill_verification_report(EvalReport& rep, const std::vector<double>& scores,
                                     const std::vector<int>& labels, int folds,
                                     const std::vector<double>& far_levels) {
    const KfoldResult kf = kfold_accuracy(scores, labels, folds);
    rep.fold_accuracies = kf.fold_accuracies;
    rep.mean_accuracy = kf.mean_accuracy;
    rep.thresholds = kf.thresholds;
    rep.roc = roc_curve(scores, labels);
    for (double level : far_levels) rep.tar_at_far.emplace_back(level, tar_at_far(rep.roc, level));
}

inline std::string report_text(const RunConfig& cfg, const EvalReport& rep) {
    std::ostringstream out;
    out << "protocol: " << cfg.protocol << '\n';
    if (!rep.fold_accuracies.empty()) {
        out << "folds: " << rep.fold_accuracies.size() << '\n';
        for (std::size_t i = 0; i < rep.fold_accuracies.size(); ++i)
            out << "fold_accuracy_" << i << ": " << format_double(rep.fold_accuracies[i]) << '\n';
        out << "mean_accuracy: " << format_double(rep.mean_accuracy) << '\n';
        for (std::size_t i = 0; i < rep.thresholds.size(); ++i)
            out << "threshold_" << i << ": " << format_double(rep.thresholds[i]) << '\n';
    }
    for (const auto& [level, tar] : rep.tar_at_far)
        out << "tar_at_far_" << format_double(level) << ": " << format_double(tar) << '\n';
    for (std::size_t r = 0; r < rep.cmc.size(); ++r)
        out << "cmc_rank_" << (r + 1) << ": " << format_double(rep.cmc[r]) << '\n';
    return out.str();
}

inline std::string roc_csv(const std::vector<RocPoint>& roc) {
    std::ostringstream out;
    out << "threshold,far,tar\n";
    for (const RocPoint& p : roc)
        out << format_double(p.threshold) << ',' << format_double(p.far) << ','
            << format_double(p.tar) << '\n';
    return out.str();
}

inline std::string cmc_csv(const std::vector<double>& cmc) {
    std::ostringstream out;
    out << "rank,rate\n";
    for (std::size_t r = 0; r < cmc.size(); ++r)
        out << (r + 1) << ',' << format_double(cmc[r]) << '\n';
    return out.str();
}

}  // namespace detail

/// Evaluation protocols over a trained checkpoint:
///   verify    pair file over sample indices, k-fold accuracy + ROC
///   identify  gallery = first sample of each class, probes = the rest, CMC
///   video     template file = frame sets, pair file over template ids,
///             cyclic frame-pair averaging + k-fold + ROC
///   template  like video but softmax-pooled set-to-set scores
inline EvalArtifacts run_eval(const RunConfig& cfg, const std::string& checkpoint_path,
                              const std::string& out_prefix) {
    cfg.validate();
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Dataset ds = load_dataset(cfg);
    ADML_CHECK(ds.dim() == ck.net.spec.input_dim,
               "eval: dataset dimension does not match the checkpoint");
    const Matrix features = detail::eval_features(cfg, ck, ds);

    EvalArtifacts art;
    art.report_path = out_prefix + ".report.txt";

    if (cfg.protocol == "verify") {
        ADML_CHECK(!cfg.pairs_path.empty(), "eval.pairs is required for the verify protocol");
        const PairList pairs = load_pairs(cfg.pairs_path, features.rows);
        const std::vector<double> scores = pair_scores(features, pairs);
        std::vector<int> labels;
        labels.reserve(pairs.entries.size());
        for (const auto& e : pairs.entries) labels.push_back(e.same ? 1 : 0);
        detail::fill_verification_report(art.report, scores, labels, cfg.folds, cfg.far_levels);
        art.roc_path = out_prefix + ".roc.csv";
        detail::write_text_file(art.roc_path, detail::roc_csv(art.report.roc));
    } else if (cfg.protocol == "identify") {
        // Deterministic split: the first occurrence of each class anchors the
        // gallery, every remaining sample probes it.
        std::vector<int> gallery_rows, probe_rows;
        std::vector<char> seen(static_cast<std::size_t>(ds.class_count), 0);
        for (int i = 0; i < ds.size(); ++i) {
            const int label = ds.labels[static_cast<std::size_t>(i)];
            if (!seen[static_cast<std::size_t>(label)]) {
                seen[static_cast<std::size_t>(label)] = 1;
                gallery_rows.push_back(i);
            } else {
                probe_rows.push_back(i);
            }
        }
        ADML_CHECK(!probe_rows.empty(), "identify: need at least two samples of some class");
        const Matrix gallery = gather_rows(features, gallery_rows);
        const Matrix probes = gather_rows(features, probe_rows);
        std::vector<int> gallery_ids, probe_ids;
        for (int i : gallery_rows) gallery_ids.push_back(ds.labels[static_cast<std::size_t>(i)]);
        for (int i : probe_rows) probe_ids.push_back(ds.labels[static_cast<std::size_t>(i)]);
        art.report.cmc = cmc_curve(gallery, gallery_ids, probes, probe_ids, cfg.max_rank);
        art.cmc_path = out_prefix + ".cmc.csv";
        detail::write_text_file(art.cmc_path, detail::cmc_csv(art.report.cmc));
    } else {  // video | template, both scored over template pairs
        ADML_CHECK(!cfg.templates_path.empty(),
                   "eval.templates is required for the video and template protocols");
        ADML_CHECK(!cfg.pairs_path.empty(),
                   "eval.pairs (over template ids) is required for the video and template "
                   "protocols");
        const TemplateSet templates = load_templates(cfg.templates_path, features.rows);
        const PairList pairs = load_pairs(cfg.pairs_path);
        std::vector<double> scores;
        std::vector<int> labels;
        for (const auto& e : pairs.entries) {
            const TemplateEntry* ta = templates.find(e.a);
            const TemplateEntry* tb = templates.find(e.b);
            ADML_CHECK(ta && tb, "eval: pair references an unknown template id");
            if (cfg.protocol == "video") {
                scores.push_back(video_pair_score(gather_rows(features, ta->sample_indices),
                                                  gather_rows(features, tb->sample_indices)));
            } else {
                scores.push_back(
                    template_pool_softmax(template_score_matrix(features, *ta, *tb), cfg.beta));
            }
            labels.push_back(e.same ? 1 : 0);
        }
        detail::fill_verification_report(art.report, scores, labels, cfg.folds, cfg.far_levels);
        art.roc_path = out_prefix + ".roc.csv";
        detail::write_text_file(art.roc_path, detail::roc_csv(art.report.roc));
    }

    detail::write_text_file(art.report_path, detail::report_text(cfg, art.report));
    return art;
}

/// Embeds the dataset with a trained checkpoint and writes the feature file;
/// dim > 0 projects through PCA first. With feature_dim = 2 the CSV plots
/// directly as a 2-D scatter of the embedding space.
inline std::string run_export_features(const RunConfig& cfg, const std::string& checkpoint_path,
                                       const std::string& out_path, int dim, bool binary) {
    cfg.validate();
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Dataset ds = load_dataset(cfg);
    ADML_CHECK(ds.dim() == ck.net.spec.input_dim,
               "export-features: dataset dimension does not match the checkpoint");
    Matrix features = extract_features(ck.net, ds, cfg.flip_merge && ds.image_shape.has_value());
    if (dim > 0 && features.rows >= 2) {
        const PcaModel model = pca_fit(features, dim);
        features = pca_apply(model, features);
    }
    if (binary)
        write_features_binary(out_path, features, ds.labels);
    else
        write_features_csv(out_path, features, ds.labels);
    return out_path;
}

/// Converts a training log with margin columns into long-form CSV rows
/// (iteration, class, margin) for external plotting.
inline void run_margins_trace(const std::string& log_path, const std::string& out_path) {
    std::ifstream in(log_path);
    if (!in) throw std::runtime_error("cannot open training log: " + log_path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty training log: " + log_path);

    std::vector<std::string> cols;
    {
        std::istringstream ss(header);
        std::string tok;
        while (std::getline(ss, tok, ',')) cols.push_back(tok);
    }
    std::vector<int> margin_cols;
    for (std::size_t i = 0; i < cols.size(); ++i)
        if (cols[i].rfind("margin_", 0) == 0) margin_cols.push_back(static_cast<int>(i));
    ADML_CHECK(!margin_cols.empty(),
               "margins-trace: log has no margin columns (not an adaptive-margin run)");

    std::ostringstream out;
    out << "iteration,class,margin\n";
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> toks;
        std::istringstream ss(line);
        std::string tok;
        while (std::getline(ss, tok, ',')) toks.push_back(tok);
        ADML_CHECK(toks.size() == cols.size(), "margins-trace: ragged log row");
        for (std::size_t c = 0; c < margin_cols.size(); ++c)
            out << toks[0] << ',' << c << ',' << toks[static_cast<std::size_t>(margin_cols[c])]
                << '\n';
    }
    detail::write_text_file(out_path, out.str());
}

struct GradcheckRun {
    std::vector<VariantCheck> checks;
    bool pass = true;
};

inline GradcheckRun run_gradcheck(const std::vector<LossVariant>& variants, std::uint64_t seed,
                                  int trials, bool corrupt = false) {
    GradcheckRun run;
    for (LossVariant v : variants) {
        VariantCheck c = gradcheck_variant(v, seed, trials, 1e-5, corrupt);
        run.pass = run.pass && c.pass;
        run.checks.push_back(c);
    }
    return run;
}

}  // namespace adml
