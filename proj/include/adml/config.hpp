#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adml/dataio.hpp"
#include "adml/features_io.hpp"
#include "adml/losses.hpp"
#include "adml/network.hpp"
#include "adml/optimizer.hpp"

namespace adml {

/// Everything a run needs, addressable by flat "section.key" names. Files are
/// UTF-8 lines "key = value" with "#" comments; --set overrides use the same
/// key names. Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 1;

    LossConfig loss;
    NetworkSpec net{16, {32}, 16, Activation::Relu, 0};  // init_seed 0 = follow seed
    SGDConfig sgd;
    std::string warm_start;  // checkpoint path for fine-tuning, empty = scratch

    // dataset
    std::string data_kind = "blobs";  // blobs | idx
    std::string data_images;
    std::string data_labels;
    int blob_classes = 10;
    int blob_dim = 16;
    int blob_per_class = 200;
    double blob_spread = 0.3;
    bool augment_flip = false;

    // evaluation
    std::string protocol = "verify";  // verify | identify | video | template
    std::string pairs_path;
    std::string templates_path;
    int pca_dim = 0;  // 0 = keep the full feature dimension
    int folds = 10;
    double beta = 10.0;
    int max_rank = 10;
    bool flip_merge = true;  // only takes effect on image-shaped datasets
    std::vector<double> far_levels = {0.01, 0.001};

    NetworkSpec network_spec() const {
        NetworkSpec s = net;
        if (s.init_seed == 0) s.init_seed = seed;
        return s;
    }

    void validate() const {
        loss.validate();
        net.validate();
        sgd.validate();
        ADML_CHECK(data_kind == "blobs" || data_kind == "idx",
                   "data.kind must be \"blobs\" or \"idx\"");
        ADML_CHECK(blob_classes >= 1 && blob_dim >= 1 && blob_per_class >= 1,
                   "data.blob_* values must be >= 1");
        ADML_CHECK(blob_spread > 0.0, "data.blob_spread must be > 0");
        ADML_CHECK(protocol == "verify" || protocol == "identify" || protocol == "video" ||
                       protocol == "template",
                   "eval.protocol must be verify, identify, video or template");
        ADML_CHECK(pca_dim >= 0, "eval.pca_dim must be >= 0");
        ADML_CHECK(folds >= 2, "eval.folds must be >= 2");
        ADML_CHECK(beta >= 0.0, "eval.beta must be >= 0");
        ADML_CHECK(max_rank >= 1, "eval.max_rank must be >= 1");
        for (double f : far_levels)
            ADML_CHECK(f >= 0.0 && f <= 1.0, "eval.far_levels entries must be in [0,1]");
    }
};

namespace detail {

[[noreturn]] inline void config_error(const std::string& key, const std::string& what) {
    throw std::invalid_argument("config key \"" + key + "\": " + what);
}

inline std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) config_error(key, "bad number \"" + v + "\"");
        return d;
    } catch (const std::invalid_argument&) {
        config_error(key, "bad number \"" + v + "\"");
    } catch (const std::out_of_range&) {
        config_error(key, "number out of range \"" + v + "\"");
    }
}

inline long parse_long(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long d = std::stol(v, &used);
        if (used != v.size()) config_error(key, "bad integer \"" + v + "\"");
        return d;
    } catch (const std::invalid_argument&) {
        config_error(key, "bad integer \"" + v + "\"");
    } catch (const std::out_of_range&) {
        config_error(key, "integer out of range \"" + v + "\"");
    }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    config_error(key, "bad boolean \"" + v + "\"");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string tok;
    std::istringstream ss(s);
    while (std::getline(ss, tok, sep)) out.push_back(trim(tok));
    if (!out.empty() && out.back().empty()) out.pop_back();
    return out;
}

}  // namespace detail

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& raw_value) {
    using detail::config_error;
    const std::string value = detail::trim(raw_value);

    if (key == "seed") {
        cfg.seed = static_cast<std::uint64_t>(detail::parse_long(key, value));
    } else if (key == "loss.variant") {
        const auto v = parse_variant(value);
        if (!v) config_error(key, "unknown variant \"" + value + "\"");
        cfg.loss.variant = *v;
    } else if (key == "loss.lambda") {
        cfg.loss.lambda = detail::parse_double(key, value);
    } else if (key == "loss.alpha") {
        cfg.loss.alpha = detail::parse_double(key, value);
    } else if (key == "loss.alpha0") {
        cfg.loss.alpha0 = detail::parse_double(key, value);
    } else if (key == "loss.p") {
        cfg.loss.p = detail::parse_double(key, value);
    } else if (key == "loss.scale_init") {
        cfg.loss.scale_init = detail::parse_double(key, value);
    } else if (key == "loss.scale_learnable") {
        cfg.loss.scale_learnable = detail::parse_bool(key, value);
    } else if (key == "net.input_dim") {
        cfg.net.input_dim = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "net.hidden_dims") {
        cfg.net.hidden_dims.clear();
        for (const std::string& tok : detail::split(value, ','))
            if (!tok.empty())
                cfg.net.hidden_dims.push_back(static_cast<int>(detail::parse_long(key, tok)));
    } else if (key == "net.feature_dim") {
        cfg.net.feature_dim = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "net.activation") {
        if (value == "relu")
            cfg.net.activation = Activation::Relu;
        else if (value == "prelu")
            cfg.net.activation = Activation::Prelu;
        else
            config_error(key, "must be \"relu\" or \"prelu\"");
    } else if (key == "net.init_seed") {
        cfg.net.init_seed = static_cast<std::uint64_t>(detail::parse_long(key, value));
    } else if (key == "sgd.base_lr") {
        cfg.sgd.base_lr = detail::parse_double(key, value);
    } else if (key == "sgd.lr_drops") {
        cfg.sgd.lr_drops.clear();
        for (const std::string& tok : detail::split(value, ',')) {
            if (tok.empty()) continue;
            const std::size_t colon = tok.find(':');
            if (colon == std::string::npos)
                config_error(key, "expected \"iteration:divisor\" entries");
            cfg.sgd.lr_drops.emplace_back(detail::parse_long(key, tok.substr(0, colon)),
                                          detail::parse_double(key, tok.substr(colon + 1)));
        }
    } else if (key == "sgd.momentum") {
        cfg.sgd.momentum = detail::parse_double(key, value);
    } else if (key == "sgd.weight_decay") {
        cfg.sgd.weight_decay = detail::parse_double(key, value);
    } else if (key == "sgd.max_iter") {
        cfg.sgd.max_iter = detail::parse_long(key, value);
    } else if (key == "sgd.batch_size") {
        cfg.sgd.batch_size = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "train.warm_start") {
        cfg.warm_start = value;
    } else if (key == "data.kind") {
        cfg.data_kind = value;
    } else if (key == "data.images") {
        cfg.data_images = value;
    } else if (key == "data.labels") {
        cfg.data_labels = value;
    } else if (key == "data.blob_classes") {
        cfg.blob_classes = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "data.blob_dim") {
        cfg.blob_dim = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "data.blob_per_class") {
        cfg.blob_per_class = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "data.blob_spread") {
        cfg.blob_spread = detail::parse_double(key, value);
    } else if (key == "data.augment_flip") {
        cfg.augment_flip = detail::parse_bool(key, value);
    } else if (key == "eval.protocol") {
        cfg.protocol = value;
    } else if (key == "eval.pairs") {
        cfg.pairs_path = value;
    } else if (key == "eval.templates") {
        cfg.templates_path = value;
    } else if (key == "eval.pca_dim") {
        cfg.pca_dim = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "eval.folds") {
        cfg.folds = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "eval.beta") {
        cfg.beta = detail::parse_double(key, value);
    } else if (key == "eval.max_rank") {
        cfg.max_rank = static_cast<int>(detail::parse_long(key, value));
    } else if (key == "eval.flip_merge") {
        cfg.flip_merge = detail::parse_bool(key, value);
    } else if (key == "eval.far_levels") {
        cfg.far_levels.clear();
        for (const std::string& tok : detail::split(value, ','))
            if (!tok.empty()) cfg.far_levels.push_back(detail::parse_double(key, tok));
    } else {
        config_error(key, "unknown key");
    }
}

/// Applies one "key=value" override.
inline void apply_override(RunConfig& cfg, const std::string& setting) {
    const std::size_t eq = setting.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override \"" + setting + "\" must look like key=value");
    apply_setting(cfg, detail::trim(setting.substr(0, eq)), setting.substr(eq + 1));
}

inline RunConfig parse_config_text(std::istream& in, const std::string& origin) {
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const std::string trimmed = detail::trim(line);
        if (trimmed.empty()) continue;
        const std::size_t eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                        ": expected \"key = value\"");
        try {
            apply_setting(cfg, detail::trim(trimmed.substr(0, eq)), trimmed.substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return cfg;
}

inline RunConfig parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    return parse_config_text(in, path);
}

/// Canonical dump: every key, fixed order, reparseable. Running from a dumped
/// config reproduces the run.
inline std::string dump_config(const RunConfig& cfg) {
    std::ostringstream out;
    out << "seed = " << cfg.seed << '\n';
    out << "loss.variant = " << variant_name(cfg.loss.variant) << '\n';
    out << "loss.lambda = " << format_double(cfg.loss.lambda) << '\n';
    out << "loss.alpha = " << format_double(cfg.loss.alpha) << '\n';
    out << "loss.alpha0 = " << format_double(cfg.loss.alpha0) << '\n';
    out << "loss.p = " << format_double(cfg.loss.p) << '\n';
    out << "loss.scale_init = " << format_double(cfg.loss.scale_init) << '\n';
    out << "loss.scale_learnable = " << (cfg.loss.scale_learnable ? "true" : "false") << '\n';
    out << "net.input_dim = " << cfg.net.input_dim << '\n';
    out << "net.hidden_dims = ";
    for (std::size_t i = 0; i < cfg.net.hidden_dims.size(); ++i)
        out << (i ? "," : "") << cfg.net.hidden_dims[i];
    out << '\n';
    out << "net.feature_dim = " << cfg.net.feature_dim << '\n';
    out << "net.activation = " << activation_name(cfg.net.activation) << '\n';
    out << "net.init_seed = " << cfg.net.init_seed << '\n';
    out << "sgd.base_lr = " << format_double(cfg.sgd.base_lr) << '\n';
    out << "sgd.lr_drops = ";
    for (std::size_t i = 0; i < cfg.sgd.lr_drops.size(); ++i)
        out << (i ? "," : "") << cfg.sgd.lr_drops[i].first << ':'
            << format_double(cfg.sgd.lr_drops[i].second);
    out << '\n';
    out << "sgd.momentum = " << format_double(cfg.sgd.momentum) << '\n';
    out << "sgd.weight_decay = " << format_double(cfg.sgd.weight_decay) << '\n';
    out << "sgd.max_iter = " << cfg.sgd.max_iter << '\n';
    out << "sgd.batch_size = " << cfg.sgd.batch_size << '\n';
    out << "train.warm_start = " << cfg.warm_start << '\n';
    out << "data.kind = " << cfg.data_kind << '\n';
    out << "data.images = " << cfg.data_images << '\n';
    out << "data.labels = " << cfg.data_labels << '\n';
    out << "data.blob_classes = " << cfg.blob_classes << '\n';
    out << "data.blob_dim = " << cfg.blob_dim << '\n';
    out << "data.blob_per_class = " << cfg.blob_per_class << '\n';
    out << "data.blob_spread = " << format_double(cfg.blob_spread) << '\n';
    out << "data.augment_flip = " << (cfg.augment_flip ? "true" : "false") << '\n';
    out << "eval.protocol = " << cfg.protocol << '\n';
    out << "eval.pairs = " << cfg.pairs_path << '\n';
    out << "eval.templates = " << cfg.templates_path << '\n';
    out << "eval.pca_dim = " << cfg.pca_dim << '\n';
    out << "eval.folds = " << cfg.folds << '\n';
    out << "eval.beta = " << format_double(cfg.beta) << '\n';
    out << "eval.max_rank = " << cfg.max_rank << '\n';
    out << "eval.flip_merge = " << (cfg.flip_merge ? "true" : "false") << '\n';
    out << "eval.far_levels = ";
    for (std::size_t i = 0; i < cfg.far_levels.size(); ++i)
        out << (i ? "," : "") << format_double(cfg.far_levels[i]);
    out << '\n';
    return out.str();
}

}  // namespace adml
