#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adml/matrix.hpp"
#include "adml/rng.hpp"

namespace adml {

enum class LossVariant { Softmax, LMC, HLMC, MALMC, NLMC, NLMC_MALMC, DLMC };

inline const char* variant_name(LossVariant v) {
    switch (v) {
        case LossVariant::Softmax: return "softmax";
        case LossVariant::LMC: return "lmc";
        case LossVariant::HLMC: return "hlmc";
        case LossVariant::MALMC: return "malmc";
        case LossVariant::NLMC: return "nlmc";
        case LossVariant::NLMC_MALMC: return "nlmc_malmc";
        case LossVariant::DLMC: return "dlmc";
    }
    return "?";
}

inline std::optional<LossVariant> parse_variant(std::string_view s) {
    std::string t;
    for (char c : s) t.push_back(c == '+' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "softmax") return LossVariant::Softmax;
    if (t == "lmc") return LossVariant::LMC;
    if (t == "hlmc") return LossVariant::HLMC;
    if (t == "malmc") return LossVariant::MALMC;
    if (t == "nlmc") return LossVariant::NLMC;
    if (t == "nlmc_malmc") return LossVariant::NLMC_MALMC;
    if (t == "dlmc") return LossVariant::DLMC;
    return std::nullopt;
}

inline const std::vector<LossVariant>& all_variants() {
    static const std::vector<LossVariant> v = {
        LossVariant::Softmax, LossVariant::LMC,  LossVariant::HLMC,       LossVariant::MALMC,
        LossVariant::NLMC,    LossVariant::DLMC, LossVariant::NLMC_MALMC,
    };
    return v;
}

/// Variant selector plus every hyper-parameter the loss family uses:
///   lambda  weight of the metric term against the classification term
///   alpha   fixed cosine margin of the hinge terms
///   alpha0  floor for the per-class adaptive margins
///   p       fraction of similarities kept by the adaptive margin and the
///           nearest-neighbour inter-class mean
///   scale_init / scale_learnable  common norm of the normalized softmax
struct LossConfig {
    LossVariant variant = LossVariant::Softmax;
    double lambda = 0.0;
    double alpha = 0.5;
    double alpha0 = 0.2;
    double p = 0.6;
    double scale_init = 4.0;
    bool scale_learnable = true;

    bool uses_scale() const {
        return variant == LossVariant::NLMC || variant == LossVariant::NLMC_MALMC ||
               variant == LossVariant::DLMC;
    }
    bool uses_adaptive_margins() const {
        return variant == LossVariant::MALMC || variant == LossVariant::NLMC_MALMC;
    }

    void validate() const {
        ADML_CHECK(lambda >= 0.0, "loss.lambda must be >= 0");
        ADML_CHECK(alpha >= 0.0 && alpha <= 1.0, "loss.alpha must be in [0,1]");
        ADML_CHECK(alpha0 >= 0.0 && alpha0 <= 1.0, "loss.alpha0 must be in [0,1]");
        ADML_CHECK(p > 0.0 && p <= 1.0, "loss.p must be in (0,1]");
        ADML_CHECK(scale_init > 0.0, "loss.scale_init must be > 0");
    }
};

/// One mini-batch of embeddings: M feature rows with class labels in [0, N).
struct FeatureBatch {
    Matrix features;          // M x D
    std::vector<int> labels;  // size M

    int size() const { return features.rows; }
    int feature_dim() const { return features.cols; }
};

/// Last-layer classifier state: one weight column per class, the per-class
/// adaptive margins, and the learnable common norm of the normalized softmax.
struct ClassHead {
    Matrix weights;               // D x N, column j belongs to class j
    std::vector<double> margins;  // size N
    double scale = 4.0;

    int feature_dim() const { return weights.rows; }
    int class_count() const { return weights.cols; }

    static ClassHead init(int feature_dim, int class_count, const LossConfig& cfg, Rng& rng) {
        ADML_CHECK(feature_dim >= 1 && class_count >= 1, "ClassHead: dimensions must be >= 1");
        ClassHead h;
        h.weights = Matrix(feature_dim, class_count);
        const double bound = std::sqrt(6.0 / (feature_dim + class_count));
        for (double& v : h.weights.values) v = rng.uniform(-bound, bound);
        h.margins.assign(static_cast<std::size_t>(class_count), cfg.alpha0);
        h.scale = cfg.scale_init;
        return h;
    }
};

struct LossDiagnostics {
    double mean_intra_cosine = 0.0;
    int violation_count = 0;  // samples whose hinge term is active
    int hard_count = 0;       // samples misclassified by the classification logits
    std::vector<double> per_class_margins;
};

struct LossOutput {
    double loss = 0.0;
    Matrix grad_features;  // M x D
    Matrix grad_weights;   // D x N
    double grad_scale = 0.0;
    LossDiagnostics diagnostics;
};

/// Fractional counts (p times a similarity count) resolve by rounding half
/// up, clamped into [1, count].
inline int scaled_count(double p, int count) {
    const int k = static_cast<int>(std::floor(p * count + 0.5));
    return std::clamp(k, 1, count);
}

namespace detail {

inline void validate_batch_head(const FeatureBatch& b, const ClassHead& h) {
    ADML_CHECK(b.features.rows == static_cast<int>(b.labels.size()),
               "FeatureBatch: labels length must equal feature rows");
    ADML_CHECK(b.features.cols == h.feature_dim(),
               "feature dimension mismatch between batch and head");
    const int n = h.class_count();
    for (std::size_t i = 0; i < b.labels.size(); ++i)
        ADML_CHECK(b.labels[i] >= 0 && b.labels[i] < n,
                   "label out of range at sample " + std::to_string(i));
}

/// Normalized copies of the batch and weight matrix plus their cosines;
/// every cosine-based term works off one of these.
struct CosineView {
    Matrix xn;                  // row-normalized features, M x D
    Matrix wn;                  // column-normalized weights, D x N
    std::vector<double> xnorm;  // eps-floored row norms of x
    std::vector<double> wnorm;  // eps-floored column norms of w
    Matrix cos;                 // M x N, clamped to [-1, 1]
};

inline CosineView make_cosine_view(const FeatureBatch& b, const ClassHead& h) {
    CosineView v;
    v.xn = l2_normalize_rows(b.features);
    v.wn = l2_normalize_cols(h.weights);
    v.xnorm.resize(static_cast<std::size_t>(b.features.rows));
    for (int i = 0; i < b.features.rows; ++i)
        v.xnorm[i] = std::max(row_norm(b.features, i), kNormEps);
    v.wnorm.resize(static_cast<std::size_t>(h.weights.cols));
    for (int j = 0; j < h.weights.cols; ++j)
        v.wnorm[j] = std::max(col_norm(h.weights, j), kNormEps);
    v.cos = matmul(v.xn, v.wn);
    for (double& c : v.cos.values) c = std::clamp(c, -1.0, 1.0);
    return v;
}

/// Accumulates coef * d cos(x_i, W_j) into the feature and weight gradients.
/// With x~ = x/|x| and w~ = w/|w|:
///   d cos / d x_i = (w~_j - cos * x~_i) / |x_i|
///   d cos / d W_j = (x~_i - cos * w~_j) / |W_j|
/// Below the norm floor the divisor is the constant eps, so the projection
/// term vanishes and the derivative is w~_j / eps (resp. x~_i / eps).
inline void add_cosine_grad(const CosineView& v, int i, int j, double coef, Matrix& gx,
                            Matrix& gw) {
    const double c = v.cos(i, j);
    const double* xr = v.xn.row(i);
    double* gxr = gx.row(i);
    const double cx = coef / v.xnorm[i];
    const double cw = coef / v.wnorm[j];
    const double cproj_x = v.xnorm[i] <= kNormEps ? 0.0 : c;
    const double cproj_w = v.wnorm[j] <= kNormEps ? 0.0 : c;
    const int d = v.xn.cols;
    for (int k = 0; k < d; ++k) {
        const double wk = v.wn(k, j);
        gxr[k] += cx * (wk - cproj_x * xr[k]);
        gw(k, j) += cw * (xr[k] - cproj_w * wk);
    }
}

inline double mean_intra_cosine(const CosineView& v, const std::vector<int>& labels) {
    if (labels.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        s += v.cos(static_cast<int>(i), labels[i]);
    return s / static_cast<double>(labels.size());
}

/// Inter-class cosines of sample i sorted descending; equal cosines order by
/// ascending class index so ranking is deterministic.
inline std::vector<std::pair<double, int>> sorted_interclass(const Matrix& cos, int i,
                                                             int label) {
    std::vector<std::pair<double, int>> out;
    out.reserve(static_cast<std::size_t>(cos.cols - 1));
    for (int j = 0; j < cos.cols; ++j)
        if (j != label) out.emplace_back(cos(i, j), j);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    return out;
}

}  // namespace detail

/// Mean cross entropy of the softmax over the raw logits W^T x (no bias
/// term), with analytic gradients for features and weights.
inline LossOutput softmax_ce(const FeatureBatch& b, const ClassHead& h) {
    detail::validate_batch_head(b, h);
    const int m = b.size();
    const int n = h.class_count();
    LossOutput out;
    out.grad_features = Matrix(m, b.feature_dim());
    out.grad_weights = Matrix(h.feature_dim(), n);
    if (m == 0) return out;

    const Matrix logits = matmul(b.features, h.weights);
    const Matrix logp = log_softmax_rows(logits);

    double total = 0.0;
    Matrix dlogits(m, n);  // d loss / d logits = (softmax - onehot) / M
    const double inv_m = 1.0 / m;
    for (int i = 0; i < m; ++i) {
        total -= logp(i, b.labels[i]);
        for (int j = 0; j < n; ++j)
            dlogits(i, j) = (std::exp(logp(i, j)) - (j == b.labels[i] ? 1.0 : 0.0)) * inv_m;
    }
    out.loss = total * inv_m;
    out.grad_features = matmul(dlogits, transpose(h.weights));
    out.grad_weights = matmul(transpose(b.features), dlogits);
    return out;
}

/// Misclassified-sample indicator from the raw logits: 1 when the argmax
/// class differs from the label. Argmax ties break toward the lowest index.
inline std::vector<int> hard_mask(const FeatureBatch& b, const ClassHead& h) {
    detail::validate_batch_head(b, h);
    const Matrix logits = matmul(b.features, h.weights);
    std::vector<int> mask(static_cast<std::size_t>(b.size()));
    for (int i = 0; i < b.size(); ++i) {
        int best = 0;
        for (int j = 1; j < logits.cols; ++j)
            if (logits(i, j) > logits(i, best)) best = j;
        mask[static_cast<std::size_t>(i)] = (best != b.labels[i]) ? 1 : 0;
    }
    return mask;
}

namespace detail {

/// Shared machinery for the hinge terms: mean over the batch of
/// mask_i * max(0, alpha_i - cos(W_{y_i}, x_i)), with gradients flowing
/// through both normalizations. Subgradient is 0 at the kink and in the
/// inactive region.
inline LossOutput cosine_hinge_term(const FeatureBatch& b, const ClassHead& h,
                                    const std::vector<double>& per_sample_alpha,
                                    const std::vector<int>* mask) {
    validate_batch_head(b, h);
    const int m = b.size();
    LossOutput out;
    out.grad_features = Matrix(m, b.feature_dim());
    out.grad_weights = Matrix(h.feature_dim(), h.class_count());
    if (m == 0) return out;
    ADML_CHECK(static_cast<int>(per_sample_alpha.size()) == m,
               "hinge term: one margin per sample required");

    const CosineView view = make_cosine_view(b, h);
    const double inv_m = 1.0 / m;
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        if (mask && (*mask)[static_cast<std::size_t>(i)] == 0) continue;
        const int y = b.labels[static_cast<std::size_t>(i)];
        const double t = per_sample_alpha[static_cast<std::size_t>(i)] - view.cos(i, y);
        if (t > 0.0) {
            total += t;
            out.diagnostics.violation_count += 1;
            add_cosine_grad(view, i, y, -inv_m, out.grad_features, out.grad_weights);
        }
    }
    out.loss = total * inv_m;
    out.diagnostics.mean_intra_cosine = mean_intra_cosine(view, b.labels);
    return out;
}

}  // namespace detail

/// Fixed-margin hinge on the intra-class cosine: mean of
/// max(0, alpha - cos(W_{y_i}, x_i)).
inline LossOutput lmc_term(const FeatureBatch& b, const ClassHead& h, double alpha) {
    std::vector<double> alphas(static_cast<std::size_t>(b.size()), alpha);
    return detail::cosine_hinge_term(b, h, alphas, nullptr);
}

/// Per-class adaptive margins: for every class present in the batch, the
/// margin becomes max(alpha0, sum of the top k intra-class cosines divided by
/// 1 + k), where k = scaled_count(p, class size). Classes absent from the
/// batch keep their previous margin. Detached: no gradient flows through the
/// result, which is also stored into head.margins.
inline std::vector<double> adaptive_margins(const FeatureBatch& b, ClassHead& h, double alpha0,
                                            double p) {
    detail::validate_batch_head(b, h);
    ADML_CHECK(p > 0.0 && p <= 1.0, "adaptive_margins: p must be in (0,1]");
    ADML_CHECK(alpha0 >= 0.0 && alpha0 <= 1.0, "adaptive_margins: alpha0 must be in [0,1]");
    const detail::CosineView view = detail::make_cosine_view(b, h);

    std::vector<std::vector<double>> per_class(static_cast<std::size_t>(h.class_count()));
    for (int i = 0; i < b.size(); ++i)
        per_class[static_cast<std::size_t>(b.labels[static_cast<std::size_t>(i)])].push_back(
            view.cos(i, b.labels[static_cast<std::size_t>(i)]));

    for (int j = 0; j < h.class_count(); ++j) {
        auto& cosines = per_class[static_cast<std::size_t>(j)];
        if (cosines.empty()) continue;
        std::sort(cosines.begin(), cosines.end(), std::greater<double>());
        const int k = scaled_count(p, static_cast<int>(cosines.size()));
        double top = 0.0;
        for (int t = 0; t < k; ++t) top += cosines[static_cast<std::size_t>(t)];
        h.margins[static_cast<std::size_t>(j)] = std::max(alpha0, top / (1.0 + k));
    }
    return h.margins;
}

/// Cross entropy over cosine logits scaled by s^2: both features and weight
/// columns enter at the common norm s, which receives its own gradient.
inline LossOutput normalized_softmax(const FeatureBatch& b, const ClassHead& h) {
    detail::validate_batch_head(b, h);
    ADML_CHECK(h.scale > 0.0, "normalized_softmax: scale must be > 0");
    const int m = b.size();
    const int n = h.class_count();
    LossOutput out;
    out.grad_features = Matrix(m, b.feature_dim());
    out.grad_weights = Matrix(h.feature_dim(), n);
    if (m == 0) return out;

    const detail::CosineView view = detail::make_cosine_view(b, h);
    const double s = h.scale;
    const double s2 = s * s;

    Matrix logits(m, n);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) logits(i, j) = s2 * view.cos(i, j);
    const Matrix logp = log_softmax_rows(logits);

    double total = 0.0;
    double grad_scale = 0.0;
    const double inv_m = 1.0 / m;
    for (int i = 0; i < m; ++i) {
        const int y = b.labels[static_cast<std::size_t>(i)];
        total -= logp(i, y);
        for (int j = 0; j < n; ++j) {
            const double dlogit = (std::exp(logp(i, j)) - (j == y ? 1.0 : 0.0)) * inv_m;
            detail::add_cosine_grad(view, i, j, dlogit * s2, out.grad_features,
                                    out.grad_weights);
            grad_scale += dlogit * 2.0 * s * view.cos(i, j);
        }
    }
    out.loss = total * inv_m;
    out.grad_scale = grad_scale;
    out.diagnostics.mean_intra_cosine = detail::mean_intra_cosine(view, b.labels);
    return out;
}

/// Discriminative hinge: the intra-class cosine must beat the log-sum-exp of
/// the K nearest inter-class cosines (each divided by K) by the margin alpha,
/// K = scaled_count(p, N - 1). Per sample:
///   max(0, lse(topK / K) - (cos_y - alpha))
/// The top-K index selection is detached and fixed within the step; gradients
/// flow through cos_y and the selected cosines only.
inline LossOutput dlmc_term(const FeatureBatch& b, const ClassHead& h, double alpha, double p) {
    detail::validate_batch_head(b, h);
    ADML_CHECK(h.class_count() >= 2, "dlmc_term: at least two classes required");
    ADML_CHECK(p > 0.0 && p <= 1.0, "dlmc_term: p must be in (0,1]");
    const int m = b.size();
    LossOutput out;
    out.grad_features = Matrix(m, b.feature_dim());
    out.grad_weights = Matrix(h.feature_dim(), h.class_count());
    if (m == 0) return out;

    const detail::CosineView view = detail::make_cosine_view(b, h);
    const int k = scaled_count(p, h.class_count() - 1);
    const double inv_m = 1.0 / m;
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const int y = b.labels[static_cast<std::size_t>(i)];
        const auto inter = detail::sorted_interclass(view.cos, i, y);
        // max-shifted log-sum-exp; with k = 1 this reduces exactly to the
        // nearest inter-class cosine, making the triplet-variant identity
        // hold bit for bit.
        const double vmax = inter[0].first / k;
        double sum = 0.0;
        for (int t = 0; t < k; ++t)
            sum += std::exp(inter[static_cast<std::size_t>(t)].first / k - vmax);
        const double lse = vmax + std::log(sum);
        const double target = view.cos(i, y) - alpha;
        const double arg = lse - target;
        if (arg > 0.0) {
            total += arg;
            out.diagnostics.violation_count += 1;
            detail::add_cosine_grad(view, i, y, -inv_m, out.grad_features, out.grad_weights);
            for (int t = 0; t < k; ++t) {
                const auto& [c, j] = inter[static_cast<std::size_t>(t)];
                const double w = std::exp(c / k - vmax) / sum;
                detail::add_cosine_grad(view, i, j, (w / k) * inv_m, out.grad_features,
                                        out.grad_weights);
            }
        }
    }
    out.loss = total * inv_m;
    out.diagnostics.mean_intra_cosine = detail::mean_intra_cosine(view, b.labels);
    return out;
}

/// Triplet-style hinge on cosines: mean of
/// max(0, nearest inter-class cosine - cos_y + alpha). Exactly the K = 1 case
/// of the discriminative hinge.
inline LossOutput triplet_variant(const FeatureBatch& b, const ClassHead& h, double alpha) {
    detail::validate_batch_head(b, h);
    ADML_CHECK(h.class_count() >= 2, "triplet_variant: at least two classes required");
    const int m = b.size();
    LossOutput out;
    out.grad_features = Matrix(m, b.feature_dim());
    out.grad_weights = Matrix(h.feature_dim(), h.class_count());
    if (m == 0) return out;

    const detail::CosineView view = detail::make_cosine_view(b, h);
    const double inv_m = 1.0 / m;
    double total = 0.0;
    for (int i = 0; i < m; ++i) {
        const int y = b.labels[static_cast<std::size_t>(i)];
        const auto inter = detail::sorted_interclass(view.cos, i, y);
        const double target = view.cos(i, y) - alpha;
        const double arg = inter[0].first - target;
        if (arg > 0.0) {
            total += arg;
            out.diagnostics.violation_count += 1;
            detail::add_cosine_grad(view, i, y, -inv_m, out.grad_features, out.grad_weights);
            detail::add_cosine_grad(view, i, inter[0].second, inv_m, out.grad_features,
                                    out.grad_weights);
        }
    }
    out.loss = total * inv_m;
    out.diagnostics.mean_intra_cosine = detail::mean_intra_cosine(view, b.labels);
    return out;
}

namespace detail {

inline void add_metric_term(LossOutput& base, LossOutput&& term, double lambda) {
    base.loss += lambda * term.loss;
    add_scaled_inplace(base.grad_features, term.grad_features, lambda);
    add_scaled_inplace(base.grad_weights, term.grad_weights, lambda);
    base.grad_scale += lambda * term.grad_scale;
    base.diagnostics.violation_count = term.diagnostics.violation_count;
}

}  // namespace detail

/// Dispatches the full loss of the selected variant: a classification term
/// (plain or normalized softmax) plus lambda times the variant's metric term.
/// For the adaptive-margin variants the caller applies adaptive_margins on
/// the current batch first; head.margins is read as-is here.
inline LossOutput joint_loss(const FeatureBatch& b, const ClassHead& h, const LossConfig& cfg) {
    cfg.validate();
    detail::validate_batch_head(b, h);

    LossOutput out = cfg.uses_scale() ? normalized_softmax(b, h) : softmax_ce(b, h);

    // lambda = 0 leaves the bare classification term untouched, bit for bit.
    if (cfg.lambda > 0.0 && cfg.variant != LossVariant::Softmax) {
        switch (cfg.variant) {
            case LossVariant::LMC:
            case LossVariant::NLMC:
                detail::add_metric_term(out, lmc_term(b, h, cfg.alpha), cfg.lambda);
                break;
            case LossVariant::HLMC: {
                const std::vector<int> mask = hard_mask(b, h);
                std::vector<double> alphas(static_cast<std::size_t>(b.size()), cfg.alpha);
                detail::add_metric_term(out, detail::cosine_hinge_term(b, h, alphas, &mask),
                                        cfg.lambda);
                break;
            }
            case LossVariant::MALMC:
            case LossVariant::NLMC_MALMC: {
                std::vector<double> alphas(static_cast<std::size_t>(b.size()));
                for (int i = 0; i < b.size(); ++i)
                    alphas[static_cast<std::size_t>(i)] =
                        h.margins[static_cast<std::size_t>(b.labels[static_cast<std::size_t>(i)])];
                detail::add_metric_term(out, detail::cosine_hinge_term(b, h, alphas, nullptr),
                                        cfg.lambda);
                break;
            }
            case LossVariant::DLMC:
                detail::add_metric_term(out, dlmc_term(b, h, cfg.alpha, cfg.p), cfg.lambda);
                break;
            default:
                break;
        }
    }

    if (b.size() > 0) {
        const detail::CosineView view = detail::make_cosine_view(b, h);
        out.diagnostics.mean_intra_cosine = detail::mean_intra_cosine(view, b.labels);
        const std::vector<int> mask = hard_mask(b, h);
        out.diagnostics.hard_count = 0;
        for (int v : mask) out.diagnostics.hard_count += v;
    }
    if (cfg.uses_adaptive_margins()) out.diagnostics.per_class_margins = h.margins;
    return out;
}

}  // namespace adml
