#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "adml/dataio.hpp"
#include "adml/matrix.hpp"
#include "adml/network.hpp"

namespace adml {

struct RocPoint {
    double threshold = 0.0;
    double far = 0.0;  // false accepts / negatives
    double tar = 0.0;  // true accepts / positives
};

struct EvalReport {
    std::vector<double> fold_accuracies;
    double mean_accuracy = 0.0;
    std::vector<double> thresholds;  // per-fold chosen thresholds
    std::vector<RocPoint> roc;
    std::vector<std::pair<double, double>> tar_at_far;  // (far level, tar)
    std::vector<double> cmc;                            // rate at rank r+1
};

/// Embeds every sample; with flip_merge on an image dataset the embedding of
/// the mirrored image is added element-wise.
inline Matrix extract_features(const NetworkState& net, const Dataset& ds, bool flip_merge) {
    Matrix f = forward(net, ds.samples);
    if (flip_merge) {
        ADML_CHECK(ds.image_shape.has_value(),
                   "extract_features: flip merge requires an image-shaped dataset");
        const Matrix f2 = forward(net, hflip(ds.samples, *ds.image_shape));
        for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] += f2.values[i];
    }
    return f;
}

namespace detail {

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Eigenvalues land
/// in eigvals, matching eigenvectors in the columns of eigvecs. Deterministic
/// sweep order; converges to machine precision for the small covariance
/// matrices used here.
inline void jacobi_eigen(Matrix a, std::vector<double>& eigvals, Matrix& eigvecs) {
    const int n = a.rows;
    ADML_CHECK(n == a.cols, "jacobi_eigen: matrix must be square");
    eigvecs = identity(n);

    double scale = 0.0;
    for (double v : a.values) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
        if (off < 1e-28 * scale * scale) break;

        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (int k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = eigvecs(k, p), vkq = eigvecs(k, q);
                    eigvecs(k, p) = c * vkp - s * vkq;
                    eigvecs(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    eigvals.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) eigvals[static_cast<std::size_t>(i)] = a(i, i);
}

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

}  // namespace detail

inline double cosine_similarity(const double* a, const double* b, int n) {
    const double na = std::max(std::sqrt(detail::dot(a, a, n)), kNormEps);
    const double nb = std::max(std::sqrt(detail::dot(b, b, n)), kNormEps);
    return std::clamp(detail::dot(a, b, n) / (na * nb), -1.0, 1.0);
}

struct PcaModel {
    std::vector<double> mean;
    Matrix basis;  // D x out_dim, columns are principal directions
    std::vector<double> eigenvalues;
};

/// Centers the data and projects onto the leading principal directions,
/// ordered by descending eigenvalue. Sign convention: the largest-magnitude
/// component of each direction is positive.
inline PcaModel pca_fit(const Matrix& features, int out_dim) {
    const int n = features.rows;
    const int d = features.cols;
    ADML_CHECK(n >= 2, "pca: at least two samples required");
    ADML_CHECK(out_dim >= 1 && out_dim <= d, "pca: out_dim must be in [1, feature dim]");

    PcaModel model;
    model.mean.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) model.mean[static_cast<std::size_t>(j)] += features(i, j);
    for (double& v : model.mean) v /= n;

    Matrix cov(d, d);
    for (int i = 0; i < n; ++i) {
        const double* row = features.row(i);
        for (int a = 0; a < d; ++a) {
            const double ca = row[a] - model.mean[static_cast<std::size_t>(a)];
            for (int bcol = a; bcol < d; ++bcol)
                cov(a, bcol) += ca * (row[bcol] - model.mean[static_cast<std::size_t>(bcol)]);
        }
    }
    for (int a = 0; a < d; ++a)
        for (int bcol = a; bcol < d; ++bcol) {
            cov(a, bcol) /= (n - 1);
            cov(bcol, a) = cov(a, bcol);
        }

    std::vector<double> eigvals;
    Matrix eigvecs;
    detail::jacobi_eigen(cov, eigvals, eigvecs);

    std::vector<int> order(static_cast<std::size_t>(d));
    for (int i = 0; i < d; ++i) order[static_cast<std::size_t>(i)] = i;
    std::sort(order.begin(), order.end(), [&](int a, int bcol) {
        const double ea = eigvals[static_cast<std::size_t>(a)];
        const double eb = eigvals[static_cast<std::size_t>(bcol)];
        return ea > eb || (ea == eb && a < bcol);
    });

    model.basis = Matrix(d, out_dim);
    model.eigenvalues.resize(static_cast<std::size_t>(out_dim));
    for (int c = 0; c < out_dim; ++c) {
        const int src = order[static_cast<std::size_t>(c)];
        model.eigenvalues[static_cast<std::size_t>(c)] = eigvals[static_cast<std::size_t>(src)];
        int peak = 0;
        for (int r = 1; r < d; ++r)
            if (std::abs(eigvecs(r, src)) > std::abs(eigvecs(peak, src))) peak = r;
        const double flip = eigvecs(peak, src) < 0.0 ? -1.0 : 1.0;
        for (int r = 0; r < d; ++r) model.basis(r, c) = flip * eigvecs(r, src);
    }
    return model;
}

inline Matrix pca_apply(const PcaModel& model, const Matrix& features) {
    ADML_CHECK(features.cols == model.basis.rows, "pca_apply: dimension mismatch");
    Matrix centered = features;
    for (int i = 0; i < centered.rows; ++i) {
        double* row = centered.row(i);
        for (int j = 0; j < centered.cols; ++j) row[j] -= model.mean[static_cast<std::size_t>(j)];
    }
    return matmul(centered, model.basis);
}

/// Cosine similarity per pair entry.
inline std::vector<double> pair_scores(const Matrix& features, const PairList& pairs) {
    std::vector<double> out;
    out.reserve(pairs.entries.size());
    for (const auto& e : pairs.entries) {
        ADML_CHECK(e.a >= 0 && e.a < features.rows && e.b >= 0 && e.b < features.rows,
                   "pair_scores: pair index out of range");
        out.push_back(cosine_similarity(features.row(e.a), features.row(e.b), features.cols));
    }
    return out;
}

namespace detail {

/// Candidate thresholds realizing every achievable ">= threshold" decision
/// rule: one below the minimum (everything accepted), the midpoints between
/// consecutive distinct sorted scores, one above the maximum (nothing
/// accepted). Input must be sorted ascending.
inline std::vector<double> threshold_candidates(const std::vector<double>& sorted_scores) {
    std::vector<double> cands;
    cands.push_back(sorted_scores.front() - 1.0);
    for (std::size_t i = 0; i + 1 < sorted_scores.size(); ++i)
        if (sorted_scores[i] != sorted_scores[i + 1])
            cands.push_back(0.5 * (sorted_scores[i] + sorted_scores[i + 1]));
    cands.push_back(sorted_scores.back() + 1.0);
    return cands;
}

/// Accuracy-maximizing threshold over (scores, same-labels); ties resolve to
/// the lowest candidate. Single ascending sweep with incremental counts.
inline double best_threshold(const std::vector<double>& scores, const std::vector<int>& labels) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> sorted(n);
    for (std::size_t i = 0; i < n; ++i) sorted[i] = scores[order[i]];
    const std::vector<double> cands = threshold_candidates(sorted);

    long same_total = 0;
    for (int v : labels) same_total += v;

    // Start below the minimum: everything predicted "same".
    long correct = same_total;
    double best_t = cands.front();
    long best_correct = correct;

    std::size_t pos = 0;
    for (std::size_t c = 1; c < cands.size(); ++c) {
        // Crossing above each score flips its prediction to "different".
        while (pos < n && sorted[pos] < cands[c]) {
            correct += labels[order[pos]] ? -1 : 1;
            ++pos;
        }
        if (correct > best_correct) {
            best_correct = correct;
            best_t = cands[c];
        }
    }
    return best_t;
}

}  // namespace detail

struct KfoldResult {
    std::vector<double> fold_accuracies;
    double mean_accuracy = 0.0;
    std::vector<double> thresholds;
};

/// 10-fold (by default) verification protocol over contiguous folds: the
/// threshold is fit on the other k-1 folds, accuracy measured on the held-out
/// fold with predict-same iff score >= threshold.
inline KfoldResult kfold_accuracy(const std::vector<double>& scores,
                                  const std::vector<int>& labels, int k = 10) {
    const int n = static_cast<int>(scores.size());
    ADML_CHECK(n == static_cast<int>(labels.size()), "kfold: scores/labels length mismatch");
    ADML_CHECK(k >= 2, "kfold: need at least 2 folds");
    ADML_CHECK(n >= k && n % k == 0,
               "kfold: score count must divide into " + std::to_string(k) + " equal folds");
    const int fold_size = n / k;

    KfoldResult res;
    for (int f = 0; f < k; ++f) {
        const int lo = f * fold_size;
        const int hi = lo + fold_size;
        std::vector<double> train_scores;
        std::vector<int> train_labels;
        train_scores.reserve(static_cast<std::size_t>(n - fold_size));
        train_labels.reserve(static_cast<std::size_t>(n - fold_size));
        for (int i = 0; i < n; ++i) {
            if (i >= lo && i < hi) continue;
            train_scores.push_back(scores[static_cast<std::size_t>(i)]);
            train_labels.push_back(labels[static_cast<std::size_t>(i)]);
        }
        const double t = detail::best_threshold(train_scores, train_labels);
        int correct = 0;
        for (int i = lo; i < hi; ++i) {
            const bool predicted_same = scores[static_cast<std::size_t>(i)] >= t;
            if (predicted_same == (labels[static_cast<std::size_t>(i)] != 0)) ++correct;
        }
        res.thresholds.push_back(t);
        res.fold_accuracies.push_back(static_cast<double>(correct) / fold_size);
    }
    double sum = 0.0;
    for (double a : res.fold_accuracies) sum += a;
    res.mean_accuracy = sum / k;
    return res;
}

/// Threshold sweep over all distinct scores, descending, preceded by an
/// accept-nothing sentinel. far and tar are both non-decreasing along the
/// returned sequence.
inline std::vector<RocPoint> roc_curve(const std::vector<double>& scores,
                                       const std::vector<int>& labels) {
    ADML_CHECK(scores.size() == labels.size(), "roc: scores/labels length mismatch");
    long pos = 0, neg = 0;
    for (int v : labels) (v ? pos : neg) += 1;
    ADML_CHECK(pos > 0 && neg > 0, "roc: both classes must be present");

    std::vector<std::size_t> order(scores.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    std::vector<RocPoint> out;
    out.push_back({scores[order.front()] + 1.0, 0.0, 0.0});
    long ta = 0, fa = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            (labels[order[i]] ? ta : fa) += 1;
            ++i;
        }
        out.push_back({s, static_cast<double>(fa) / static_cast<double>(neg),
                       static_cast<double>(ta) / static_cast<double>(pos)});
    }
    return out;
}

/// tar at the smallest threshold whose far stays at or below the level; no
/// interpolation. The accept-nothing sentinel guarantees a valid answer.
inline double tar_at_far(const std::vector<RocPoint>& roc, double far_level) {
    ADML_CHECK(!roc.empty(), "tar_at_far: empty roc");
    double tar = 0.0;
    for (const auto& pt : roc)
        if (pt.far <= far_level) tar = pt.tar;
    return tar;
}

/// Identification rates: the rank of a probe is the position of its subject's
/// best gallery score in the cosine-sorted gallery, with ties counted against
/// the probe (worst tied position). cmc[r] = fraction of probes ranked within
/// r+1.
inline std::vector<double> cmc_curve(const Matrix& gallery, const std::vector<int>& gallery_ids,
                                     const Matrix& probes, const std::vector<int>& probe_ids,
                                     int max_rank) {
    ADML_CHECK(gallery.rows == static_cast<int>(gallery_ids.size()),
               "cmc: gallery ids length mismatch");
    ADML_CHECK(probes.rows == static_cast<int>(probe_ids.size()), "cmc: probe ids length mismatch");
    ADML_CHECK(gallery.cols == probes.cols, "cmc: feature dimension mismatch");
    ADML_CHECK(gallery.rows >= 1 && probes.rows >= 1, "cmc: empty gallery or probe set");
    max_rank = std::min(max_rank, gallery.rows);
    ADML_CHECK(max_rank >= 1, "cmc: max_rank must be >= 1");

    std::vector<long> hits(static_cast<std::size_t>(max_rank), 0);
    for (int p = 0; p < probes.rows; ++p) {
        double best_true = -std::numeric_limits<double>::infinity();
        bool found = false;
        std::vector<double> sims(static_cast<std::size_t>(gallery.rows));
        for (int g = 0; g < gallery.rows; ++g) {
            sims[static_cast<std::size_t>(g)] =
                cosine_similarity(probes.row(p), gallery.row(g), gallery.cols);
            if (gallery_ids[static_cast<std::size_t>(g)] == probe_ids[static_cast<std::size_t>(p)]) {
                best_true = std::max(best_true, sims[static_cast<std::size_t>(g)]);
                found = true;
            }
        }
        ADML_CHECK(found, "cmc: probe subject " +
                              std::to_string(probe_ids[static_cast<std::size_t>(p)]) +
                              " missing from gallery");
        long rank = 0;
        for (double s : sims) rank += (s >= best_true) ? 1 : 0;  // > ahead, == pessimistic
        if (rank <= max_rank) hits[static_cast<std::size_t>(rank - 1)] += 1;
    }

    std::vector<double> rates(static_cast<std::size_t>(max_rank));
    long cum = 0;
    for (int r = 0; r < max_rank; ++r) {
        cum += hits[static_cast<std::size_t>(r)];
        rates[static_cast<std::size_t>(r)] = static_cast<double>(cum) / probes.rows;
    }
    return rates;
}

/// Video-to-video score: mean cosine over frame pairs (i mod |A|, i mod |B|)
/// for i in [0, min(n, |A|*|B|)).
inline double video_pair_score(const Matrix& frames_a, const Matrix& frames_b, int n = 100) {
    ADML_CHECK(frames_a.rows >= 1 && frames_b.rows >= 1, "video_pair_score: empty video");
    ADML_CHECK(frames_a.cols == frames_b.cols, "video_pair_score: feature dimension mismatch");
    const long limit = std::min<long>(n, static_cast<long>(frames_a.rows) * frames_b.rows);
    ADML_CHECK(limit >= 1, "video_pair_score: pair budget must be >= 1");
    double sum = 0.0;
    for (long i = 0; i < limit; ++i)
        sum += cosine_similarity(frames_a.row(static_cast<int>(i % frames_a.rows)),
                                 frames_b.row(static_cast<int>(i % frames_b.rows)),
                                 frames_a.cols);
    return sum / static_cast<double>(limit);
}

/// Set-to-set similarity: softmax-weighted average of all pairwise scores,
/// sum(s * e^(beta*s)) / sum(e^(beta*s)). beta = 0 is the plain mean; large
/// beta approaches max pooling.
inline double template_pool_softmax(const Matrix& scores, double beta) {
    ADML_CHECK(scores.rows >= 1 && scores.cols >= 1, "template_pool_softmax: empty score matrix");
    ADML_CHECK(beta >= 0.0, "template_pool_softmax: beta must be >= 0");
    double hi = -std::numeric_limits<double>::infinity();
    for (double s : scores.values) hi = std::max(hi, beta * s);
    double num = 0.0, den = 0.0;
    for (double s : scores.values) {
        const double w = std::exp(beta * s - hi);
        num += s * w;
        den += w;
    }
    return num / den;
}

/// Pairwise cosine matrix between the member features of two templates.
inline Matrix template_score_matrix(const Matrix& features, const TemplateEntry& ta,
                                    const TemplateEntry& tb) {
    Matrix out(static_cast<int>(ta.sample_indices.size()),
               static_cast<int>(tb.sample_indices.size()));
    for (std::size_t i = 0; i < ta.sample_indices.size(); ++i)
        for (std::size_t j = 0; j < tb.sample_indices.size(); ++j)
            out(static_cast<int>(i), static_cast<int>(j)) =
                cosine_similarity(features.row(ta.sample_indices[i]),
                                  features.row(tb.sample_indices[j]), features.cols);
    return out;
}

/// Rows of a template's member features, for the video protocol.
inline Matrix gather_rows(const Matrix& features, const std::vector<int>& indices) {
    Matrix out(static_cast<int>(indices.size()), features.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        ADML_CHECK(indices[i] >= 0 && indices[i] < features.rows, "gather_rows: index out of range");
        const double* src = features.row(indices[i]);
        std::copy(src, src + features.cols, out.row(static_cast<int>(i)));
    }
    return out;
}

}  // namespace adml
