#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "adml/losses.hpp"
#include "adml/rng.hpp"

namespace adml {

/// One randomly drawn loss instance, resampled until it sits safely away from
/// every hinge kink, argmax tie and top-K boundary, so central differences
/// see a smooth function.
struct GradCheckInstance {
    FeatureBatch batch;
    ClassHead head;
    LossConfig cfg;
};

namespace gradcheck_detail {

inline constexpr double kKinkMargin = 1e-3;

/// True when the instance keeps clear of every non-smooth boundary of its
/// variant. Margins are read as already frozen in head.margins.
inline bool away_from_kinks(const GradCheckInstance& inst) {
    const FeatureBatch& b = inst.batch;
    const ClassHead& h = inst.head;
    const LossConfig& cfg = inst.cfg;
    const detail::CosineView view = detail::make_cosine_view(b, h);
    const int n = h.class_count();

    const Matrix logits = matmul(b.features, h.weights);
    for (int i = 0; i < b.size(); ++i) {
        const int y = b.labels[static_cast<std::size_t>(i)];
        const double cy = view.cos(i, y);

        switch (cfg.variant) {
            case LossVariant::Softmax:
                break;
            case LossVariant::LMC:
            case LossVariant::NLMC:
                if (std::abs(cfg.alpha - cy) < kKinkMargin) return false;
                break;
            case LossVariant::HLMC: {
                if (std::abs(cfg.alpha - cy) < kKinkMargin) return false;
                // argmax tie would flip the hard mask under perturbation
                double top1 = -2e300, top2 = -2e300;
                for (int j = 0; j < n; ++j) {
                    const double v = logits(i, j);
                    if (v > top1) {
                        top2 = top1;
                        top1 = v;
                    } else if (v > top2) {
                        top2 = v;
                    }
                }
                if (n >= 2 && top1 - top2 < kKinkMargin) return false;
                break;
            }
            case LossVariant::MALMC:
            case LossVariant::NLMC_MALMC: {
                const double m = h.margins[static_cast<std::size_t>(y)];
                if (std::abs(m - cy) < kKinkMargin) return false;
                break;
            }
            case LossVariant::DLMC: {
                const auto inter = detail::sorted_interclass(view.cos, i, y);
                const int k = scaled_count(cfg.p, n - 1);
                const double vmax = inter[0].first / k;
                double sum = 0.0;
                for (int t = 0; t < k; ++t)
                    sum += std::exp(inter[static_cast<std::size_t>(t)].first / k - vmax);
                const double arg = (vmax + std::log(sum)) - (cy - cfg.alpha);
                if (std::abs(arg) < kKinkMargin) return false;
                if (k < n - 1 &&
                    inter[static_cast<std::size_t>(k - 1)].first -
                            inter[static_cast<std::size_t>(k)].first <
                        kKinkMargin)
                    return false;  // top-K boundary tie
                break;
            }
        }
    }
    return true;
}

inline GradCheckInstance draw_instance(LossVariant variant, Rng& rng, int m = 8, int d = 6) {
    for (int attempt = 0; attempt < 500; ++attempt) {
        GradCheckInstance inst;
        const int n = 4 + rng.below(3);  // 4..6 classes
        inst.cfg.variant = variant;
        inst.cfg.lambda = rng.uniform(0.05, 0.5);
        inst.cfg.alpha = rng.uniform(0.2, 0.8);
        inst.cfg.alpha0 = rng.uniform(0.1, 0.3);
        inst.cfg.p = rng.uniform(0.2, 1.0);
        inst.cfg.scale_init = rng.uniform(2.0, 6.0);

        inst.batch.features = Matrix(m, d);
        for (double& v : inst.batch.features.values) v = rng.normal();
        inst.batch.labels.resize(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) inst.batch.labels[static_cast<std::size_t>(i)] = rng.below(n);

        inst.head.weights = Matrix(d, n);
        for (double& v : inst.head.weights.values) v = rng.normal();
        inst.head.scale = inst.cfg.scale_init;
        inst.head.margins.assign(static_cast<std::size_t>(n), inst.cfg.alpha0);
        if (inst.cfg.uses_adaptive_margins())
            adaptive_margins(inst.batch, inst.head, inst.cfg.alpha0, inst.cfg.p);

        if (away_from_kinks(inst)) return inst;
    }
    throw std::runtime_error("gradcheck: could not draw a kink-free instance");
}

/// Central finite differences of the joint loss with everything else frozen
/// (margins included, matching the detachment contract).
struct NumericGrads {
    Matrix features;
    Matrix weights;
    double scale = 0.0;
};

inline NumericGrads numeric_gradients(const GradCheckInstance& inst, double step = 1e-5) {
    GradCheckInstance work = inst;
    const auto eval = [&]() { return joint_loss(work.batch, work.head, work.cfg).loss; };

    NumericGrads num;
    num.features = Matrix(inst.batch.features.rows, inst.batch.features.cols);
    num.weights = Matrix(inst.head.weights.rows, inst.head.weights.cols);

    for (std::size_t i = 0; i < work.batch.features.values.size(); ++i) {
        double& v = work.batch.features.values[i];
        const double keep = v;
        v = keep + step;
        const double hi = eval();
        v = keep - step;
        const double lo = eval();
        v = keep;
        num.features.values[i] = (hi - lo) / (2.0 * step);
    }
    for (std::size_t i = 0; i < work.head.weights.values.size(); ++i) {
        double& v = work.head.weights.values[i];
        const double keep = v;
        v = keep + step;
        const double hi = eval();
        v = keep - step;
        const double lo = eval();
        v = keep;
        num.weights.values[i] = (hi - lo) / (2.0 * step);
    }
    if (inst.cfg.uses_scale()) {
        const double keep = work.head.scale;
        work.head.scale = keep + step;
        const double hi = eval();
        work.head.scale = keep - step;
        const double lo = eval();
        work.head.scale = keep;
        num.scale = (hi - lo) / (2.0 * step);
    }
    return num;
}

/// Largest discrepancy relative to the overall gradient magnitude.
inline double vector_rel_err(const std::vector<double>& analytic,
                             const std::vector<double>& numeric) {
    double worst = 0.0, scale = 1e-3;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
        scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    }
    return worst / scale;
}

}  // namespace gradcheck_detail

struct VariantCheck {
    LossVariant variant = LossVariant::Softmax;
    int instances = 0;
    double max_rel_err = 0.0;
    double tolerance = 1e-5;
    bool reduction_ok = true;  // DLMC only: K = 1 equals the triplet form
    bool pass = false;
};

/// Compares analytic gradients of one variant against central finite
/// differences on `trials` random instances. For DLMC each instance also
/// asserts the K = 1 reduction to the triplet form, bit for bit. `corrupt`
/// deliberately skews the analytic gradient to prove the harness can fail.
inline VariantCheck gradcheck_variant(LossVariant variant, std::uint64_t seed, int trials,
                                      double tolerance = 1e-5, bool corrupt = false) {
    Rng rng(seed);
    VariantCheck res;
    res.variant = variant;
    res.tolerance = tolerance;
    for (int t = 0; t < trials; ++t) {
        const auto inst = gradcheck_detail::draw_instance(variant, rng);
        LossOutput out = joint_loss(inst.batch, inst.head, inst.cfg);
        if (corrupt) out.grad_features.values[0] += 1e-3;
        const auto num = gradcheck_detail::numeric_gradients(inst);

        std::vector<double> analytic = out.grad_features.values;
        analytic.insert(analytic.end(), out.grad_weights.values.begin(),
                        out.grad_weights.values.end());
        std::vector<double> numeric = num.features.values;
        numeric.insert(numeric.end(), num.weights.values.begin(), num.weights.values.end());
        if (inst.cfg.uses_scale()) {
            analytic.push_back(out.grad_scale);
            numeric.push_back(num.scale);
        }
        res.max_rel_err =
            std::max(res.max_rel_err, gradcheck_detail::vector_rel_err(analytic, numeric));

        if (variant == LossVariant::DLMC) {
            const double p_one = 0.4 / std::max(1, inst.head.class_count() - 1);
            const LossOutput d = dlmc_term(inst.batch, inst.head, inst.cfg.alpha, p_one);
            const LossOutput tr = triplet_variant(inst.batch, inst.head, inst.cfg.alpha);
            res.reduction_ok = res.reduction_ok && d.loss == tr.loss &&
                               d.grad_features.values == tr.grad_features.values &&
                               d.grad_weights.values == tr.grad_weights.values;
        }
        res.instances += 1;
    }
    res.pass = res.max_rel_err <= tolerance && res.reduction_ok;
    return res;
}

}  // namespace adml
