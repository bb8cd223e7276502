#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace adml {

[[noreturn]] inline void contract_violation(const std::string& msg) {
    throw std::invalid_argument(msg);
}

#define ADML_CHECK(cond, msg) \
    do {                      \
        if (!(cond)) ::adml::contract_violation(msg); \
    } while (0)

/// Dense row-major matrix of 64-bit floats. The whole library computes in
/// double precision so finite-difference checks can resolve 1e-5-level
/// agreement.
struct Matrix {
    int rows{0}, cols{0};
    std::vector<double> values;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c) {
        ADML_CHECK(r >= 0 && c >= 0, "Matrix: negative dimension");
        values.assign(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0);
    }
    Matrix(int r, int c, std::initializer_list<double> init) : Matrix(r, c) {
        ADML_CHECK(init.size() == values.size(), "Matrix: initializer size mismatch");
        std::copy(init.begin(), init.end(), values.begin());
    }

    double& operator()(int r, int c) {
        return values[static_cast<std::size_t>(r) * cols + c];
    }
    double operator()(int r, int c) const {
        return values[static_cast<std::size_t>(r) * cols + c];
    }
    double* row(int r) { return values.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return values.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return values.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : values)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    ADML_CHECK(a.cols == b.rows,
               "matmul: inner dimensions differ (" + std::to_string(a.cols) + " vs " +
                   std::to_string(b.rows) + ")");
    Matrix c(a.rows, b.cols);
    // i-k-j order keeps the inner loop contiguous in both b and c.
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row(i);
        double* crow = c.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row(k);
            for (int j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline void add_scaled_inplace(Matrix& a, const Matrix& b, double scale) {
    ADML_CHECK(a.same_shape(b), "add_scaled_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.values.size(); ++i) a.values[i] += scale * b.values[i];
}

/// Norm floor used wherever a vector is divided by its length. Far below any
/// meaningful feature norm; keeps the zero row at zero instead of blowing up.
inline constexpr double kNormEps = 1e-12;

inline double row_norm(const Matrix& m, int r) {
    double s = 0.0;
    const double* p = m.row(r);
    for (int j = 0; j < m.cols; ++j) s += p[j] * p[j];
    return std::sqrt(s);
}

inline double col_norm(const Matrix& m, int c) {
    double s = 0.0;
    for (int i = 0; i < m.rows; ++i) s += m(i, c) * m(i, c);
    return std::sqrt(s);
}

/// Each row divided by max(|row|, eps); rows above the floor come out unit
/// length, the zero row stays zero.
inline Matrix l2_normalize_rows(const Matrix& m, double eps = kNormEps) {
    ADML_CHECK(eps > 0.0, "l2_normalize_rows: eps must be positive");
    Matrix out(m.rows, m.cols);
    for (int i = 0; i < m.rows; ++i) {
        const double inv = 1.0 / std::max(row_norm(m, i), eps);
        const double* src = m.row(i);
        double* dst = out.row(i);
        for (int j = 0; j < m.cols; ++j) dst[j] = src[j] * inv;
    }
    return out;
}

inline Matrix l2_normalize_cols(const Matrix& m, double eps = kNormEps) {
    ADML_CHECK(eps > 0.0, "l2_normalize_cols: eps must be positive");
    Matrix out(m.rows, m.cols);
    for (int c = 0; c < m.cols; ++c) {
        const double inv = 1.0 / std::max(col_norm(m, c), eps);
        for (int i = 0; i < m.rows; ++i) out(i, c) = m(i, c) * inv;
    }
    return out;
}

/// Entry (i,j) is the cosine of the angle between row i of x and column j of
/// w. Rounding can push a cosine marginally outside [-1,1]; results are
/// clamped so downstream range invariants hold exactly.
inline Matrix cosine_matrix(const Matrix& x, const Matrix& w) {
    ADML_CHECK(x.cols == w.rows,
               "cosine_matrix: feature dimension mismatch (" + std::to_string(x.cols) +
                   " vs " + std::to_string(w.rows) + ")");
    Matrix c = matmul(l2_normalize_rows(x), l2_normalize_cols(w));
    for (double& v : c.values) v = std::clamp(v, -1.0, 1.0);
    return c;
}

/// Row-wise log-softmax via max-shifted log-sum-exp; immune to overflow and
/// invariant to per-row additive shifts.
inline Matrix log_softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (int i = 0; i < logits.rows; ++i) {
        const double* src = logits.row(i);
        double* dst = out.row(i);
        double hi = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < logits.cols; ++j) hi = std::max(hi, src[j]);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) sum += std::exp(src[j] - hi);
        const double lse = hi + std::log(sum);
        for (int j = 0; j < logits.cols; ++j) dst[j] = src[j] - lse;
    }
    return out;
}

}  // namespace adml
