#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "adml/matrix.hpp"
#include "adml/rng.hpp"

namespace adml {

struct ImageShape {
    int height = 0;
    int width = 0;
    int channels = 1;

    int pixel_count() const { return height * width * channels; }
};

/// A loaded dataset: flattened, preprocessed sample rows with class labels.
/// image_shape is set for image data and enables horizontal-flip machinery.
struct Dataset {
    Matrix samples;
    std::vector<int> labels;
    int class_count = 0;
    std::optional<ImageShape> image_shape;

    int size() const { return samples.rows; }
    int dim() const { return samples.cols; }

    void validate() const {
        ADML_CHECK(samples.rows == static_cast<int>(labels.size()),
                   "Dataset: labels length must equal sample rows");
        ADML_CHECK(class_count >= 1, "Dataset: class_count must be >= 1");
        for (std::size_t i = 0; i < labels.size(); ++i)
            ADML_CHECK(labels[i] >= 0 && labels[i] < class_count,
                       "Dataset: label out of range at row " + std::to_string(i));
        if (image_shape)
            ADML_CHECK(image_shape->pixel_count() == samples.cols,
                       "Dataset: image shape does not match row length");
    }
};

namespace detail {

[[noreturn]] inline void idx_error(const std::string& path, std::size_t offset,
                                   const std::string& what) {
    throw std::runtime_error("IDX parse error in " + path + " at byte offset " +
                             std::to_string(offset) + ": " + what);
}

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + path);
    return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                      std::istreambuf_iterator<char>());
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                               const std::string& path) {
    if (offset + 4 > bytes.size()) idx_error(path, offset, "truncated 32-bit field");
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace detail

/// Loads the standard big-endian IDX image/label file pair. Pixels map to
/// (v - 127.5) / 128, so the byte range [0, 255] lands in
/// [-0.99609375, 0.99609375].
inline Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = detail::read_file_bytes(images_path);
    const auto lab = detail::read_file_bytes(labels_path);

    if (detail::read_be32(img, 0, images_path) != 0x00000803u)
        detail::idx_error(images_path, 0, "bad magic, expected 0x00000803");
    if (detail::read_be32(lab, 0, labels_path) != 0x00000801u)
        detail::idx_error(labels_path, 0, "bad magic, expected 0x00000801");

    const std::uint32_t count = detail::read_be32(img, 4, images_path);
    const std::uint32_t rows = detail::read_be32(img, 8, images_path);
    const std::uint32_t cols = detail::read_be32(img, 12, images_path);
    const std::uint32_t label_count = detail::read_be32(lab, 4, labels_path);
    if (label_count != count)
        detail::idx_error(labels_path, 4, "label count does not match image count");

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (16 + static_cast<std::size_t>(count) * pixels > img.size())
        detail::idx_error(images_path, img.size(), "truncated image data");
    if (8 + static_cast<std::size_t>(count) > lab.size())
        detail::idx_error(labels_path, lab.size(), "truncated label data");

    Dataset ds;
    ds.samples = Matrix(static_cast<int>(count), static_cast<int>(pixels));
    ds.labels.resize(count);
    int max_label = 0;
    for (std::uint32_t i = 0; i < count; ++i) {
        const unsigned char* src = img.data() + 16 + static_cast<std::size_t>(i) * pixels;
        double* dst = ds.samples.row(static_cast<int>(i));
        for (std::size_t k = 0; k < pixels; ++k) dst[k] = (src[k] - 127.5) / 128.0;
        ds.labels[i] = static_cast<int>(lab[8 + i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.class_count = max_label + 1;
    ds.image_shape = ImageShape{static_cast<int>(rows), static_cast<int>(cols), 1};
    ds.validate();
    return ds;
}

/// Synthetic Gaussian blobs: class centers drawn on the unit sphere, samples
/// center + N(0, spread^2) per coordinate. Rows are class-major
/// (class 0 first), fully determined by the seed.
inline Dataset synth_blobs(int class_count, int dim, int per_class, double spread,
                           std::uint64_t seed) {
    ADML_CHECK(class_count >= 1 && dim >= 1 && per_class >= 1,
               "synth_blobs: counts must be >= 1");
    ADML_CHECK(spread > 0.0, "synth_blobs: spread must be > 0");
    Rng rng(seed);

    Matrix centers(class_count, dim);
    for (double& v : centers.values) v = rng.normal();
    centers = l2_normalize_rows(centers);

    Dataset ds;
    ds.class_count = class_count;
    ds.samples = Matrix(class_count * per_class, dim);
    ds.labels.resize(static_cast<std::size_t>(class_count) * per_class);
    int row = 0;
    for (int c = 0; c < class_count; ++c) {
        for (int s = 0; s < per_class; ++s, ++row) {
            double* dst = ds.samples.row(row);
            const double* ctr = centers.row(c);
            for (int k = 0; k < dim; ++k) dst[k] = ctr[k] + spread * rng.normal();
            ds.labels[static_cast<std::size_t>(row)] = c;
        }
    }
    return ds;
}

/// Width-axis reversal per channel of every row.
inline Matrix hflip(const Matrix& images, const ImageShape& shape) {
    ADML_CHECK(shape.pixel_count() == images.cols, "hflip: shape does not match row length");
    Matrix out(images.rows, images.cols);
    for (int i = 0; i < images.rows; ++i) {
        const double* src = images.row(i);
        double* dst = out.row(i);
        for (int y = 0; y < shape.height; ++y)
            for (int x = 0; x < shape.width; ++x)
                for (int ch = 0; ch < shape.channels; ++ch)
                    dst[(y * shape.width + x) * shape.channels + ch] =
                        src[(y * shape.width + (shape.width - 1 - x)) * shape.channels + ch];
    }
    return out;
}

/// Seeded shuffled partition of [0, count) into batch_size chunks; the final
/// short batch is kept, so indices cover the range exactly once.
inline std::vector<std::vector<int>> shuffled_batches(int count, int batch_size,
                                                      std::uint64_t epoch_seed) {
    ADML_CHECK(batch_size >= 1, "batches: batch_size must be >= 1");
    std::vector<int> order(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(epoch_seed);
    rng.shuffle(order);

    std::vector<std::vector<int>> out;
    for (int start = 0; start < count; start += batch_size) {
        const int end = std::min(count, start + batch_size);
        out.emplace_back(order.begin() + start, order.begin() + end);
    }
    return out;
}

struct Batch {
    Matrix inputs;
    std::vector<int> labels;
};

/// Materialized mini-batches for one epoch. With augment_flip on an
/// image-shaped dataset the index space doubles: virtual index i >= n is the
/// horizontally flipped copy of sample i - n.
inline std::vector<Batch> batches(const Dataset& ds, int batch_size, std::uint64_t epoch_seed,
                                  bool augment_flip = false) {
    const bool flip = augment_flip && ds.image_shape.has_value();
    const int n = ds.size();
    const int virtual_count = flip ? 2 * n : n;
    const auto parts = shuffled_batches(virtual_count, batch_size, epoch_seed);

    std::vector<Batch> out;
    out.reserve(parts.size());
    for (const auto& part : parts) {
        Batch b;
        b.inputs = Matrix(static_cast<int>(part.size()), ds.dim());
        b.labels.resize(part.size());
        for (std::size_t r = 0; r < part.size(); ++r) {
            const int idx = part[r];
            const int src = idx < n ? idx : idx - n;
            const double* row = ds.samples.row(src);
            double* dst = b.inputs.row(static_cast<int>(r));
            if (idx < n) {
                std::copy(row, row + ds.dim(), dst);
            } else {
                const ImageShape& s = *ds.image_shape;
                for (int y = 0; y < s.height; ++y)
                    for (int x = 0; x < s.width; ++x)
                        for (int ch = 0; ch < s.channels; ++ch)
                            dst[(y * s.width + x) * s.channels + ch] =
                                row[(y * s.width + (s.width - 1 - x)) * s.channels + ch];
            }
            b.labels[r] = ds.labels[static_cast<std::size_t>(src)];
        }
        out.push_back(std::move(b));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation list files
// ---------------------------------------------------------------------------

struct PairEntry {
    int a = 0;
    int b = 0;
    bool same = false;
};

/// Pairs for verification protocols; indices refer to a feature set whose
/// size is supplied at load time.
struct PairList {
    std::vector<PairEntry> entries;
};

struct TemplateEntry {
    int template_id = 0;
    int subject_id = 0;
    std::vector<int> sample_indices;
};

/// Templates for set-to-set protocols: each template is a nonempty group of
/// sample indices belonging to one subject.
struct TemplateSet {
    std::vector<TemplateEntry> templates;

    const TemplateEntry* find(int template_id) const {
        for (const auto& t : templates)
            if (t.template_id == template_id) return &t;
        return nullptr;
    }
};

namespace detail {

[[noreturn]] inline void line_error(const std::string& path, int line,
                                    const std::string& what) {
    throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

inline bool skippable_line(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

}  // namespace detail

/// Lines "indexA indexB {0|1}"; "#" starts a comment line. Indices are
/// validated against feature_count (pass a negative count to skip the check).
inline PairList load_pairs(const std::string& path, int feature_count = -1) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open pair list: " + path);
    PairList out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::skippable_line(line)) continue;
        std::istringstream ss(line);
        long a, b;
        int same;
        if (!(ss >> a >> b >> same) || (same != 0 && same != 1))
            detail::line_error(path, lineno, "expected \"indexA indexB {0|1}\"");
        std::string rest;
        if (ss >> rest) detail::line_error(path, lineno, "trailing tokens");
        if (a < 0 || b < 0 || (feature_count >= 0 && (a >= feature_count || b >= feature_count)))
            detail::line_error(path, lineno, "pair index out of range");
        out.entries.push_back({static_cast<int>(a), static_cast<int>(b), same == 1});
    }
    return out;
}

inline void save_pairs(const std::string& path, const PairList& pairs) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write pair list: " + path);
    for (const auto& e : pairs.entries)
        out << e.a << ' ' << e.b << ' ' << (e.same ? 1 : 0) << '\n';
}

/// Lines "templateId subjectId i0,i1,...". Every template must be nonempty.
inline TemplateSet load_templates(const std::string& path, int feature_count = -1) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open template list: " + path);
    TemplateSet out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::skippable_line(line)) continue;
        std::istringstream ss(line);
        long tid, sid;
        std::string idx_list;
        if (!(ss >> tid >> sid >> idx_list))
            detail::line_error(path, lineno, "expected \"templateId subjectId i0,i1,...\"");
        std::string rest;
        if (ss >> rest) detail::line_error(path, lineno, "trailing tokens");

        TemplateEntry t;
        t.template_id = static_cast<int>(tid);
        t.subject_id = static_cast<int>(sid);
        std::istringstream idx(idx_list);
        std::string tok;
        while (std::getline(idx, tok, ',')) {
            if (tok.empty()) detail::line_error(path, lineno, "empty sample index");
            long v;
            try {
                v = std::stol(tok);
            } catch (const std::exception&) {
                detail::line_error(path, lineno, "bad sample index \"" + tok + "\"");
            }
            if (v < 0 || (feature_count >= 0 && v >= feature_count))
                detail::line_error(path, lineno, "sample index out of range");
            t.sample_indices.push_back(static_cast<int>(v));
        }
        if (t.sample_indices.empty()) detail::line_error(path, lineno, "empty template");
        out.templates.push_back(std::move(t));
    }
    return out;
}

inline void save_templates(const std::string& path, const TemplateSet& set) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write template list: " + path);
    for (const auto& t : set.templates) {
        out << t.template_id << ' ' << t.subject_id << ' ';
        for (std::size_t i = 0; i < t.sample_indices.size(); ++i) {
            if (i) out << ',';
            out << t.sample_indices[i];
        }
        out << '\n';
    }
}

}  // namespace adml
