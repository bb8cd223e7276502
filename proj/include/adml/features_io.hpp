#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adml/checkpoint.hpp"
#include "adml/matrix.hpp"

namespace adml {

/// Shortest round-trippable decimal form of a double; identical values always
/// print identically, which keeps exported files byte-reproducible.
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct FeatureFile {
    Matrix features;
    std::vector<int> labels;
};

/// CSV feature export, header "id,label,f0,...,f{D-1}". An empty feature set
/// produces a header-only file.
inline void write_features_csv(const std::string& path, const Matrix& features,
                               const std::vector<int>& labels) {
    ADML_CHECK(features.rows == static_cast<int>(labels.size()),
               "write_features_csv: labels length mismatch");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write feature file: " + path);
    out << "id,label";
    for (int j = 0; j < features.cols; ++j) out << ",f" << j;
    out << '\n';
    for (int i = 0; i < features.rows; ++i) {
        out << i << ',' << labels[static_cast<std::size_t>(i)];
        const double* row = features.row(i);
        for (int j = 0; j < features.cols; ++j) out << ',' << format_double(row[j]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("short write to feature file: " + path);
}

inline FeatureFile read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open feature file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("empty feature file: " + path);
    int columns = 1;
    for (char c : header)
        if (c == ',') ++columns;
    const int dim = columns - 2;  // id and label columns come first
    ADML_CHECK(dim >= 0, "feature file header must contain id and label columns");

    std::vector<double> values;
    std::vector<int> labels;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string tok;
        std::vector<std::string> toks;
        while (std::getline(ss, tok, ',')) toks.push_back(tok);
        if (static_cast<int>(toks.size()) != dim + 2)
            throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                     ": wrong column count");
        labels.push_back(std::stoi(toks[1]));
        for (int j = 0; j < dim; ++j) values.push_back(std::stod(toks[static_cast<std::size_t>(j + 2)]));
    }

    FeatureFile f;
    f.features = Matrix(static_cast<int>(labels.size()), dim);
    f.features.values = std::move(values);
    f.labels = std::move(labels);
    return f;
}

// Binary feature file, little-endian:
//   bytes 0-7  magic "ADMLFEAT"
//   u32 rows, u32 cols, u32 label_count (rows or 0)
//   f64 features row-major, then f64 labels
inline constexpr char kFeatureMagic[8] = {'A', 'D', 'M', 'L', 'F', 'E', 'A', 'T'};

inline void write_features_binary(const std::string& path, const Matrix& features,
                                  const std::vector<int>& labels) {
    ADML_CHECK(labels.empty() || features.rows == static_cast<int>(labels.size()),
               "write_features_binary: labels length mismatch");
    std::string buf;
    buf.append(kFeatureMagic, sizeof(kFeatureMagic));
    detail::put_u32(buf, static_cast<std::uint32_t>(features.rows));
    detail::put_u32(buf, static_cast<std::uint32_t>(features.cols));
    detail::put_u32(buf, static_cast<std::uint32_t>(labels.size()));
    for (double v : features.values) detail::put_f64(buf, v);
    for (int l : labels) detail::put_f64(buf, static_cast<double>(l));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write feature file: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("short write to feature file: " + path);
}

inline FeatureFile read_features_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open feature file: " + path);
    const std::string buf(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    detail::ByteReader r{buf, 0, path};
    if (buf.size() < sizeof(kFeatureMagic) ||
        std::memcmp(buf.data(), kFeatureMagic, sizeof(kFeatureMagic)) != 0)
        r.fail("bad magic, expected ADMLFEAT");
    r.pos = sizeof(kFeatureMagic);

    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    const std::uint32_t label_count = r.u32();
    ADML_CHECK(label_count == 0 || label_count == rows,
               "feature file: label count must be 0 or equal to rows");

    FeatureFile f;
    f.features = Matrix(static_cast<int>(rows), static_cast<int>(cols));
    detail::read_matrix(r, f.features);
    f.labels.resize(label_count);
    for (std::uint32_t i = 0; i < label_count; ++i)
        f.labels[i] = static_cast<int>(r.f64());
    if (r.pos != buf.size()) r.fail("trailing bytes");
    return f;
}

}  // namespace adml
