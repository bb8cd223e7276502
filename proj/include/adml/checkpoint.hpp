#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "adml/losses.hpp"
#include "adml/network.hpp"

namespace adml {

// Versioned binary checkpoint, everything little-endian:
//   bytes 0-7   magic "ADMLCKPT"
//   u32         format version (1)
//   u32         activation (0 relu, 1 prelu)
//   u32         input_dim
//   u32         hidden layer count H
//   u32 x H     hidden dims
//   u32         feature_dim
//   u32         class_count
//   f64         head scale
//   f64 blocks in declaration order: per layer weights (in x out, row-major)
//   then bias (out); prelu slopes (one per hidden layer) when activation is
//   prelu; head weights (feature_dim x class_count); head margins
//   (class_count).
// Momentum buffers are not persisted; they restart at zero.

inline constexpr char kCheckpointMagic[8] = {'A', 'D', 'M', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& buf, double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, sizeof(v));
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    std::string path;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error("checkpoint parse error in " + path + " at byte offset " +
                                 std::to_string(pos) + ": " + what);
    }

    std::uint32_t u32() {
        if (pos + 4 > buf.size()) fail("truncated u32");
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }

    double f64() {
        if (pos + 8 > buf.size()) fail("truncated f64");
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        double d;
        std::memcpy(&d, &v, sizeof(d));
        return d;
    }
};

inline void put_matrix(std::string& buf, const Matrix& m) {
    for (double v : m.values) put_f64(buf, v);
}

inline void read_matrix(ByteReader& r, Matrix& m) {
    for (double& v : m.values) v = r.f64();
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const NetworkState& net,
                            const ClassHead& head) {
    std::string buf;
    buf.append(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::put_u32(buf, kCheckpointVersion);
    detail::put_u32(buf, net.spec.activation == Activation::Prelu ? 1u : 0u);
    detail::put_u32(buf, static_cast<std::uint32_t>(net.spec.input_dim));
    detail::put_u32(buf, static_cast<std::uint32_t>(net.spec.hidden_dims.size()));
    for (int d : net.spec.hidden_dims) detail::put_u32(buf, static_cast<std::uint32_t>(d));
    detail::put_u32(buf, static_cast<std::uint32_t>(net.spec.feature_dim));
    detail::put_u32(buf, static_cast<std::uint32_t>(head.class_count()));
    detail::put_f64(buf, head.scale);

    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        detail::put_matrix(buf, net.weights[l]);
        detail::put_matrix(buf, net.biases[l]);
    }
    for (const Matrix& s : net.prelu_slopes) detail::put_matrix(buf, s);
    detail::put_matrix(buf, head.weights);
    for (double m : head.margins) detail::put_f64(buf, m);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("short write to checkpoint: " + path);
}

struct Checkpoint {
    NetworkState net;
    ClassHead head;
};

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    const std::string buf(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>{});
    detail::ByteReader r{buf, 0, path};

    if (buf.size() < sizeof(kCheckpointMagic) ||
        std::memcmp(buf.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0)
        r.fail("bad magic, expected ADMLCKPT");
    r.pos = sizeof(kCheckpointMagic);

    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        r.fail("unsupported format version " + std::to_string(version));

    NetworkSpec spec;
    spec.activation = r.u32() == 1u ? Activation::Prelu : Activation::Relu;
    spec.input_dim = static_cast<int>(r.u32());
    const std::uint32_t hidden = r.u32();
    for (std::uint32_t i = 0; i < hidden; ++i)
        spec.hidden_dims.push_back(static_cast<int>(r.u32()));
    spec.feature_dim = static_cast<int>(r.u32());
    const int class_count = static_cast<int>(r.u32());
    spec.validate();
    ADML_CHECK(class_count >= 1, "checkpoint: class count must be >= 1");

    Checkpoint ck;
    Rng dummy(0);
    ck.net = NetworkState::init(spec, dummy);  // allocates the right shapes
    ck.head.scale = r.f64();
    for (std::size_t l = 0; l < ck.net.weights.size(); ++l) {
        detail::read_matrix(r, ck.net.weights[l]);
        detail::read_matrix(r, ck.net.biases[l]);
        for (double& v : ck.net.weight_vel[l].values) v = 0.0;
        for (double& v : ck.net.bias_vel[l].values) v = 0.0;
    }
    for (std::size_t l = 0; l < ck.net.prelu_slopes.size(); ++l) {
        detail::read_matrix(r, ck.net.prelu_slopes[l]);
        for (double& v : ck.net.prelu_vel[l].values) v = 0.0;
    }
    ck.head.weights = Matrix(spec.feature_dim, class_count);
    detail::read_matrix(r, ck.head.weights);
    ck.head.margins.resize(static_cast<std::size_t>(class_count));
    for (double& m : ck.head.margins) m = r.f64();

    if (r.pos != buf.size()) r.fail("trailing bytes after parameter blocks");
    return ck;
}

}  // namespace adml
