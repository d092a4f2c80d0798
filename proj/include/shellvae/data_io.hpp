// Dataset plumbing: seeded synthetic Gaussian-mixture generation, IDX image
// ingestion, and a small binary dataset container carrying samples plus
// optional labels. Files are bound to downstream artifacts by an FNV-1a
// fingerprint of their bytes.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "shellvae/matrix.hpp"
#include "shellvae/rng.hpp"

namespace shellvae {

struct GmmSpec {
    std::size_t n_samples{50000};
    std::size_t dim{32};
    std::size_t n_components{8};
    double component_separation{4.0};  // center norm
    double component_std{0.5};
    std::uint64_t seed{1};

    void validate() const {
        require(n_samples >= 1 && dim >= 1 && n_components >= 1, "gmm: sizes must be positive");
        require(component_separation >= 0.0 && component_std >= 0.0,
                "gmm: separation and std must be nonnegative");
    }
};

// Component centers are drawn on the sphere of radius component_separation,
// mixing weights are equal, components isotropic. Stream order: K centers
// (d normals each, normalized), then per sample one label draw followed by
// d noise normals. Labels are returned for diagnostics only.
inline std::pair<DataMatrix, std::vector<std::size_t>> synth_gmm(const GmmSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    Matrix centers(spec.n_components, spec.dim);
    for (std::size_t k = 0; k < spec.n_components; ++k) {
        double* c = centers.row(k);
        for (std::size_t j = 0; j < spec.dim; ++j) c[j] = rng.normal();
        const double norm = std::sqrt(squared_norm(c, spec.dim));
        const double scale = norm > 0.0 ? spec.component_separation / norm : 0.0;
        for (std::size_t j = 0; j < spec.dim; ++j) c[j] *= scale;
    }

    DataMatrix data(spec.n_samples, spec.dim);
    std::vector<std::size_t> labels(spec.n_samples);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        const std::size_t k = static_cast<std::size_t>(rng.below(spec.n_components));
        labels[i] = k;
        const double* c = centers.row(k);
        double* r = data.row(i);
        for (std::size_t j = 0; j < spec.dim; ++j) r[j] = c[j] + spec.component_std * rng.normal();
    }
    return {std::move(data), std::move(labels)};
}

// ---------------------------------------------------------------------------
// IDX image/label files (big-endian header, unsigned byte payload).

struct IdxBadMagicError : std::runtime_error {
    IdxBadMagicError(std::uint32_t expected, std::uint32_t actual, const std::string& path)
        : std::runtime_error("idx: bad magic in '" + path + "': expected 0x" +
                             to_hex(expected) + ", got 0x" + to_hex(actual)) {}
    static std::string to_hex(std::uint32_t v) {
        static const char* digits = "0123456789abcdef";
        std::string s(8, '0');
        for (int i = 7; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
        return s;
    }
};

struct IdxTruncatedError : std::runtime_error {
    explicit IdxTruncatedError(const std::string& path)
        : std::runtime_error("idx: truncated file '" + path + "'") {}
};

struct IdxCountMismatchError : std::runtime_error {
    IdxCountMismatchError(std::size_t images, std::size_t labels)
        : std::runtime_error("idx: image count " + std::to_string(images) +
                             " does not match label count " + std::to_string(labels)) {}
};

namespace detail {

inline std::uint32_t read_be32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IdxTruncatedError(path);
    return (static_cast<std::uint32_t>(b[0]) << 24) | (static_cast<std::uint32_t>(b[1]) << 16) |
           (static_cast<std::uint32_t>(b[2]) << 8) | static_cast<std::uint32_t>(b[3]);
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Pixels are flattened row-major and scaled to [0, 1] by dividing by 255.
inline std::pair<DataMatrix, std::vector<std::size_t>> load_idx(
    const std::string& images_path, const std::optional<std::string>& labels_path = std::nullopt) {
    std::ifstream is(images_path, std::ios::binary);
    if (!is) throw std::runtime_error("idx: cannot open '" + images_path + "'");

    const std::uint32_t magic = detail::read_be32(is, images_path);
    if (magic != kIdxImageMagic) throw IdxBadMagicError(kIdxImageMagic, magic, images_path);
    const std::uint32_t count = detail::read_be32(is, images_path);
    const std::uint32_t rows = detail::read_be32(is, images_path);
    const std::uint32_t cols = detail::read_be32(is, images_path);

    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    DataMatrix data(count, pixels);
    std::vector<unsigned char> buf(pixels);
    for (std::size_t i = 0; i < count; ++i) {
        if (!is.read(reinterpret_cast<char*>(buf.data()), static_cast<long>(pixels))) {
            throw IdxTruncatedError(images_path);
        }
        double* r = data.row(i);
        for (std::size_t j = 0; j < pixels; ++j) r[j] = static_cast<double>(buf[j]) / 255.0;
    }

    std::vector<std::size_t> labels;
    if (labels_path) {
        std::ifstream ls(*labels_path, std::ios::binary);
        if (!ls) throw std::runtime_error("idx: cannot open '" + *labels_path + "'");
        const std::uint32_t lmagic = detail::read_be32(ls, *labels_path);
        if (lmagic != kIdxLabelMagic) throw IdxBadMagicError(kIdxLabelMagic, lmagic, *labels_path);
        const std::uint32_t lcount = detail::read_be32(ls, *labels_path);
        if (lcount != count) throw IdxCountMismatchError(count, lcount);
        labels.resize(lcount);
        for (std::size_t i = 0; i < lcount; ++i) {
            const int c = ls.get();
            if (c == EOF) throw IdxTruncatedError(*labels_path);
            labels[i] = static_cast<std::size_t>(c);
        }
    }
    return {std::move(data), std::move(labels)};
}

// ---------------------------------------------------------------------------
// Dataset container: magic "SVDATA1\0", u32 version, u64 N, u64 d,
// u8 has_labels, f64 samples row-major (raw IEEE bits, little-endian), then
// u64 labels when present.

inline constexpr char kDatasetMagic[8] = {'S', 'V', 'D', 'A', 'T', 'A', '1', '\0'};

inline std::uint64_t fnv1a(const void* bytes, std::size_t n, std::uint64_t h = 0xCBF29CE484222325ULL) {
    const unsigned char* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x00000100000001B3ULL;
    }
    return h;
}

inline std::string to_hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    return s;
}

// Fingerprint of a file's raw bytes; binds regions and reports to the exact
// dataset they were computed from.
inline std::string file_fingerprint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("fingerprint: cannot open '" + path + "'");
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[65536];
    while (is.read(buf, sizeof(buf)) || is.gcount() > 0) {
        h = fnv1a(buf, static_cast<std::size_t>(is.gcount()), h);
        if (is.eof()) break;
    }
    return to_hex64(h);
}

inline void save_dataset(const DataMatrix& data, const std::vector<std::size_t>& labels,
                         const std::string& path, bool create_dirs = false) {
    if (create_dirs) {
        const auto dir = std::filesystem::path(path).parent_path();
        if (!dir.empty()) std::filesystem::create_directories(dir);
    }
    require(labels.empty() || labels.size() == data.rows, "save_dataset: label count mismatch");
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("dataset: cannot open '" + path + "' for writing");

    auto put_u64 = [&](std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
        os.write(reinterpret_cast<const char*>(b), 8);
    };
    auto put_u32 = [&](std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
        os.write(reinterpret_cast<const char*>(b), 4);
    };

    os.write(kDatasetMagic, 8);
    put_u32(1);
    put_u64(data.rows);
    put_u64(data.cols);
    os.put(labels.empty() ? '\0' : '\1');
    for (double x : data.v) put_u64(std::bit_cast<std::uint64_t>(x));
    for (std::size_t l : labels) put_u64(l);
    if (!os) throw std::runtime_error("dataset: write to '" + path + "' failed");
}

inline std::pair<DataMatrix, std::vector<std::size_t>> load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open '" + path + "'");

    auto get_u64 = [&]() {
        unsigned char b[8];
        if (!is.read(reinterpret_cast<char*>(b), 8)) {
            throw std::runtime_error("dataset: truncated file '" + path + "'");
        }
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    };
    auto get_u32 = [&]() {
        unsigned char b[4];
        if (!is.read(reinterpret_cast<char*>(b), 4)) {
            throw std::runtime_error("dataset: truncated file '" + path + "'");
        }
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    };

    char magic[8];
    if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kDatasetMagic)) {
        throw std::runtime_error("dataset: bad magic in '" + path + "'");
    }
    const std::uint32_t version = get_u32();
    if (version != 1) throw std::runtime_error("dataset: unsupported version");

    const std::uint64_t n = get_u64();
    const std::uint64_t d = get_u64();
    const int has_labels = is.get();
    if (has_labels == EOF) throw std::runtime_error("dataset: truncated file '" + path + "'");

    DataMatrix data(n, d);
    for (double& x : data.v) x = std::bit_cast<double>(get_u64());
    std::vector<std::size_t> labels;
    if (has_labels) {
        labels.resize(n);
        for (std::size_t& l : labels) l = get_u64();
    }
    return {std::move(data), std::move(labels)};
}

// Seeded row subset without replacement (used for desk-scale image runs).
inline std::pair<DataMatrix, std::vector<std::size_t>> subset_rows(
    const DataMatrix& data, const std::vector<std::size_t>& labels, std::size_t count,
    std::uint64_t seed) {
    require(count <= data.rows, "subset_rows: count exceeds rows");
    std::vector<std::size_t> order(data.rows);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);
    order.resize(count);

    std::vector<std::size_t> sub_labels;
    if (!labels.empty()) {
        sub_labels.resize(count);
        for (std::size_t i = 0; i < count; ++i) sub_labels[i] = labels[order[i]];
    }
    return {gather_rows(data, order), std::move(sub_labels)};
}

}  // namespace shellvae
