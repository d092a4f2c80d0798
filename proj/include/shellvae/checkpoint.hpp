// Versioned binary model container. Layout is little-endian and fully
// specified so round-trips are bit-exact:
//
//   magic "SVAECKP1" | u32 version | u64 latent_dim | f64 sigma_sq
//   | u64 seeds x5 (init, shuffle, noise, shell, kmeans)
//   | encoder block | decoder block
//
// where a block is: u32 layer count, then per layer u64 out, u64 in,
// u8 activation (0 rectifier, 1 identity), f64 bias[out], f64 weight[out*in]
// row-major. Doubles are stored as their raw IEEE-754 bits.
//
// Writes go to a temp file first and are renamed into place.

#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "shellvae/vae.hpp"

namespace shellvae {

struct Seeds {
    std::uint64_t init{1};
    std::uint64_t shuffle{2};
    std::uint64_t noise{3};
    std::uint64_t shell{4};
    std::uint64_t kmeans{5};
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw std::runtime_error("checkpoint: truncated file");
    }
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline void put_mlp(std::ostream& os, const MlpParams& mlp) {
    put_u32(os, static_cast<std::uint32_t>(mlp.layers.size()));
    for (const Layer& l : mlp.layers) {
        put_u64(os, l.out_size());
        put_u64(os, l.in_size());
        os.put(l.act == Activation::rectifier ? '\0' : '\1');
        for (double b : l.bias) put_f64(os, b);
        for (double w : l.weight.v) put_f64(os, w);
    }
}

inline MlpParams get_mlp(std::istream& is) {
    MlpParams mlp;
    const std::uint32_t n_layers = get_u32(is);
    for (std::uint32_t k = 0; k < n_layers; ++k) {
        Layer l;
        const std::uint64_t out = get_u64(is);
        const std::uint64_t in = get_u64(is);
        const int act = is.get();
        if (act != 0 && act != 1) throw std::runtime_error("checkpoint: bad activation tag");
        l.act = act == 0 ? Activation::rectifier : Activation::identity;
        l.weight = Matrix(out, in);
        l.bias.resize(out);
        for (double& b : l.bias) b = get_f64(is);
        for (double& w : l.weight.v) w = get_f64(is);
        mlp.layers.push_back(std::move(l));
    }
    return mlp;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'S', 'V', 'A', 'E', 'C', 'K', 'P', '1'};

inline void save_checkpoint(const VaeModel& model, const Seeds& seeds, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint: cannot open '" + tmp + "' for writing");
        os.write(kCheckpointMagic, 8);
        detail::put_u32(os, 1);
        detail::put_u64(os, model.latent_dim);
        detail::put_f64(os, model.sigma_sq);
        detail::put_u64(os, seeds.init);
        detail::put_u64(os, seeds.shuffle);
        detail::put_u64(os, seeds.noise);
        detail::put_u64(os, seeds.shell);
        detail::put_u64(os, seeds.kmeans);
        detail::put_mlp(os, model.encoder);
        detail::put_mlp(os, model.decoder);
        if (!os) throw std::runtime_error("checkpoint: write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("checkpoint: cannot move '" + tmp + "' to '" + path + "'");
    }
}

inline std::pair<VaeModel, Seeds> load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kCheckpointMagic)) {
        throw std::runtime_error("checkpoint: bad magic in '" + path + "'");
    }
    const std::uint32_t version = detail::get_u32(is);
    if (version != 1) {
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    }
    VaeModel model;
    model.latent_dim = detail::get_u64(is);
    model.sigma_sq = detail::get_f64(is);
    Seeds seeds;
    seeds.init = detail::get_u64(is);
    seeds.shuffle = detail::get_u64(is);
    seeds.noise = detail::get_u64(is);
    seeds.shell = detail::get_u64(is);
    seeds.kmeans = detail::get_u64(is);
    model.encoder = detail::get_mlp(is);
    model.decoder = detail::get_mlp(is);
    model.validate();
    return {std::move(model), seeds};
}

}  // namespace shellvae
