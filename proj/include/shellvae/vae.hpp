// Gaussian VAE built on the MLP core: encoder emitting mean and
// log-variance heads, reparameterized sampling, a linear-output decoder and
// the closed-form losses. The decoder variance sigma^2 is a fixed dial, not
// a learned parameter; reconstructions are unbounded and only shaped by the
// soft penalties downstream.

#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "shellvae/matrix.hpp"
#include "shellvae/mlp.hpp"
#include "shellvae/rng.hpp"

namespace shellvae {

// Log-variance clamp. Purely a numerical guard against overflow in exp, not
// a modeling choice.
inline constexpr double kLogvarClampLimit = 10.0;

struct VaeModel {
    MlpParams encoder;  // d -> hidden -> 2n (mean and log-variance heads)
    MlpParams decoder;  // n -> hidden -> d
    std::size_t latent_dim{0};
    double sigma_sq{1.0};

    std::size_t data_dim() const { return decoder.layers.back().out_size(); }

    void validate() const {
        encoder.validate();
        decoder.validate();
        require(encoder.output_size() == 2 * latent_dim,
                "vae: encoder output size must equal 2 * latent_dim");
        require(decoder.input_size() == latent_dim, "vae: decoder input size must equal latent_dim");
        require(sigma_sq > 0.0, "vae: sigma_sq must be positive");
    }
};

struct LatentBatch {
    Matrix mu;
    Matrix logvar;
    Matrix z;    // mu + exp(logvar / 2) .* eps
    Matrix eps;
};

// Encoder forward with everything the training backward pass needs.
struct EncoderPass {
    Matrix mu;
    Matrix logvar;      // clamped
    Matrix raw_logvar;  // pre-clamp head, for the gradient mask
    ForwardTape tape;
};

// Hidden layers rectify, output heads are linear.
inline VaeModel make_vae(std::size_t data_dim, std::size_t latent_dim,
                         const std::vector<std::size_t>& encoder_hidden,
                         const std::vector<std::size_t>& decoder_hidden, double sigma_sq,
                         std::uint64_t init_seed) {
    require(sigma_sq > 0.0, "make_vae: sigma_sq must be positive");
    Rng rng(init_seed);

    std::vector<std::size_t> enc_sizes{data_dim};
    enc_sizes.insert(enc_sizes.end(), encoder_hidden.begin(), encoder_hidden.end());
    enc_sizes.push_back(2 * latent_dim);
    std::vector<Activation> enc_acts(enc_sizes.size() - 2, Activation::rectifier);
    enc_acts.push_back(Activation::identity);

    std::vector<std::size_t> dec_sizes{latent_dim};
    dec_sizes.insert(dec_sizes.end(), decoder_hidden.begin(), decoder_hidden.end());
    dec_sizes.push_back(data_dim);
    std::vector<Activation> dec_acts(dec_sizes.size() - 2, Activation::rectifier);
    dec_acts.push_back(Activation::identity);

    VaeModel model;
    model.encoder = make_mlp(enc_sizes, enc_acts, rng);
    model.decoder = make_mlp(dec_sizes, dec_acts, rng);
    model.latent_dim = latent_dim;
    model.sigma_sq = sigma_sq;
    return model;
}

inline EncoderPass encode_pass(const VaeModel& model, const DataMatrix& batch) {
    auto [head, tape] = mlp_forward(model.encoder, batch);
    const std::size_t n = model.latent_dim;
    require(head.cols == 2 * n, "encode: encoder head width must be 2 * latent_dim");

    EncoderPass pass;
    pass.mu = Matrix(batch.rows, n);
    pass.raw_logvar = Matrix(batch.rows, n);
    pass.logvar = Matrix(batch.rows, n);
    for (std::size_t i = 0; i < batch.rows; ++i) {
        const double* h = head.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            pass.mu.at(i, j) = h[j];
            const double raw = h[n + j];
            pass.raw_logvar.at(i, j) = raw;
            pass.logvar.at(i, j) =
                raw > kLogvarClampLimit ? kLogvarClampLimit
                                        : (raw < -kLogvarClampLimit ? -kLogvarClampLimit : raw);
        }
    }
    pass.tape = std::move(tape);
    return pass;
}

// Split of the 2n-wide encoder head into (mu, logvar), logvar clamped.
inline std::pair<Matrix, Matrix> encode(const VaeModel& model, const DataMatrix& batch) {
    EncoderPass pass = encode_pass(model, batch);
    return {std::move(pass.mu), std::move(pass.logvar)};
}

// z = mu + exp(logvar / 2) .* eps with the given noise.
inline LatentBatch reparameterize_with_noise(const Matrix& mu, const Matrix& logvar, Matrix eps) {
    require(mu.same_shape(logvar) && mu.same_shape(eps), "reparameterize: shape mismatch");
    LatentBatch lb;
    lb.mu = mu;
    lb.logvar = logvar;
    lb.eps = std::move(eps);
    lb.z = Matrix(mu.rows, mu.cols);
    for (std::size_t i = 0; i < mu.v.size(); ++i) {
        lb.z.v[i] = mu.v[i] + std::exp(0.5 * logvar.v[i]) * lb.eps.v[i];
    }
    return lb;
}

// One noise draw per latent coordinate, row-major order from the stream.
inline LatentBatch reparameterize(const Matrix& mu, const Matrix& logvar, Rng& noise) {
    Matrix eps(mu.rows, mu.cols);
    for (double& e : eps.v) e = noise.normal();
    return reparameterize_with_noise(mu, logvar, std::move(eps));
}

inline DataMatrix decode(const VaeModel& model, const Matrix& z) {
    require(z.cols == model.latent_dim, "decode: z width must equal latent_dim");
    return mlp_forward(model.decoder, z).first;
}

// Mean over samples of KL(q(z|x) || N(0, I)) in closed form:
// (1/N) sum_i 1/2 sum_j (exp(lv) + mu^2 - 1 - lv).
inline double kl_gaussian(const Matrix& mu, const Matrix& logvar) {
    require(mu.same_shape(logvar), "kl_gaussian: shape mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < mu.v.size(); ++i) {
        const double lv = logvar.v[i];
        const double m = mu.v[i];
        total += std::exp(lv) + m * m - 1.0 - lv;
    }
    return 0.5 * total / static_cast<double>(mu.rows);
}

// Gaussian negative log-likelihood with fixed decoder variance:
// (1/N) sum_i [ ||x_i - xhat_i||^2 / (2 sigma^2) + (d/2) ln(2 pi sigma^2) ].
// The additive constant is kept so losses stay comparable across sigma^2.
inline double recon_nll(const DataMatrix& x, const DataMatrix& xhat, double sigma_sq) {
    require(x.same_shape(xhat), "recon_nll: shape mismatch");
    require(sigma_sq > 0.0, "recon_nll: sigma_sq must be positive");
    double quad = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
        quad += squared_distance(x.row(i), xhat.row(i), x.cols);
    }
    const double n = static_cast<double>(x.rows);
    const double d = static_cast<double>(x.cols);
    return quad / (2.0 * sigma_sq * n) +
           0.5 * d * std::log(2.0 * 3.14159265358979323846 * sigma_sq);
}

}  // namespace shellvae
