#pragma once

#include "sdfc/nn/transformer.hpp"
#include "sdfc/slt/masking.hpp"
#include "sdfc/slt/posenc.hpp"

namespace sdfc::slt {

using nn::ParamStore;
using nn::Tensor;
using nn::Var;

/// One shape as a sequence of per-patch codes plus the patch centers.
struct LatentSequence {
    int n = 0;  // token count (G^3)
    int d = 0;  // code dimension
    std::vector<float> codes;  // n * d, row per token
    std::vector<Vec3> positions;

    const float* code(int i) const { return codes.data() + static_cast<std::size_t>(i) * d; }
    float* code(int i) { return codes.data() + static_cast<std::size_t>(i) * d; }
};

struct SltConfig {
    int latent_dim = 4096;  // D, must match the patch VAE
    int d_in = 512;         // width before the positional concat
    nn::TransformerConfig encoder{512, 8, 8, 2048};

    void validate() const {
        if (latent_dim <= 0 || d_in <= 0) throw ConfigError("slt: dims must be positive");
        if (encoder.d_model % encoder.n_heads != 0)
            throw ConfigError("slt: d_model must be divisible by heads");
    }

    std::string descriptor() const {
        return "slt:D=" + std::to_string(latent_dim) + ";din=" + std::to_string(d_in) +
               ";dm=" + std::to_string(encoder.d_model) + ";L=" + std::to_string(encoder.n_layers) +
               ";H=" + std::to_string(encoder.n_heads) + ";ff=" + std::to_string(encoder.d_ff);
    }
};

/// Masked-autoencoder completion transformer over the 64-token latent
/// sequence. Masked slots share one trainable token; positions enter as a
/// sinusoidal encoding concatenated between two linear layers.
class SltModel {
public:
    explicit SltModel(const SltConfig& cfg, std::uint64_t seed = 1) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        mask_token_ = params_.add("mask_token", Tensor::randn({cfg.latent_dim}, rng, 0.02f));
        w_in_ = params_.add("proj_in.w", nn::linear_init(cfg.d_in, cfg.latent_dim, rng));
        b_in_ = params_.add("proj_in.b", nn::bias_init(cfg.d_in, cfg.latent_dim, rng));
        w_mid_ = params_.add("proj_mid.w",
                             nn::linear_init(cfg.encoder.d_model, cfg.d_in + kPosEncDim, rng));
        b_mid_ = params_.add("proj_mid.b",
                             nn::bias_init(cfg.encoder.d_model, cfg.d_in + kPosEncDim, rng));
        encoder_ = nn::TransformerEncoder(params_, "encoder", cfg.encoder, rng);
        w_out_ = params_.add("proj_out.w", nn::linear_init(cfg.latent_dim, cfg.encoder.d_model, rng));
        b_out_ = params_.add("proj_out.b", nn::bias_init(cfg.latent_dim, cfg.encoder.d_model, rng));
    }

    const SltConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Graph forward for a batch: codes [B, N, D], per-sample masks flattened
    /// to B*N entries, shared positions (length N). Returns [B, N, D]
    /// predictions for every slot.
    Var forward_batch(const Var& codes, const std::vector<bool>& masked_flat,
                      const std::vector<Vec3>& positions) {
        const auto& cs = codes->value.shape();
        if (cs.size() != 3 || cs[2] != cfg_.latent_dim)
            throw ShapeMismatch("slt: expected [B,N," + std::to_string(cfg_.latent_dim) +
                                    "], got " + Tensor::shape_str(cs));
        const int b = cs[0], n = cs[1];
        if (static_cast<int>(positions.size()) != n)
            throw ShapeMismatch("slt: positions length " + std::to_string(positions.size()) +
                                    " vs N " + std::to_string(n));
        if (static_cast<int>(masked_flat.size()) != b * n)
            throw ShapeMismatch("slt: mask length mismatch");

        Var rows = nn::reshape(codes, {b * n, cfg_.latent_dim});
        rows = nn::apply_mask_token(rows, masked_flat, mask_token_);
        rows = nn::linear(rows, w_in_, b_in_);

        // tile the positional encoding across the batch
        const Tensor pe = positional_encoding_matrix(positions);
        Tensor pe_tiled({b * n, kPosEncDim});
        for (int bi = 0; bi < b; ++bi)
            std::copy_n(pe.data(), pe.numel(), pe_tiled.data() + static_cast<std::size_t>(bi) * pe.numel());
        rows = nn::concat_lastdim(rows, nn::constant(std::move(pe_tiled)));
        rows = nn::linear(rows, w_mid_, b_mid_);

        Var seq = nn::reshape(rows, {b, n, cfg_.encoder.d_model});
        seq = encoder_.forward(seq);
        Var out_rows = nn::linear(nn::reshape(seq, {b * n, cfg_.encoder.d_model}), w_out_, b_out_);
        return nn::reshape(out_rows, {b, n, cfg_.latent_dim});
    }

    /// Eval-mode forward over one sequence. Returns predicted codes for all
    /// N slots (the known-slot handling is the caller's policy).
    LatentSequence forward(const LatentSequence& seq, const MaskSpec& mask) const {
        if (seq.d != cfg_.latent_dim)
            throw ShapeMismatch("slt: sequence D " + std::to_string(seq.d) + " vs model D " +
                                    std::to_string(cfg_.latent_dim));
        if (mask.size() != seq.n) throw ShapeMismatch("slt: mask size vs N");
        nn::NoGradGuard ng;
        auto* self = const_cast<SltModel*>(this);
        Tensor codes({1, seq.n, seq.d});
        std::copy_n(seq.codes.data(), seq.codes.size(), codes.data());
        Var out = self->forward_batch(nn::constant(std::move(codes)), mask.masked, seq.positions);
        if (!out->value.all_finite())
            throw NonFiniteActivation("slt forward produced non-finite codes");
        LatentSequence res;
        res.n = seq.n;
        res.d = seq.d;
        res.positions = seq.positions;
        res.codes.assign(out->value.data(), out->value.data() + out->value.numel());
        return res;
    }

private:
    SltConfig cfg_;
    ParamStore params_;
    Var mask_token_;
    Var w_in_, b_in_, w_mid_, b_mid_, w_out_, b_out_;
    nn::TransformerEncoder encoder_;
};

/// Completion objective: alpha * L_masked + beta * L_non-masked with
/// alpha = M/N, beta = (N-M)/N. Each L is the mean absolute error over the
/// corresponding slots (defined as 0 when the slot group is empty). With these
/// weights every patch contributes equally, so the total equals the plain mean
/// absolute error over all slots.
inline double slt_loss(const LatentSequence& pred, const LatentSequence& gt, const MaskSpec& mask) {
    if (pred.n != gt.n || pred.d != gt.d)
        throw ShapeMismatch("slt_loss: sequence shape mismatch");
    if (mask.size() != pred.n) throw ShapeMismatch("slt_loss: mask size mismatch");

    const int n = pred.n, d = pred.d;
    const int m = mask.count();
    double masked_sum = 0.0, known_sum = 0.0;
    for (int i = 0; i < n; ++i) {
        double slot = 0.0;
        const float* a = pred.code(i);
        const float* b = gt.code(i);
        for (int j = 0; j < d; ++j) slot += std::abs(static_cast<double>(a[j]) - b[j]);
        if (mask.masked[i])
            masked_sum += slot;
        else
            known_sum += slot;
    }
    const double l_masked = m > 0 ? masked_sum / (static_cast<double>(m) * d) : 0.0;
    const double l_known = (n - m) > 0 ? known_sum / (static_cast<double>(n - m) * d) : 0.0;
    const double alpha = static_cast<double>(m) / n;
    const double beta = static_cast<double>(n - m) / n;
    return alpha * l_masked + beta * l_known;
}

/// Masked-slot mean absolute error (the completion-quality half of the loss).
inline double masked_slot_l1(const LatentSequence& pred, const LatentSequence& gt,
                             const MaskSpec& mask) {
    const int n = pred.n, d = pred.d;
    const int m = mask.count();
    if (m == 0) return 0.0;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!mask.masked[i]) continue;
        const float* a = pred.code(i);
        const float* b = gt.code(i);
        for (int j = 0; j < d; ++j) sum += std::abs(static_cast<double>(a[j]) - b[j]);
    }
    return sum / (static_cast<double>(m) * d);
}

}  // namespace sdfc::slt
