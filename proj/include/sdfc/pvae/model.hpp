#pragma once

#include <map>

#include "sdfc/geometry/patch.hpp"
#include "sdfc/nn/conv.hpp"
#include "sdfc/nn/optim.hpp"

namespace sdfc::pvae {

using nn::BatchNormState;
using nn::ParamStore;
using nn::Tensor;
using nn::Var;

/// Gaussian posterior parameters for one patch (the encoder emits log sigma^2).
struct GaussianLatent {
    std::vector<float> mu;
    std::vector<float> log_var;
};

/// Deterministic per-patch code.
struct LatentCode {
    std::vector<float> z;
};

/// Architecture of the patch VAE.
///
/// The encoder runs five residual stages at spatial sides 32/16/8/4/2 with the
/// given working widths; each of the first four stages ends in dual-path
/// downsampling (max-pool + strided conv, summed) followed by a bare 1x1
/// expansion to the next width. The final stage ends in a bare 1x1 conv to
/// 2 * last width, split channel-wise into mu / log sigma^2. The decoder
/// mirrors with four upsampling layers (transposed conv summed with
/// conv+BN+trilinear upsample) and a 1x1 head.
struct PvaeConfig {
    std::vector<int> encoder_channels = {32, 64, 128, 256, 512};
    std::vector<int> decoder_channels = {512, 256, 256, 128};
    float kl_weight = 1e-6f;

    int latent_dim() const { return encoder_channels.back() * 8; }

    void validate() const {
        if (encoder_channels.size() != 5) throw ConfigError("pvae: need 5 encoder widths");
        if (decoder_channels.size() != 4) throw ConfigError("pvae: need 4 decoder widths");
        for (int c : encoder_channels)
            if (c <= 0) throw ConfigError("pvae: encoder widths must be positive");
        for (int c : decoder_channels)
            if (c <= 0) throw ConfigError("pvae: decoder widths must be positive");
    }

    std::string descriptor() const {
        std::string s = "pvae:enc=";
        for (std::size_t i = 0; i < encoder_channels.size(); ++i)
            s += (i ? "," : "") + std::to_string(encoder_channels[i]);
        s += ";dec=";
        for (std::size_t i = 0; i < decoder_channels.size(); ++i)
            s += (i ? "," : "") + std::to_string(decoder_channels[i]);
        return s;
    }
};

class PvaeModel {
public:
    explicit PvaeModel(const PvaeConfig& cfg, std::uint64_t seed = 1) : cfg_(cfg) {
        cfg_.validate();
        Rng rng(seed);
        build(rng);
    }

    const PvaeConfig& config() const { return cfg_; }
    int latent_dim() const { return cfg_.latent_dim(); }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    std::vector<std::pair<std::string, BatchNormState>>& bn_states() { return bn_states_; }
    const std::vector<std::pair<std::string, BatchNormState>>& bn_states() const { return bn_states_; }

    // -- graph-building forward passes (training and inference share these) --

    /// x: [B,1,32,32,32] -> (mu, log_var), each [B, D].
    std::pair<Var, Var> encode_gaussian(const Var& x, bool training) {
        const auto& xs = x->value.shape();
        if (xs.size() != 5 || xs[1] != 1 || xs[2] != kPatchRes || xs[3] != kPatchRes ||
            xs[4] != kPatchRes)
            throw ShapeMismatch("pvae encode: expected [B,1,32,32,32], got " +
                                    Tensor::shape_str(xs));
        const int b = xs[0];
        Var h = x;
        for (int s = 0; s < 5; ++s) h = run_stage(h, s, training);
        // final 1x1 to 2*c5 channels at 2^3
        h = nn::conv3d(h, enc_head_w_, enc_head_b_, 1, 0);
        check_finite(h, "encoder.head");

        const int c5 = cfg_.encoder_channels.back();
        // flatten channel-major (z[c*8 + s]), then split channel-wise:
        // mu = channels [0, c5), log_var = [c5, 2*c5)
        Var flat = nn::reshape(h, {b, 2 * c5 * 8});
        Var mu = nn::slice_lastdim(flat, 0, c5 * 8);
        Var lv = nn::slice_lastdim(flat, c5 * 8, c5 * 8);
        return {mu, lv};
    }

    /// z: [B, D] -> [B,1,32,32,32].
    Var decode_var(const Var& z, bool training) {
        const auto& zs = z->value.shape();
        if (zs.size() != 2 || zs[1] != latent_dim())
            throw ShapeMismatch("pvae decode: expected [B," + std::to_string(latent_dim()) +
                                    "], got " + Tensor::shape_str(zs));
        const int b = zs[0];
        const int c5 = cfg_.encoder_channels.back();
        Var h = nn::reshape(z, {b, c5, 2, 2, 2});
        for (int l = 0; l < 4; ++l) h = run_decoder_layer(h, l, training);
        h = nn::conv3d(h, dec_head_w_, dec_head_b_, 1, 0);
        check_finite(h, "decoder.head");
        return h;
    }

    // -- patch-level inference API (eval mode, no graph) --

    GaussianLatent encode(const Patch& patch) const {
        if (patch.values.size() != Patch::value_count())
            throw ShapeMismatch("pvae encode: patch must hold 32^3 values");
        nn::NoGradGuard ng;
        auto* self = const_cast<PvaeModel*>(this);
        Var x = nn::constant(Tensor::from({1, 1, kPatchRes, kPatchRes, kPatchRes},
                                          patch.values));
        auto [mu, lv] = self->encode_gaussian(x, false);
        return {mu->value.raw(), lv->value.raw()};
    }

    LatentCode inference_code(const Patch& patch) const {
        return {encode(patch).mu};
    }

    Patch decode(const LatentCode& code) const {
        if (static_cast<int>(code.z.size()) != latent_dim())
            throw ShapeMismatch("pvae decode: code length " + std::to_string(code.z.size()) +
                                    " != D " + std::to_string(latent_dim()));
        nn::NoGradGuard ng;
        auto* self = const_cast<PvaeModel*>(this);
        Var z = nn::constant(Tensor::from({1, latent_dim()}, code.z));
        Var out = self->decode_var(z, false);
        Patch p(0.0, Vec3{});
        p.values = out->value.raw();
        return p;
    }

    /// Batched eval-mode encode; returns (mu, log_var) rows.
    std::vector<GaussianLatent> encode_batch(const std::vector<Patch>& patches) const {
        if (patches.empty()) return {};
        nn::NoGradGuard ng;
        auto* self = const_cast<PvaeModel*>(this);
        const int b = static_cast<int>(patches.size());
        Tensor x({b, 1, kPatchRes, kPatchRes, kPatchRes});
        for (int i = 0; i < b; ++i)
            std::copy_n(patches[i].values.data(), Patch::value_count(),
                        x.data() + static_cast<std::size_t>(i) * Patch::value_count());
        auto [mu, lv] = self->encode_gaussian(nn::constant(std::move(x)), false);
        const int d = latent_dim();
        std::vector<GaussianLatent> out(b);
        for (int i = 0; i < b; ++i) {
            out[i].mu.assign(mu->value.data() + static_cast<std::size_t>(i) * d,
                             mu->value.data() + static_cast<std::size_t>(i + 1) * d);
            out[i].log_var.assign(lv->value.data() + static_cast<std::size_t>(i) * d,
                                  lv->value.data() + static_cast<std::size_t>(i + 1) * d);
        }
        return out;
    }

    /// Batched eval-mode decode of raw code rows.
    std::vector<std::vector<float>> decode_batch(const std::vector<std::vector<float>>& codes) const {
        if (codes.empty()) return {};
        nn::NoGradGuard ng;
        auto* self = const_cast<PvaeModel*>(this);
        const int b = static_cast<int>(codes.size());
        const int d = latent_dim();
        Tensor z({b, d});
        for (int i = 0; i < b; ++i) {
            if (static_cast<int>(codes[i].size()) != d)
                throw ShapeMismatch("decode_batch: bad code length");
            std::copy_n(codes[i].data(), d, z.data() + static_cast<std::size_t>(i) * d);
        }
        Var out = self->decode_var(nn::constant(std::move(z)), false);
        std::vector<std::vector<float>> res(b);
        for (int i = 0; i < b; ++i)
            res[i].assign(out->value.data() + static_cast<std::size_t>(i) * Patch::value_count(),
                          out->value.data() + static_cast<std::size_t>(i + 1) * Patch::value_count());
        return res;
    }

private:
    struct ConvBlock {
        Var w, b, gamma, beta;
        int bn_index = -1;
    };
    struct Stage {
        ConvBlock cb[4];
        Var down_w, down_b;      // strided conv
        Var expand_w, expand_b;  // 1x1 widening (absent on the last stage)
    };
    struct DecoderLayer {
        Var tw, tb;              // transposed conv
        Var cw, cb2, gamma, beta;  // conv + BN on the upsample path
        int bn_index = -1;
    };

    static Tensor conv_init(int co, int ci, int k, Rng& rng) {
        const int fan_in = ci * k * k * k;
        const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
        return Tensor::rand_uniform({co, ci, k, k, k}, rng, -bound, bound);
    }
    static Tensor convt_init(int ci, int co, int k, Rng& rng) {
        const int fan_in = ci * k * k * k;
        const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
        return Tensor::rand_uniform({ci, co, k, k, k}, rng, -bound, bound);
    }
    static Tensor cbias_init(int co, int fan_in, Rng& rng) {
        const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
        return Tensor::rand_uniform({co}, rng, -bound, bound);
    }

    ConvBlock make_conv_block(const std::string& name, int ci, int co, Rng& rng) {
        ConvBlock cb;
        cb.w = params_.add(name + ".w", conv_init(co, ci, 3, rng));
        cb.b = params_.add(name + ".b", cbias_init(co, ci * 27, rng));
        cb.gamma = params_.add(name + ".bn.gamma", Tensor::full({co}, 1.0f));
        cb.beta = params_.add(name + ".bn.beta", Tensor::zeros({co}));
        cb.bn_index = static_cast<int>(bn_states_.size());
        bn_states_.emplace_back(name + ".bn", BatchNormState(co));
        return cb;
    }

    void build(Rng& rng) {
        const auto& ec = cfg_.encoder_channels;
        stages_.resize(5);
        for (int s = 0; s < 5; ++s) {
            const int ci = s == 0 ? 1 : ec[s];
            const int cs = ec[s];
            const std::string p = "enc.stage" + std::to_string(s);
            stages_[s].cb[0] = make_conv_block(p + ".cb0", ci, cs, rng);
            for (int i = 1; i < 4; ++i)
                stages_[s].cb[i] = make_conv_block(p + ".cb" + std::to_string(i), cs, cs, rng);
            if (s < 4) {
                stages_[s].down_w = params_.add(p + ".down.w", conv_init(cs, cs, 3, rng));
                stages_[s].down_b = params_.add(p + ".down.b", cbias_init(cs, cs * 27, rng));
                stages_[s].expand_w = params_.add(p + ".expand.w", conv_init(ec[s + 1], cs, 1, rng));
                stages_[s].expand_b = params_.add(p + ".expand.b", cbias_init(ec[s + 1], cs, rng));
            }
        }
        const int c5 = ec.back();
        enc_head_w_ = params_.add("enc.head.w", conv_init(2 * c5, c5, 1, rng));
        enc_head_b_ = params_.add("enc.head.b", cbias_init(2 * c5, c5, rng));

        const auto& dc = cfg_.decoder_channels;
        dec_layers_.resize(4);
        for (int l = 0; l < 4; ++l) {
            const int ci = l == 0 ? c5 : dc[l - 1];
            const int co = dc[l];
            const std::string p = "dec.layer" + std::to_string(l);
            dec_layers_[l].tw = params_.add(p + ".convt.w", convt_init(ci, co, 3, rng));
            dec_layers_[l].tb = params_.add(p + ".convt.b", cbias_init(co, ci * 27, rng));
            dec_layers_[l].cw = params_.add(p + ".conv.w", conv_init(co, ci, 3, rng));
            dec_layers_[l].cb2 = params_.add(p + ".conv.b", cbias_init(co, ci * 27, rng));
            dec_layers_[l].gamma = params_.add(p + ".bn.gamma", Tensor::full({co}, 1.0f));
            dec_layers_[l].beta = params_.add(p + ".bn.beta", Tensor::zeros({co}));
            dec_layers_[l].bn_index = static_cast<int>(bn_states_.size());
            bn_states_.emplace_back(p + ".bn", BatchNormState(co));
        }
        dec_head_w_ = params_.add("dec.head.w", conv_init(1, dc.back(), 1, rng));
        dec_head_b_ = params_.add("dec.head.b", cbias_init(1, dc.back(), rng));
    }

    Var run_conv_block(const Var& x, const ConvBlock& cb, bool training) {
        Var h = nn::conv3d(x, cb.w, cb.b, 1, 1);
        h = nn::batch_norm3d(h, cb.gamma, cb.beta, bn_states_[cb.bn_index].second, training);
        return nn::relu(h);
    }

    Var run_stage(const Var& x, int s, bool training) {
        Stage& st = stages_[s];
        Var h = x;
        for (int i = 0; i < 4; ++i) h = run_conv_block(h, st.cb[i], training);
        // residual skip from the stage input (broadcast over channels at stage 0)
        Var a = s == 0 ? nn::add_bcast_channel(h, x) : nn::add(h, x);
        check_finite(a, "enc.stage" + std::to_string(s));
        if (s == 4) return a;
        Var down = nn::add(nn::max_pool3d(a), nn::conv3d(a, st.down_w, st.down_b, 2, 1));
        return nn::conv3d(down, st.expand_w, st.expand_b, 1, 0);
    }

    Var run_decoder_layer(const Var& x, int l, bool training) {
        DecoderLayer& dl = dec_layers_[l];
        Var t = nn::conv_transpose3d(x, dl.tw, dl.tb, 2, 1, 1);
        Var c = nn::conv3d(x, dl.cw, dl.cb2, 1, 1);
        c = nn::batch_norm3d(c, dl.gamma, dl.beta, bn_states_[dl.bn_index].second, training);
        c = nn::upsample_trilinear2x(c);
        Var out = nn::relu(nn::add(t, c));
        check_finite(out, "dec.layer" + std::to_string(l));
        return out;
    }

    static void check_finite(const Var& v, const std::string& layer) {
        if (!v->value.all_finite())
            throw NonFiniteActivation("non-finite activation in " + layer);
    }

    PvaeConfig cfg_;
    ParamStore params_;
    std::vector<std::pair<std::string, BatchNormState>> bn_states_;
    std::vector<Stage> stages_;
    std::vector<DecoderLayer> dec_layers_;
    Var enc_head_w_, enc_head_b_;
    Var dec_head_w_, dec_head_b_;
};

/// z = mu + exp(log_var / 2) * eps with eps ~ N(0, I).
inline LatentCode reparameterize(const GaussianLatent& latent, Rng& rng) {
    if (latent.mu.size() != latent.log_var.size())
        throw ShapeMismatch("reparameterize: mu/log_var length mismatch");
    LatentCode out;
    out.z.resize(latent.mu.size());
    for (std::size_t i = 0; i < out.z.size(); ++i) {
        const float sigma = std::exp(0.5f * latent.log_var[i]);
        out.z[i] = latent.mu[i] + sigma * static_cast<float>(rng.normal());
    }
    return out;
}

/// Reconstruction + KL objective on plain buffers (the training loop uses the
/// graph ops; this mirrors them for direct evaluation).
inline double pvae_loss(const Patch& p, const Patch& p_tilde, const GaussianLatent& latent,
                        double kl_weight) {
    if (p.values.size() != p_tilde.values.size())
        throw ShapeMismatch("pvae_loss: patch size mismatch");
    double l1 = 0.0;
    for (std::size_t i = 0; i < p.values.size(); ++i)
        l1 += std::abs(static_cast<double>(p.values[i]) - p_tilde.values[i]);
    l1 /= static_cast<double>(p.values.size());

    double kl = 0.0;
    for (std::size_t i = 0; i < latent.mu.size(); ++i) {
        const double m = latent.mu[i], lv = latent.log_var[i];
        kl += 0.5 * (m * m + std::exp(lv) - lv - 1.0);
    }
    return l1 + kl_weight * kl;
}

}  // namespace sdfc::pvae
