#pragma once

#include "sdfc/nn/optim.hpp"
#include "sdfc/nn/ops.hpp"

namespace sdfc::nn {

/// Torch-style default init for linear layers: U(+-1/sqrt(fan_in)).
inline Tensor linear_init(int out_f, int in_f, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in_f));
    return Tensor::rand_uniform({out_f, in_f}, rng, -bound, bound);
}

inline Tensor bias_init(int out_f, int in_f, Rng& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in_f));
    return Tensor::rand_uniform({out_f}, rng, -bound, bound);
}

struct TransformerConfig {
    int d_model = 512;
    int n_layers = 8;
    int n_heads = 8;
    int d_ff = 2048;
};

/// Pre-norm bidirectional transformer encoder stack (no causal mask), closed
/// by a final layer norm. Permutation-equivariant: positional information is
/// injected by the caller, not here.
class TransformerEncoder {
public:
    TransformerEncoder() = default;

    TransformerEncoder(ParamStore& store, const std::string& prefix, const TransformerConfig& cfg,
                       Rng& rng)
        : cfg_(cfg) {
        if (cfg.d_model % cfg.n_heads != 0)
            throw ShapeMismatch("transformer: d_model " + std::to_string(cfg.d_model) +
                                " not divisible by heads " + std::to_string(cfg.n_heads));
        layers_.resize(cfg.n_layers);
        for (int l = 0; l < cfg.n_layers; ++l) {
            auto& lyr = layers_[l];
            const std::string p = prefix + ".layer" + std::to_string(l);
            lyr.ln1_g = store.add(p + ".ln1.gamma", Tensor::full({cfg.d_model}, 1.0f));
            lyr.ln1_b = store.add(p + ".ln1.beta", Tensor::zeros({cfg.d_model}));
            lyr.wq = store.add(p + ".attn.wq", linear_init(cfg.d_model, cfg.d_model, rng));
            lyr.bq = store.add(p + ".attn.bq", bias_init(cfg.d_model, cfg.d_model, rng));
            lyr.wk = store.add(p + ".attn.wk", linear_init(cfg.d_model, cfg.d_model, rng));
            lyr.bk = store.add(p + ".attn.bk", bias_init(cfg.d_model, cfg.d_model, rng));
            lyr.wv = store.add(p + ".attn.wv", linear_init(cfg.d_model, cfg.d_model, rng));
            lyr.bv = store.add(p + ".attn.bv", bias_init(cfg.d_model, cfg.d_model, rng));
            lyr.wo = store.add(p + ".attn.wo", linear_init(cfg.d_model, cfg.d_model, rng));
            lyr.bo = store.add(p + ".attn.bo", bias_init(cfg.d_model, cfg.d_model, rng));
            lyr.ln2_g = store.add(p + ".ln2.gamma", Tensor::full({cfg.d_model}, 1.0f));
            lyr.ln2_b = store.add(p + ".ln2.beta", Tensor::zeros({cfg.d_model}));
            lyr.ff_w1 = store.add(p + ".ff.w1", linear_init(cfg.d_ff, cfg.d_model, rng));
            lyr.ff_b1 = store.add(p + ".ff.b1", bias_init(cfg.d_ff, cfg.d_model, rng));
            lyr.ff_w2 = store.add(p + ".ff.w2", linear_init(cfg.d_model, cfg.d_ff, rng));
            lyr.ff_b2 = store.add(p + ".ff.b2", bias_init(cfg.d_model, cfg.d_ff, rng));
        }
        final_g_ = store.add(prefix + ".ln_final.gamma", Tensor::full({cfg.d_model}, 1.0f));
        final_b_ = store.add(prefix + ".ln_final.beta", Tensor::zeros({cfg.d_model}));
    }

    const TransformerConfig& config() const { return cfg_; }

    /// x: [B, N, d_model] (or [N, d_model], treated as batch 1). When
    /// attn_probs is non-null, the per-layer attention matrices
    /// [B*H, N, N] are copied out for inspection.
    Var forward(const Var& x, std::vector<Tensor>* attn_probs = nullptr) const {
        Var h = x;
        bool unbatched = false;
        if (h->value.rank() == 2) {
            h = reshape(h, {1, h->value.dim(0), h->value.dim(1)});
            unbatched = true;
        }
        if (h->value.rank() != 3 || h->value.dim(2) != cfg_.d_model)
            throw ShapeMismatch("transformer: expected [B,N," + std::to_string(cfg_.d_model) +
                                "], got " + Tensor::shape_str(x->value.shape()));

        for (const auto& lyr : layers_) {
            Var normed = layer_norm(h, lyr.ln1_g, lyr.ln1_b);
            Var attn = attention(normed, lyr, attn_probs);
            h = add(h, attn);
            Var normed2 = layer_norm(h, lyr.ln2_g, lyr.ln2_b);
            Var ff = linear(relu(linear(normed2, lyr.ff_w1, lyr.ff_b1)), lyr.ff_w2, lyr.ff_b2);
            h = add(h, ff);
        }
        h = layer_norm(h, final_g_, final_b_);
        if (unbatched) h = reshape(h, {h->value.dim(1), h->value.dim(2)});
        return h;
    }

private:
    struct Layer {
        Var ln1_g, ln1_b;
        Var wq, bq, wk, bk, wv, bv, wo, bo;
        Var ln2_g, ln2_b;
        Var ff_w1, ff_b1, ff_w2, ff_b2;
    };

    Var attention(const Var& h, const Layer& lyr, std::vector<Tensor>* attn_probs) const {
        const int b = h->value.dim(0), n = h->value.dim(1);
        const int heads = cfg_.n_heads, dh = cfg_.d_model / cfg_.n_heads;

        auto split_heads = [&](const Var& t) {
            // [B,N,d] -> [B,N,H,dh] -> [B,H,N,dh] -> [B*H,N,dh]
            Var r = reshape(t, {b, n, heads, dh});
            r = permute(r, {0, 2, 1, 3});
            return reshape(r, {b * heads, n, dh});
        };

        Var q = split_heads(linear(h, lyr.wq, lyr.bq));
        Var k = split_heads(linear(h, lyr.wk, lyr.bk));
        Var v = split_heads(linear(h, lyr.wv, lyr.bv));

        Var scores = scale(bmm(q, k, false, true), 1.0f / std::sqrt(static_cast<float>(dh)));
        Var probs = softmax_lastdim(scores);
        if (attn_probs) attn_probs->push_back(probs->value);
        Var ctx = bmm(probs, v);

        // [B*H,N,dh] -> [B,H,N,dh] -> [B,N,H,dh] -> [B,N,d]
        ctx = reshape(ctx, {b, heads, n, dh});
        ctx = permute(ctx, {0, 2, 1, 3});
        ctx = reshape(ctx, {b, n, cfg_.d_model});
        return linear(ctx, lyr.wo, lyr.bo);
    }

    TransformerConfig cfg_;
    std::vector<Layer> layers_;
    Var final_g_, final_b_;
};

}  // namespace sdfc::nn
