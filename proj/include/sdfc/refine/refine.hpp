#pragma once

#include "sdfc/pvae/model.hpp"

namespace sdfc::refine {

using pvae::LatentCode;
using pvae::PvaeModel;

struct RefineConfig {
    int steps = 200;
    double noise_std = 1e-2;
    double lr = 1e-3;
    std::uint64_t seed = 0;

    void validate() const {
        if (steps < 1) throw ConfigError("refine: steps must be >= 1");
        if (noise_std < 0.0) throw ConfigError("refine: noise_std must be >= 0");
    }
};

struct RefineResult {
    LatentCode code;               // best-loss iterate
    std::vector<double> loss_trace;  // length = steps, loss before each update
    double initial_loss = 0.0;     // loss at the noisy start (== loss_trace[0])
    int best_step = 0;
};

/// Latent-only optimization against a frozen decoder: perturb the code with
/// Gaussian noise, then run Adam on the reconstruction L1 with gradients
/// flowing into the code alone. Returns the best-loss iterate over the trace
/// (the loss is evaluated before each update, plus once after the last).
inline RefineResult refine(const LatentCode& code, const Patch& target, const PvaeModel& decoder,
                           const RefineConfig& cfg) {
    cfg.validate();
    if (static_cast<int>(code.z.size()) != decoder.latent_dim())
        throw ShapeMismatch("refine: code length vs decoder D");
    for (float v : target.values)
        if (!std::isfinite(v)) throw DataError("refine: non-finite target patch");

    Rng rng(cfg.seed);
    auto* model = const_cast<PvaeModel*>(&decoder);
    // decoder stays frozen: no weight gradients are even computed
    nn::FreezeParams freeze(model->params());

    nn::Tensor z0({1, decoder.latent_dim()});
    for (std::size_t i = 0; i < code.z.size(); ++i)
        z0[i] = code.z[i] + static_cast<float>(rng.normal(0.0, cfg.noise_std));

    nn::Var z = nn::parameter(std::move(z0));
    nn::Adam adam({z});
    nn::Var target_var = nn::constant(
        nn::Tensor::from({1, 1, kPatchRes, kPatchRes, kPatchRes}, target.values));

    RefineResult res;
    res.loss_trace.reserve(cfg.steps);
    std::vector<float> best_z = z->value.raw();
    double best_loss = std::numeric_limits<double>::infinity();

    for (int step = 0; step < cfg.steps; ++step) {
        nn::Var recon = model->decode_var(z, false);
        nn::Var loss = nn::l1_loss(recon, target_var);
        const double l = loss->value[0];
        if (!std::isfinite(l))
            throw NonFiniteLoss("refine: non-finite loss at step " + std::to_string(step));
        res.loss_trace.push_back(l);
        if (l < best_loss) {
            best_loss = l;
            best_z = z->value.raw();
            res.best_step = step;
        }
        adam.zero_grad();
        nn::backward(loss);
        adam.step(cfg.lr);
    }

    // final iterate may be the best one
    {
        nn::NoGradGuard ng;
        nn::Var recon = model->decode_var(z, false);
        double l = 0.0;
        for (std::size_t i = 0; i < recon->value.numel(); ++i)
            l += std::abs(recon->value[i] - target_var->value[i]);
        l /= static_cast<double>(recon->value.numel());
        if (l < best_loss) {
            best_loss = l;
            best_z = z->value.raw();
            res.best_step = cfg.steps;
        }
    }

    res.initial_loss = res.loss_trace.front();
    res.code.z = std::move(best_z);
    return res;
}

}  // namespace sdfc::refine
