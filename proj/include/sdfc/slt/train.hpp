#pragma once

#include <functional>

#include "sdfc/io/checkpoint.hpp"
#include "sdfc/slt/model.hpp"

namespace sdfc::slt {

struct SltTrainConfig {
    long steps = 120000;
    int batch_size = 64;
    double lr = 1e-5;
    long warmup_steps = 1400;
    double mask_ratio = 0.4;
    long val_interval = 250;  // 0 disables periodic validation
    std::uint64_t seed = 0;
};

struct SltStepStats {
    long step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct SltTrainResult {
    std::vector<SltStepStats> loss_log;
    std::vector<std::pair<long, double>> val_log;  // (step, masked-slot L1)
    long best_step = -1;
    double best_val = 0.0;
};

/// Masked-slot L1 over a validation set under the deterministic bottom-half
/// mask (known bottom along -y, i.e. slots with j < G/2).
inline MaskSpec bottom_half_mask(int grid_dim) {
    MaskSpec mask;
    const int g = grid_dim;
    mask.masked.assign(static_cast<std::size_t>(g) * g * g, false);
    for (int k = 0; k < g; ++k)
        for (int j = 0; j < g; ++j)
            for (int i = 0; i < g; ++i)
                mask.masked[i + g * (j + g * k)] = j >= g / 2;
    return mask;
}

inline double validate_slt(const SltModel& model, const std::vector<LatentSequence>& val,
                           int grid_dim) {
    if (val.empty()) return 0.0;
    const MaskSpec mask = bottom_half_mask(grid_dim);
    double total = 0.0;
    for (const LatentSequence& seq : val) {
        const LatentSequence pred = model.forward(seq, mask);
        total += masked_slot_l1(pred, seq, mask);
    }
    return total / static_cast<double>(val.size());
}

/// Masked-autoencoder training: per step sample a strategy and mask per
/// sequence, substitute the mask token, predict all slots, and minimize the
/// equal-contribution completion loss (== mean L1 over all slots; the ground
/// truth is the unmasked code sequence).
inline SltTrainResult train_slt(SltModel& model, const std::vector<LatentSequence>& train,
                                const std::vector<LatentSequence>& val, const SltTrainConfig& cfg,
                                Rng& rng,
                                const std::function<void(const SltStepStats&)>& on_step = {},
                                const io::Checkpoint* resume = nullptr,
                                io::Checkpoint* out_last = nullptr) {
    if (train.empty()) throw DatasetEmpty("train_slt: no training sequences");
    const int n = train[0].n;
    const int d = train[0].d;
    if (d != model.config().latent_dim)
        throw ShapeMismatch("train_slt: dataset D " + std::to_string(d) + " vs model D " +
                                std::to_string(model.config().latent_dim));
    const int g = static_cast<int>(std::round(std::cbrt(static_cast<double>(n))));

    nn::Adam adam(model.params());
    const nn::LrSchedule schedule = nn::LrSchedule::warmup_cosine(cfg.lr, cfg.warmup_steps, cfg.steps);

    SltTrainResult result;
    io::Checkpoint best;
    long start_step = 0;
    if (resume) {
        std::vector<std::pair<std::string, nn::BatchNormState>> no_bn;
        io::restore(*resume, model.config().descriptor(), model.params(), no_bn, &adam, &rng);
        start_step = resume->step;
    }

    for (long step = start_step; step < cfg.steps; ++step) {
        const int b = cfg.batch_size;
        nn::Tensor codes({b, n, d});
        std::vector<bool> masked_flat(static_cast<std::size_t>(b) * n);

        for (int bi = 0; bi < b; ++bi) {
            const std::size_t pick = rng.uniform_index(train.size());
            const LatentSequence& seq = train[pick];
            std::copy_n(seq.codes.data(), seq.codes.size(),
                        codes.data() + static_cast<std::size_t>(bi) * n * d);
            const MaskSpec mask = make_mask(sample_strategy(rng), rng, g, cfg.mask_ratio);
            for (int i = 0; i < n; ++i) masked_flat[static_cast<std::size_t>(bi) * n + i] = mask.masked[i];
        }

        Var gt = nn::constant(std::move(codes));
        Var pred = model.forward_batch(gt, masked_flat, train[0].positions);
        // Equal-contribution weights alpha=M/N, beta=(N-M)/N reduce the
        // completion loss to the plain mean absolute error over all slots.
        Var loss = nn::l1_loss(pred, gt);

        if (!std::isfinite(loss->value[0]))
            throw NonFiniteLoss("train_slt: non-finite loss at step " + std::to_string(step));

        const double lr = schedule.at(step);
        adam.zero_grad();
        nn::backward(loss);
        adam.step(lr);

        SltStepStats stats{step, static_cast<double>(loss->value[0]), lr};
        result.loss_log.push_back(stats);
        if (on_step) on_step(stats);

        if (cfg.val_interval > 0 && !val.empty() &&
            ((step + 1) % cfg.val_interval == 0 || step + 1 == cfg.steps)) {
            const double v = validate_slt(model, val, g);
            result.val_log.emplace_back(step + 1, v);
            if (result.best_step < 0 || v < result.best_val) {
                result.best_step = step + 1;
                result.best_val = v;
                best = io::snapshot(model.config().descriptor(), model.params(), {}, nullptr,
                                    nullptr, step + 1);
            }
        }
    }

    if (out_last) {
        std::vector<std::pair<std::string, nn::BatchNormState>> no_bn;
        *out_last = io::snapshot(model.config().descriptor(), model.params(), no_bn, &adam, &rng,
                                 cfg.steps);
    }
    if (result.best_step >= 0) {
        std::vector<std::pair<std::string, nn::BatchNormState>> no_bn;
        io::restore(best, model.config().descriptor(), model.params(), no_bn);
    }
    return result;
}

}  // namespace sdfc::slt
