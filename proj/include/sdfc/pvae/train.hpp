#pragma once

#include <functional>

#include "sdfc/io/checkpoint.hpp"
#include "sdfc/pvae/model.hpp"

namespace sdfc::pvae {

struct PvaeTrainConfig {
    int epochs = 250;
    int batch_size = 128;
    double lr = 1e-4;
    int early_stop_patience = 20;
    std::uint64_t seed = 0;
    /// Stop as soon as validation L1 drops below this (0 disables).
    double target_val_l1 = 0.0;
};

struct EpochStats {
    int epoch = 0;
    double train_l1 = 0.0;
    double train_kl = 0.0;
    double val_l1 = 0.0;
};

struct PvaeTrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_l1 = 0.0;
    long steps = 0;
};

/// Mean eval-mode reconstruction L1 over a patch set.
inline double validate_pvae(PvaeModel& model, const std::vector<Patch>& val, int batch_size) {
    nn::NoGradGuard ng;
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t at = 0; at < val.size(); at += batch_size) {
        const int b = static_cast<int>(std::min<std::size_t>(batch_size, val.size() - at));
        nn::Tensor x({b, 1, kPatchRes, kPatchRes, kPatchRes});
        for (int i = 0; i < b; ++i)
            std::copy_n(val[at + i].values.data(), Patch::value_count(),
                        x.data() + static_cast<std::size_t>(i) * Patch::value_count());
        Var xv = nn::constant(std::move(x));
        auto [mu, lv] = model.encode_gaussian(xv, false);
        Var recon = model.decode_var(mu, false);
        const float* a = recon->value.data();
        const float* t = xv->value.data();
        double l1 = 0.0;
        for (std::size_t i = 0; i < recon->value.numel(); ++i) l1 += std::abs(a[i] - t[i]);
        total += l1 / static_cast<double>(Patch::value_count());
        count += b;
    }
    return total / static_cast<double>(count);
}

/// Trains the patch VAE: reparameterized reconstruction L1 + weighted KL,
/// Adam with cosine annealing, early stopping on the validation L1.
/// The model is left holding the best-validation parameters.
inline PvaeTrainResult train_pvae(PvaeModel& model, const std::vector<Patch>& train,
                                  const std::vector<Patch>& val, const PvaeTrainConfig& cfg,
                                  Rng& rng,
                                  const std::function<void(const EpochStats&)>& on_epoch = {},
                                  const io::Checkpoint* resume = nullptr,
                                  io::Checkpoint* out_last = nullptr) {
    if (train.empty()) throw DatasetEmpty("train_pvae: no training patches");
    if (cfg.batch_size < 2)
        throw InvalidBatch("train_pvae: batch size must be >= 2 for batch norm");

    const int d = model.latent_dim();
    const long steps_per_epoch = static_cast<long>(train.size() / cfg.batch_size +
                                                   (train.size() % cfg.batch_size ? 1 : 0));
    const nn::LrSchedule schedule =
        nn::LrSchedule::cosine(cfg.lr, std::max<long>(cfg.epochs * steps_per_epoch, 1));

    nn::Adam adam(model.params());
    PvaeTrainResult result;
    io::Checkpoint best;
    long step = 0;
    int start_epoch = 0;
    int stale_epochs = 0;
    if (resume) {
        io::restore(*resume, model.config().descriptor(), model.params(), model.bn_states(), &adam,
                    &rng);
        step = resume->step;
        start_epoch = static_cast<int>(step / std::max<long>(steps_per_epoch, 1));
    }

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (int epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        shuffle(order, rng);
        double ep_l1 = 0.0, ep_kl = 0.0;
        long ep_batches = 0;

        for (std::size_t at = 0; at + 2 <= train.size(); at += cfg.batch_size) {
            const int b = static_cast<int>(std::min<std::size_t>(cfg.batch_size, train.size() - at));
            if (b < 2) break;  // drop a trailing single-sample batch

            nn::Tensor x({b, 1, kPatchRes, kPatchRes, kPatchRes});
            for (int i = 0; i < b; ++i)
                std::copy_n(train[order[at + i]].values.data(), Patch::value_count(),
                            x.data() + static_cast<std::size_t>(i) * Patch::value_count());
            nn::Tensor eps = nn::Tensor::randn({b, d}, rng);

            Var xv = nn::constant(std::move(x));
            auto [mu, lv] = model.encode_gaussian(xv, true);
            Var z = nn::add(mu, nn::mul(nn::exp_op(nn::scale(lv, 0.5f)), nn::constant(std::move(eps))));
            Var recon = model.decode_var(z, true);
            Var l1 = nn::l1_loss(recon, xv);
            Var kl = nn::kl_to_standard_normal(mu, lv);
            Var loss = nn::add(l1, nn::scale(kl, model.config().kl_weight));

            if (!std::isfinite(loss->value[0]))
                throw NonFiniteLoss("train_pvae: non-finite loss at step " + std::to_string(step));

            adam.zero_grad();
            nn::backward(loss);
            adam.step(schedule.at(step));
            ++step;

            ep_l1 += l1->value[0];
            ep_kl += kl->value[0];
            ++ep_batches;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.train_l1 = ep_l1 / std::max<long>(ep_batches, 1);
        stats.train_kl = ep_kl / std::max<long>(ep_batches, 1);
        stats.val_l1 = val.empty() ? stats.train_l1 : validate_pvae(model, val, cfg.batch_size);
        result.history.push_back(stats);
        if (on_epoch) on_epoch(stats);

        if (result.best_epoch < 0 || stats.val_l1 < result.best_val_l1) {
            result.best_epoch = epoch;
            result.best_val_l1 = stats.val_l1;
            best = io::snapshot(model.config().descriptor(), model.params(), model.bn_states(),
                                nullptr, nullptr, step);
            stale_epochs = 0;
        } else if (++stale_epochs >= cfg.early_stop_patience) {
            break;
        }
        if (cfg.target_val_l1 > 0.0 && stats.val_l1 <= cfg.target_val_l1) break;
    }

    result.steps = step;
    if (out_last)
        *out_last = io::snapshot(model.config().descriptor(), model.params(), model.bn_states(),
                                 &adam, &rng, step);
    if (result.best_epoch >= 0)
        io::restore(best, model.config().descriptor(), model.params(), model.bn_states());
    return result;
}

}  // namespace sdfc::pvae
