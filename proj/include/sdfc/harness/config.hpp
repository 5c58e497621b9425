#pragma once

#include <fstream>
#include <set>

#include <json.hpp>

#include "sdfc/metrics/metrics.hpp"
#include "sdfc/pvae/train.hpp"
#include "sdfc/refine/refine.hpp"
#include "sdfc/slt/train.hpp"

namespace sdfc::harness {

using nlohmann::json;

/// Resolved run configuration. Defaults reproduce the full-scale recipe;
/// configs/desk.json scales everything to a single CPU. The JSON schema is
/// strict: unknown keys anywhere are an error.
struct Config {
    std::uint64_t seed = 1;

    struct Data {
        int resolution = 128;
        int metric_samples = 1000000;
        int mesh_detail = 3;
    } data;

    pvae::PvaeConfig pvae_model;
    pvae::PvaeTrainConfig pvae_train{.epochs = 250,
                                     .batch_size = 128,
                                     .lr = 1e-4,
                                     .early_stop_patience = 20,
                                     .seed = 0,
                                     .target_val_l1 = 0.0};
    int pvae_train_patches = 100000;
    int pvae_val_patches = 5000;

    slt::SltConfig slt_model{.latent_dim = 4096, .d_in = 512, .encoder = {512, 8, 8, 2048}};
    slt::SltTrainConfig slt_train{.steps = 120000,
                                  .batch_size = 64,
                                  .lr = 1e-5,
                                  .warmup_steps = 1400,
                                  .mask_ratio = 0.4,
                                  .val_interval = 250,
                                  .seed = 0};

    struct Complete {
        bool passthrough_known = true;
        int gravity_axis = 1;  // 0=x, 1=y, 2=z; "bottom" = lower half along it
    } complete;

    MetricThresholds metrics;
    refine::RefineConfig refine;

    json to_json() const {
        json j;
        j["seed"] = seed;
        j["data"] = {{"resolution", data.resolution},
                     {"metric_samples", data.metric_samples},
                     {"mesh_detail", data.mesh_detail}};
        j["pvae"] = {{"encoder_channels", pvae_model.encoder_channels},
                     {"decoder_channels", pvae_model.decoder_channels},
                     {"kl_weight", pvae_model.kl_weight},
                     {"epochs", pvae_train.epochs},
                     {"batch_size", pvae_train.batch_size},
                     {"lr", pvae_train.lr},
                     {"patience", pvae_train.early_stop_patience},
                     {"target_val_l1", pvae_train.target_val_l1},
                     {"train_patches", pvae_train_patches},
                     {"val_patches", pvae_val_patches}};
        j["slt"] = {{"d_in", slt_model.d_in},
                    {"d_model", slt_model.encoder.d_model},
                    {"layers", slt_model.encoder.n_layers},
                    {"heads", slt_model.encoder.n_heads},
                    {"d_ff", slt_model.encoder.d_ff},
                    {"steps", slt_train.steps},
                    {"batch_size", slt_train.batch_size},
                    {"lr", slt_train.lr},
                    {"warmup_steps", slt_train.warmup_steps},
                    {"mask_ratio", slt_train.mask_ratio},
                    {"val_interval", slt_train.val_interval}};
        j["complete"] = {{"passthrough_known", complete.passthrough_known},
                         {"gravity_axis", std::string(1, "xyz"[complete.gravity_axis])}};
        j["metrics"] = {{"f1_tau", metrics.f1_tau},
                        {"cmp_tau", metrics.cmp_tau},
                        {"in_theta_deg", metrics.in_theta_deg}};
        j["refine"] = {{"steps", refine.steps},
                       {"noise_std", refine.noise_std},
                       {"lr", refine.lr}};
        return j;
    }
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    if (!j.is_object()) throw ConfigError("config: " + where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("config: unknown key '" + key + "' in " + where);
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

/// Parses and validates a config JSON object over the built-in defaults.
inline Config parse_config(const json& j) {
    Config cfg;
    detail::reject_unknown_keys(
        j, {"seed", "data", "pvae", "slt", "complete", "metrics", "refine"}, "top level");
    detail::read_if(j, "seed", cfg.seed);

    if (j.contains("data")) {
        const json& d = j.at("data");
        detail::reject_unknown_keys(d, {"resolution", "metric_samples", "mesh_detail"}, "data");
        detail::read_if(d, "resolution", cfg.data.resolution);
        detail::read_if(d, "metric_samples", cfg.data.metric_samples);
        detail::read_if(d, "mesh_detail", cfg.data.mesh_detail);
        if (cfg.data.resolution <= 0 || cfg.data.resolution % 32 != 0)
            throw ConfigError("config: data.resolution must be a positive multiple of 32");
    }
    if (j.contains("pvae")) {
        const json& p = j.at("pvae");
        detail::reject_unknown_keys(p,
                                    {"encoder_channels", "decoder_channels", "kl_weight", "epochs",
                                     "batch_size", "lr", "patience", "target_val_l1",
                                     "train_patches", "val_patches"},
                                    "pvae");
        detail::read_if(p, "encoder_channels", cfg.pvae_model.encoder_channels);
        detail::read_if(p, "decoder_channels", cfg.pvae_model.decoder_channels);
        detail::read_if(p, "kl_weight", cfg.pvae_model.kl_weight);
        detail::read_if(p, "epochs", cfg.pvae_train.epochs);
        detail::read_if(p, "batch_size", cfg.pvae_train.batch_size);
        detail::read_if(p, "lr", cfg.pvae_train.lr);
        detail::read_if(p, "patience", cfg.pvae_train.early_stop_patience);
        detail::read_if(p, "target_val_l1", cfg.pvae_train.target_val_l1);
        detail::read_if(p, "train_patches", cfg.pvae_train_patches);
        detail::read_if(p, "val_patches", cfg.pvae_val_patches);
        cfg.pvae_model.validate();
    }
    if (j.contains("slt")) {
        const json& s = j.at("slt");
        detail::reject_unknown_keys(s,
                                    {"d_in", "d_model", "layers", "heads", "d_ff", "steps",
                                     "batch_size", "lr", "warmup_steps", "mask_ratio",
                                     "val_interval"},
                                    "slt");
        detail::read_if(s, "d_in", cfg.slt_model.d_in);
        detail::read_if(s, "d_model", cfg.slt_model.encoder.d_model);
        detail::read_if(s, "layers", cfg.slt_model.encoder.n_layers);
        detail::read_if(s, "heads", cfg.slt_model.encoder.n_heads);
        detail::read_if(s, "d_ff", cfg.slt_model.encoder.d_ff);
        detail::read_if(s, "steps", cfg.slt_train.steps);
        detail::read_if(s, "batch_size", cfg.slt_train.batch_size);
        detail::read_if(s, "lr", cfg.slt_train.lr);
        detail::read_if(s, "warmup_steps", cfg.slt_train.warmup_steps);
        detail::read_if(s, "mask_ratio", cfg.slt_train.mask_ratio);
        detail::read_if(s, "val_interval", cfg.slt_train.val_interval);
    }
    if (j.contains("complete")) {
        const json& c = j.at("complete");
        detail::reject_unknown_keys(c, {"passthrough_known", "gravity_axis"}, "complete");
        detail::read_if(c, "passthrough_known", cfg.complete.passthrough_known);
        if (c.contains("gravity_axis")) {
            const std::string axis = c.at("gravity_axis").get<std::string>();
            if (axis == "x") cfg.complete.gravity_axis = 0;
            else if (axis == "y") cfg.complete.gravity_axis = 1;
            else if (axis == "z") cfg.complete.gravity_axis = 2;
            else throw ConfigError("config: complete.gravity_axis must be x, y or z");
        }
    }
    if (j.contains("metrics")) {
        const json& m = j.at("metrics");
        detail::reject_unknown_keys(m, {"f1_tau", "cmp_tau", "in_theta_deg"}, "metrics");
        detail::read_if(m, "f1_tau", cfg.metrics.f1_tau);
        detail::read_if(m, "cmp_tau", cfg.metrics.cmp_tau);
        detail::read_if(m, "in_theta_deg", cfg.metrics.in_theta_deg);
    }
    if (j.contains("refine")) {
        const json& r = j.at("refine");
        detail::reject_unknown_keys(r, {"steps", "noise_std", "lr"}, "refine");
        detail::read_if(r, "steps", cfg.refine.steps);
        detail::read_if(r, "noise_std", cfg.refine.noise_std);
        detail::read_if(r, "lr", cfg.refine.lr);
        cfg.refine.validate();
    }

    // model dims must agree across the two networks
    cfg.slt_model.latent_dim = cfg.pvae_model.latent_dim();
    cfg.pvae_train.seed = cfg.seed;
    cfg.slt_train.seed = cfg.seed;
    cfg.refine.seed = cfg.seed;
    return cfg;
}

inline Config load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: invalid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

}  // namespace sdfc::harness
