// sdfc: patch-based SDF shape completion toolkit.
//
// Subcommands cover the full pipeline: synthetic corpus generation or mesh
// ingestion, patch VAE training, completion-transformer training, shape
// completion, latent refinement, evaluation, and artifact inspection.

#include <CLI11.hpp>

#include <iostream>

#include "sdfc/harness/pipeline.hpp"
#include "sdfc/refine/refine.hpp"

namespace fs = std::filesystem;
using namespace sdfc;
using harness::Config;
using harness::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::uint64_t seed_override = 0;
    bool seed_set = false;
};

Config resolve_config(const CommonArgs& args) {
    Config cfg = args.config_path.empty() ? Config{} : harness::load_config(args.config_path);
    if (args.seed_set) cfg.seed = args.seed_override;
    cfg.pvae_train.seed = cfg.seed;
    cfg.slt_train.seed = cfg.seed;
    cfg.refine.seed = cfg.seed;
    return cfg;
}

void log_resolved_config(const Config& cfg, const std::string& out_dir) {
    const std::string dump = cfg.to_json().dump(2);
    std::cout << "resolved config:\n" << dump << "\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        io::AtomicFileWriter w((fs::path(out_dir) / "resolved_config.json").string());
        w.stream() << dump << "\n";
        w.commit();
    }
}

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults when omitted)");
    cmd->add_option("--seed", args.seed_override, "override the config seed")
        ->each([&args](const std::string&) { args.seed_set = true; });
}

std::vector<harness::ShapeKind> parse_kinds(const std::string& csv) {
    std::vector<harness::ShapeKind> kinds;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) kinds.push_back(harness::shape_kind_from_name(tok));
    if (kinds.empty()) throw UsageError("empty --kinds list");
    return kinds;
}

pvae::PvaeModel load_pvae(const std::string& ckpt_path, const Config& cfg) {
    const io::Checkpoint ck = io::load_checkpoint(ckpt_path);
    pvae::PvaeModel model(cfg.pvae_model, cfg.seed);
    io::restore(ck, model.config().descriptor(), model.params(), model.bn_states());
    return model;
}

slt::SltModel load_slt(const std::string& ckpt_path, const Config& cfg) {
    const io::Checkpoint ck = io::load_checkpoint(ckpt_path);
    slt::SltModel model(cfg.slt_model, cfg.seed + 1);
    std::vector<std::pair<std::string, nn::BatchNormState>> no_bn;
    io::restore(ck, model.config().descriptor(), model.params(), no_bn);
    return model;
}

// ---------------------------------------------------------------------------

int cmd_make_synthetic(const CommonArgs& common, int count, const std::string& kinds_csv,
                       const std::string& out_dir, bool no_grids) {
    Config cfg = resolve_config(common);
    harness::SyntheticOptions opts;
    opts.count = count;
    opts.kinds = parse_kinds(kinds_csv);
    opts.seed = cfg.seed;
    opts.resolution = cfg.data.resolution;
    opts.mesh_detail = cfg.data.mesh_detail;
    opts.write_grids = !no_grids;
    log_resolved_config(cfg, out_dir);
    const auto manifest = harness::make_synthetic(opts, out_dir);
    std::cout << "wrote " << manifest.objects.size() << " objects to " << out_dir << "\n";
    return 0;
}

int cmd_dataprep(const CommonArgs& common, const std::string& mesh_dir, const std::string& out_dir) {
    Config cfg = resolve_config(common);
    log_resolved_config(cfg, out_dir);
    harness::DataprepStats stats;
    harness::dataprep(mesh_dir, out_dir, cfg.data.resolution, &stats);
    std::cout << "converted " << stats.converted << " objects, skipped " << stats.skipped << "\n";
    return 0;
}

int cmd_train_pvae(const CommonArgs& common, const std::string& data_dir,
                   const std::string& out_dir, const std::string& resume_path) {
    Config cfg = resolve_config(common);
    log_resolved_config(cfg, out_dir);
    fs::create_directories(out_dir);

    const auto manifest = harness::load_manifest((fs::path(data_dir) / "manifest.json").string());

    // patch datasets are cached next to the data, keyed by seed and count
    const std::string cache_dir = (fs::path(data_dir) / "cache").string();
    fs::create_directories(cache_dir);
    auto cached_patches = [&](const std::string& split, int count) {
        const std::string path = cache_dir + "/patches_" + split + "_s" +
                                 std::to_string(cfg.seed) + "_n" + std::to_string(count) + ".pshd";
        if (fs::exists(path)) return io::load_patches(path);
        Rng rng(cfg.seed ^ std::hash<std::string>{}(split));
        auto patches = harness::build_patch_dataset(manifest, data_dir, split, count, rng,
                                                    cfg.data.mesh_detail);
        io::save_patches(patches, path);
        return patches;
    };
    std::cout << "building patch datasets...\n";
    const auto train = cached_patches("train", cfg.pvae_train_patches);
    const auto val = cached_patches("val", cfg.pvae_val_patches);
    std::cout << "train " << train.size() << " patches, val " << val.size() << " patches\n";

    pvae::PvaeModel model(cfg.pvae_model, cfg.seed);
    std::cout << "pvae " << model.config().descriptor() << " ("
              << model.params().total_count() << " parameters)\n";

    io::Checkpoint resume;
    const bool resuming = !resume_path.empty();
    if (resuming) resume = io::load_checkpoint(resume_path);

    Rng rng(cfg.seed + 17);
    io::Checkpoint last;
    std::vector<std::pair<double, double>> l1_series, kl_series, val_series;
    const auto result = pvae::train_pvae(
        model, train, val, cfg.pvae_train, rng,
        [&](const pvae::EpochStats& s) {
            char line[160];
            std::snprintf(line, sizeof(line), "epoch %3d  train_l1 %.6f  train_kl %.3f  val_l1 %.6f\n",
                          s.epoch, s.train_l1, s.train_kl, s.val_l1);
            std::cout << line << std::flush;
            l1_series.emplace_back(s.epoch, s.train_l1);
            kl_series.emplace_back(s.epoch, s.train_kl);
            val_series.emplace_back(s.epoch, s.val_l1);
        },
        resuming ? &resume : nullptr, &last);

    const std::string best_path = (fs::path(out_dir) / "pvae.ckpt").string();
    io::save_checkpoint(io::snapshot(model.config().descriptor(), model.params(),
                                     model.bn_states(), nullptr, nullptr, result.steps),
                        best_path);
    io::save_checkpoint(last, (fs::path(out_dir) / "pvae_last.ckpt").string());
    harness::write_series_csv(l1_series, "epoch,train_l1",
                              (fs::path(out_dir) / "pvae_train_l1.csv").string());
    harness::write_series_csv(val_series, "epoch,val_l1",
                              (fs::path(out_dir) / "pvae_val_l1.csv").string());
    harness::write_svg_plot(l1_series, "P-VAE train L1",
                            (fs::path(out_dir) / "pvae_train_l1.svg").string());
    harness::write_svg_plot(val_series, "P-VAE val L1",
                            (fs::path(out_dir) / "pvae_val_l1.svg").string());
    std::cout << "best epoch " << result.best_epoch << " (val_l1 " << result.best_val_l1
              << "), steps " << result.steps << "\ncheckpoint: " << best_path << "\n";
    return 0;
}

int cmd_train_slt(const CommonArgs& common, const std::string& data_dir,
                  const std::string& pvae_path, const std::string& out_dir,
                  const std::string& resume_path) {
    Config cfg = resolve_config(common);
    log_resolved_config(cfg, out_dir);
    fs::create_directories(out_dir);

    const auto manifest = harness::load_manifest((fs::path(data_dir) / "manifest.json").string());
    const pvae::PvaeModel vae = load_pvae(pvae_path, cfg);

    std::cout << "encoding latent datasets...\n";
    const std::string cache = (fs::path(data_dir) / "cache" / "latents").string();
    const auto train = harness::build_latent_dataset(manifest, data_dir, "train", vae,
                                                     cfg.data.resolution, cache, &std::cout);
    const auto val = harness::build_latent_dataset(manifest, data_dir, "val", vae,
                                                   cfg.data.resolution, cache, &std::cout);
    std::cout << "train " << train.size() << " sequences, val " << val.size() << "\n";

    slt::SltModel model(cfg.slt_model, cfg.seed + 1);
    std::cout << "slt " << model.config().descriptor() << " (" << model.params().total_count()
              << " parameters)\n";

    io::Checkpoint resume;
    const bool resuming = !resume_path.empty();
    if (resuming) resume = io::load_checkpoint(resume_path);

    Rng rng(cfg.seed + 29);
    io::Checkpoint last;
    std::vector<std::pair<double, double>> loss_series;
    const auto result = slt::train_slt(
        model, train, val, cfg.slt_train, rng,
        [&](const slt::SltStepStats& s) {
            loss_series.emplace_back(static_cast<double>(s.step), s.loss);
            if (s.step % 100 == 0) {
                char line[120];
                std::snprintf(line, sizeof(line), "step %6ld  loss %.6f  lr %.3g\n", s.step,
                              s.loss, s.lr);
                std::cout << line << std::flush;
            }
        },
        resuming ? &resume : nullptr, &last);

    const std::string best_path = (fs::path(out_dir) / "slt.ckpt").string();
    std::vector<std::pair<std::string, nn::BatchNormState>> no_bn;
    io::save_checkpoint(
        io::snapshot(model.config().descriptor(), model.params(), no_bn, nullptr, nullptr,
                     cfg.slt_train.steps),
        best_path);
    io::save_checkpoint(last, (fs::path(out_dir) / "slt_last.ckpt").string());
    harness::write_series_csv(loss_series, "step,loss",
                              (fs::path(out_dir) / "slt_loss.csv").string());
    harness::write_svg_plot(loss_series, "SLT training loss",
                            (fs::path(out_dir) / "slt_loss.svg").string());
    std::vector<std::pair<double, double>> val_series;
    for (const auto& [s, v] : result.val_log) val_series.emplace_back(static_cast<double>(s), v);
    harness::write_series_csv(val_series, "step,val_masked_l1",
                              (fs::path(out_dir) / "slt_val.csv").string());
    if (!val_series.empty())
        harness::write_svg_plot(val_series, "SLT val masked L1",
                                (fs::path(out_dir) / "slt_val.svg").string());
    std::cout << "best val masked L1 " << result.best_val << " at step " << result.best_step
              << "\ncheckpoint: " << best_path << "\n";
    return 0;
}

int cmd_complete(const CommonArgs& common, const std::string& grid_path, const std::string& task,
                 const std::string& mask_path, const std::string& pvae_path,
                 const std::string& slt_path, const std::string& out_dir, bool no_passthrough) {
    Config cfg = resolve_config(common);
    log_resolved_config(cfg, out_dir);
    fs::create_directories(out_dir);

    const SdfGrid grid = io::load_sdf(grid_path);
    const PatchGrid full = partition(grid);
    std::vector<bool> known =
        mask_path.empty()
            ? harness::task_known_slots(task, full.grid_dim, cfg.complete.gravity_axis, cfg.seed)
            : harness::load_mask_file(mask_path, full.grid_dim);
    const PatchGrid partial = harness::apply_known_slots(full, known);
    std::cout << "task " << (mask_path.empty() ? task : "mask:" + mask_path) << ": "
              << partial.known_count() << "/" << full.slot_count() << " patches known\n";

    const pvae::PvaeModel vae = load_pvae(pvae_path, cfg);
    const slt::SltModel slt_model = load_slt(slt_path, cfg);

    slt::CompleteOptions opts;
    opts.passthrough_known = cfg.complete.passthrough_known && !no_passthrough;
    const auto t0 = std::chrono::steady_clock::now();
    const SdfGrid completed = slt::complete(partial, vae, slt_model, opts);
    const auto t1 = std::chrono::steady_clock::now();
    std::cout << "completion took "
              << std::chrono::duration<double, std::milli>(t1 - t0).count() << " ms\n";

    const std::string sdf_out = (fs::path(out_dir) / "completed.sdf").string();
    io::save_sdf(completed, sdf_out);
    const TriangleMesh mesh = marching_cubes(completed);
    {
        io::AtomicFileWriter w((fs::path(out_dir) / "completed.obj").string());
        save_obj(mesh, w.stream());
        w.commit();
    }
    std::cout << "wrote " << sdf_out << " and completed.obj (" << mesh.faces.size()
              << " faces)\n";
    return 0;
}

int cmd_refine(const CommonArgs& common, const std::string& grid_path,
               const std::string& pvae_path, const std::string& out_dir) {
    Config cfg = resolve_config(common);
    log_resolved_config(cfg, out_dir);
    fs::create_directories(out_dir);

    const SdfGrid grid = io::load_sdf(grid_path);
    const PatchGrid pg = partition(grid);
    const pvae::PvaeModel vae = load_pvae(pvae_path, cfg);

    PatchGrid refined(pg.grid_dim, pg.parent_resolution);
    double init_sum = 0.0, final_sum = 0.0;
    for (int s = 0; s < pg.slot_count(); ++s) {
        const Patch& target = *pg.slots[s];
        refine::RefineConfig rc = cfg.refine;
        rc.seed = cfg.seed + static_cast<std::uint64_t>(s);
        const auto code = vae.inference_code(target);
        const auto res = refine::refine(code, target, vae, rc);
        init_sum += res.initial_loss;
        final_sum += res.loss_trace[res.best_step == static_cast<int>(res.loss_trace.size())
                                        ? res.loss_trace.size() - 1
                                        : res.best_step];
        Patch out = vae.decode(res.code);
        out.side = target.side;
        out.center = target.center;
        refined.slots[s] = std::move(out);
        std::cout << "patch " << s << ": L1 " << res.initial_loss << " -> "
                  << *std::min_element(res.loss_trace.begin(), res.loss_trace.end()) << "\n";
    }
    const SdfGrid out_grid = assemble(refined);
    io::save_sdf(out_grid, (fs::path(out_dir) / "refined.sdf").string());
    const TriangleMesh mesh = marching_cubes(out_grid);
    {
        io::AtomicFileWriter w((fs::path(out_dir) / "refined.obj").string());
        save_obj(mesh, w.stream());
        w.commit();
    }
    std::cout << "mean patch L1: " << init_sum / pg.slot_count() << " -> "
              << final_sum / pg.slot_count() << "\n";
    return 0;
}

int cmd_eval(const CommonArgs& common, const std::string& pred_dir, const std::string& gt_dir,
             const std::string& out_path, bool brute_force) {
    Config cfg = resolve_config(common);

    auto list_sdf = [](const std::string& dir) {
        std::map<std::string, std::string> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".sdf") files[e.path().stem().string()] = e.path().string();
        return files;
    };
    const auto pred_files = list_sdf(pred_dir);
    const auto gt_files = list_sdf(gt_dir);
    if (gt_files.empty()) throw NoInputs("eval: no .sdf files in " + gt_dir);

    std::vector<std::string> missing;
    for (const auto& [id, path] : gt_files)
        if (!pred_files.count(id)) missing.push_back(id);
    for (const auto& [id, path] : pred_files)
        if (!gt_files.count(id)) missing.push_back(id);
    if (!missing.empty()) {
        std::string ids;
        for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
        throw MissingPair("eval: unmatched object ids: " + ids);
    }

    json per_object = json::array();
    MetricsReport mean;
    int count = 0;
    for (const auto& [id, gt_path] : gt_files) {
        const SdfGrid gt_grid = io::load_sdf(gt_path);
        const SdfGrid pred_grid = io::load_sdf(pred_files.at(id));
        const TriangleMesh gt_mesh = marching_cubes(gt_grid);
        const TriangleMesh pred_mesh = marching_cubes(pred_grid);
        if (gt_mesh.empty() || pred_mesh.empty())
            throw EmptyMesh("eval: empty iso-surface for " + id);

        Rng rng_pred(cfg.seed), rng_gt(cfg.seed);
        const auto pred_pts = sample_surface(pred_mesh, cfg.data.metric_samples, rng_pred);
        const auto gt_pts = sample_surface(gt_mesh, cfg.data.metric_samples, rng_gt);
        const auto frame = NormalizationFrame::from_bounds(gt_mesh.bounds());
        const MetricsReport rep =
            evaluate_all(pred_pts, pred_grid, gt_pts, gt_grid, frame, cfg.metrics, brute_force);

        json e;
        e["id"] = id;
        e["iou"] = rep.iou;
        e["f1"] = rep.f1;
        e["cd_l2_x1000"] = rep.cd_l2_x1000;
        e["cd_l1"] = rep.cd_l1;
        e["hd"] = rep.hd;
        e["uhd"] = rep.uhd;
        e["nc"] = rep.nc;
        e["in_pct"] = rep.in_pct;
        e["cmp"] = rep.cmp;
        per_object.push_back(std::move(e));
        std::cout << id << ": iou " << rep.iou << " f1 " << rep.f1 << " cd " << rep.cd_l2_x1000
                  << " hd " << rep.hd << "\n";

        mean.iou += rep.iou;
        mean.f1 += rep.f1;
        mean.cd_l2_x1000 += rep.cd_l2_x1000;
        mean.cd_l1 += rep.cd_l1;
        mean.hd += rep.hd;
        mean.uhd += rep.uhd;
        mean.nc += rep.nc;
        mean.in_pct += rep.in_pct;
        mean.cmp += rep.cmp;
        ++count;
    }
    mean.iou /= count;
    mean.f1 /= count;
    mean.cd_l2_x1000 /= count;
    mean.cd_l1 /= count;
    mean.hd /= count;
    mean.uhd /= count;
    mean.nc /= count;
    mean.in_pct /= count;
    mean.cmp /= count;

    std::cout << "mean over " << count << " objects:\n";
    print_report(mean, std::cout);

    if (!out_path.empty()) {
        json out;
        out["magic"] = "MREP";
        out["version"] = 1;
        out["objects"] = std::move(per_object);
        out["mean"] = {{"iou", mean.iou}, {"f1", mean.f1}, {"cd_l2_x1000", mean.cd_l2_x1000},
                       {"cd_l1", mean.cd_l1}, {"hd", mean.hd}, {"uhd", mean.uhd}, {"nc", mean.nc},
                       {"in_pct", mean.in_pct}, {"cmp", mean.cmp}};
        io::AtomicFileWriter w(out_path);
        w.stream() << out.dump(2) << "\n";
        w.commit();
        std::cout << "report written to " << out_path << "\n";
    }
    return 0;
}

int cmd_inspect(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char magic[4] = {};
    is.read(magic, 4);
    const std::string m(magic, magic + 4);
    if (m == "SDFG") {
        const SdfGrid grid = io::load_sdf(path);
        float lo = grid.values[0], hi = grid.values[0];
        std::size_t inside = 0;
        for (float v : grid.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
            inside += v < 0.0f ? 1 : 0;
        }
        std::cout << "SDF grid, resolution " << grid.resolution << ", values in [" << lo << ", "
                  << hi << "], inside fraction "
                  << static_cast<double>(inside) / grid.values.size() << "\n";
    } else if (m == "SDCK") {
        const io::Checkpoint ck = io::load_checkpoint(path);
        std::size_t total = 0;
        for (const auto& [name, t] : ck.tensors) total += t.numel();
        std::cout << "checkpoint, architecture " << ck.descriptor << ", " << ck.tensors.size()
                  << " tensors (" << total << " parameters), " << ck.bn_stats.size()
                  << " batch-norm states, optimizer "
                  << (ck.optimizer ? "present" : "absent") << ", step " << ck.step << "\n";
    } else if (m == "PSHD") {
        const auto patches = io::load_patches(path);
        std::cout << "patch shard, " << patches.size() << " patches of 32^3\n";
    } else if (m == "LSHD") {
        const auto seq = io::load_latent_sequence(path);
        std::cout << "latent shard, " << seq.n << " tokens x " << seq.d << " dims\n";
    } else if (m == "{\"ma" || m[0] == '{') {
        std::cout << "JSON artifact (manifest/report/config)\n";
    } else {
        throw FormatError("unknown artifact magic");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"patch-latent SDF shape completion toolkit"};
    app.require_subcommand(1);

    CommonArgs common;

    // make-synthetic
    auto* mk = app.add_subcommand("make-synthetic", "generate a synthetic watertight corpus");
    int mk_count = 100;
    std::string mk_kinds = "sphere,box,capsule,compound";
    std::string mk_out = "data/synthetic";
    bool mk_no_grids = false;
    mk->add_option("--count", mk_count, "number of objects");
    mk->add_option("--kinds", mk_kinds, "comma list: sphere,box,capsule,compound");
    mk->add_option("--out", mk_out, "output directory")->required();
    mk->add_flag("--no-grids", mk_no_grids, "skip writing SDF grid files");
    add_common(mk, common);

    // dataprep
    auto* dp = app.add_subcommand("dataprep", "normalize meshes and sample SDF grids");
    std::string dp_meshes, dp_out;
    dp->add_option("--meshes", dp_meshes, "directory of .obj/.stl files")->required();
    dp->add_option("--out", dp_out, "output directory")->required();
    add_common(dp, common);

    // train-pvae
    auto* tp = app.add_subcommand("train-pvae", "train the patch VAE");
    std::string tp_data, tp_out = "runs/pvae", tp_resume;
    tp->add_option("--data", tp_data, "dataset directory (with manifest.json)")->required();
    tp->add_option("--out", tp_out, "output directory");
    tp->add_option("--resume", tp_resume, "checkpoint to resume from");
    add_common(tp, common);

    // train-slt
    auto* ts = app.add_subcommand("train-slt", "train the completion transformer");
    std::string ts_data, ts_pvae, ts_out = "runs/slt", ts_resume;
    ts->add_option("--data", ts_data, "dataset directory")->required();
    ts->add_option("--pvae", ts_pvae, "patch VAE checkpoint")->required();
    ts->add_option("--out", ts_out, "output directory");
    ts->add_option("--resume", ts_resume, "checkpoint to resume from");
    add_common(ts, common);

    // complete
    auto* cp = app.add_subcommand("complete", "complete a partial SDF");
    std::string cp_grid, cp_task = "half", cp_mask, cp_pvae, cp_slt, cp_out = "out/complete";
    bool cp_no_pass = false;
    cp->add_option("--grid", cp_grid, "input SDF grid file")->required();
    cp->add_option("--task", cp_task, "half|oct|r25|r50|r75");
    cp->add_option("--mask", cp_mask, "explicit mask file (overrides --task)");
    cp->add_option("--pvae", cp_pvae, "patch VAE checkpoint")->required();
    cp->add_option("--slt", cp_slt, "transformer checkpoint")->required();
    cp->add_option("--out", cp_out, "output directory");
    cp->add_flag("--no-passthrough", cp_no_pass, "decode transformer output for known slots too");
    add_common(cp, common);

    // refine
    auto* rf = app.add_subcommand("refine", "latent-refine every patch of a known SDF");
    std::string rf_grid, rf_pvae, rf_out = "out/refine";
    rf->add_option("--grid", rf_grid, "input SDF grid file")->required();
    rf->add_option("--pvae", rf_pvae, "patch VAE checkpoint")->required();
    rf->add_option("--out", rf_out, "output directory");
    add_common(rf, common);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate completed SDFs against ground truth");
    std::string ev_pred, ev_gt, ev_out = "report.json";
    bool ev_brute = false;
    ev->add_option("--pred", ev_pred, "directory of predicted .sdf files")->required();
    ev->add_option("--gt", ev_gt, "directory of ground-truth .sdf files")->required();
    ev->add_option("--out", ev_out, "report JSON path");
    ev->add_flag("--brute-force", ev_brute, "use the O(n^2) oracle instead of the KD-tree");
    add_common(ev, common);

    // inspect
    auto* in = app.add_subcommand("inspect", "print artifact header metadata");
    std::string in_path;
    in->add_option("file", in_path, "artifact file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return e.get_exit_code() == 0 ? 0 : 1;
    }

    try {
        if (mk->parsed()) return cmd_make_synthetic(common, mk_count, mk_kinds, mk_out, mk_no_grids);
        if (dp->parsed()) return cmd_dataprep(common, dp_meshes, dp_out);
        if (tp->parsed()) return cmd_train_pvae(common, tp_data, tp_out, tp_resume);
        if (ts->parsed()) return cmd_train_slt(common, ts_data, ts_pvae, ts_out, ts_resume);
        if (cp->parsed())
            return cmd_complete(common, cp_grid, cp_task, cp_mask, cp_pvae, cp_slt, cp_out,
                                cp_no_pass);
        if (rf->parsed()) return cmd_refine(common, rf_grid, rf_pvae, rf_out);
        if (ev->parsed()) return cmd_eval(common, ev_pred, ev_gt, ev_out, ev_brute);
        if (in->parsed()) return cmd_inspect(in_path);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
