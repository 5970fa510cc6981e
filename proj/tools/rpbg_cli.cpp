#include <CLI11.hpp>
#include <torch/torch.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "rpbg/augmenter.hpp"
#include "rpbg/errors.hpp"
#include "rpbg/metrics.hpp"
#include "rpbg/scene.hpp"
#include "rpbg/toy_scene.hpp"
#include "rpbg/trainer.hpp"

namespace fs = std::filesystem;
using namespace rpbg;

namespace {

struct Common {
    std::optional<std::uint64_t> seed;
    std::string raster = "reference";
    bool deterministic = false;
    bool quiet = false;
};

void apply_overrides(TrainConfig& config, const Common& common) {
    if (common.seed) config.seed = *common.seed;
    config.raster = parse_backend(common.raster);
    if (common.deterministic) config.deterministic = true;
}

Scene scene_for(const Checkpoint& ck, const std::string& scene_override) {
    const fs::path dir = scene_override.empty() ? ck.scene_dir : fs::path(scene_override);
    if (dir.empty()) throw ConfigError("checkpoint does not record a scene; pass --scene", "E_SCENE");
    return load_scene(dir);
}

std::vector<double> parse_doubles(const std::string& text, std::size_t expected, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw ConfigError(std::string(what) + ": '" + item + "' is not a number");
        }
    }
    if (expected && out.size() != expected)
        throw ConfigError(std::string(what) + " expects " + std::to_string(expected) + " comma-separated values");
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"Point-based neural re-rendering toolkit"};
    app.require_subcommand(1);
    Common common;
    app.add_option("--seed", common.seed, "Random seed (overrides the config)");
    app.add_option("--raster", common.raster, "Rasterizer backend")
        ->check(CLI::IsMember({"reference", "native"}));
    app.add_flag("--deterministic", common.deterministic, "Single-threaded deterministic kernels");
    app.add_flag("-q,--quiet", common.quiet, "Suppress warnings");

    // prepare
    auto* prepare = app.add_subcommand("prepare", "Validate raw inputs and write a scene directory");
    std::string manifest_path, prepare_out;
    prepare->add_option("--manifest", manifest_path)->required();
    prepare->add_option("--out", prepare_out)->required();

    // train
    auto* train = app.add_subcommand("train", "Fit texture and renderer on a prepared scene");
    std::string train_scene, train_config, train_out;
    std::int64_t train_max_steps = -1;
    train->add_option("--scene", train_scene)->required();
    train->add_option("--config", train_config, "Training config (YAML); defaults when omitted");
    train->add_option("--out", train_out)->required();
    train->add_option("--max-steps", train_max_steps, "Override max_steps");

    // render
    auto* render_cmd = app.add_subcommand("render", "Render views from a checkpoint");
    std::string render_ckpt, render_out, render_scene;
    std::optional<int> view_id;
    bool test_split = false;
    render_cmd->add_option("--ckpt", render_ckpt)->required();
    auto* view_opt = render_cmd->add_option("--view-id", view_id);
    auto* split_opt = render_cmd->add_flag("--test-split", test_split);
    view_opt->excludes(split_opt);
    render_cmd->add_option("--out", render_out)->required();
    render_cmd->add_option("--scene", render_scene, "Scene directory (defaults to the one recorded)");

    // eval
    auto* eval = app.add_subcommand("eval", "Score the test split (PSNR, SSIM, LPIPS)");
    std::string eval_ckpt, eval_out, eval_scene, eval_assets;
    bool dump_images = false;
    bool eval_train = false;
    eval->add_option("--ckpt", eval_ckpt)->required();
    eval->add_option("--out", eval_out, "Report directory (default <ckpt>/eval)");
    eval->add_option("--scene", eval_scene);
    eval->add_option("--perceptual-dir", eval_assets, "LPIPS asset directory");
    eval->add_flag("--dump-images", dump_images);
    eval->add_flag("--train-split", eval_train, "Evaluate training views instead");

    // augment
    auto* aug = app.add_subcommand("augment", "Densify the point cloud by sampling and verification");
    std::string aug_scene, aug_config, aug_out, aug_ckpt;
    AugmentConfig acfg;
    std::optional<double> aug_threshold;
    aug->add_option("--scene", aug_scene)->required();
    aug->add_option("--rounds", acfg.iterations)->required();
    aug->add_option("--config", aug_config);
    aug->add_option("--out", aug_out)->required();
    aug->add_option("--ckpt", aug_ckpt, "Start from a trained checkpoint");
    aug->add_option("--candidate-ratio", acfg.candidate_ratio);
    aug->add_option("--sigma-multiple", acfg.sigma_multiple);
    aug->add_option("--percentile", acfg.threshold_percentile);
    aug->add_option("--threshold", aug_threshold, "Absolute sigma threshold");
    aug->add_option("--verify-steps", acfg.verify_train_steps);
    aug->add_flag("--from-scratch", acfg.from_scratch);

    // edit
    auto* edit = app.add_subcommand("edit", "Remove points (and their features) from a checkpoint");
    std::string edit_ckpt, edit_out, edit_box, edit_ids;
    edit->add_option("--ckpt", edit_ckpt)->required();
    auto* box_opt = edit->add_option("--box", edit_box, "x0,y0,z0,x1,y1,z1");
    auto* ids_opt = edit->add_option("--ids", edit_ids, "Comma-separated point indices");
    box_opt->excludes(ids_opt);
    edit->add_option("--out", edit_out, "Output checkpoint (default: in place)");

    // synth
    auto* synth = app.add_subcommand("synth", "Write the synthetic toy scene");
    std::string synth_out;
    ToySceneOptions topt;
    synth->add_option("--out", synth_out)->required();
    synth->add_flag("--unbounded", topt.unbounded);
    synth->add_option("--views", topt.views);
    synth->add_option("--size", topt.width);
    synth->add_option("--points", topt.points);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            app.exit(e);
            return 0;
        }
        std::cerr << "error[E_USAGE]: " << e.what() << "\n";
        return static_cast<int>(ErrorKind::Config);
    }
    set_log_quiet(common.quiet);
    if (common.deterministic) torch::set_num_threads(1);
    torch::manual_seed(common.seed.value_or(0));

    if (*prepare) {
        const Scene scene = prepare_scene(SceneManifest::load(manifest_path), prepare_out);
        std::cout << "prepared " << scene.images.size() << " views, " << scene.cloud.size() << " points ("
                  << scene.split.train_ids.size() << " train / " << scene.split.test_ids.size() << " test) in "
                  << prepare_out << "\n";
    } else if (*train) {
        const Scene scene = load_scene(train_scene);
        TrainConfig config = train_config.empty() ? TrainConfig{} : TrainConfig::load(train_config);
        apply_overrides(config, common);
        if (train_max_steps >= 0) config.max_steps = train_max_steps;
        Trainer trainer(scene, config);
        const TrainLog& log = trainer.run(fs::path(train_out));
        if (!log.epochs.empty())
            std::cout << "trained " << trainer.total_steps() << " steps; final epoch loss " << log.epochs.back().loss
                      << "\n";
    } else if (*render_cmd) {
        if (!view_id && !test_split) throw ConfigError("render needs --view-id or --test-split");
        const Checkpoint ck = load_checkpoint(render_ckpt);
        const Scene scene = scene_for(ck, render_scene);
        const RasterBackend backend = parse_backend(common.raster);
        fs::create_directories(render_out);
        const std::vector<int> ids = view_id ? std::vector<int>{*view_id} : scene.split.test_ids;
        if (ids.empty()) log_warn("test split is empty; nothing rendered");
        for (int id : ids) {
            const PosedImage& view = scene.image(id);
            const fs::path file = fs::path(render_out) / (std::to_string(id) + ".png");
            write_image(render_view(ck.model, view.camera, view.pose, backend), file);
            std::cout << file.string() << "\n";
        }
    } else if (*eval) {
        const Checkpoint ck = load_checkpoint(eval_ckpt);
        const Scene scene = scene_for(ck, eval_scene);
        std::optional<Lpips> lpips;
        if (perceptual_asset_dir(eval_assets)) lpips = Lpips::load(eval_assets);
        const fs::path out = eval_out.empty() ? fs::path(eval_ckpt) / "eval" : fs::path(eval_out);
        EvalOptions options;
        options.backend = parse_backend(common.raster);
        options.lpips = lpips ? &*lpips : nullptr;
        if (dump_images) options.image_dir = out / "images";
        MetricsReport report =
            evaluate_split(scene, ck.model, eval_train ? scene.split.train_ids : scene.split.test_ids, options);
        report.config = {{"checkpoint", fs::absolute(eval_ckpt).string()},
                         {"split", eval_train ? "train" : "test"},
                         {"resolution", "native"}};
        report.write(out);
        std::cout << report.table();
    } else if (*aug) {
        const Scene scene = load_scene(aug_scene);
        TrainConfig config = aug_config.empty() ? TrainConfig{} : TrainConfig::load(aug_config);
        apply_overrides(config, common);
        acfg.threshold_absolute = aug_threshold;
        acfg.seed = config.seed;
        std::optional<PointModel> initial;
        if (!aug_ckpt.empty()) initial = load_checkpoint(aug_ckpt).model;
        const AugmentResult result = augment(scene, config, acfg, std::move(initial));
        fs::create_directories(aug_out);
        save_point_cloud(result.model.cloud, fs::path(aug_out) / "points.ply");
        result.provenance.write(fs::path(aug_out) / "provenance.json");
        save_checkpoint(fs::path(aug_out) / "checkpoint", result.model, config, TrainLog{}, scene.root);
        for (const auto& r : result.rounds)
            std::cout << "round " << r.round << ": kept " << r.kept << "/" << r.candidates << " (threshold "
                      << r.threshold << "), cloud " << r.cloud_size << "\n";
    } else if (*edit) {
        if (edit_box.empty() && edit_ids.empty()) throw ConfigError("edit needs --box or --ids");
        Checkpoint ck = load_checkpoint(edit_ckpt);
        const std::size_t n = ck.model.cloud.size();
        std::unique_ptr<bool[]> keep(new bool[n]);
        std::size_t removed = 0;
        if (!edit_box.empty()) {
            const auto b = parse_doubles(edit_box, 6, "--box");
            const Eigen::Vector3d lo(std::min(b[0], b[3]), std::min(b[1], b[4]), std::min(b[2], b[5]));
            const Eigen::Vector3d hi(std::max(b[0], b[3]), std::max(b[1], b[4]), std::max(b[2], b[5]));
            for (std::size_t i = 0; i < n; ++i) {
                const Eigen::Vector3d p = ck.model.cloud.positions[i].cast<double>();
                keep[i] = !((p.array() >= lo.array()).all() && (p.array() <= hi.array()).all());
            }
        } else {
            std::fill_n(keep.get(), n, true);
            for (double d : parse_doubles(edit_ids, 0, "--ids")) {
                const auto i = static_cast<long long>(d);
                if (d != static_cast<double>(i) || i < 0 || static_cast<std::size_t>(i) >= n)
                    throw ConfigError("--ids: point index " + std::to_string(d) + " outside [0," + std::to_string(n) + ")");
                keep[static_cast<std::size_t>(i)] = false;
            }
        }
        for (std::size_t i = 0; i < n; ++i) removed += keep[i] ? 0 : 1;
        const fs::path out = edit_out.empty() ? fs::path(edit_ckpt) : fs::path(edit_out);
        if (removed == 0) {
            if (fs::weakly_canonical(out) != fs::weakly_canonical(edit_ckpt))
                fs::copy(edit_ckpt, out, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
            std::cout << "selection is empty; checkpoint unchanged -> " << out.string() << "\n";
            return 0;
        }
        auto [cloud, texture] = prune(ck.model.cloud, ck.model.texture, std::span<const bool>(keep.get(), n));
        ck.model.cloud = std::move(cloud);
        ck.model.texture = std::move(texture);
        save_checkpoint(out, ck.model, ck.config, ck.log, ck.scene_dir);
        // Optimizer moments no longer line up with the texture rows.
        fs::remove_all(out / "optimizer");
        std::cout << "removed " << removed << " of " << n << " points -> " << out.string() << "\n";
    } else if (*synth) {
        topt.height = topt.width;
        if (common.seed) topt.seed = *common.seed;
        const Scene scene = make_toy_scene(topt);
        write_scene(scene, synth_out);
        std::cout << "wrote toy scene with " << scene.images.size() << " views and " << scene.cloud.size()
                  << " points to " << synth_out << "\n";
    }
    return 0;
}

}  // namespace

std::string one_line(std::string s) {
    for (char& c : s)
        if (c == '\n' || c == '\r') c = ' ';
    return s;
}

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const rpbg::Error& e) {
        std::cerr << "error[" << e.code() << "]: " << one_line(e.what()) << "\n";
        return e.exit_code();
    } catch (const c10::Error& e) {
        std::cerr << "error[E_TORCH]: " << one_line(e.what_without_backtrace()) << "\n";
        return static_cast<int>(ErrorKind::Numeric);
    } catch (const std::exception& e) {
        std::cerr << "error[E_INTERNAL]: " << one_line(e.what()) << "\n";
        return 1;
    }
}
