#include "rpbg/scene.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <set>

#include "rpbg/colmap.hpp"
#include "rpbg/errors.hpp"

namespace fs = std::filesystem;

namespace rpbg {

torch::Tensor PosedImage::load() const {
    if (pixels.defined()) return pixels;
    if (path.empty()) throw DataError("image " + std::to_string(id) + " has neither pixels nor a path");
    torch::Tensor img = read_image(path);
    if (img.size(1) != camera.height || img.size(2) != camera.width) {
        throw DataError(path.string() + ": size " + std::to_string(img.size(2)) + "x" + std::to_string(img.size(1)) +
                        " differs from camera " + std::to_string(camera.width) + "x" + std::to_string(camera.height));
    }
    return img;
}

SplitSpec make_split(const std::vector<int>& sorted_ids, int every) {
    if (every < 1) throw ConfigError("split protocol requires every >= 1");
    for (std::size_t i = 1; i < sorted_ids.size(); ++i) {
        if (sorted_ids[i] <= sorted_ids[i - 1]) throw ConfigError("make_split: ids must be sorted and unique");
    }
    SplitSpec split;
    for (std::size_t p = 0; p < sorted_ids.size(); ++p) {
        if (static_cast<int>(p % static_cast<std::size_t>(every)) == every - 1)
            split.test_ids.push_back(sorted_ids[p]);
        else
            split.train_ids.push_back(sorted_ids[p]);
    }
    if (split.test_ids.empty())
        log_warn("split: fewer than " + std::to_string(every) + " images, test set is empty");
    return split;
}

ColmapScene load_colmap_model(const fs::path& model_dir, const std::optional<fs::path>& image_dir) {
    const colmap::Model model = colmap::load_model(model_dir);
    ColmapScene scene;
    for (const auto& c : model.cameras) scene.cameras.push_back(c.intrinsics);
    for (const auto& img : model.images) {
        PosedImage pi;
        pi.id = static_cast<int>(img.id);
        pi.name = img.name;
        pi.camera = model.camera(img.camera_id).intrinsics;
        pi.pose = img.pose;
        if (image_dir) {
            pi.path = *image_dir / img.name;
            if (!fs::exists(pi.path)) {
                log_warn("image " + std::to_string(pi.id) + " (" + pi.path.string() + ") missing on disk, dropped");
                continue;
            }
        }
        scene.images.push_back(std::move(pi));
    }
    std::sort(scene.images.begin(), scene.images.end(),
              [](const PosedImage& a, const PosedImage& b) { return a.id < b.id; });
    scene.cloud = model.point_cloud();
    return scene;
}

torch::Tensor read_image(const fs::path& path) {
    cv::Mat raw = cv::imread(path.string(), cv::IMREAD_COLOR | cv::IMREAD_ANYDEPTH);
    if (raw.empty()) throw DataError(path.string() + ": cannot decode image", "E_IO");
    cv::Mat rgb;
    cv::cvtColor(raw, rgb, cv::COLOR_BGR2RGB);
    const double scale = rgb.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
    cv::Mat f;
    rgb.convertTo(f, CV_32FC3, scale);
    auto hwc = torch::from_blob(f.data, {f.rows, f.cols, 3}, torch::kFloat32).clone();
    return hwc.permute({2, 0, 1}).contiguous();
}

void write_image(const torch::Tensor& image, const fs::path& path) {
    if (image.dim() != 3 || image.size(0) != 3) throw ConfigError("write_image expects a [3,H,W] tensor");
    auto bytes = image.detach()
                     .to(torch::kFloat32)
                     .clamp(0.0, 1.0)
                     .mul(255.0)
                     .round()
                     .to(torch::kUInt8)
                     .permute({1, 2, 0})
                     .contiguous();
    cv::Mat rgb(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr());
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), bgr)) throw DataError("cannot write image " + path.string(), "E_IO");
}

// ---------------------------------------------------------------- manifest

SceneManifest SceneManifest::load(const fs::path& path) {
    YAML::Node node;
    try {
        node = YAML::LoadFile(path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    const fs::path base = path.parent_path();
    auto resolve = [&](const std::string& p) { return p.empty() ? fs::path{} : fs::absolute(base / p); };
    SceneManifest m;
    try {
        if (!node["model_dir"] || !node["image_dir"])
            throw ConfigError(path.string() + ": manifest requires model_dir and image_dir");
        m.model_dir = resolve(node["model_dir"].as<std::string>());
        m.image_dir = resolve(node["image_dir"].as<std::string>());
        if (node["point_cloud"]) m.point_cloud = resolve(node["point_cloud"].as<std::string>());
        if (node["split_every"]) m.split_every = node["split_every"].as<int>();
        if (node["texture_channels"]) m.texture_channels = node["texture_channels"].as<int>();
        if (node["scales"]) m.scales = node["scales"].as<int>();
    } catch (const YAML::Exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return m;
}

void SceneManifest::save(const fs::path& path) const {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "model_dir" << YAML::Value << model_dir.string();
    out << YAML::Key << "image_dir" << YAML::Value << image_dir.string();
    out << YAML::Key << "point_cloud" << YAML::Value << point_cloud.string();
    out << YAML::Key << "split_every" << YAML::Value << split_every;
    out << YAML::Key << "texture_channels" << YAML::Value << texture_channels;
    out << YAML::Key << "scales" << YAML::Value << scales;
    out << YAML::EndMap;
    std::ofstream f(path);
    f << out.c_str() << '\n';
}

void SceneManifest::validate() const {
    if (split_every < 1) throw ConfigError("split_every must be >= 1");
    if (texture_channels < 1) throw ConfigError("texture_channels must be >= 1");
    if (scales < 1) throw ConfigError("scales must be >= 1");
    if (!fs::is_directory(model_dir)) throw DataError("model_dir not found: " + model_dir.string(), "E_IO");
    if (!fs::is_directory(image_dir)) throw DataError("image_dir not found: " + image_dir.string(), "E_IO");
    if (!point_cloud.empty() && !fs::exists(point_cloud))
        throw DataError("point_cloud not found: " + point_cloud.string(), "E_IO");
}

// ---------------------------------------------------------------- scene

const PosedImage& Scene::image(int id) const {
    for (const auto& img : images) {
        if (img.id == id) return img;
    }
    std::string valid;
    for (const auto& img : images) valid += (valid.empty() ? "" : ",") + std::to_string(img.id);
    throw ConfigError("unknown view id " + std::to_string(id) + " (valid ids: " + valid + ")", "E_VIEW");
}

std::vector<int> Scene::image_ids() const {
    std::vector<int> ids;
    for (const auto& img : images) ids.push_back(img.id);
    std::sort(ids.begin(), ids.end());
    return ids;
}

void Scene::load_pixels() {
    for (auto& img : images) {
        if (!img.resident()) img.pixels = img.load();
    }
}

namespace {

void write_split(const SplitSpec& split, int every, const fs::path& path) {
    nlohmann::json j;
    j["every"] = every;
    j["train_ids"] = split.train_ids;
    j["test_ids"] = split.test_ids;
    std::ofstream(path) << j.dump(2) << '\n';
}

void write_scene_yaml(const fs::path& dir, const fs::path& image_dir, int channels, int scales) {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "version" << YAML::Value << 1;
    out << YAML::Key << "model_dir" << YAML::Value << "model";
    out << YAML::Key << "image_dir" << YAML::Value << image_dir.string();
    out << YAML::Key << "point_cloud" << YAML::Value << "points.ply";
    out << YAML::Key << "split" << YAML::Value << "split.json";
    out << YAML::Key << "texture_channels" << YAML::Value << channels;
    out << YAML::Key << "scales" << YAML::Value << scales;
    out << YAML::EndMap;
    std::ofstream(dir / "scene.yaml") << out.c_str() << '\n';
}

colmap::Model model_from_images(const std::vector<PosedImage>& images) {
    colmap::Model model;
    std::uint32_t next_cam = 1;
    for (const auto& img : images) {
        colmap::Camera cam;
        cam.id = next_cam++;
        cam.model = img.camera.fx == img.camera.fy ? colmap::CameraModelId::SimplePinhole
                                                   : colmap::CameraModelId::Pinhole;
        cam.intrinsics = img.camera;
        model.cameras.push_back(cam);
        colmap::Image ci;
        ci.id = static_cast<std::uint32_t>(img.id);
        ci.camera_id = cam.id;
        ci.name = img.name;
        ci.pose = img.pose;
        model.images.push_back(ci);
    }
    return model;
}

}  // namespace

Scene prepare_scene(const SceneManifest& manifest, const fs::path& out_dir) {
    manifest.validate();
    ColmapScene raw = load_colmap_model(manifest.model_dir, manifest.image_dir);
    if (raw.images.empty()) throw DataError("scene has no usable images");

    Scene scene;
    scene.images = std::move(raw.images);
    scene.cloud = manifest.point_cloud.empty() ? std::move(raw.cloud) : load_point_cloud(manifest.point_cloud);
    if (scene.cloud.empty()) throw DataError("scene point cloud is empty");
    scene.texture_channels = manifest.texture_channels;
    scene.scales = manifest.scales;
    scene.split = make_split(scene.image_ids(), manifest.split_every);

    fs::create_directories(out_dir);
    colmap::save_model(model_from_images(scene.images), out_dir / "model", colmap::Format::Text);
    save_point_cloud(scene.cloud, out_dir / "points.ply");
    write_split(scene.split, manifest.split_every, out_dir / "split.json");
    const fs::path link = out_dir / "images";
    if (fs::exists(fs::symlink_status(link))) fs::remove(link);
    fs::create_directory_symlink(fs::absolute(manifest.image_dir), link);
    write_scene_yaml(out_dir, "images", scene.texture_channels, scene.scales);
    manifest.save(out_dir / "manifest.yaml");
    scene.root = out_dir;
    for (auto& img : scene.images) img.path = link / img.name;
    return scene;
}

void write_scene(const Scene& scene, const fs::path& out_dir) {
    fs::create_directories(out_dir / "images");
    std::vector<PosedImage> images = scene.images;
    for (auto& img : images) {
        if (img.name.empty()) img.name = "view_" + std::to_string(img.id) + ".png";
        write_image(img.load(), out_dir / "images" / img.name);
    }
    colmap::save_model(model_from_images(images), out_dir / "model", colmap::Format::Text);
    save_point_cloud(scene.cloud, out_dir / "points.ply");
    // every = 0 marks an explicit split not derived from the one-in-k rule.
    write_split(scene.split, 0, out_dir / "split.json");
    write_scene_yaml(out_dir, "images", scene.texture_channels, scene.scales);
}

Scene load_scene(const fs::path& scene_dir) {
    const fs::path yaml_path = scene_dir / "scene.yaml";
    if (!fs::exists(yaml_path)) throw DataError(scene_dir.string() + ": not a prepared scene (no scene.yaml)", "E_IO");
    YAML::Node node;
    try {
        node = YAML::LoadFile(yaml_path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError(yaml_path.string() + ": " + e.what());
    }
    Scene scene;
    scene.root = scene_dir;
    const fs::path image_dir = scene_dir / node["image_dir"].as<std::string>("images");
    ColmapScene raw = load_colmap_model(scene_dir / node["model_dir"].as<std::string>("model"), image_dir);
    scene.images = std::move(raw.images);
    scene.cloud = load_point_cloud(scene_dir / node["point_cloud"].as<std::string>("points.ply"));
    scene.texture_channels = node["texture_channels"].as<int>(8);
    scene.scales = node["scales"].as<int>(4);

    std::ifstream split_file(scene_dir / node["split"].as<std::string>("split.json"));
    if (!split_file) throw DataError(scene_dir.string() + ": missing split.json", "E_IO");
    const auto j = nlohmann::json::parse(split_file, nullptr, false);
    if (j.is_discarded()) throw FormatError(scene_dir.string() + "/split.json: invalid JSON");
    // Views dropped at load time (missing pixels) are dropped from the split too.
    std::set<int> present;
    for (const auto& img : scene.images) present.insert(img.id);
    for (int id : j.at("train_ids").get<std::vector<int>>())
        if (present.count(id)) scene.split.train_ids.push_back(id);
    for (int id : j.at("test_ids").get<std::vector<int>>())
        if (present.count(id)) scene.split.test_ids.push_back(id);
    return scene;
}

}  // namespace rpbg
