#pragma once

#include <torch/types.h>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rpbg/camera.hpp"
#include "rpbg/point_cloud.hpp"

namespace rpbg {

/// A captured view. Pixels are loaded on demand from `path` unless already
/// resident in `pixels` ([3,H,W] float32 in [0,1]).
struct PosedImage {
    int id = 0;
    std::string name;
    CameraModel camera;
    Pose pose;
    std::filesystem::path path;
    torch::Tensor pixels;

    torch::Tensor load() const;
    bool resident() const { return pixels.defined(); }
};

struct SplitSpec {
    std::vector<int> train_ids;
    std::vector<int> test_ids;
};

/// One-in-`every` hold-out by sorted position: the last id of each block of
/// `every` consecutive ids is a test id. Requires sorted, unique ids.
SplitSpec make_split(const std::vector<int>& sorted_ids, int every = 8);

struct ColmapScene {
    std::vector<CameraModel> cameras;
    std::vector<PosedImage> images;
    PointCloud cloud;
};

/// Loads a COLMAP sparse model. When `image_dir` is given, image paths are
/// resolved against it and views whose file is missing are dropped.
ColmapScene load_colmap_model(const std::filesystem::path& model_dir,
                              const std::optional<std::filesystem::path>& image_dir = std::nullopt);

/// [3,H,W] float32 RGB in [0,1].
torch::Tensor read_image(const std::filesystem::path& path);
/// Writes an 8-bit PNG/JPEG (by extension) from [3,H,W] values clamped to [0,1].
void write_image(const torch::Tensor& image, const std::filesystem::path& path);

/// Raw inputs for `prepare`.
struct SceneManifest {
    std::filesystem::path model_dir;
    std::filesystem::path image_dir;
    /// Dense cloud; the sparse COLMAP points are used when empty.
    std::filesystem::path point_cloud;
    int split_every = 8;
    int texture_channels = 8;
    int scales = 4;

    static SceneManifest load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    /// Throws ConfigError / DataError when fields or referenced paths are invalid.
    void validate() const;
};

/// A prepared scene: everything train/eval need, already validated.
struct Scene {
    std::vector<PosedImage> images;
    PointCloud cloud;
    SplitSpec split;
    int texture_channels = 8;
    int scales = 4;
    std::filesystem::path root;

    const PosedImage& image(int id) const;
    std::vector<int> image_ids() const;
    /// Loads all pixels into memory, in id order.
    void load_pixels();
};

/// Materializes `out_dir` from a manifest: scene.yaml, model/ (COLMAP text),
/// points.ply, split.json and an images link.
Scene prepare_scene(const SceneManifest& manifest, const std::filesystem::path& out_dir);
/// Writes an in-memory scene in the prepared layout. Pixels must be resident.
void write_scene(const Scene& scene, const std::filesystem::path& out_dir);
Scene load_scene(const std::filesystem::path& scene_dir);

}  // namespace rpbg
