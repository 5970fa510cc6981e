#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rpbg/camera.hpp"
#include "rpbg/point_cloud.hpp"

namespace rpbg::colmap {

/// COLMAP camera model ids accepted by the loader; everything else is rejected.
enum class CameraModelId : int {
    SimplePinhole = 0,
    Pinhole = 1,
};

struct Camera {
    std::uint32_t id = 0;
    CameraModelId model = CameraModelId::Pinhole;
    CameraModel intrinsics;
};

struct Image {
    std::uint32_t id = 0;
    std::uint32_t camera_id = 0;
    std::string name;
    Pose pose;  // world -> camera
};

struct Point3D {
    std::uint64_t id = 0;
    Eigen::Vector3d xyz = Eigen::Vector3d::Zero();
    std::array<std::uint8_t, 3> rgb{0, 0, 0};
    double error = 0.0;
};

struct Model {
    std::vector<Camera> cameras;
    std::vector<Image> images;
    std::vector<Point3D> points;

    const Camera& camera(std::uint32_t id) const;
    /// Sparse points as a cloud (float positions, colors in [0,1]).
    PointCloud point_cloud() const;
};

enum class Format { Text, Binary };

/// Reads cameras/images/points3D from `dir`, preferring `.bin` files when both
/// encodings are present. Track and 2D-keypoint data are skipped.
Model load_model(const std::filesystem::path& dir);
Model load_text_model(const std::filesystem::path& dir);
Model load_binary_model(const std::filesystem::path& dir);

void save_model(const Model& model, const std::filesystem::path& dir, Format format);

}  // namespace rpbg::colmap
