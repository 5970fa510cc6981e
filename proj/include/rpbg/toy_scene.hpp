#pragma once

#include <torch/types.h>

#include <cstdint>

#include "rpbg/scene.hpp"

namespace rpbg {

/// Analytic test scene: a textured ground plane with three spheres, seen by
/// a ring of cameras. Ground truth is ray cast, the cloud is sampled from
/// ray hits of the training views.
struct ToySceneOptions {
    int views = 20;
    int width = 128;
    int height = 128;
    /// Total point budget, including the invisible point.
    int points = 5000;
    /// Cameras low enough to see a point-free sky, ground limited to a disc.
    bool unbounded = false;
    /// Appends one point outside every camera frustum as the last row.
    bool invisible_point = true;
    double half_fov_deg = 25.0;
    std::uint64_t seed = 7;
};

/// World position of the invisible point.
Eigen::Vector3f toy_invisible_point();

/// Constant color of rays that hit nothing.
Eigen::Vector3f toy_sky_color();

/// Ray-cast ground truth, [3,H,W] in [0,1].
torch::Tensor render_toy_view(const ToySceneOptions& options, const CameraModel& camera, const Pose& pose);

/// Camera intrinsics shared by all views.
CameraModel toy_camera(const ToySceneOptions& options);
/// Pose of view `k` on the ring.
Pose toy_pose(const ToySceneOptions& options, int k);

/// In-memory scene with resident pixels and the 1-in-8 split.
Scene make_toy_scene(const ToySceneOptions& options = {});

}  // namespace rpbg
