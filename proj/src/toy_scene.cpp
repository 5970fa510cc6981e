#include "rpbg/toy_scene.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>

#include "rpbg/errors.hpp"

namespace rpbg {

namespace {

using Vec3 = Eigen::Vector3d;

struct Sphere {
    Vec3 center;
    double radius;
    Vec3 color;
};

const Sphere kSpheres[] = {
    {{0.0, 0.0, 0.6}, 0.6, {0.85, 0.35, 0.25}},
    {{1.4, -0.9, 0.45}, 0.45, {0.25, 0.55, 0.85}},
    {{-1.2, 1.0, 0.5}, 0.5, {0.40, 0.80, 0.35}},
};

constexpr double kGroundRadiusUnbounded = 9.0;

struct Hit {
    Vec3 position;
    Vec3 color;
};

Vec3 ground_color(double x, double y) {
    const double a = 0.5 + 0.22 * std::sin(1.6 * x + 0.4) * std::cos(1.2 * y - 0.3) + 0.12 * std::sin(0.7 * x - 0.9 * y);
    return {0.25 + 0.6 * a, 0.2 + 0.5 * a + 0.1 * std::sin(0.5 * y), 0.15 + 0.35 * a};
}

Vec3 sphere_color(const Sphere& s, const Vec3& n) {
    const Vec3 light = Vec3(0.4, 0.3, 0.85).normalized();
    const double shade = 0.45 + 0.55 * std::max(0.0, n.dot(light));
    return s.color * shade + Vec3::Constant(0.08 * std::sin(5.0 * n.z() + 3.0 * n.x()));
}

std::optional<Hit> cast(const Vec3& origin, const Vec3& dir, bool unbounded) {
    double best = std::numeric_limits<double>::infinity();
    std::optional<Hit> hit;
    if (dir.z() < 0) {
        const double t = -origin.z() / dir.z();
        const Vec3 p = origin + t * dir;
        if (t > 0 && (!unbounded || p.head<2>().norm() <= kGroundRadiusUnbounded)) {
            best = t;
            hit = Hit{p, ground_color(p.x(), p.y())};
        }
    }
    for (const Sphere& s : kSpheres) {
        const Vec3 oc = origin - s.center;
        const double b = oc.dot(dir);
        const double c = oc.squaredNorm() - s.radius * s.radius;
        const double disc = b * b - c;
        if (disc < 0) continue;
        const double t = -b - std::sqrt(disc);
        if (t > 0 && t < best) {
            best = t;
            const Vec3 p = origin + t * dir;
            hit = Hit{p, sphere_color(s, (p - s.center) / s.radius)};
        }
    }
    if (hit) hit->color = hit->color.cwiseMax(0.0).cwiseMin(1.0);
    return hit;
}

Vec3 ray_direction(const CameraModel& cam, const Pose& pose, double u, double v) {
    const Vec3 d_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
    return (pose.rotation.transpose() * d_cam).normalized();
}

}  // namespace

Eigen::Vector3f toy_invisible_point() { return {0.0f, 0.0f, 50.0f}; }

Eigen::Vector3f toy_sky_color() { return {0.55f, 0.72f, 0.92f}; }

CameraModel toy_camera(const ToySceneOptions& o) {
    CameraModel c;
    const double t = std::tan(o.half_fov_deg * M_PI / 180.0);
    c.fx = c.fy = 0.5 * o.width / t;
    c.cx = 0.5 * (o.width - 1);
    c.cy = 0.5 * (o.height - 1);
    c.width = o.width;
    c.height = o.height;
    return c;
}

Pose toy_pose(const ToySceneOptions& o, int k) {
    const double angle = 2.0 * M_PI * k / o.views;
    const double radius = o.unbounded ? 4.5 : 3.0;
    const double height = o.unbounded ? 1.0 : 3.5;
    const Vec3 eye(radius * std::cos(angle), radius * std::sin(angle), height);
    const Vec3 target(0.0, 0.0, o.unbounded ? 0.5 : 0.3);
    return Pose::look_at(eye, target, Vec3::UnitZ());
}

torch::Tensor render_toy_view(const ToySceneOptions& o, const CameraModel& cam, const Pose& pose) {
    auto img = torch::empty({3, cam.height, cam.width}, torch::kFloat32);
    auto a = img.accessor<float, 3>();
    const Vec3 origin = pose.center();
    const Eigen::Vector3f sky = toy_sky_color();
    for (int v = 0; v < cam.height; ++v) {
        for (int u = 0; u < cam.width; ++u) {
            const auto hit = cast(origin, ray_direction(cam, pose, u, v), o.unbounded);
            for (int c = 0; c < 3; ++c) a[c][v][u] = hit ? static_cast<float>(hit->color[c]) : sky[c];
        }
    }
    return img;
}

Scene make_toy_scene(const ToySceneOptions& o) {
    if (o.views < 1 || o.width < 1 || o.height < 1 || o.points < 2)
        throw ConfigError("toy scene needs at least one view and two points");
    Scene scene;
    const CameraModel cam = toy_camera(o);
    std::vector<int> ids;
    for (int k = 0; k < o.views; ++k) {
        PosedImage img;
        img.id = k;
        char name[32];
        std::snprintf(name, sizeof(name), "view_%03d.png", k);
        img.name = name;
        img.camera = cam;
        img.pose = toy_pose(o, k);
        img.pixels = render_toy_view(o, cam, img.pose);
        scene.images.push_back(std::move(img));
        ids.push_back(k);
    }
    scene.split = make_split(ids, 8);

    std::mt19937_64 rng(o.seed);
    const std::vector<int>& sources = scene.split.train_ids.empty() ? ids : scene.split.train_ids;
    std::uniform_int_distribution<std::size_t> pick(0, sources.size() - 1);
    std::uniform_real_distribution<double> ju(-0.5, o.width - 0.5), jv(-0.5, o.height - 0.5);
    const int surface = o.invisible_point ? o.points - 1 : o.points;
    int attempts = 0;
    while (static_cast<int>(scene.cloud.size()) < surface) {
        if (++attempts > 100 * o.points) throw DataError("toy scene: too few ray hits to place points");
        const PosedImage& view = scene.images[static_cast<std::size_t>(sources[pick(rng)])];
        const double u = ju(rng), v = jv(rng);
        const auto hit = cast(view.pose.center(), ray_direction(cam, view.pose, u, v), o.unbounded);
        if (!hit) continue;
        scene.cloud.positions.push_back(hit->position.cast<float>());
        scene.cloud.colors.push_back(hit->color.cast<float>());
    }
    if (o.invisible_point) {
        scene.cloud.positions.push_back(toy_invisible_point());
        scene.cloud.colors.push_back({0.5f, 0.5f, 0.5f});
    }
    scene.texture_channels = 8;
    scene.scales = 4;
    return scene;
}

}  // namespace rpbg
