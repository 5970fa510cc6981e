#pragma once

#include <Eigen/Core>
#include <array>

namespace rpbg {

/// Pinhole intrinsics in pixels. Pixel (i, j) has its center at u = i, v = j.
struct CameraModel {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    /// Throws ConfigError when focal lengths or sensor size are not positive.
    void validate() const;
    /// Additionally requires the principal point to lie on the sensor.
    void validate_principal_point() const;

    bool operator==(const CameraModel&) const = default;
};

/// World-to-camera rigid transform: p_cam = rotation * p_world + translation.
struct Pose {
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    /// Orthonormal with determinant +1 within `tol`.
    bool is_valid(double tol = 1e-6) const;
    void validate(double tol = 1e-6) const;

    /// Camera center in world coordinates.
    Eigen::Vector3d center() const { return -rotation.transpose() * translation; }

    static Pose from_quaternion(double qw, double qx, double qy, double qz,
                                const Eigen::Vector3d& t);
    /// (qw, qx, qy, qz) with qw >= 0.
    std::array<double, 4> quaternion() const;
    /// Camera at `eye` looking at `target`; +y of the image points along -up.
    static Pose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                        const Eigen::Vector3d& up);
};

struct PixelOffset {
    int u = 0;
    int v = 0;
};

struct PixelSize {
    int width = 0;
    int height = 0;
};

/// Camera seeing only the window [origin, origin + size) of `camera`'s sensor.
CameraModel crop_camera(const CameraModel& camera, PixelOffset origin, PixelSize size);

/// Intrinsics of pyramid level `scale`: focal lengths and principal point divided
/// by 2^scale, sensor size ceil(size / 2^scale).
CameraModel scale_camera(const CameraModel& camera, int scale);

}  // namespace rpbg
