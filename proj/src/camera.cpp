#include "rpbg/camera.hpp"

#include <Eigen/Geometry>
#include <cmath>
#include <sstream>

#include "rpbg/errors.hpp"

namespace rpbg {

void CameraModel::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
        std::ostringstream os;
        os << "camera focal lengths must be positive (fx=" << fx << ", fy=" << fy << ")";
        throw ConfigError(os.str());
    }
    if (width <= 0 || height <= 0) {
        std::ostringstream os;
        os << "camera size must be positive (" << width << "x" << height << ")";
        throw ConfigError(os.str());
    }
    if (!std::isfinite(cx) || !std::isfinite(cy)) throw ConfigError("camera principal point is not finite");
}

void CameraModel::validate_principal_point() const {
    validate();
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
        std::ostringstream os;
        os << "principal point (" << cx << ", " << cy << ") outside sensor " << width << "x" << height;
        throw ConfigError(os.str());
    }
}

bool Pose::is_valid(double tol) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    if ((gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > tol) return false;
    return std::abs(rotation.determinant() - 1.0) <= tol;
}

void Pose::validate(double tol) const {
    if (!is_valid(tol)) throw ConfigError("pose rotation is not orthonormal with determinant +1");
}

Pose Pose::from_quaternion(double qw, double qx, double qy, double qz, const Eigen::Vector3d& t) {
    Eigen::Quaterniond q(qw, qx, qy, qz);
    if (!(q.norm() > 0.0)) throw ConfigError("zero-length rotation quaternion");
    q.normalize();
    Pose pose;
    pose.rotation = q.toRotationMatrix();
    pose.translation = t;
    return pose;
}

std::array<double, 4> Pose::quaternion() const {
    Eigen::Quaterniond q(rotation);
    q.normalize();
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    return {q.w(), q.x(), q.y(), q.z()};
}

Pose Pose::look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                   const Eigen::Vector3d& up) {
    const Eigen::Vector3d forward = (target - eye).normalized();
    Eigen::Vector3d right = forward.cross(up);
    if (right.norm() < 1e-12) throw ConfigError("look_at: up vector parallel to viewing direction");
    right.normalize();
    const Eigen::Vector3d down = forward.cross(right);
    Pose pose;
    pose.rotation.row(0) = right.transpose();
    pose.rotation.row(1) = down.transpose();
    pose.rotation.row(2) = forward.transpose();
    pose.translation = -pose.rotation * eye;
    return pose;
}

CameraModel crop_camera(const CameraModel& camera, PixelOffset origin, PixelSize size) {
    if (origin.u < 0 || origin.v < 0 || size.width <= 0 || size.height <= 0 ||
        origin.u + size.width > camera.width || origin.v + size.height > camera.height) {
        std::ostringstream os;
        os << "crop window (" << origin.u << "," << origin.v << ")+" << size.width << "x" << size.height
           << " exceeds sensor " << camera.width << "x" << camera.height;
        throw ConfigError(os.str());
    }
    CameraModel out = camera;
    out.cx = camera.cx - origin.u;
    out.cy = camera.cy - origin.v;
    out.width = size.width;
    out.height = size.height;
    return out;
}

CameraModel scale_camera(const CameraModel& camera, int scale) {
    if (scale < 0) throw ConfigError("negative pyramid scale");
    const double factor = std::ldexp(1.0, -scale);
    const int div = 1 << scale;
    CameraModel out;
    out.fx = camera.fx * factor;
    out.fy = camera.fy * factor;
    out.cx = camera.cx * factor;
    out.cy = camera.cy * factor;
    out.width = (camera.width + div - 1) / div;
    out.height = (camera.height + div - 1) / div;
    return out;
}

}  // namespace rpbg
