#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace rpbg {

using Vec3f = Eigen::Vector3f;

struct PointCloud {
    std::vector<Vec3f> positions;
    /// Per-point RGB in [0,1]; either empty or row-aligned with positions.
    std::vector<Vec3f> colors;

    std::size_t size() const noexcept { return positions.size(); }
    bool empty() const noexcept { return positions.empty(); }
    bool has_colors() const noexcept { return !colors.empty(); }

    /// Throws DataError on non-finite coordinates or misaligned colors.
    void validate() const;
    /// Appends `other`; colors are kept only when both clouds carry them.
    void append(const PointCloud& other);
    /// Rows where `keep` is true, order preserved.
    PointCloud select(std::span<const bool> keep) const;
};

enum class PlyEncoding { Ascii, BinaryLittleEndian };

/// Reads x/y/z (float or double) and optional red/green/blue (uchar or float)
/// from the first "vertex" element of an ascii or binary little-endian PLY.
PointCloud load_point_cloud(const std::filesystem::path& path);

void save_point_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                      PlyEncoding encoding = PlyEncoding::BinaryLittleEndian);

}  // namespace rpbg
