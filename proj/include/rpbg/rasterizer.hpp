#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rpbg/camera.hpp"
#include "rpbg/point_cloud.hpp"

namespace rpbg {

/// Index value for pixels no point covers; they take the environment feature.
inline constexpr std::int32_t kEnvIndex = -1;

/// Points with camera-space depth at or below this are never rasterized.
inline constexpr float kZNear = 1e-4f;

/// Hard z-buffer result at one pyramid level, row-major [height][width].
struct Fragment {
    int scale = 0;
    int width = 0;
    int height = 0;
    std::vector<std::int32_t> index;
    /// Projected depth of the stored point; 0 where index is kEnvIndex.
    std::vector<float> depth;

    std::int32_t at(int row, int col) const { return index[static_cast<std::size_t>(row) * width + col]; }
    float depth_at(int row, int col) const { return depth[static_cast<std::size_t>(row) * width + col]; }
    std::size_t covered() const;

    /// Sub-window [row0, row0+h) x [col0, col0+w).
    Fragment window(int row0, int col0, int h, int w) const;

    bool operator==(const Fragment&) const = default;
};

struct Projection {
    std::vector<float> u;
    std::vector<float> v;
    std::vector<float> depth;
    std::vector<std::uint8_t> valid;
};

/// Pinhole projection in float32 with a fixed per-point operation order:
///   x = ((r00*X + r01*Y) + r02*Z) + t0   (same for y, z)
///   u = fx * (x / z) + cx,  v = fy * (y / z) + cy
/// valid iff z > kZNear and round(u), round(v) land on the sensor.
Projection project(const PointCloud& points, const CameraModel& camera, const Pose& pose);

/// Nearest-pixel hard z-buffer at level `scale` (intrinsics divided by 2^scale).
/// Each pixel keeps the valid point of minimal depth; equal depths go to the
/// smaller index. The result does not depend on traversal order.
Fragment rasterize_scale(const PointCloud& points, const CameraModel& camera, const Pose& pose, int scale);

enum class RasterBackend { Reference, Native };

/// Levels 0..num_scales-1, full resolution first.
std::vector<Fragment> rasterize_pyramid(const PointCloud& points, const CameraModel& camera, const Pose& pose,
                                        int num_scales, RasterBackend backend = RasterBackend::Reference);

/// Debug dump: "RPBGFRG1", int32 scale, width, height, int32 index grid, float32 depth grid.
void write_fragment(const Fragment& fragment, const std::filesystem::path& path);
Fragment read_fragment(const std::filesystem::path& path);

/// Accelerated kernel loaded from a shared library exporting the C ABI in
/// raster_kernel_abi.h. Falls back to the reference path when unavailable.
class NativeRasterizer {
public:
    /// Loads from `library`, or from $RPBG_NATIVE_RASTER when empty.
    /// Throws ConfigError on a missing symbol or ABI version mismatch.
    static NativeRasterizer load(const std::filesystem::path& library = {});
    /// True when a native library is configured and loads cleanly.
    static bool available();

    NativeRasterizer(NativeRasterizer&&) noexcept;
    NativeRasterizer& operator=(NativeRasterizer&&) noexcept;
    ~NativeRasterizer();

    Fragment rasterize_scale(const PointCloud& points, const CameraModel& camera, const Pose& pose, int scale) const;
    std::uint32_t abi_version() const;

private:
    NativeRasterizer() = default;
    void* handle_ = nullptr;
    void* fn_rasterize_ = nullptr;
    void* fn_version_ = nullptr;
};

/// Resolves the requested backend, warning and falling back to Reference when
/// the native kernel is absent.
RasterBackend resolve_backend(RasterBackend requested);
RasterBackend parse_backend(const std::string& name);

}  // namespace rpbg
