#include "rpbg/rasterizer.hpp"

#include <dlfcn.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>

#include "rpbg/errors.hpp"
#include "rpbg/raster_kernel_abi.h"

namespace fs = std::filesystem;

namespace rpbg {

std::size_t Fragment::covered() const {
    std::size_t n = 0;
    for (auto i : index) n += i != kEnvIndex;
    return n;
}

Fragment Fragment::window(int row0, int col0, int h, int w) const {
    if (row0 < 0 || col0 < 0 || row0 + h > height || col0 + w > width)
        throw ConfigError("fragment window out of bounds");
    Fragment out;
    out.scale = scale;
    out.width = w;
    out.height = h;
    out.index.resize(static_cast<std::size_t>(w) * h);
    out.depth.resize(out.index.size());
    for (int r = 0; r < h; ++r) {
        const std::size_t src = static_cast<std::size_t>(row0 + r) * width + col0;
        const std::size_t dst = static_cast<std::size_t>(r) * w;
        std::copy_n(index.begin() + static_cast<std::ptrdiff_t>(src), w, out.index.begin() + static_cast<std::ptrdiff_t>(dst));
        std::copy_n(depth.begin() + static_cast<std::ptrdiff_t>(src), w, out.depth.begin() + static_cast<std::ptrdiff_t>(dst));
    }
    return out;
}

namespace {

struct FloatCamera {
    float fx, fy, cx, cy;
    int width, height;
    float r[9];
    float t[3];
};

FloatCamera to_float(const CameraModel& camera, const Pose& pose, int scale) {
    const CameraModel c = scale_camera(camera, scale);
    FloatCamera fc{};
    fc.fx = static_cast<float>(c.fx);
    fc.fy = static_cast<float>(c.fy);
    fc.cx = static_cast<float>(c.cx);
    fc.cy = static_cast<float>(c.cy);
    fc.width = c.width;
    fc.height = c.height;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) fc.r[3 * i + j] = static_cast<float>(pose.rotation(i, j));
        fc.t[i] = static_cast<float>(pose.translation[i]);
    }
    return fc;
}

struct Projected {
    float u, v, z;
    int col, row;
    bool valid;
};

inline Projected project_point(const FloatCamera& c, const Vec3f& p) {
    const float X = p.x(), Y = p.y(), Z = p.z();
    const float x = ((c.r[0] * X + c.r[1] * Y) + c.r[2] * Z) + c.t[0];
    const float y = ((c.r[3] * X + c.r[4] * Y) + c.r[5] * Z) + c.t[1];
    const float z = ((c.r[6] * X + c.r[7] * Y) + c.r[8] * Z) + c.t[2];
    Projected out{};
    out.z = z;
    out.u = c.fx * (x / z) + c.cx;
    out.v = c.fy * (y / z) + c.cy;
    out.valid = false;
    if (!(z > kZNear)) return out;
    const float ru = std::round(out.u);
    const float rv = std::round(out.v);
    // NaN fails every comparison below.
    if (!(ru >= 0.0f && ru < static_cast<float>(c.width) && rv >= 0.0f && rv < static_cast<float>(c.height)))
        return out;
    out.col = static_cast<int>(ru);
    out.row = static_cast<int>(rv);
    out.valid = true;
    return out;
}

}  // namespace

Projection project(const PointCloud& points, const CameraModel& camera, const Pose& pose) {
    camera.validate();
    const FloatCamera fc = to_float(camera, pose, 0);
    Projection out;
    const std::size_t n = points.size();
    out.u.resize(n);
    out.v.resize(n);
    out.depth.resize(n);
    out.valid.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Projected p = project_point(fc, points.positions[i]);
        out.u[i] = p.u;
        out.v[i] = p.v;
        out.depth[i] = p.z;
        out.valid[i] = p.valid;
    }
    return out;
}

Fragment rasterize_scale(const PointCloud& points, const CameraModel& camera, const Pose& pose, int scale) {
    camera.validate();
    const FloatCamera fc = to_float(camera, pose, scale);
    Fragment frag;
    frag.scale = scale;
    frag.width = fc.width;
    frag.height = fc.height;
    const std::size_t npix = static_cast<std::size_t>(fc.width) * fc.height;
    frag.index.assign(npix, kEnvIndex);
    frag.depth.assign(npix, 0.0f);

    const std::size_t n = points.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Projected p = project_point(fc, points.positions[i]);
        if (!p.valid) continue;
        const std::size_t pix = static_cast<std::size_t>(p.row) * fc.width + p.col;
        const auto idx = static_cast<std::int32_t>(i);
        const std::int32_t cur = frag.index[pix];
        if (cur == kEnvIndex || p.z < frag.depth[pix] || (p.z == frag.depth[pix] && idx < cur)) {
            frag.index[pix] = idx;
            frag.depth[pix] = p.z;
        }
    }
    return frag;
}

std::vector<Fragment> rasterize_pyramid(const PointCloud& points, const CameraModel& camera, const Pose& pose,
                                        int num_scales, RasterBackend backend) {
    if (num_scales < 1) throw ConfigError("rasterize_pyramid requires at least one scale");
    std::vector<Fragment> out;
    out.reserve(static_cast<std::size_t>(num_scales));
    if (resolve_backend(backend) == RasterBackend::Native) {
        static const NativeRasterizer native = NativeRasterizer::load();
        for (int s = 0; s < num_scales; ++s) out.push_back(native.rasterize_scale(points, camera, pose, s));
        return out;
    }
    for (int s = 0; s < num_scales; ++s) out.push_back(rasterize_scale(points, camera, pose, s));
    return out;
}

// ---------------------------------------------------------------- debug dump

namespace {
constexpr char kFragmentMagic[8] = {'R', 'P', 'B', 'G', 'F', 'R', 'G', '1'};
}

void write_fragment(const Fragment& fragment, const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string(), "E_IO");
    out.write(kFragmentMagic, sizeof(kFragmentMagic));
    const std::int32_t dims[3] = {fragment.scale, fragment.width, fragment.height};
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(fragment.index.data()),
              static_cast<std::streamsize>(fragment.index.size() * sizeof(std::int32_t)));
    out.write(reinterpret_cast<const char*>(fragment.depth.data()),
              static_cast<std::streamsize>(fragment.depth.size() * sizeof(float)));
}

Fragment read_fragment(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string(), "E_IO");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kFragmentMagic, sizeof(magic)) != 0)
        throw FormatError(path.string() + ": not a fragment dump");
    std::int32_t dims[3];
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in || dims[1] < 0 || dims[2] < 0) throw FormatError(path.string() + ": bad fragment header");
    Fragment f;
    f.scale = dims[0];
    f.width = dims[1];
    f.height = dims[2];
    const std::size_t n = static_cast<std::size_t>(f.width) * f.height;
    f.index.resize(n);
    f.depth.resize(n);
    in.read(reinterpret_cast<char*>(f.index.data()), static_cast<std::streamsize>(n * sizeof(std::int32_t)));
    in.read(reinterpret_cast<char*>(f.depth.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (!in) throw FormatError(path.string() + ": truncated fragment dump");
    return f;
}

// ---------------------------------------------------------------- native kernel

NativeRasterizer NativeRasterizer::load(const fs::path& library) {
    fs::path lib = library;
    if (lib.empty()) {
        const char* env = std::getenv("RPBG_NATIVE_RASTER");
        if (env == nullptr || *env == '\0') throw ConfigError("native rasterizer not configured (set RPBG_NATIVE_RASTER)");
        lib = env;
    }
    NativeRasterizer r;
    r.handle_ = dlopen(lib.c_str(), RTLD_NOW | RTLD_LOCAL);
    if (r.handle_ == nullptr) throw ConfigError("cannot load native rasterizer " + lib.string() + ": " + dlerror());
    r.fn_version_ = dlsym(r.handle_, RPBG_RASTER_VERSION_SYMBOL);
    r.fn_rasterize_ = dlsym(r.handle_, RPBG_RASTER_SCALE_SYMBOL);
    if (r.fn_version_ == nullptr || r.fn_rasterize_ == nullptr)
        throw ConfigError(lib.string() + ": missing rasterizer ABI symbols");
    const std::uint32_t version = r.abi_version();
    if (version != RPBG_RASTER_ABI_VERSION) {
        throw ConfigError(lib.string() + ": rasterizer ABI version " + std::to_string(version) + ", expected " +
                          std::to_string(RPBG_RASTER_ABI_VERSION));
    }
    return r;
}

bool NativeRasterizer::available() {
    try {
        load();
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

NativeRasterizer::NativeRasterizer(NativeRasterizer&& o) noexcept
    : handle_(std::exchange(o.handle_, nullptr)),
      fn_rasterize_(std::exchange(o.fn_rasterize_, nullptr)),
      fn_version_(std::exchange(o.fn_version_, nullptr)) {}

NativeRasterizer& NativeRasterizer::operator=(NativeRasterizer&& o) noexcept {
    if (this != &o) {
        if (handle_ != nullptr) dlclose(handle_);
        handle_ = std::exchange(o.handle_, nullptr);
        fn_rasterize_ = std::exchange(o.fn_rasterize_, nullptr);
        fn_version_ = std::exchange(o.fn_version_, nullptr);
    }
    return *this;
}

NativeRasterizer::~NativeRasterizer() {
    if (handle_ != nullptr) dlclose(handle_);
}

std::uint32_t NativeRasterizer::abi_version() const {
    return reinterpret_cast<rpbg_raster_abi_version_fn>(fn_version_)();
}

Fragment NativeRasterizer::rasterize_scale(const PointCloud& points, const CameraModel& camera, const Pose& pose,
                                           int scale) const {
    camera.validate();
    const CameraModel level = scale_camera(camera, scale);
    std::vector<float> flat(points.size() * 3);
    for (std::size_t i = 0; i < points.size(); ++i) {
        flat[3 * i] = points.positions[i].x();
        flat[3 * i + 1] = points.positions[i].y();
        flat[3 * i + 2] = points.positions[i].z();
    }
    const double intrinsics[4] = {camera.fx, camera.fy, camera.cx, camera.cy};
    double rotation[9];
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) rotation[3 * i + j] = pose.rotation(i, j);
    const double translation[3] = {pose.translation.x(), pose.translation.y(), pose.translation.z()};

    Fragment frag;
    frag.scale = scale;
    frag.width = level.width;
    frag.height = level.height;
    const std::size_t npix = static_cast<std::size_t>(level.width) * level.height;
    frag.index.resize(npix);
    frag.depth.resize(npix);
    const auto fn = reinterpret_cast<rpbg_rasterize_scale_fn>(fn_rasterize_);
    const std::int32_t rc = fn(flat.data(), flat.size(), intrinsics, camera.width, camera.height, rotation, translation,
                               scale, frag.index.data(), frag.depth.data(), npix);
    if (rc != RPBG_RASTER_OK) throw DataError("native rasterizer failed with code " + std::to_string(rc), "E_NATIVE");
    return frag;
}

RasterBackend resolve_backend(RasterBackend requested) {
    if (requested == RasterBackend::Reference) return requested;
    static const bool have_native = NativeRasterizer::available();
    if (!have_native) {
        static bool warned = false;
        if (!warned) log_warn("native rasterizer unavailable, using the reference implementation");
        warned = true;
        return RasterBackend::Reference;
    }
    return RasterBackend::Native;
}

RasterBackend parse_backend(const std::string& name) {
    if (name == "reference") return RasterBackend::Reference;
    if (name == "native") return RasterBackend::Native;
    throw ConfigError("unknown raster backend '" + name + "' (expected reference|native)");
}

}  // namespace rpbg
