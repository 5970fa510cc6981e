#include <dlfcn.h>
#include <gtest/gtest.h>

#include <cstdlib>
#include <random>

#include "rpbg/raster_kernel_abi.h"
#include "rpbg/rasterizer.hpp"
#include "test_util.hpp"

using namespace rpbg;

namespace {

struct RawKernel {
    void* handle = nullptr;
    rpbg_raster_abi_version_fn version = nullptr;
    rpbg_rasterize_scale_fn rasterize = nullptr;

    explicit RawKernel(const char* path) {
        handle = dlopen(path, RTLD_NOW | RTLD_LOCAL);
        if (handle == nullptr) return;
        version = reinterpret_cast<rpbg_raster_abi_version_fn>(dlsym(handle, RPBG_RASTER_VERSION_SYMBOL));
        rasterize = reinterpret_cast<rpbg_rasterize_scale_fn>(dlsym(handle, RPBG_RASTER_SCALE_SYMBOL));
    }
    ~RawKernel() {
        if (handle != nullptr) dlclose(handle);
    }
};

const double kIntr[4] = {2.0, 2.0, 1.5, 1.5};
const double kRot[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
const double kTrans[3] = {0, 0, 0};

}  // namespace

TEST(NativeAbi, VersionTagIsOne) { EXPECT_EQ(RPBG_RASTER_ABI_VERSION, 1u); }

TEST(NativeAbi, LoadsConformingKernel) {
    const auto k = NativeRasterizer::load(RPBG_MOCK_RASTER);
    EXPECT_EQ(k.abi_version(), RPBG_RASTER_ABI_VERSION);
}

TEST(NativeAbi, RejectsVersionMismatch) {
    try {
        NativeRasterizer::load(RPBG_MOCK_RASTER_BADABI);
        FAIL() << "expected a version error";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("version 99"), std::string::npos) << e.what();
    }
}

TEST(NativeAbi, RejectsMissingLibraryAndSymbols) {
    EXPECT_THROW(NativeRasterizer::load("/nonexistent/librpbg_kernel.so"), ConfigError);
    EXPECT_THROW(NativeRasterizer::load("libm.so.6"), ConfigError);
}

TEST(NativeAbi, FallsBackWhenUnconfigured) {
    if (std::getenv("RPBG_NATIVE_RASTER") != nullptr) GTEST_SKIP() << "native kernel configured in environment";
    rpbg::test::QuietLogs quiet;
    EXPECT_FALSE(NativeRasterizer::available());
    EXPECT_EQ(resolve_backend(RasterBackend::Native), RasterBackend::Reference);
    std::mt19937_64 rng(1);
    const PointCloud pts = rpbg::test::random_cloud(100, rng);
    const CameraModel cam{20.0, 20.0, 9.5, 9.5, 20, 20};
    const Pose pose = rpbg::test::random_pose(rng);
    const auto a = rasterize_pyramid(pts, cam, pose, 3, RasterBackend::Native);
    const auto b = rasterize_pyramid(pts, cam, pose, 3, RasterBackend::Reference);
    EXPECT_EQ(a, b);
}

TEST(NativeAbi, ParseBackend) {
    EXPECT_EQ(parse_backend("native"), RasterBackend::Native);
    EXPECT_EQ(parse_backend("reference"), RasterBackend::Reference);
    EXPECT_THROW(parse_backend("cuda"), ConfigError);
}

TEST(NativeAbi, BitIdenticalToReference) {
    const auto k = NativeRasterizer::load(RPBG_MOCK_RASTER);
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 40; ++trial) {
        PointCloud pts = rpbg::test::random_cloud(std::uniform_int_distribution<std::size_t>(0, 3000)(rng), rng);
        if (!pts.empty()) pts.positions.push_back(pts.positions.front());  // exact tie
        const CameraModel cam = rpbg::test::random_camera(rng, 128);
        const Pose pose = rpbg::test::random_pose(rng);
        for (int s = 0; s < 4; ++s) {
            const Fragment ref = rasterize_scale(pts, cam, pose, s);
            const Fragment nat = k.rasterize_scale(pts, cam, pose, s);
            ASSERT_EQ(ref, nat) << "trial " << trial << " scale " << s;
        }
    }
}

TEST(NativeAbi, RawCallContract) {
    RawKernel k(RPBG_MOCK_RASTER);
    ASSERT_NE(k.rasterize, nullptr);
    const float pts[9] = {0, 0, 1, 0, 0, 1, 1.0f, 0, 2};
    std::vector<std::int32_t> idx(16, 7);
    std::vector<float> dep(16, 7.0f);
    ASSERT_EQ(k.rasterize(pts, 9, kIntr, 4, 4, kRot, kTrans, 0, idx.data(), dep.data(), 16), RPBG_RASTER_OK);
    // Point 0 and 1 tie at pixel (1.5,1.5) -> round half away -> (2,2); smaller index wins.
    EXPECT_EQ(idx[2 * 4 + 2], 0);
    EXPECT_FLOAT_EQ(dep[2 * 4 + 2], 1.0f);
    int covered = 0;
    for (auto i : idx) covered += i >= 0;
    EXPECT_EQ(covered, 2);
    EXPECT_EQ(dep[0], 0.0f);
    EXPECT_EQ(idx[0], -1);
}

TEST(NativeAbi, EmptySceneAllEnv) {
    RawKernel k(RPBG_MOCK_RASTER);
    std::vector<std::int32_t> idx(4, 3);
    std::vector<float> dep(4, 3.0f);
    ASSERT_EQ(k.rasterize(nullptr, 0, kIntr, 4, 4, kRot, kTrans, 1, idx.data(), dep.data(), 4), RPBG_RASTER_OK);
    for (auto i : idx) EXPECT_EQ(i, -1);
}

TEST(NativeAbi, LengthMismatchRejectedBeforeCompute) {
    RawKernel k(RPBG_MOCK_RASTER);
    const float pts[6] = {0, 0, 1, 0, 0, 1};
    std::vector<std::int32_t> idx(16, 5);
    std::vector<float> dep(16, 5.0f);
    EXPECT_EQ(k.rasterize(pts, 5, kIntr, 4, 4, kRot, kTrans, 0, idx.data(), dep.data(), 16), RPBG_RASTER_BAD_LENGTH);
    EXPECT_EQ(k.rasterize(pts, 6, kIntr, 4, 4, kRot, kTrans, 0, idx.data(), dep.data(), 15), RPBG_RASTER_BAD_LENGTH);
    EXPECT_EQ(k.rasterize(pts, 6, kIntr, 4, 4, kRot, kTrans, 1, idx.data(), dep.data(), 16), RPBG_RASTER_BAD_LENGTH);
    for (auto i : idx) EXPECT_EQ(i, 5);  // untouched
    EXPECT_EQ(k.rasterize(pts, 6, kIntr, 0, 4, kRot, kTrans, 0, idx.data(), dep.data(), 0), RPBG_RASTER_BAD_ARGUMENT);
    EXPECT_EQ(k.rasterize(pts, 6, kIntr, 4, 4, kRot, kTrans, -1, idx.data(), dep.data(), 16),
              RPBG_RASTER_BAD_ARGUMENT);
}
