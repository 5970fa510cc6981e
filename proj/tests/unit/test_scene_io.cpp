#include <gtest/gtest.h>

#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "rpbg/colmap.hpp"
#include "rpbg/errors.hpp"
#include "rpbg/point_cloud.hpp"
#include "rpbg/scene.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace rpbg;
using rpbg::test::TempDir;

namespace {

PointCloud three_points() {
    PointCloud c;
    c.positions = {{0.1f, -2.5f, 3.25f}, {1e-3f, 7.0f, -0.125f}, {-4.0f, 0.0f, 1.5f}};
    c.colors = {{1.0f, 0.0f, 0.0f}, {0.0f, 1.0f, 0.0f}, {0.2f, 0.4f, 0.6f}};
    return c;
}

void expect_same_positions(const PointCloud& a, const PointCloud& b, float tol) {
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
        for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.positions[i][k], b.positions[i][k], tol) << i;
}

// Hand-rolled writers, independent of save_point_cloud.
void write_ascii_ply(const fs::path& path, const std::vector<std::array<double, 3>>& xyz,
                     const std::vector<std::array<int, 3>>& rgb) {
    std::ofstream out(path);
    out << "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex " << xyz.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nproperty float nx\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nelement face 0\n"
           "property list uchar int vertex_indices\nend_header\n";
    out.precision(17);
    for (std::size_t i = 0; i < xyz.size(); ++i)
        out << xyz[i][0] << " " << xyz[i][1] << " " << xyz[i][2] << " 0.5 " << rgb[i][0] << " " << rgb[i][1] << " "
            << rgb[i][2] << "\n";
}

void write_binary_ply(const fs::path& path, const std::vector<std::array<double, 3>>& xyz,
                      const std::vector<std::array<int, 3>>& rgb) {
    std::ofstream out(path, std::ios::binary);
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << xyz.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\n"
           "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
    for (std::size_t i = 0; i < xyz.size(); ++i) {
        unsigned char rec[19];
        for (int k = 0; k < 3; ++k) {
            const float f = static_cast<float>(xyz[i][k]);
            std::memcpy(rec + 4 * k, &f, 4);
        }
        const float nx = 0.5f;
        std::memcpy(rec + 12, &nx, 4);
        for (int k = 0; k < 3; ++k) rec[16 + k] = static_cast<unsigned char>(rgb[i][k]);
        out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    }
}

std::size_t count_data_lines(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line))
        if (!line.empty() && line[0] != '#') ++n;
    return n;
}

colmap::Model random_model(std::mt19937_64& rng, int n_points) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    colmap::Model m;
    colmap::Camera c1;
    c1.id = 1;
    c1.model = colmap::CameraModelId::SimplePinhole;
    c1.intrinsics = {500.0, 500.0, 320.5, 240.25, 640, 480};
    colmap::Camera c2;
    c2.id = 7;
    c2.model = colmap::CameraModelId::Pinhole;
    c2.intrinsics = {410.125, 415.5, 99.75, 60.0, 200, 120};
    m.cameras = {c1, c2};
    for (std::uint32_t i = 0; i < 3; ++i) {
        colmap::Image img;
        img.id = 10 + i;
        img.camera_id = i == 1 ? 7 : 1;
        img.name = "frame_" + std::to_string(i) + ".jpg";
        img.pose = rpbg::test::random_pose(rng);
        m.images.push_back(img);
    }
    for (int i = 0; i < n_points; ++i) {
        colmap::Point3D p;
        p.id = static_cast<std::uint64_t>(i + 1);
        p.xyz = {u(rng), u(rng), u(rng)};
        p.rgb = {static_cast<std::uint8_t>(i % 256), static_cast<std::uint8_t>((3 * i) % 256), 200};
        p.error = 0.5;
        m.points.push_back(p);
    }
    return m;
}

void expect_models_equal(const colmap::Model& a, const colmap::Model& b) {
    ASSERT_EQ(a.cameras.size(), b.cameras.size());
    for (std::size_t i = 0; i < a.cameras.size(); ++i) {
        EXPECT_EQ(a.cameras[i].id, b.cameras[i].id);
        EXPECT_EQ(a.cameras[i].model, b.cameras[i].model);
        const auto &x = a.cameras[i].intrinsics, &y = b.cameras[i].intrinsics;
        EXPECT_NEAR(x.fx, y.fx, 1e-9);
        EXPECT_NEAR(x.fy, y.fy, 1e-9);
        EXPECT_NEAR(x.cx, y.cx, 1e-9);
        EXPECT_NEAR(x.cy, y.cy, 1e-9);
        EXPECT_EQ(x.width, y.width);
        EXPECT_EQ(x.height, y.height);
    }
    ASSERT_EQ(a.images.size(), b.images.size());
    for (std::size_t i = 0; i < a.images.size(); ++i) {
        EXPECT_EQ(a.images[i].id, b.images[i].id);
        EXPECT_EQ(a.images[i].camera_id, b.images[i].camera_id);
        EXPECT_EQ(a.images[i].name, b.images[i].name);
        EXPECT_LT((a.images[i].pose.rotation - b.images[i].pose.rotation).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_LT((a.images[i].pose.translation - b.images[i].pose.translation).cwiseAbs().maxCoeff(), 1e-9);
    }
    ASSERT_EQ(a.points.size(), b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        EXPECT_EQ(a.points[i].id, b.points[i].id);
        EXPECT_LT((a.points[i].xyz - b.points[i].xyz).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_EQ(a.points[i].rgb, b.points[i].rgb);
    }
}

}  // namespace

// ---------------------------------------------------------------- PLY

TEST(Ply, ThreePointRoundTripBothEncodings) {
    TempDir dir;
    const PointCloud c = three_points();
    for (auto enc : {PlyEncoding::Ascii, PlyEncoding::BinaryLittleEndian}) {
        const fs::path p = dir / (enc == PlyEncoding::Ascii ? "a.ply" : "b.ply");
        save_point_cloud(c, p, enc);
        const PointCloud back = load_point_cloud(p);
        expect_same_positions(c, back, 1e-6f);
        ASSERT_TRUE(back.has_colors());
        for (std::size_t i = 0; i < c.size(); ++i)
            for (int k = 0; k < 3; ++k) EXPECT_NEAR(back.colors[i][k], c.colors[i][k], 0.5f / 255.0f);
    }
}

TEST(Ply, EmptyCloudRoundTrip) {
    TempDir dir;
    save_point_cloud(PointCloud{}, dir / "e.ply");
    EXPECT_TRUE(load_point_cloud(dir / "e.ply").empty());
}

TEST(Ply, IndependentAsciiAndBinaryWritersAgree) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-10.0f, 10.0f);
    std::uniform_int_distribution<int> c(0, 255);
    std::vector<std::array<double, 3>> xyz;
    std::vector<std::array<int, 3>> rgb;
    for (int i = 0; i < 257; ++i) {
        // Float-representable values so both encodings carry identical numbers.
        xyz.push_back({u(rng), u(rng), u(rng)});
        rgb.push_back({c(rng), c(rng), c(rng)});
    }
    TempDir dir;
    write_ascii_ply(dir / "a.ply", xyz, rgb);
    write_binary_ply(dir / "b.ply", xyz, rgb);
    const PointCloud a = load_point_cloud(dir / "a.ply");
    const PointCloud b = load_point_cloud(dir / "b.ply");
    ASSERT_EQ(a.size(), xyz.size());
    ASSERT_EQ(b.size(), xyz.size());
    for (std::size_t i = 0; i < xyz.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            EXPECT_EQ(a.positions[i][k], b.positions[i][k]);
            EXPECT_EQ(a.positions[i][k], static_cast<float>(xyz[i][k]));
            EXPECT_FLOAT_EQ(a.colors[i][k], rgb[i][k] / 255.0f);
            EXPECT_EQ(a.colors[i][k], b.colors[i][k]);
        }
    }
}

TEST(Ply, BadMagicIsFormatError) {
    TempDir dir;
    std::ofstream(dir / "x.ply") << "PLX\nformat ascii 1.0\nend_header\n";
    EXPECT_THROW(load_point_cloud(dir / "x.ply"), FormatError);
}

TEST(Ply, TruncatedBinaryBodyIsFormatError) {
    TempDir dir;
    write_binary_ply(dir / "t.ply", {{1, 2, 3}, {4, 5, 6}}, {{0, 0, 0}, {1, 1, 1}});
    fs::resize_file(dir / "t.ply", fs::file_size(dir / "t.ply") - 5);
    EXPECT_THROW(load_point_cloud(dir / "t.ply"), FormatError);
}

TEST(PointCloud, SelectAndAppendKeepAlignment) {
    PointCloud c = three_points();
    const bool keep[] = {true, false, true};
    const PointCloud s = c.select(keep);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s.positions[1], c.positions[2]);
    EXPECT_EQ(s.colors[1], c.colors[2]);
    PointCloud bare;
    bare.positions = {{0, 0, 0}};
    c.append(bare);
    EXPECT_EQ(c.size(), 4u);
    EXPECT_FALSE(c.has_colors());
    EXPECT_NO_THROW(c.validate());
}

// ---------------------------------------------------------------- COLMAP

TEST(Colmap, TextAndBinaryRoundTrip) {
    std::mt19937_64 rng(11);
    const colmap::Model m = random_model(rng, 1000);
    TempDir dir;
    colmap::save_model(m, dir / "txt", colmap::Format::Text);
    colmap::save_model(m, dir / "bin", colmap::Format::Binary);
    expect_models_equal(m, colmap::load_model(dir / "txt"));
    expect_models_equal(m, colmap::load_model(dir / "bin"));
}

TEST(Colmap, PointCountMatchesIndependentLineCounter) {
    std::mt19937_64 rng(12);
    TempDir dir;
    colmap::save_model(random_model(rng, 1000), dir / "m", colmap::Format::Text);
    const std::size_t lines = count_data_lines(dir / "m" / "points3D.txt");
    const ColmapScene s = load_colmap_model(dir / "m");
    EXPECT_EQ(lines, 1000u);
    EXPECT_EQ(s.cloud.size(), lines);
    for (const auto& p : s.cloud.positions) EXPECT_TRUE(p.allFinite());
}

TEST(Colmap, BinaryPreferredWhenBothPresent) {
    std::mt19937_64 rng(13);
    TempDir dir;
    colmap::save_model(random_model(rng, 5), dir / "m", colmap::Format::Text);
    colmap::save_model(random_model(rng, 9), dir / "m", colmap::Format::Binary);
    EXPECT_EQ(colmap::load_model(dir / "m").points.size(), 9u);
}

TEST(Colmap, OneCameraOneImageNoPoints) {
    TempDir dir;
    fs::create_directories(dir / "m");
    std::ofstream(dir / "m" / "cameras.txt") << "# cam\n1 PINHOLE 64 48 50 51 31.5 23.5\n";
    std::ofstream(dir / "m" / "images.txt") << "# img\n1 1 0 0 0 0.5 -1 2 1 a.png\n\n";
    std::ofstream(dir / "m" / "points3D.txt") << "# none\n";
    rpbg::test::QuietLogs quiet;
    const ColmapScene s = load_colmap_model(dir / "m");
    ASSERT_EQ(s.cameras.size(), 1u);
    ASSERT_EQ(s.images.size(), 1u);
    EXPECT_TRUE(s.cloud.empty());
    EXPECT_EQ(s.images[0].camera.width, 64);
    EXPECT_DOUBLE_EQ(s.images[0].camera.fy, 51.0);
    EXPECT_NEAR(s.images[0].pose.translation.x(), 0.5, 1e-12);
    EXPECT_TRUE(s.images[0].pose.is_valid());
}

TEST(Colmap, UnsupportedCameraModelNamed) {
    TempDir dir;
    fs::create_directories(dir / "m");
    std::ofstream(dir / "m" / "cameras.txt") << "1 OPENCV 64 48 50 50 32 24 0.1 0 0 0\n";
    std::ofstream(dir / "m" / "images.txt") << "";
    std::ofstream(dir / "m" / "points3D.txt") << "";
    try {
        colmap::load_model(dir / "m");
        FAIL() << "expected an error";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("OPENCV"), std::string::npos) << e.what();
    }
}

TEST(Colmap, MissingFileNamesTheFile) {
    TempDir dir;
    fs::create_directories(dir / "m");
    std::ofstream(dir / "m" / "cameras.txt") << "1 PINHOLE 64 48 50 50 32 24\n";
    std::ofstream(dir / "m" / "points3D.txt") << "";
    try {
        colmap::load_model(dir / "m");
        FAIL() << "expected an error";
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("images.txt"), std::string::npos) << e.what();
    }
}

TEST(Colmap, TruncatedBinaryIsFormatError) {
    std::mt19937_64 rng(14);
    TempDir dir;
    colmap::save_model(random_model(rng, 20), dir / "m", colmap::Format::Binary);
    fs::resize_file(dir / "m" / "points3D.bin", fs::file_size(dir / "m" / "points3D.bin") - 7);
    EXPECT_THROW(colmap::load_model(dir / "m"), FormatError);
}

TEST(Colmap, MissingImagesDroppedWhenImageDirGiven) {
    std::mt19937_64 rng(15);
    TempDir dir;
    const colmap::Model m = random_model(rng, 4);
    colmap::save_model(m, dir / "m", colmap::Format::Text);
    fs::create_directories(dir / "img");
    write_image(torch::rand({3, 480, 640}), dir / "img" / m.images[0].name);
    rpbg::test::QuietLogs quiet;
    const ColmapScene s = load_colmap_model(dir / "m", dir / "img");
    ASSERT_EQ(s.images.size(), 1u);
    EXPECT_EQ(s.images[0].name, m.images[0].name);
}

// ---------------------------------------------------------------- poses and cameras

TEST(Pose, QuaternionRoundTrip) {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 100; ++i) {
        const Pose p = rpbg::test::random_pose(rng);
        const auto q = p.quaternion();
        const Pose back = Pose::from_quaternion(q[0], q[1], q[2], q[3], p.translation);
        EXPECT_LT((back.rotation - p.rotation).cwiseAbs().maxCoeff(), 1e-12);
        EXPECT_GE(q[0], 0.0);
        EXPECT_TRUE(back.is_valid());
    }
}

TEST(Pose, LookAtPutsTargetOnAxis) {
    const Pose p = Pose::look_at({3, 1, 2}, {0, 0, 0.5}, Eigen::Vector3d::UnitZ());
    const Eigen::Vector3d t = p.rotation * Eigen::Vector3d(0, 0, 0.5) + p.translation;
    EXPECT_NEAR(t.x(), 0.0, 1e-12);
    EXPECT_NEAR(t.y(), 0.0, 1e-12);
    EXPECT_GT(t.z(), 0.0);
    EXPECT_LT((p.center() - Eigen::Vector3d(3, 1, 2)).norm(), 1e-12);
    // Image +y points downward in the world.
    EXPECT_GT(p.rotation.row(1).dot(-Eigen::Vector3d::UnitZ()), 0.0);
}

TEST(Camera, CropExamplesAndComposition) {
    const CameraModel c{100.0, 90.0, 50.5, 40.25, 101, 81};
    const CameraModel same = crop_camera(c, {0, 0}, {101, 81});
    EXPECT_EQ(same, c);
    const CameraModel moved = crop_camera(c, {10, 20}, {30, 30});
    EXPECT_DOUBLE_EQ(moved.cx, 40.5);
    EXPECT_DOUBLE_EQ(moved.cy, 20.25);
    EXPECT_DOUBLE_EQ(moved.fx, 100.0);
    EXPECT_EQ(moved.width, 30);
    const CameraModel twice = crop_camera(crop_camera(c, {3, 4}, {60, 50}), {7, 9}, {20, 25});
    EXPECT_EQ(twice, crop_camera(c, {10, 13}, {20, 25}));
    EXPECT_THROW(crop_camera(c, {90, 0}, {20, 10}), ConfigError);
    EXPECT_THROW(crop_camera(c, {-1, 0}, {20, 10}), ConfigError);
}

TEST(Camera, ScaleUsesCeilSizes) {
    const CameraModel c{64.0, 64.0, 31.5, 31.5, 255, 17};
    const CameraModel s2 = scale_camera(c, 2);
    EXPECT_EQ(s2.width, 64);
    EXPECT_EQ(s2.height, 5);
    EXPECT_DOUBLE_EQ(s2.fx, 16.0);
    EXPECT_DOUBLE_EQ(s2.cx, 31.5 / 4);
    EXPECT_EQ(scale_camera(c, 0), c);
}

TEST(Camera, ValidationRejectsBadIntrinsics) {
    EXPECT_THROW((CameraModel{0.0, 1.0, 0.0, 0.0, 4, 4}.validate()), ConfigError);
    EXPECT_THROW((CameraModel{1.0, 1.0, 0.0, 0.0, 0, 4}.validate()), ConfigError);
    EXPECT_THROW((CameraModel{1.0, 1.0, 4.0, 0.0, 4, 4}.validate_principal_point()), ConfigError);
    EXPECT_NO_THROW((CameraModel{1.0, 1.0, 3.9, 0.0, 4, 4}.validate_principal_point()));
}

// ---------------------------------------------------------------- split

TEST(Split, Examples) {
    auto ids = [](int n) {
        std::vector<int> v(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
        return v;
    };
    const SplitSpec s16 = make_split(ids(16));
    EXPECT_EQ(s16.test_ids, (std::vector<int>{7, 15}));
    EXPECT_EQ(s16.train_ids.size(), 14u);
    EXPECT_EQ(make_split(ids(8)).test_ids, (std::vector<int>{7}));
    EXPECT_EQ(make_split(ids(100)).test_ids.size(), 12u);
    rpbg::test::QuietLogs quiet;
    EXPECT_TRUE(make_split(ids(5)).test_ids.empty());
    EXPECT_THROW(make_split({3, 2}), ConfigError);
    EXPECT_THROW(make_split({2, 2}), ConfigError);
}

TEST(Split, PartitionPropertyOnRandomIdLists) {
    rpbg::test::QuietLogs quiet;
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 200; ++trial) {
        std::set<int> pool;
        const int n = std::uniform_int_distribution<int>(0, 60)(rng);
        while (static_cast<int>(pool.size()) < n) pool.insert(std::uniform_int_distribution<int>(-500, 500)(rng));
        const std::vector<int> ids(pool.begin(), pool.end());
        const SplitSpec s = make_split(ids);
        std::set<int> train(s.train_ids.begin(), s.train_ids.end()), test(s.test_ids.begin(), s.test_ids.end());
        EXPECT_EQ(train.size() + test.size(), ids.size());
        for (int t : test) EXPECT_FALSE(train.count(t));
        std::set<int> all = train;
        all.insert(test.begin(), test.end());
        EXPECT_EQ(all, pool);
        for (std::size_t p = 0; p < ids.size(); ++p) EXPECT_EQ(test.count(ids[p]) == 1, p % 8 == 7);
        EXPECT_EQ(make_split(ids).test_ids, s.test_ids);
    }
}

// ---------------------------------------------------------------- images and scenes

TEST(Image, PngRoundTripWithin8BitQuantization) {
    TempDir dir;
    const auto img = torch::rand({3, 13, 17});
    write_image(img, dir / "x.png");
    const auto back = read_image(dir / "x.png");
    ASSERT_EQ(back.sizes(), img.sizes());
    EXPECT_LE((back - img).abs().max().item<float>(), 0.5f / 255.0f + 1e-6f);
    // Channel order survives the BGR storage.
    auto red = torch::zeros({3, 2, 2});
    red[0].fill_(1.0);
    write_image(red, dir / "r.png");
    EXPECT_TRUE(torch::equal(read_image(dir / "r.png"), red));
}

TEST(Scene, WriteLoadRoundTrip) {
    rpbg::test::QuietLogs quiet;
    const Scene s = rpbg::test::tiny_scene();
    TempDir dir;
    write_scene(s, dir / "scene");
    const Scene back = load_scene(dir / "scene");
    ASSERT_EQ(back.images.size(), s.images.size());
    EXPECT_EQ(back.split.train_ids, s.split.train_ids);
    EXPECT_EQ(back.split.test_ids, s.split.test_ids);
    EXPECT_EQ(back.scales, s.scales);
    EXPECT_EQ(back.texture_channels, s.texture_channels);
    expect_same_positions(s.cloud, back.cloud, 0.0f);
    for (std::size_t i = 0; i < s.images.size(); ++i) {
        EXPECT_EQ(back.images[i].camera, s.images[i].camera);
        EXPECT_LT((back.images[i].pose.rotation - s.images[i].pose.rotation).cwiseAbs().maxCoeff(), 1e-9);
        const auto px = back.images[i].load();
        EXPECT_LE((px - s.images[i].pixels).abs().max().item<float>(), 0.5f / 255.0f + 1e-6f);
    }
}

TEST(Scene, UnknownViewListsValidIds) {
    const Scene s = rpbg::test::tiny_scene();
    try {
        s.image(42);
        FAIL() << "expected an error";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.code(), "E_VIEW");
        EXPECT_NE(std::string(e.what()).find("0"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("9"), std::string::npos);
    }
}

TEST(Scene, PrepareFromManifest) {
    rpbg::test::QuietLogs quiet;
    std::mt19937_64 rng(41);
    TempDir dir;
    colmap::Model m = random_model(rng, 50);
    colmap::save_model(m, dir / "raw" / "sparse", colmap::Format::Binary);
    fs::create_directories(dir / "raw" / "images");
    for (const auto& img : m.images) {
        const auto& cam = m.camera(img.camera_id).intrinsics;
        write_image(torch::rand({3, cam.height, cam.width}), dir / "raw" / "images" / img.name);
    }
    SceneManifest man;
    man.model_dir = dir / "raw" / "sparse";
    man.image_dir = dir / "raw" / "images";
    man.save(dir / "manifest.yaml");
    const SceneManifest loaded = SceneManifest::load(dir / "manifest.yaml");
    EXPECT_EQ(loaded.model_dir, man.model_dir);
    const Scene s = prepare_scene(loaded, dir / "prepared");
    EXPECT_EQ(s.images.size(), 3u);
    EXPECT_EQ(s.cloud.size(), 50u);
    const Scene again = load_scene(dir / "prepared");
    EXPECT_EQ(again.images.size(), 3u);
    EXPECT_EQ(again.images[1].load().size(2), m.camera(m.images[1].camera_id).intrinsics.width);

    SceneManifest bad = man;
    bad.model_dir = dir / "nope";
    EXPECT_THROW(bad.validate(), DataError);
}
