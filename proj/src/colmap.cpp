#include "rpbg/colmap.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "rpbg/errors.hpp"

namespace fs = std::filesystem;

namespace rpbg::colmap {

const Camera& Model::camera(std::uint32_t id) const {
    for (const Camera& c : cameras) {
        if (c.id == id) return c;
    }
    throw DataError("image references unknown camera id " + std::to_string(id));
}

PointCloud Model::point_cloud() const {
    PointCloud cloud;
    cloud.positions.reserve(points.size());
    cloud.colors.reserve(points.size());
    for (const Point3D& p : points) {
        cloud.positions.push_back(p.xyz.cast<float>());
        cloud.colors.emplace_back(p.rgb[0] / 255.0f, p.rgb[1] / 255.0f, p.rgb[2] / 255.0f);
    }
    return cloud;
}

namespace {

int num_params(CameraModelId model) { return model == CameraModelId::SimplePinhole ? 3 : 4; }

const char* model_name(CameraModelId model) {
    return model == CameraModelId::SimplePinhole ? "SIMPLE_PINHOLE" : "PINHOLE";
}

CameraModelId model_from_id(int id, std::uint32_t camera_id) {
    if (id == 0) return CameraModelId::SimplePinhole;
    if (id == 1) return CameraModelId::Pinhole;
    throw DataError("camera " + std::to_string(camera_id) + ": unsupported camera model id " + std::to_string(id) +
                        " (only SIMPLE_PINHOLE and PINHOLE are accepted)",
                    "E_CAMERA_MODEL");
}

CameraModelId model_from_name(const std::string& name, std::uint32_t camera_id) {
    if (name == "SIMPLE_PINHOLE") return CameraModelId::SimplePinhole;
    if (name == "PINHOLE") return CameraModelId::Pinhole;
    throw DataError("camera " + std::to_string(camera_id) + ": unsupported camera model " + name +
                        " (only SIMPLE_PINHOLE and PINHOLE are accepted)",
                    "E_CAMERA_MODEL");
}

CameraModel intrinsics_from_params(CameraModelId model, const std::vector<double>& p, int width, int height) {
    CameraModel cam;
    cam.width = width;
    cam.height = height;
    if (model == CameraModelId::SimplePinhole) {
        cam.fx = cam.fy = p[0];
        cam.cx = p[1];
        cam.cy = p[2];
    } else {
        cam.fx = p[0];
        cam.fy = p[1];
        cam.cx = p[2];
        cam.cy = p[3];
    }
    return cam;
}

std::vector<double> params_from_intrinsics(CameraModelId model, const CameraModel& c) {
    if (model == CameraModelId::SimplePinhole) return {c.fx, c.cx, c.cy};
    return {c.fx, c.fy, c.cx, c.cy};
}

// ---------------------------------------------------------------- text

bool next_data_line(std::istream& in, std::string& line) {
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        return true;
    }
    return false;
}

std::ifstream open_or_throw(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path.string() + ": missing or unreadable");
    return in;
}

std::vector<Camera> read_cameras_text(const fs::path& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Camera> out;
    std::string line;
    while (next_data_line(in, line)) {
        std::istringstream ls(line);
        Camera cam;
        std::string model;
        int width = 0, height = 0;
        ls >> cam.id >> model >> width >> height;
        if (!ls) throw FormatError(path.string() + ": malformed camera line '" + line + "'");
        cam.model = model_from_name(model, cam.id);
        std::vector<double> params(static_cast<std::size_t>(num_params(cam.model)));
        for (double& v : params) ls >> v;
        if (!ls) throw FormatError(path.string() + ": truncated camera parameters for camera " + std::to_string(cam.id));
        cam.intrinsics = intrinsics_from_params(cam.model, params, width, height);
        out.push_back(cam);
    }
    return out;
}

std::vector<Image> read_images_text(const fs::path& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Image> out;
    std::string line;
    while (next_data_line(in, line)) {
        std::istringstream ls(line);
        Image img;
        double qw, qx, qy, qz, tx, ty, tz;
        ls >> img.id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> img.camera_id;
        if (!ls) throw FormatError(path.string() + ": malformed image line '" + line + "'");
        std::getline(ls >> std::ws, img.name);
        if (img.name.empty()) throw FormatError(path.string() + ": image " + std::to_string(img.id) + " has no name");
        img.pose = Pose::from_quaternion(qw, qx, qy, qz, Eigen::Vector3d(tx, ty, tz));
        out.push_back(std::move(img));
        // The keypoint line follows every image line and may be empty.
        std::string points_line;
        if (!std::getline(in, points_line))
            throw FormatError(path.string() + ": truncated, missing keypoint line for image " + std::to_string(out.back().id));
    }
    return out;
}

std::vector<Point3D> read_points_text(const fs::path& path) {
    std::ifstream in = open_or_throw(path);
    std::vector<Point3D> out;
    std::string line;
    while (next_data_line(in, line)) {
        std::istringstream ls(line);
        Point3D p;
        int r, g, b;
        ls >> p.id >> p.xyz.x() >> p.xyz.y() >> p.xyz.z() >> r >> g >> b >> p.error;
        if (!ls) throw FormatError(path.string() + ": malformed point line '" + line + "'");
        p.rgb = {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g), static_cast<std::uint8_t>(b)};
        out.push_back(p);
    }
    return out;
}

// ---------------------------------------------------------------- binary

class BinaryReader {
public:
    explicit BinaryReader(const fs::path& path) : path_(path), in_(open_or_throw(path)) {}

    template <typename T>
    T read() {
        T v{};
        in_.read(reinterpret_cast<char*>(&v), sizeof(T));
        if (!in_) throw FormatError(path_.string() + ": truncated binary model file");
        return v;
    }

    std::string read_cstring() {
        std::string s;
        char c = 0;
        while (true) {
            in_.get(c);
            if (!in_) throw FormatError(path_.string() + ": truncated binary model file");
            if (c == '\0') break;
            s.push_back(c);
        }
        return s;
    }

    void skip(std::uint64_t bytes) {
        in_.ignore(static_cast<std::streamsize>(bytes));
        if (!in_) throw FormatError(path_.string() + ": truncated binary model file");
    }

private:
    fs::path path_;
    std::ifstream in_;
};

std::vector<Camera> read_cameras_binary(const fs::path& path) {
    BinaryReader r(path);
    const auto n = r.read<std::uint64_t>();
    std::vector<Camera> out;
    for (std::uint64_t i = 0; i < n; ++i) {
        Camera cam;
        cam.id = r.read<std::uint32_t>();
        cam.model = model_from_id(r.read<std::int32_t>(), cam.id);
        const auto width = r.read<std::uint64_t>();
        const auto height = r.read<std::uint64_t>();
        std::vector<double> params(static_cast<std::size_t>(num_params(cam.model)));
        for (double& v : params) v = r.read<double>();
        cam.intrinsics = intrinsics_from_params(cam.model, params, static_cast<int>(width), static_cast<int>(height));
        out.push_back(cam);
    }
    return out;
}

std::vector<Image> read_images_binary(const fs::path& path) {
    BinaryReader r(path);
    const auto n = r.read<std::uint64_t>();
    std::vector<Image> out;
    for (std::uint64_t i = 0; i < n; ++i) {
        Image img;
        img.id = r.read<std::uint32_t>();
        double q[4], t[3];
        for (double& v : q) v = r.read<double>();
        for (double& v : t) v = r.read<double>();
        img.camera_id = r.read<std::uint32_t>();
        img.name = r.read_cstring();
        const auto n2d = r.read<std::uint64_t>();
        r.skip(n2d * (2 * sizeof(double) + sizeof(std::int64_t)));
        img.pose = Pose::from_quaternion(q[0], q[1], q[2], q[3], Eigen::Vector3d(t[0], t[1], t[2]));
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<Point3D> read_points_binary(const fs::path& path) {
    BinaryReader r(path);
    const auto n = r.read<std::uint64_t>();
    std::vector<Point3D> out;
    out.reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 24)));
    for (std::uint64_t i = 0; i < n; ++i) {
        Point3D p;
        p.id = r.read<std::uint64_t>();
        p.xyz.x() = r.read<double>();
        p.xyz.y() = r.read<double>();
        p.xyz.z() = r.read<double>();
        for (auto& c : p.rgb) c = r.read<std::uint8_t>();
        p.error = r.read<double>();
        const auto track = r.read<std::uint64_t>();
        r.skip(track * 2 * sizeof(std::int32_t));
        out.push_back(p);
    }
    return out;
}

void check_model(const Model& model, const fs::path& dir) {
    for (const Camera& c : model.cameras) {
        try {
            c.intrinsics.validate_principal_point();
        } catch (const ConfigError& e) {
            throw DataError(dir.string() + ": camera " + std::to_string(c.id) + ": " + e.what());
        }
    }
    std::map<std::uint32_t, bool> seen;
    for (const Image& img : model.images) {
        if (seen[img.id]) throw DataError(dir.string() + ": duplicate image id " + std::to_string(img.id));
        seen[img.id] = true;
        model.camera(img.camera_id);
    }
    for (const Point3D& p : model.points) {
        if (!p.xyz.allFinite()) throw DataError(dir.string() + ": non-finite point " + std::to_string(p.id));
    }
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Model load_text_model(const fs::path& dir) {
    Model m;
    m.cameras = read_cameras_text(dir / "cameras.txt");
    m.images = read_images_text(dir / "images.txt");
    m.points = read_points_text(dir / "points3D.txt");
    check_model(m, dir);
    return m;
}

Model load_binary_model(const fs::path& dir) {
    Model m;
    m.cameras = read_cameras_binary(dir / "cameras.bin");
    m.images = read_images_binary(dir / "images.bin");
    m.points = read_points_binary(dir / "points3D.bin");
    check_model(m, dir);
    return m;
}

Model load_model(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw DataError("model directory not found: " + dir.string(), "E_IO");
    if (fs::exists(dir / "cameras.bin") || fs::exists(dir / "images.bin") || fs::exists(dir / "points3D.bin"))
        return load_binary_model(dir);
    return load_text_model(dir);
}

void save_model(const Model& model, const fs::path& dir, Format format) {
    fs::create_directories(dir);
    if (format == Format::Text) {
        std::ofstream cams(dir / "cameras.txt");
        cams << std::setprecision(17);
        cams << "# Camera list with one line of data per camera:\n"
             << "#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n";
        for (const Camera& c : model.cameras) {
            cams << c.id << ' ' << model_name(c.model) << ' ' << c.intrinsics.width << ' ' << c.intrinsics.height;
            for (double p : params_from_intrinsics(c.model, c.intrinsics)) cams << ' ' << p;
            cams << '\n';
        }
        std::ofstream imgs(dir / "images.txt");
        imgs << std::setprecision(17);
        imgs << "# Image list with two lines of data per image:\n"
             << "#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n"
             << "#   POINTS2D[] as (X, Y, POINT3D_ID)\n";
        for (const Image& img : model.images) {
            const auto q = img.pose.quaternion();
            const auto& t = img.pose.translation;
            imgs << img.id << ' ' << q[0] << ' ' << q[1] << ' ' << q[2] << ' ' << q[3] << ' ' << t.x() << ' '
                 << t.y() << ' ' << t.z() << ' ' << img.camera_id << ' ' << img.name << "\n\n";
        }
        std::ofstream pts(dir / "points3D.txt");
        pts << std::setprecision(17);
        pts << "# 3D point list with one line of data per point:\n"
            << "#   POINT3D_ID, X, Y, Z, R, G, B, ERROR, TRACK[] as (IMAGE_ID, POINT2D_IDX)\n";
        for (const Point3D& p : model.points) {
            pts << p.id << ' ' << p.xyz.x() << ' ' << p.xyz.y() << ' ' << p.xyz.z() << ' ' << int(p.rgb[0]) << ' '
                << int(p.rgb[1]) << ' ' << int(p.rgb[2]) << ' ' << p.error << '\n';
        }
        if (!cams || !imgs || !pts) throw DataError("failed writing text model to " + dir.string(), "E_IO");
        return;
    }

    std::ofstream cams(dir / "cameras.bin", std::ios::binary);
    write_pod<std::uint64_t>(cams, model.cameras.size());
    for (const Camera& c : model.cameras) {
        write_pod<std::uint32_t>(cams, c.id);
        write_pod<std::int32_t>(cams, static_cast<std::int32_t>(c.model));
        write_pod<std::uint64_t>(cams, static_cast<std::uint64_t>(c.intrinsics.width));
        write_pod<std::uint64_t>(cams, static_cast<std::uint64_t>(c.intrinsics.height));
        for (double p : params_from_intrinsics(c.model, c.intrinsics)) write_pod(cams, p);
    }
    std::ofstream imgs(dir / "images.bin", std::ios::binary);
    write_pod<std::uint64_t>(imgs, model.images.size());
    for (const Image& img : model.images) {
        write_pod<std::uint32_t>(imgs, img.id);
        for (double q : img.pose.quaternion()) write_pod(imgs, q);
        for (int k = 0; k < 3; ++k) write_pod(imgs, img.pose.translation[k]);
        write_pod<std::uint32_t>(imgs, img.camera_id);
        imgs.write(img.name.c_str(), static_cast<std::streamsize>(img.name.size() + 1));
        write_pod<std::uint64_t>(imgs, 0);
    }
    std::ofstream pts(dir / "points3D.bin", std::ios::binary);
    write_pod<std::uint64_t>(pts, model.points.size());
    for (const Point3D& p : model.points) {
        write_pod<std::uint64_t>(pts, p.id);
        for (int k = 0; k < 3; ++k) write_pod(pts, p.xyz[k]);
        for (auto c : p.rgb) write_pod(pts, c);
        write_pod(pts, p.error);
        write_pod<std::uint64_t>(pts, 0);
    }
    if (!cams || !imgs || !pts) throw DataError("failed writing binary model to " + dir.string(), "E_IO");
}

}  // namespace rpbg::colmap
