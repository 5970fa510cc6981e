#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "rpbg/augmenter.hpp"
#include "rpbg/errors.hpp"
#include "rpbg/losses.hpp"
#include "rpbg/metrics.hpp"
#include "rpbg/perceptual.hpp"
#include "rpbg/raster_kernel_abi.h"
#include "rpbg/rasterizer.hpp"
#include "rpbg/toy_scene.hpp"
#include "rpbg/trainer.hpp"

namespace py = pybind11;
using namespace rpbg;

namespace {

template <typename T>
using CArray = py::array_t<T, py::array::c_style | py::array::forcecast>;

torch::Tensor to_tensor(const CArray<float>& a) {
    std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
    return torch::from_blob(const_cast<float*>(a.data()), shape, torch::kFloat32).clone();
}

torch::Tensor to_tensor64(const CArray<double>& a) {
    std::vector<std::int64_t> shape(a.shape(), a.shape() + a.ndim());
    return torch::from_blob(const_cast<double*>(a.data()), shape, torch::kFloat64).clone();
}

py::array_t<float> to_numpy(const torch::Tensor& t) {
    const auto c = t.detach().to(torch::kFloat32).contiguous();
    std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
    py::array_t<float> out(shape);
    std::memcpy(out.mutable_data(), c.data_ptr<float>(), static_cast<std::size_t>(c.numel()) * sizeof(float));
    return out;
}

PointCloud cloud_from(const CArray<float>& pts) {
    if (pts.ndim() != 2 || pts.shape(1) != 3) throw ConfigError("points must have shape (N, 3)");
    PointCloud c;
    const float* p = pts.data();
    for (py::ssize_t i = 0; i < pts.shape(0); ++i) c.positions.emplace_back(p[3 * i], p[3 * i + 1], p[3 * i + 2]);
    return c;
}

TensorDict dict_from(const std::map<std::string, CArray<float>>& d) {
    TensorDict out;
    for (const auto& [k, v] : d) out[k] = to_tensor(v);
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Point-based neural rendering core";

    // Translators run in reverse registration order, so subclasses go last.
    const auto& base = py::register_exception<Error>(m, "RpbgError");
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    m.def("raster_abi_version", [] { return RPBG_RASTER_ABI_VERSION; });

    m.def(
        "rasterize",
        [](const CArray<float>& points, double fx, double fy, double cx, double cy, int width, int height,
           const CArray<double>& rotation, const CArray<double>& translation, int scale, const std::string& backend) {
            CameraModel cam{fx, fy, cx, cy, width, height};
            Pose pose;
            if (rotation.size() != 9 || translation.size() != 3) throw ConfigError("rotation must be 3x3, translation 3");
            for (int i = 0; i < 3; ++i) {
                pose.translation[i] = translation.data()[i];
                for (int j = 0; j < 3; ++j) pose.rotation(i, j) = rotation.data()[3 * i + j];
            }
            const PointCloud cloud = cloud_from(points);
            const auto frags = rasterize_pyramid(cloud, cam, pose, scale + 1, parse_backend(backend));
            const Fragment& f = frags.back();
            py::array_t<std::int32_t> index({f.height, f.width});
            py::array_t<float> depth({f.height, f.width});
            std::copy(f.index.begin(), f.index.end(), index.mutable_data());
            std::copy(f.depth.begin(), f.depth.end(), depth.mutable_data());
            return py::make_tuple(index, depth);
        },
        py::arg("points"), py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
        py::arg("height"), py::arg("rotation"), py::arg("translation"), py::arg("scale") = 0,
        py::arg("backend") = "reference",
        "Index map (-1 = environment) and depth map of one pyramid level.");

    m.def("psnr", [](const CArray<float>& a, const CArray<float>& b) { return psnr(to_tensor(a), to_tensor(b)); });
    m.def("ssim", [](const CArray<float>& a, const CArray<float>& b) { return ssim(to_tensor(a), to_tensor(b)); });
    m.def(
        "huber",
        [](const CArray<double>& a, const CArray<double>& b, double delta) {
            return huber(to_tensor64(a), to_tensor64(b), delta).item<double>();
        },
        py::arg("pred"), py::arg("target"), py::arg("delta") = kHuberDelta);
    m.def("fft_loss", [](const CArray<double>& a, const CArray<double>& b) {
        return fft_loss(to_tensor64(a), to_tensor64(b)).item<double>();
    });

    m.def("random_lpips_weights", [](std::uint64_t seed) {
        std::map<std::string, py::array_t<float>> out;
        for (const auto& [k, v] : random_lpips_weights(seed)) out[k] = to_numpy(v);
        return out;
    });
    m.def(
        "lpips_distance",
        [](const std::map<std::string, CArray<float>>& weights, const CArray<float>& a, const CArray<float>& b) {
            const Lpips lp(dict_from(weights));
            return to_numpy(lp.distance(to_tensor(a), to_tensor(b)));
        },
        py::arg("weights"), py::arg("pred"), py::arg("target"), "Per-image distance for [B,3,H,W] inputs in [0,1].");

    m.def("median_nn_distance", [](const CArray<float>& pts) { return median_nn_distance(cloud_from(pts)); });

    m.def(
        "write_toy_scene",
        [](const std::filesystem::path& out, int views, int size, int points, bool unbounded, std::uint64_t seed) {
            ToySceneOptions o;
            o.views = views;
            o.width = o.height = size;
            o.points = points;
            o.unbounded = unbounded;
            o.seed = seed;
            write_scene(make_toy_scene(o), out);
        },
        py::arg("out"), py::arg("views") = 20, py::arg("size") = 128, py::arg("points") = 5000,
        py::arg("unbounded") = false, py::arg("seed") = 7);

    m.def("scene_summary", [](const std::filesystem::path& dir) {
        const Scene s = load_scene(dir);
        py::dict d;
        d["views"] = s.images.size();
        d["points"] = s.cloud.size();
        d["train_ids"] = s.split.train_ids;
        d["test_ids"] = s.split.test_ids;
        d["scales"] = s.scales;
        d["texture_channels"] = s.texture_channels;
        return d;
    });

    m.def(
        "render_checkpoint",
        [](const std::filesystem::path& ckpt, int view_id, const std::string& scene_dir) {
            const Checkpoint ck = load_checkpoint(ckpt);
            const Scene s = load_scene(scene_dir.empty() ? ck.scene_dir : std::filesystem::path(scene_dir));
            const auto& v = s.image(view_id);
            return to_numpy(render_view(ck.model, v.camera, v.pose));
        },
        py::arg("checkpoint"), py::arg("view_id"), py::arg("scene_dir") = "",
        "Renders one view of the checkpoint's scene as a [3,H,W] float32 array.");
}
