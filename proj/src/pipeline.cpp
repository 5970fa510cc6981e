#include "rpbg/pipeline.hpp"

#include "rpbg/errors.hpp"

namespace rpbg {

void PointModel::check_aligned() const {
    if (!texture.features.defined() || static_cast<std::int64_t>(cloud.size()) != texture.size())
        throw DataError("point cloud has " + std::to_string(cloud.size()) + " points but texture has " +
                            std::to_string(texture.features.defined() ? texture.size() : 0) + " rows",
                        "E_DESYNC");
}

std::vector<torch::Tensor> neural_buffers(const NeuralTexture& texture,
                                          std::span<const std::vector<Fragment>> pyramids) {
    if (pyramids.empty()) throw ConfigError("neural_buffers: empty batch");
    const std::size_t scales = pyramids.front().size();
    std::vector<torch::Tensor> out;
    std::vector<const Fragment*> level(pyramids.size());
    for (std::size_t s = 0; s < scales; ++s) {
        for (std::size_t b = 0; b < pyramids.size(); ++b) level[b] = &pyramids[b].at(s);
        out.push_back(gather_batch(texture, level));
    }
    return out;
}

torch::Tensor render_view(const PointModel& model, const CameraModel& camera, const Pose& pose,
                          RasterBackend backend) {
    model.check_aligned();
    torch::NoGradGuard no_grad;
    const std::vector<std::vector<Fragment>> pyramid{
        rasterize_pyramid(model.cloud, camera, pose, model.scales(), backend)};
    auto renderer = model.renderer;
    return render(renderer, neural_buffers(model.texture, pyramid))[0];
}

}  // namespace rpbg
