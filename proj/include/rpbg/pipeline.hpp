#pragma once

#include <torch/torch.h>

#include <span>
#include <vector>

#include "rpbg/camera.hpp"
#include "rpbg/point_cloud.hpp"
#include "rpbg/rasterizer.hpp"
#include "rpbg/renderer.hpp"
#include "rpbg/texture.hpp"

namespace rpbg {

/// Everything needed to render a view: cloud, row-aligned texture, renderer.
struct PointModel {
    PointCloud cloud;
    NeuralTexture texture;
    NeuralRenderer renderer{nullptr};

    int scales() const { return renderer->config().scales; }
    /// Throws DataError when cloud and texture rows disagree.
    void check_aligned() const;
};

/// Per-scale buffers [B,C,H_s,W_s] for a batch of fragment pyramids.
std::vector<torch::Tensor> neural_buffers(const NeuralTexture& texture,
                                          std::span<const std::vector<Fragment>> pyramids);

/// Rasterize, gather and render one full view. Returns [3,H,W] clamped to [0,1].
torch::Tensor render_view(const PointModel& model, const CameraModel& camera, const Pose& pose,
                          RasterBackend backend = RasterBackend::Reference);

}  // namespace rpbg
