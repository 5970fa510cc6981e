#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "rpbg/point_cloud.hpp"
#include "rpbg/rasterizer.hpp"

namespace rpbg {

/// Learnable per-point features plus the shared environment feature.
/// `features` is [N,C], `env` is [1,C]; both float32 leaf tensors.
struct NeuralTexture {
    torch::Tensor features;
    torch::Tensor env;

    std::int64_t size() const { return features.size(0); }
    std::int64_t channels() const { return features.size(1); }

    /// Throws NumericError on non-finite entries or shape mismatch.
    void validate() const;
    NeuralTexture clone() const;
};

/// All-zero texture of shape [n_points, channels] and a zero env vector.
NeuralTexture init_texture(std::int64_t n_points, std::int64_t channels = 8);

/// Per-pixel lookup: [C,H,W] with env where the fragment is empty.
/// Differentiable w.r.t. both features and env; a row's gradient is the sum
/// over the pixels referencing it.
torch::Tensor gather(const NeuralTexture& texture, const Fragment& fragment);

/// Same lookup for a batch of equally sized fragments: [B,C,H,W].
torch::Tensor gather_batch(const NeuralTexture& texture, std::span<const Fragment* const> fragments);

/// sigma_i = sum_c |features[i,c]|, as an [N] tensor.
torch::Tensor pseudo_density(const NeuralTexture& texture);

/// Drops the rows where `keep_mask` is false from cloud and texture alike.
std::pair<PointCloud, NeuralTexture> prune(const PointCloud& cloud, const NeuralTexture& texture,
                                           std::span<const bool> keep_mask);

/// Maps old point indices to their post-prune positions (-1 when removed).
std::vector<std::int32_t> prune_index_map(std::span<const bool> keep_mask);

/// Checkpoint layout: points.ply, features.bin, env.bin, meta.json.
void save_texture(const PointCloud& cloud, const NeuralTexture& texture, const std::filesystem::path& dir);
std::pair<PointCloud, NeuralTexture> load_texture(const std::filesystem::path& dir);

/// Float32 matrix file: "RPBGMAT1", uint32 version, uint64 rows, uint64 cols, data.
void write_matrix(const torch::Tensor& matrix, const std::filesystem::path& path);
torch::Tensor read_matrix(const std::filesystem::path& path);

}  // namespace rpbg
