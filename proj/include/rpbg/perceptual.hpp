#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rpbg {

/// Environment variable naming the directory that holds the pretrained
/// feature-extractor weights and their manifest.
inline constexpr const char* kPerceptualDirEnv = "RPBG_PERCEPTUAL_DIR";

/// Asset names inside the manifest.
inline constexpr const char* kVgg19Asset = "vgg19";
inline constexpr const char* kLpipsVggAsset = "lpips_vgg";

/// Named tensors as stored in an asset file (torch.save dict, torchvision key names).
using TensorDict = std::map<std::string, torch::Tensor>;

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// `explicit_dir` when non-empty, else $RPBG_PERCEPTUAL_DIR; nullopt when neither is set.
std::optional<std::filesystem::path> perceptual_asset_dir(const std::filesystem::path& explicit_dir = {});

/// Reads `name` from `dir/manifest.json`, verifies its checksum and returns
/// the tensors. Throws AssetError with download instructions when anything is
/// missing or the checksum differs.
TensorDict load_asset(const std::filesystem::path& dir, const std::string& name);

/// Writes `dir/<name>.pt` and records it (file, sha256, version) in manifest.json.
void write_asset(const std::filesystem::path& dir, const std::string& name, const TensorDict& tensors);

/// VGG layer layout: output widths of each conv, 0 marks a 2x2 max pool.
struct VggLayout {
    std::vector<int> layers;
    /// 1-based conv ordinals whose post-ReLU activations are returned.
    std::vector<int> taps;

    static VggLayout vgg19_perceptual();
    static VggLayout vgg16_lpips();
    /// torchvision `features.N` index of every conv, in order.
    std::vector<int> conv_indices() const;
    std::vector<int> tap_channels() const;
};

/// Frozen VGG feature trunk.
class VggFeatures {
public:
    VggFeatures(VggLayout layout, const TensorDict& weights);

    /// x: [B,3,H,W], already normalized. Returns one activation per tap.
    std::vector<torch::Tensor> forward(const torch::Tensor& x) const;
    const VggLayout& layout() const { return layout_; }
    void to(torch::Dtype dtype);

private:
    VggLayout layout_;
    std::vector<torch::Tensor> weight_, bias_;
};

/// Deterministic random weights with the shapes of `layout`, for offline tests.
TensorDict random_vgg_weights(const VggLayout& layout, std::uint64_t seed);
/// Random LPIPS asset: vgg16 trunk plus nonnegative lin{k}.weight heads.
TensorDict random_lpips_weights(std::uint64_t seed);

/// Sum over taps of mean |f(pred) - f(target)| on ImageNet-normalized inputs.
class VggPerceptualLoss {
public:
    explicit VggPerceptualLoss(const TensorDict& weights);
    static VggPerceptualLoss load(const std::filesystem::path& dir = {});

    torch::Tensor operator()(const torch::Tensor& pred, const torch::Tensor& target) const;

private:
    VggFeatures features_;
};

/// Learned perceptual distance with the VGG16 trunk and linear calibration heads.
class Lpips {
public:
    explicit Lpips(const TensorDict& weights);
    static Lpips load(const std::filesystem::path& dir = {});

    /// pred, target: [B,3,H,W] in [0,1]. Returns [B].
    torch::Tensor distance(const torch::Tensor& pred, const torch::Tensor& target) const;

private:
    VggFeatures features_;
    std::vector<torch::Tensor> lin_;
};

}  // namespace rpbg
