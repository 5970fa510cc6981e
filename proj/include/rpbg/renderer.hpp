#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <string>
#include <vector>

namespace rpbg {

/// Attention granularity of the DAC gate.
enum class AttentionMode { PerPixel, PerChannel };

struct RendererConfig {
    int in_channels = 8;
    int scales = 4;
    /// Feature width per scale, fine to coarse; size must equal `scales`.
    std::vector<int> widths{64, 128, 256, 256};
    /// Fraction of FFC channels routed through the spectral (global) path.
    double ffc_global_ratio = 0.5;
    AttentionMode attention = AttentionMode::PerPixel;

    /// Throws ConfigError for inconsistent widths or an FFC split that does not
    /// divide every width into whole, non-empty local and global parts.
    void validate() const;
    std::string to_yaml() const;
    static RendererConfig from_yaml(const std::string& text);
};

/// Splits `channels` into (local, global) per `ratio`; throws ConfigError when
/// the split is not whole or leaves either side empty.
std::pair<int, int> ffc_split(int channels, double ratio);

/// Channel-wise real 2-D FFT, a 1x1 convolution over stacked (re, im)
/// channels, and the inverse transform back to the input size.
struct FourierUnitImpl : torch::nn::Module {
    explicit FourierUnitImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x);

    int channels;
    torch::nn::Conv2d spectral{nullptr};
};
TORCH_MODULE(FourierUnit);

struct SpectralTransformImpl : torch::nn::Module {
    explicit SpectralTransformImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv_in{nullptr};
    FourierUnit fourier{nullptr};
    torch::nn::Conv2d conv_out{nullptr};
};
TORCH_MODULE(SpectralTransform);

/// Fast Fourier convolution with shape-preserving local/global exchange:
///   y_local  = conv(x_local) + conv(x_global)
///   y_global = conv(x_local) + spectral(x_global)
/// followed by instance norm and ReLU.
struct FfcBlockImpl : torch::nn::Module {
    FfcBlockImpl(int channels, double global_ratio);
    torch::Tensor forward(const torch::Tensor& x);

    int local_channels;
    int global_channels;
    torch::nn::Conv2d local_to_local{nullptr};
    torch::nn::Conv2d global_to_local{nullptr};
    torch::nn::Conv2d local_to_global{nullptr};
    SpectralTransform global_to_global{nullptr};
    torch::nn::InstanceNorm2d norm{nullptr};
};
TORCH_MODULE(FfcBlock);

struct DacOutput {
    torch::Tensor features;
    /// sigmoid of the gate head, [B,1,H,W] (per-pixel) or [B,C,H,W].
    torch::Tensor attention;
};

/// Downgrade-aware gated convolution. A local 3x3 branch and a lifted FFC
/// branch are fused; the gate head on the fused features yields the attention
/// that multiplies the content head.
struct DacBlockImpl : torch::nn::Module {
    DacBlockImpl(int in_channels, int out_channels, double global_ratio, AttentionMode mode);
    DacOutput forward(const torch::Tensor& x);

    torch::nn::Conv2d local{nullptr};
    torch::nn::Conv2d lift{nullptr};
    FfcBlock global{nullptr};
    torch::nn::Conv2d fuse{nullptr};
    torch::nn::Conv2d gate{nullptr};
    torch::nn::Conv2d content{nullptr};
};
TORCH_MODULE(DacBlock);

struct ResBlockImpl : torch::nn::Module {
    explicit ResBlockImpl(int channels);
    torch::Tensor forward(const torch::Tensor& x);

    torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
    torch::nn::InstanceNorm2d norm1{nullptr}, norm2{nullptr};
};
TORCH_MODULE(ResBlock);

struct RenderOutput {
    /// Linear head output before clamping; losses are computed on this.
    torch::Tensor raw;
    /// One attention map per scale, fine to coarse.
    std::vector<torch::Tensor> attention;

    torch::Tensor image() const { return raw.clamp(0.0, 1.0); }
};

/// Multi-scale fusion renderer. Each scale's neural buffer enters through a
/// DAC block; encoder features flow fine-to-coarse by strided convolution and
/// back coarse-to-fine by nearest upsampling, concatenation and 1x1 fusion.
struct NeuralRendererImpl : torch::nn::Module {
    explicit NeuralRendererImpl(RendererConfig config);

    /// `buffers` are [B,C,H_s,W_s], fine to coarse, H_s = ceil(H/2^s).
    RenderOutput forward(const std::vector<torch::Tensor>& buffers);

    const RendererConfig& config() const { return config_; }

    RendererConfig config_;
    torch::nn::ModuleList dac, down, merge, encode, fuse_up, decode;
    torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(NeuralRenderer);

/// Builds a renderer with fan-in uniform conv weights, fan-in uniform biases
/// and a zero gate-head bias, seeded from `seed`.
NeuralRenderer make_renderer(const RendererConfig& config, std::uint64_t seed);

/// Clamped [B,3,H,W] image.
torch::Tensor render(NeuralRenderer& renderer, const std::vector<torch::Tensor>& buffers);

struct ParamEntry {
    std::string name;
    std::vector<std::int64_t> shape;
    std::int64_t numel = 0;
};

std::vector<ParamEntry> parameter_report(const NeuralRenderer& renderer);
std::int64_t parameter_count(const NeuralRenderer& renderer);

/// Checkpoint: params.pt (named arrays with the YAML config embedded under
/// "__config__") and a human-readable arch.yaml.
void save_renderer(const NeuralRenderer& renderer, const std::filesystem::path& dir);
NeuralRenderer load_renderer(const std::filesystem::path& dir);

}  // namespace rpbg
