#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "rpbg/perceptual.hpp"
#include "rpbg/pipeline.hpp"
#include "rpbg/scene.hpp"

namespace rpbg {

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / MSE), capped at 99 dB. Inputs [3,H,W] or [B,3,H,W] in [0,1].
double psnr(const torch::Tensor& pred, const torch::Tensor& target);

/// Mean SSIM over valid windows (11x11 Gaussian, sigma 1.5, K1=0.01, K2=0.03),
/// averaged over channels. Throws ConfigError when the image is smaller than the window.
double ssim(const torch::Tensor& pred, const torch::Tensor& target);

struct ViewMetrics {
    int id = 0;
    std::string name;
    double psnr = 0.0;
    double ssim = 0.0;
    std::optional<double> lpips;
};

struct MetricsReport {
    std::vector<ViewMetrics> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::optional<double> mean_lpips;
    nlohmann::json config = nlohmann::json::object();

    void recompute_means();
    std::string table() const;
    /// metrics.jsonl (one row per view), summary.json and table.txt.
    void write(const std::filesystem::path& dir) const;
    static MetricsReport read(const std::filesystem::path& dir);
};

struct EvalOptions {
    RasterBackend backend = RasterBackend::Reference;
    /// LPIPS is reported as null when absent.
    const Lpips* lpips = nullptr;
    /// When set, rendered views are written here as <id>.png.
    std::optional<std::filesystem::path> image_dir;
};

/// Renders each listed view at native resolution and scores it against its image.
MetricsReport evaluate_split(const Scene& scene, const PointModel& model, const std::vector<int>& ids,
                             const EvalOptions& options = {});

}  // namespace rpbg
