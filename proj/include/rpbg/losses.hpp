#pragma once

#include <torch/torch.h>

#include "rpbg/perceptual.hpp"

namespace rpbg {

inline constexpr double kHuberDelta = 0.1;

struct LossWeights {
    double huber = 1e3;
    double vgg = 1.0;
    double fft = 1.0;

    /// Throws ConfigError on negative weights or when all are zero.
    void validate() const;
};

/// Mean over elements of 0.5 r^2 (|r| <= delta) or delta (|r| - 0.5 delta).
torch::Tensor huber(const torch::Tensor& pred, const torch::Tensor& target, double delta = kHuberDelta);

/// Mean absolute difference of the stacked real/imaginary rfft2 spectra,
/// taken per channel over the last two dimensions.
torch::Tensor fft_loss(const torch::Tensor& pred, const torch::Tensor& target);

struct LossBreakdown {
    double huber = 0.0;
    double vgg = 0.0;
    double fft = 0.0;
    double total = 0.0;
};

struct LossTerms {
    torch::Tensor total;
    torch::Tensor huber;
    torch::Tensor vgg;
    torch::Tensor fft;

    LossBreakdown values() const;
};

/// lambda_h * huber + lambda_v * vgg + lambda_f * fft.
double combine(const LossBreakdown& components, const LossWeights& weights);

/// Weighted training objective. `vgg` may be null only when weights.vgg == 0;
/// otherwise an AssetError is thrown. Terms with zero weight are not evaluated.
LossTerms total_loss(const torch::Tensor& pred, const torch::Tensor& target, const LossWeights& weights,
                     const VggPerceptualLoss* vgg = nullptr);

}  // namespace rpbg
