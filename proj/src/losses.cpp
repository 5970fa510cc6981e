#include "rpbg/losses.hpp"

#include "rpbg/errors.hpp"

namespace rpbg {

namespace {

void check_shapes(const torch::Tensor& pred, const torch::Tensor& target, const char* what) {
    if (pred.sizes() != target.sizes())
        throw ConfigError(std::string(what) + ": shape mismatch " + c10::str(pred.sizes()) + " vs " +
                          c10::str(target.sizes()));
}

}  // namespace

void LossWeights::validate() const {
    if (huber < 0 || vgg < 0 || fft < 0) throw ConfigError("loss weights must be nonnegative");
    if (huber == 0 && vgg == 0 && fft == 0) throw ConfigError("at least one loss weight must be positive");
}

torch::Tensor huber(const torch::Tensor& pred, const torch::Tensor& target, double delta) {
    check_shapes(pred, target, "huber");
    if (!(delta > 0)) throw ConfigError("huber delta must be positive");
    return torch::huber_loss(pred, target, at::Reduction::Mean, delta);
}

torch::Tensor fft_loss(const torch::Tensor& pred, const torch::Tensor& target) {
    check_shapes(pred, target, "fft_loss");
    const auto a = torch::view_as_real(torch::fft::rfft2(pred));
    const auto b = torch::view_as_real(torch::fft::rfft2(target));
    return (a - b).abs().mean();
}

LossBreakdown LossTerms::values() const {
    auto v = [](const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; };
    return {v(huber), v(vgg), v(fft), v(total)};
}

double combine(const LossBreakdown& c, const LossWeights& w) { return w.huber * c.huber + w.vgg * c.vgg + w.fft * c.fft; }

LossTerms total_loss(const torch::Tensor& pred, const torch::Tensor& target, const LossWeights& weights,
                     const VggPerceptualLoss* vgg) {
    weights.validate();
    check_shapes(pred, target, "total_loss");
    LossTerms t;
    const auto zero = torch::zeros({}, pred.options());
    t.huber = weights.huber > 0 ? huber(pred, target) : zero;
    t.fft = weights.fft > 0 ? fft_loss(pred, target) : zero;
    if (weights.vgg > 0) {
        if (!vgg) throw AssetError("vgg loss weight is positive but no VGG-19 weights were loaded");
        t.vgg = (*vgg)(pred, target);
    } else {
        t.vgg = zero;
    }
    t.total = weights.huber * t.huber + weights.vgg * t.vgg + weights.fft * t.fft;
    return t;
}

}  // namespace rpbg
