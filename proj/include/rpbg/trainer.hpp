#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rpbg/losses.hpp"
#include "rpbg/pipeline.hpp"
#include "rpbg/scene.hpp"

namespace rpbg {

/// Learnable env vector, or env pinned at zero (ablation).
enum class EnvMode { Learnable, Zeros };

struct TrainConfig {
    double lr_texture = 1e-1;
    double lr_renderer = 1e-4;
    int batch_size = 8;
    int crop = 256;
    int plateau_patience = 5;
    double plateau_factor = 0.5;
    int max_epochs = 100;
    /// Stops after this many optimizer steps when > 0, even mid-epoch.
    std::int64_t max_steps = 0;
    std::uint64_t seed = 0;
    /// Single-threaded kernels and deterministic algorithms.
    bool deterministic = false;
    EnvMode env_mode = EnvMode::Learnable;
    /// Per-group (renderer, texture, env) gradient norm cap; 0 disables. The all-zero first
    /// texture feeds constant maps into instance norms, whose backward scales by 1/sqrt(eps)
    /// per layer and would overflow the float32 Adam moments.
    double grad_clip = 1.0;
    RasterBackend raster = RasterBackend::Reference;
    LossWeights weights;
    RendererConfig renderer;
    /// Directory with the VGG-19 asset; $RPBG_PERCEPTUAL_DIR when empty.
    std::filesystem::path perceptual_dir;
    /// Checkpoint cadence in epochs.
    int checkpoint_every = 1;

    /// Source text when loaded from a file; echoed into checkpoints.
    std::string source_text;

    void validate() const;
    std::string to_yaml() const;
    static TrainConfig from_yaml(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
};

struct EpochRecord {
    int epoch = 0;
    std::int64_t steps = 0;
    double loss = 0.0;
    double huber = 0.0;
    double vgg = 0.0;
    double fft = 0.0;
    double lr_texture = 0.0;
    double lr_renderer = 0.0;
    double seconds = 0.0;
    /// Fewer steps than a full epoch (run stopped by max_steps).
    bool partial = false;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    /// Total loss of every optimizer step, in order.
    std::vector<double> step_losses;
};

/// A training crop: target pixels plus the crop-adjusted camera.
struct CropSample {
    int image_id = 0;
    PixelOffset origin;
    CameraModel camera;
    Pose pose;
    /// [3,crop,crop].
    torch::Tensor target;
    /// Image smaller than the crop; reflect-padded on the right/bottom.
    bool padded = false;
};

/// Uniform image choice from `ids`, uniform crop origin over all valid positions.
std::vector<CropSample> sample_batch(const Scene& scene, const std::vector<int>& ids, int batch_size, int crop,
                                     std::mt19937_64& rng);

/// Reduce-on-plateau state machine: an epoch is bad when its loss does not
/// beat the best seen before it; `patience` consecutive bad epochs trigger a
/// reduction and reset the bad-epoch count.
struct PlateauState {
    int patience = 5;
    double factor = 0.5;
    double best = std::numeric_limits<double>::infinity();
    int bad_epochs = 0;

    /// Returns true when the learning rates should be multiplied by `factor`.
    bool update(double loss);
};

/// Learning rate after the last entry of `history`, replaying PlateauState.
double plateau_scheduler(std::span<const double> history, double current_lr, int patience = 5, double factor = 0.5);

/// Scales `grads` in place so their joint L2 norm is at most `max_norm`.
/// The norm is accumulated in float64; a non-finite norm is a NumericError.
void clip_grad_norm(const std::vector<torch::Tensor>& grads, double max_norm, const char* group);

/// Adam restricted to a set of rows per step; untouched rows keep their
/// values and moments. Bias correction uses the global step count.
class SparseRowAdam {
public:
    SparseRowAdam(std::int64_t rows, std::int64_t cols, double lr, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    /// Applies one update to `param` rows `rows` (int64, unique) from `grad`.
    void step(torch::Tensor& param, const torch::Tensor& grad, const torch::Tensor& rows);

    void append_rows(std::int64_t n);
    void keep_rows(const torch::Tensor& keep_index);

    double lr;
    std::int64_t steps = 0;
    torch::Tensor m, v;

private:
    double beta1_, beta2_, eps_;
};

/// Checkpoint contents other than optimizer state.
struct Checkpoint {
    PointModel model;
    TrainConfig config;
    TrainLog log;
    std::filesystem::path scene_dir;
};

/// Writes texture/, renderer/, log.jsonl, config.yaml and checkpoint.json.
void save_checkpoint(const std::filesystem::path& dir, const PointModel& model, const TrainConfig& config,
                     const TrainLog& log, const std::filesystem::path& scene_dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Collaborative optimization of texture and renderer on one scene.
class Trainer {
public:
    /// Fresh run: zero texture, seeded renderer. The scene is copied and its
    /// pixels made resident.
    Trainer(const Scene& scene, TrainConfig config);
    /// Continues from an existing model (optimizer moments start at zero).
    Trainer(const Scene& scene, TrainConfig config, PointModel model);

    /// One optimizer step on a fresh batch; returns the total loss.
    double step();
    EpochRecord run_epoch(std::int64_t step_budget = 0);
    void train_steps(std::int64_t n);
    /// Runs until max_epochs or max_steps. When `checkpoint_dir` is given, a
    /// checkpoint is written every `checkpoint_every` epochs and at the end.
    const TrainLog& run(const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

    void save(const std::filesystem::path& dir) const;

    /// Appends points with zero texture rows and zero moments.
    void append_points(const PointCloud& extra);
    /// Drops rows where `keep` is false, keeping moments aligned.
    void keep_points(std::span<const bool> keep);

    const PointModel& model() const { return model_; }
    PointModel& model() { return model_; }
    const TrainLog& log() const { return log_; }
    const TrainConfig& config() const { return config_; }
    std::int64_t total_steps() const { return total_steps_; }
    /// Optimizer steps per epoch (one per training image).
    std::int64_t epoch_steps() const { return static_cast<std::int64_t>(scene_.split.train_ids.size()); }
    /// Rows referenced by at least one training fragment so far.
    const std::vector<std::uint8_t>& touched() const { return touched_; }
    double lr_scale() const { return lr_scale_; }

private:
    void setup();
    void apply_lr();

    Scene scene_;
    TrainConfig config_;
    PointModel model_;
    TrainLog log_;
    std::mt19937_64 rng_;
    std::unique_ptr<torch::optim::Adam> renderer_opt_;
    std::unique_ptr<SparseRowAdam> texture_opt_;
    std::unique_ptr<SparseRowAdam> env_opt_;
    std::unique_ptr<VggPerceptualLoss> vgg_;
    PlateauState plateau_;
    double lr_scale_ = 1.0;
    std::int64_t total_steps_ = 0;
    int epoch_ = 0;
    std::vector<std::uint8_t> touched_;
    bool warned_padding_ = false;
    LossBreakdown last_terms_;
};

}  // namespace rpbg
