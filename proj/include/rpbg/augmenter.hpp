#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <vector>

#include "rpbg/point_cloud.hpp"
#include "rpbg/trainer.hpp"

namespace rpbg {

struct AugmentConfig {
    /// Candidates per round as a fraction of the current cloud size.
    double candidate_ratio = 0.5;
    /// Overrides candidate_ratio when set.
    std::optional<std::int64_t> n_candidates;
    /// Gaussian std as a multiple of the median nearest-neighbor distance.
    double sigma_multiple = 3.0;
    /// Percentile of existing-point sigma used as the keep threshold; 0 disables pruning.
    double threshold_percentile = 10.0;
    /// Absolute sigma threshold; overrides the percentile rule when set.
    std::optional<double> threshold_absolute;
    int iterations = 1;
    /// Training steps between sampling and verification; 0 means one epoch.
    std::int64_t verify_train_steps = 0;
    /// Retrain from a fresh model after each round instead of fine-tuning.
    bool from_scratch = false;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Median over points of the distance to the nearest other point (exact).
double median_nn_distance(const PointCloud& cloud);

struct CandidateSet {
    PointCloud points;
    /// Index of the parent in the cloud the candidates were drawn from.
    std::vector<std::int64_t> parents;
};

/// `count` points, each an isotropic Gaussian offset of std `stddev` around a
/// uniformly chosen existing point.
CandidateSet sample_candidates(const PointCloud& cloud, std::int64_t count, double stddev, std::mt19937_64& rng);
/// Count and std from the config rules.
CandidateSet sample_candidates(const PointCloud& cloud, const AugmentConfig& config, std::mt19937_64& rng);

struct VerifyResult {
    /// Per-candidate sigma after verification training.
    std::vector<double> sigma;
    /// Per-candidate: referenced by at least one training fragment.
    std::vector<std::uint8_t> rasterized;
    std::vector<bool> kept;
    double threshold = 0.0;
    std::int64_t n_kept = 0;
};

/// Appends `candidates` with zero texture rows to the trainer's model, trains
/// verify_train_steps, and drops candidates whose sigma is below the threshold.
/// Points that existed before the call are always kept.
VerifyResult verify_and_prune(Trainer& trainer, const CandidateSet& candidates, const AugmentConfig& config);

/// Per-point origin of an augmented cloud, row-aligned with it.
struct Provenance {
    /// Stable point id; original points keep their input index.
    std::vector<std::int64_t> id;
    /// 0 for input points, k for points added in round k.
    std::vector<int> round;
    /// Stable id of the parent, -1 for input points.
    std::vector<std::int64_t> parent;

    static Provenance identity(std::size_t n);
    void write(const std::filesystem::path& path) const;
    static Provenance read(const std::filesystem::path& path);
};

struct AugmentRound {
    int round = 0;
    std::int64_t candidates = 0;
    std::int64_t kept = 0;
    double threshold = 0.0;
    std::size_t cloud_size = 0;
};

struct AugmentResult {
    PointModel model;
    Provenance provenance;
    std::vector<AugmentRound> rounds;
};

/// Iterates sample -> verify -> prune. Starts from `initial` when given,
/// otherwise trains a fresh model with `train_config` first.
AugmentResult augment(const Scene& scene, const TrainConfig& train_config, const AugmentConfig& config,
                      std::optional<PointModel> initial = std::nullopt);

}  // namespace rpbg
