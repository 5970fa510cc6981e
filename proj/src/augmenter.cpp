#include "rpbg/augmenter.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <memory>
#include <unordered_map>

#include "rpbg/errors.hpp"

namespace fs = std::filesystem;

namespace rpbg {

void AugmentConfig::validate() const {
    if (!(candidate_ratio >= 0)) throw ConfigError("candidate_ratio must be >= 0");
    if (n_candidates && *n_candidates < 0) throw ConfigError("n_candidates must be >= 0");
    if (!(sigma_multiple >= 0)) throw ConfigError("sigma_multiple must be >= 0");
    if (!(threshold_percentile >= 0 && threshold_percentile < 100))
        throw ConfigError("threshold percentile must lie in [0,100)");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (verify_train_steps < 0) throw ConfigError("verify_train_steps must be >= 0");
}

// ---------------------------------------------------------------- nearest neighbors

namespace {

struct CellKey {
    std::int64_t x, y, z;
    bool operator==(const CellKey&) const = default;
};

struct CellHash {
    std::size_t operator()(const CellKey& k) const noexcept {
        const auto h = static_cast<std::uint64_t>(k.x) * 73856093u ^ static_cast<std::uint64_t>(k.y) * 19349663u ^
                       static_cast<std::uint64_t>(k.z) * 83492791u;
        return static_cast<std::size_t>(h);
    }
};

double median_of(std::vector<double> values) {
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double hi = values[mid];
    if (values.size() % 2) return hi;
    const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lo + hi);
}

}  // namespace

double median_nn_distance(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    if (n < 2) return 0.0;
    Eigen::Vector3d lo = cloud.positions[0].cast<double>(), hi = lo;
    for (const auto& p : cloud.positions) {
        lo = lo.cwiseMin(p.cast<double>());
        hi = hi.cwiseMax(p.cast<double>());
    }
    const double extent = (hi - lo).maxCoeff();
    if (extent <= 0) return 0.0;
    const double cell = extent / std::max(1.0, std::cbrt(static_cast<double>(n)));

    std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> grid;
    auto key_of = [&](const Eigen::Vector3d& p) {
        const Eigen::Vector3d q = (p - lo) / cell;
        return CellKey{static_cast<std::int64_t>(std::floor(q.x())), static_cast<std::int64_t>(std::floor(q.y())),
                       static_cast<std::int64_t>(std::floor(q.z()))};
    };
    for (std::size_t i = 0; i < n; ++i) grid[key_of(cloud.positions[i].cast<double>())].push_back(static_cast<std::uint32_t>(i));
    const std::int64_t max_ring = static_cast<std::int64_t>(std::ceil(extent / cell)) + 1;

    std::vector<double> nearest(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d p = cloud.positions[i].cast<double>();
        const CellKey c = key_of(p);
        double best = std::numeric_limits<double>::infinity();
        for (std::int64_t r = 0; r <= max_ring; ++r) {
            // Cells on ring r are at least (r-1)*cell away, since p sits anywhere in its own cell.
            if (r > 0 && std::sqrt(best) <= static_cast<double>(r - 1) * cell) break;
            for (std::int64_t dx = -r; dx <= r; ++dx)
                for (std::int64_t dy = -r; dy <= r; ++dy)
                    for (std::int64_t dz = -r; dz <= r; ++dz) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
                        const auto it = grid.find({c.x + dx, c.y + dy, c.z + dz});
                        if (it == grid.end()) continue;
                        for (std::uint32_t j : it->second) {
                            if (j == i) continue;
                            best = std::min(best, (cloud.positions[j].cast<double>() - p).squaredNorm());
                        }
                    }
        }
        nearest[i] = std::sqrt(best);
    }
    return median_of(std::move(nearest));
}

// ---------------------------------------------------------------- sampling

CandidateSet sample_candidates(const PointCloud& cloud, std::int64_t count, double stddev, std::mt19937_64& rng) {
    if (cloud.empty()) throw DataError("cannot sample candidates from an empty cloud", "E_EMPTY_SCENE");
    if (count < 0 || !(stddev >= 0)) throw ConfigError("candidate count and std must be nonnegative");
    CandidateSet out;
    std::uniform_int_distribution<std::size_t> pick(0, cloud.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (std::int64_t k = 0; k < count; ++k) {
        const std::size_t parent = pick(rng);
        const Eigen::Vector3d offset(normal(rng), normal(rng), normal(rng));
        out.points.positions.push_back((cloud.positions[parent].cast<double>() + stddev * offset).cast<float>());
        if (cloud.has_colors()) out.points.colors.push_back(cloud.colors[parent]);
        out.parents.push_back(static_cast<std::int64_t>(parent));
    }
    return out;
}

CandidateSet sample_candidates(const PointCloud& cloud, const AugmentConfig& config, std::mt19937_64& rng) {
    config.validate();
    const std::int64_t count =
        config.n_candidates ? *config.n_candidates
                            : static_cast<std::int64_t>(std::llround(config.candidate_ratio * static_cast<double>(cloud.size())));
    const double stddev = config.sigma_multiple * median_nn_distance(cloud);
    if (stddev == 0.0 && count > 0) log_warn("candidate std is zero; candidates duplicate their parents");
    return sample_candidates(cloud, count, stddev, rng);
}

// ---------------------------------------------------------------- verification

VerifyResult verify_and_prune(Trainer& trainer, const CandidateSet& candidates, const AugmentConfig& config) {
    config.validate();
    VerifyResult res;
    const std::size_t n_old = trainer.model().cloud.size();
    const std::size_t k = candidates.points.size();
    if (k == 0) return res;

    trainer.append_points(candidates.points);
    const std::int64_t steps = config.verify_train_steps > 0 ? config.verify_train_steps : trainer.epoch_steps();
    trainer.train_steps(steps);

    const torch::Tensor sigma = pseudo_density(trainer.model().texture).to(torch::kFloat64).contiguous();
    const double* s = sigma.data_ptr<double>();
    if (config.threshold_absolute) {
        res.threshold = *config.threshold_absolute;
    } else if (config.threshold_percentile <= 0.0) {
        res.threshold = -std::numeric_limits<double>::infinity();
    } else {
        const auto existing = sigma.slice(0, 0, static_cast<std::int64_t>(n_old));
        res.threshold = torch::quantile(existing, config.threshold_percentile / 100.0).item<double>();
    }

    std::unique_ptr<bool[]> keep(new bool[n_old + k]);
    std::fill_n(keep.get(), n_old + k, true);
    res.sigma.resize(k);
    res.rasterized.resize(k);
    res.kept.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        res.sigma[j] = s[n_old + j];
        res.rasterized[j] = trainer.touched()[n_old + j];
        res.kept[j] = res.sigma[j] >= res.threshold;
        keep[n_old + j] = res.kept[j];
        res.n_kept += res.kept[j] ? 1 : 0;
    }
    if (res.n_kept == 0) log_warn("augmentation discarded every candidate; the cloud is unchanged");
    trainer.keep_points(std::span<const bool>(keep.get(), n_old + k));
    return res;
}

// ---------------------------------------------------------------- provenance

Provenance Provenance::identity(std::size_t n) {
    Provenance p;
    for (std::size_t i = 0; i < n; ++i) {
        p.id.push_back(static_cast<std::int64_t>(i));
        p.round.push_back(0);
        p.parent.push_back(-1);
    }
    return p;
}

void Provenance::write(const fs::path& path) const {
    const nlohmann::json j = {{"version", 1}, {"id", id}, {"round", round}, {"parent", parent}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string(), "E_IO");
    out << j.dump() << "\n";
}

Provenance Provenance::read(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string(), "E_IO");
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + ": invalid provenance JSON");
    Provenance p;
    p.id = j.at("id").get<std::vector<std::int64_t>>();
    p.round = j.at("round").get<std::vector<int>>();
    p.parent = j.at("parent").get<std::vector<std::int64_t>>();
    if (p.id.size() != p.round.size() || p.id.size() != p.parent.size())
        throw FormatError(path.string() + ": provenance columns differ in length");
    return p;
}

// ---------------------------------------------------------------- driver

AugmentResult augment(const Scene& scene, const TrainConfig& train_config, const AugmentConfig& config,
                      std::optional<PointModel> initial) {
    config.validate();
    AugmentResult result;
    std::unique_ptr<Trainer> trainer;
    if (initial) {
        trainer = std::make_unique<Trainer>(scene, train_config, std::move(*initial));
    } else {
        trainer = std::make_unique<Trainer>(scene, train_config);
        trainer->run();
    }
    result.provenance = Provenance::identity(trainer->model().cloud.size());
    std::int64_t next_id = static_cast<std::int64_t>(trainer->model().cloud.size());
    std::mt19937_64 rng(config.seed);

    for (int round = 1; round <= config.iterations; ++round) {
        const CandidateSet candidates = sample_candidates(trainer->model().cloud, config, rng);
        const VerifyResult verified = verify_and_prune(*trainer, candidates, config);
        for (std::size_t j = 0; j < candidates.points.size(); ++j) {
            if (!verified.kept[j]) continue;
            result.provenance.id.push_back(next_id + static_cast<std::int64_t>(j));
            result.provenance.round.push_back(round);
            result.provenance.parent.push_back(result.provenance.id[static_cast<std::size_t>(candidates.parents[j])]);
        }
        next_id += static_cast<std::int64_t>(candidates.points.size());
        result.rounds.push_back({round, static_cast<std::int64_t>(candidates.points.size()), verified.n_kept,
                                 verified.threshold, trainer->model().cloud.size()});
        log_info("augment round " + std::to_string(round) + ": kept " + std::to_string(verified.n_kept) + " of " +
                 std::to_string(candidates.points.size()) + " candidates");
        if (config.from_scratch) {
            Scene next = scene;
            next.cloud = trainer->model().cloud;
            trainer = std::make_unique<Trainer>(next, train_config);
            trainer->run();
        }
    }
    result.model = trainer->model();
    return result;
}

}  // namespace rpbg
