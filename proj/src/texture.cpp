#include "rpbg/texture.hpp"

#include <cstring>
#include <fstream>
#include <json.hpp>

#include "rpbg/errors.hpp"

namespace fs = std::filesystem;

namespace rpbg {

namespace {
constexpr int kTextureFormatVersion = 1;
}

void NeuralTexture::validate() const {
    if (!features.defined() || !env.defined()) throw NumericError("texture not initialized");
    if (features.dim() != 2 || env.dim() != 2 || env.size(0) != 1 || env.size(1) != features.size(1))
        throw NumericError("texture shape mismatch: features and env must be [N,C] and [1,C]");
    if (!torch::isfinite(features).all().item<bool>() || !torch::isfinite(env).all().item<bool>())
        throw NumericError("texture contains non-finite entries");
}

NeuralTexture NeuralTexture::clone() const {
    NeuralTexture t;
    t.features = features.detach().clone().set_requires_grad(features.requires_grad());
    t.env = env.detach().clone().set_requires_grad(env.requires_grad());
    return t;
}

NeuralTexture init_texture(std::int64_t n_points, std::int64_t channels) {
    if (n_points < 1) throw DataError("cannot build a texture for an empty scene", "E_EMPTY_SCENE");
    if (channels < 1) throw ConfigError("texture channels must be >= 1");
    NeuralTexture t;
    t.features = torch::zeros({n_points, channels}, torch::kFloat32).set_requires_grad(true);
    t.env = torch::zeros({1, channels}, torch::kFloat32).set_requires_grad(true);
    return t;
}

namespace {

// Fragment indices mapped into the [N+1]-row table where row N is env.
torch::Tensor table_indices(std::span<const Fragment* const> fragments, std::int64_t n_points) {
    std::size_t total = 0;
    for (const Fragment* f : fragments) total += f->index.size();
    auto idx = torch::empty({static_cast<std::int64_t>(total)}, torch::kInt64);
    auto* out = idx.data_ptr<std::int64_t>();
    std::size_t k = 0;
    for (const Fragment* f : fragments) {
        for (std::int32_t i : f->index) {
            if (i == kEnvIndex) {
                out[k++] = n_points;
            } else if (i < 0 || i >= n_points) {
                throw DataError("fragment references point " + std::to_string(i) + " but texture has " +
                                    std::to_string(n_points) + " rows",
                                "E_DESYNC");
            } else {
                out[k++] = i;
            }
        }
    }
    return idx;
}

}  // namespace

torch::Tensor gather_batch(const NeuralTexture& texture, std::span<const Fragment* const> fragments) {
    if (fragments.empty()) throw ConfigError("gather_batch requires at least one fragment");
    const int h = fragments.front()->height;
    const int w = fragments.front()->width;
    for (const Fragment* f : fragments) {
        if (f->height != h || f->width != w) throw ConfigError("gather_batch: fragments differ in size");
    }
    const std::int64_t n = texture.size();
    const std::int64_t c = texture.channels();
    const torch::Tensor idx = table_indices(fragments, n);
    const torch::Tensor table = torch::cat({texture.features, texture.env.to(texture.features.dtype())}, 0);
    const auto b = static_cast<std::int64_t>(fragments.size());
    return table.index_select(0, idx).view({b, h, w, c}).permute({0, 3, 1, 2}).contiguous();
}

torch::Tensor gather(const NeuralTexture& texture, const Fragment& fragment) {
    const Fragment* one[1] = {&fragment};
    return gather_batch(texture, one).squeeze(0);
}

torch::Tensor pseudo_density(const NeuralTexture& texture) {
    return texture.features.detach().abs().sum(1);
}

std::vector<std::int32_t> prune_index_map(std::span<const bool> keep_mask) {
    std::vector<std::int32_t> map(keep_mask.size(), -1);
    std::int32_t next = 0;
    for (std::size_t i = 0; i < keep_mask.size(); ++i) {
        if (keep_mask[i]) map[i] = next++;
    }
    return map;
}

std::pair<PointCloud, NeuralTexture> prune(const PointCloud& cloud, const NeuralTexture& texture,
                                           std::span<const bool> keep_mask) {
    if (static_cast<std::int64_t>(cloud.size()) != texture.size())
        throw DataError("cloud and texture row counts differ", "E_DESYNC");
    if (keep_mask.size() != cloud.size()) throw ConfigError("prune mask length differs from point count");
    std::vector<std::int64_t> kept;
    for (std::size_t i = 0; i < keep_mask.size(); ++i) {
        if (keep_mask[i]) kept.push_back(static_cast<std::int64_t>(i));
    }
    if (kept.empty()) throw DataError("prune would remove every point", "E_EMPTY_SCENE");
    const auto rows = torch::tensor(kept, torch::kInt64);
    NeuralTexture out;
    out.features = texture.features.detach().index_select(0, rows).clone().set_requires_grad(
        texture.features.requires_grad());
    out.env = texture.env.detach().clone().set_requires_grad(texture.env.requires_grad());
    return {cloud.select(keep_mask), out};
}

// ---------------------------------------------------------------- persistence

namespace {
constexpr char kMatrixMagic[8] = {'R', 'P', 'B', 'G', 'M', 'A', 'T', '1'};
}

void write_matrix(const torch::Tensor& matrix, const fs::path& path) {
    const auto m = matrix.detach().to(torch::kFloat32).contiguous();
    if (m.dim() != 2) throw ConfigError("write_matrix expects a 2-D tensor");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string(), "E_IO");
    out.write(kMatrixMagic, sizeof(kMatrixMagic));
    const std::uint32_t version = kTextureFormatVersion;
    const std::uint64_t dims[2] = {static_cast<std::uint64_t>(m.size(0)), static_cast<std::uint64_t>(m.size(1))};
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    out.write(reinterpret_cast<const char*>(m.data_ptr<float>()), static_cast<std::streamsize>(m.numel() * 4));
    if (!out) throw DataError("failed writing " + path.string(), "E_IO");
}

torch::Tensor read_matrix(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string(), "E_IO");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMatrixMagic, sizeof(magic)) != 0)
        throw FormatError(path.string() + ": not a matrix file");
    std::uint32_t version = 0;
    std::uint64_t dims[2];
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    in.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!in) throw FormatError(path.string() + ": truncated header");
    if (version != kTextureFormatVersion)
        throw FormatError(path.string() + ": unsupported matrix version " + std::to_string(version));
    auto m = torch::empty({static_cast<std::int64_t>(dims[0]), static_cast<std::int64_t>(dims[1])}, torch::kFloat32);
    in.read(reinterpret_cast<char*>(m.data_ptr<float>()), static_cast<std::streamsize>(m.numel() * 4));
    if (!in) throw FormatError(path.string() + ": truncated data");
    return m;
}

void save_texture(const PointCloud& cloud, const NeuralTexture& texture, const fs::path& dir) {
    if (static_cast<std::int64_t>(cloud.size()) != texture.size())
        throw DataError("cloud and texture row counts differ", "E_DESYNC");
    fs::create_directories(dir);
    save_point_cloud(cloud, dir / "points.ply");
    write_matrix(texture.features, dir / "features.bin");
    write_matrix(texture.env, dir / "env.bin");
    nlohmann::json meta;
    meta["version"] = kTextureFormatVersion;
    meta["channels"] = texture.channels();
    meta["points"] = texture.size();
    std::ofstream(dir / "meta.json") << meta.dump(2) << '\n';
}

std::pair<PointCloud, NeuralTexture> load_texture(const fs::path& dir) {
    std::ifstream meta_file(dir / "meta.json");
    if (!meta_file) throw DataError(dir.string() + ": missing texture meta.json", "E_CHECKPOINT");
    const auto meta = nlohmann::json::parse(meta_file, nullptr, false);
    if (meta.is_discarded() || meta.value("version", -1) != kTextureFormatVersion)
        throw FormatError(dir.string() + ": unsupported texture checkpoint version");
    PointCloud cloud = load_point_cloud(dir / "points.ply");
    NeuralTexture t;
    t.features = read_matrix(dir / "features.bin").set_requires_grad(true);
    t.env = read_matrix(dir / "env.bin").set_requires_grad(true);
    if (t.features.size(0) != static_cast<std::int64_t>(cloud.size()) || t.channels() != meta.at("channels").get<int>())
        throw FormatError(dir.string() + ": texture rows do not match the point cloud");
    t.validate();
    return {std::move(cloud), std::move(t)};
}

}  // namespace rpbg
