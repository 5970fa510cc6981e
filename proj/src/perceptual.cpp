#include "rpbg/perceptual.hpp"

#include <openssl/evp.h>

#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <json.hpp>
#include <sstream>

#include "rpbg/errors.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace rpbg {

namespace {

constexpr int kAssetVersion = 1;

const char* kAssetHelp =
    "; set RPBG_PERCEPTUAL_DIR to a directory produced by tools/export_perceptual_assets.py "
    "(needs torchvision and lpips with network access)";

std::vector<char> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("cannot open asset file " + path.string() + kAssetHelp);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_manifest(const fs::path& dir) {
    const fs::path file = dir / "manifest.json";
    std::ifstream in(file);
    if (!in) return nlohmann::json::object();
    auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw AssetError(file.string() + ": invalid manifest");
    return j;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
    const std::vector<char> bytes = read_bytes(path);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw AssetError("sha256 failed for " + path.string());
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return os.str();
}

std::optional<fs::path> perceptual_asset_dir(const fs::path& explicit_dir) {
    if (!explicit_dir.empty()) return explicit_dir;
    if (const char* env = std::getenv(kPerceptualDirEnv); env && *env) return fs::path(env);
    return std::nullopt;
}

TensorDict load_asset(const fs::path& dir, const std::string& name) {
    const nlohmann::json manifest = read_manifest(dir);
    if (!manifest.contains("assets") || !manifest["assets"].contains(name))
        throw AssetError("perceptual asset '" + name + "' not listed in " + (dir / "manifest.json").string() +
                         kAssetHelp);
    const auto& entry = manifest["assets"][name];
    const fs::path file = dir / entry.value("file", name + ".pt");
    if (!fs::exists(file)) throw AssetError("perceptual asset file missing: " + file.string() + kAssetHelp);
    const std::string expected = entry.value("sha256", "");
    const std::string actual = sha256_file(file);
    if (expected != actual)
        throw AssetError("checksum mismatch for " + file.string() + " (manifest " + expected + ", file " + actual +
                         ")");
    c10::IValue value;
    try {
        value = torch::pickle_load(read_bytes(file));
    } catch (const c10::Error&) {
        throw AssetError(file.string() + ": not a torch.save tensor dictionary");
    }
    if (!value.isGenericDict()) throw AssetError(file.string() + ": expected a dictionary of tensors");
    TensorDict out;
    for (const auto& item : value.toGenericDict()) {
        if (!item.key().isString() || !item.value().isTensor()) continue;
        out[item.key().toStringRef()] = item.value().toTensor().to(torch::kFloat32).contiguous();
    }
    return out;
}

void write_asset(const fs::path& dir, const std::string& name, const TensorDict& tensors) {
    fs::create_directories(dir);
    c10::Dict<std::string, torch::Tensor> dict;
    for (const auto& [k, v] : tensors) dict.insert(k, v.contiguous());
    const std::vector<char> bytes = torch::pickle_save(c10::IValue(dict));
    const std::string file = name + ".pt";
    {
        std::ofstream out(dir / file, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw DataError("cannot write " + (dir / file).string(), "E_IO");
    }
    nlohmann::json manifest = read_manifest(dir);
    manifest["version"] = kAssetVersion;
    manifest["assets"][name] = {{"file", file}, {"sha256", sha256_file(dir / file)}, {"version", kAssetVersion}};
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
}

// ---------------------------------------------------------------- layouts

VggLayout VggLayout::vgg19_perceptual() {
    return {{64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0},
            {2, 4, 8, 12}};
}

VggLayout VggLayout::vgg16_lpips() {
    return {{64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512}, {2, 4, 7, 10, 13}};
}

std::vector<int> VggLayout::conv_indices() const {
    std::vector<int> out;
    int idx = 0;
    for (int width : layers) {
        if (width == 0) {
            idx += 1;
        } else {
            out.push_back(idx);
            idx += 2;
        }
    }
    return out;
}

std::vector<int> VggLayout::tap_channels() const {
    std::vector<int> widths;
    for (int w : layers)
        if (w) widths.push_back(w);
    std::vector<int> out;
    for (int t : taps) out.push_back(widths.at(static_cast<std::size_t>(t - 1)));
    return out;
}

VggFeatures::VggFeatures(VggLayout layout, const TensorDict& weights) : layout_(std::move(layout)) {
    const auto indices = layout_.conv_indices();
    const int last_tap = layout_.taps.empty() ? 0 : layout_.taps.back();
    int in_channels = 3;
    int ordinal = 0;
    for (int width : layout_.layers) {
        if (width == 0) continue;
        if (++ordinal > last_tap) break;
        const std::string prefix = "features." + std::to_string(indices[static_cast<std::size_t>(ordinal - 1)]);
        auto w = weights.find(prefix + ".weight");
        auto b = weights.find(prefix + ".bias");
        if (w == weights.end() || b == weights.end()) throw AssetError("asset lacks " + prefix + " weight or bias");
        if (w->second.sizes() != torch::IntArrayRef({width, in_channels, 3, 3}) ||
            b->second.sizes() != torch::IntArrayRef({width}))
            throw AssetError("asset tensor " + prefix + " has an unexpected shape");
        weight_.push_back(w->second.detach());
        bias_.push_back(b->second.detach());
        in_channels = width;
    }
}

void VggFeatures::to(torch::Dtype dtype) {
    for (auto& w : weight_) w = w.to(dtype);
    for (auto& b : bias_) b = b.to(dtype);
}

std::vector<torch::Tensor> VggFeatures::forward(const torch::Tensor& x) const {
    std::vector<torch::Tensor> out;
    torch::Tensor h = x;
    std::size_t conv = 0, tap = 0;
    for (int width : layout_.layers) {
        if (tap == layout_.taps.size()) break;
        if (width == 0) {
            h = F::max_pool2d(h, F::MaxPool2dFuncOptions(2).stride(2));
            continue;
        }
        h = torch::relu(F::conv2d(h, weight_[conv], F::Conv2dFuncOptions().bias(bias_[conv]).padding(1)));
        ++conv;
        if (static_cast<int>(conv) == layout_.taps[tap]) {
            out.push_back(h);
            ++tap;
        }
    }
    return out;
}

TensorDict random_vgg_weights(const VggLayout& layout, std::uint64_t seed) {
    torch::manual_seed(seed);
    TensorDict out;
    const auto indices = layout.conv_indices();
    int in_channels = 3;
    std::size_t k = 0;
    for (int width : layout.layers) {
        if (width == 0) continue;
        const std::string prefix = "features." + std::to_string(indices[k++]);
        const double bound = std::sqrt(6.0 / (in_channels * 9));
        out[prefix + ".weight"] = torch::empty({width, in_channels, 3, 3}).uniform_(-bound, bound);
        out[prefix + ".bias"] = torch::empty({width}).uniform_(-0.05, 0.05);
        in_channels = width;
    }
    return out;
}

TensorDict random_lpips_weights(std::uint64_t seed) {
    const VggLayout layout = VggLayout::vgg16_lpips();
    TensorDict out = random_vgg_weights(layout, seed);
    const auto channels = layout.tap_channels();
    for (std::size_t k = 0; k < channels.size(); ++k)
        out["lin" + std::to_string(k) + ".model.1.weight"] = torch::rand({1, channels[k], 1, 1}) / channels[k];
    return out;
}

// ---------------------------------------------------------------- losses

VggPerceptualLoss::VggPerceptualLoss(const TensorDict& weights)
    : features_(VggLayout::vgg19_perceptual(), weights) {}

VggPerceptualLoss VggPerceptualLoss::load(const fs::path& dir) {
    const auto resolved = perceptual_asset_dir(dir);
    if (!resolved) throw AssetError(std::string("VGG-19 weights not configured") + kAssetHelp);
    return VggPerceptualLoss(load_asset(*resolved, kVgg19Asset));
}

torch::Tensor VggPerceptualLoss::operator()(const torch::Tensor& pred, const torch::Tensor& target) const {
    if (pred.sizes() != target.sizes()) throw ConfigError("vgg_loss: shape mismatch");
    const auto opts = pred.options();
    const auto mean = torch::tensor({0.485, 0.456, 0.406}, opts).view({1, 3, 1, 1});
    const auto std = torch::tensor({0.229, 0.224, 0.225}, opts).view({1, 3, 1, 1});
    const auto fp = features_.forward((pred - mean) / std);
    const auto ft = features_.forward((target - mean) / std);
    torch::Tensor total = torch::zeros({}, opts);
    for (std::size_t i = 0; i < fp.size(); ++i) total = total + (fp[i] - ft[i].detach()).abs().mean();
    return total;
}

Lpips::Lpips(const TensorDict& weights) : features_(VggLayout::vgg16_lpips(), weights) {
    const auto channels = features_.layout().tap_channels();
    for (std::size_t k = 0; k < channels.size(); ++k) {
        const std::string key = "lin" + std::to_string(k) + ".model.1.weight";
        auto it = weights.find(key);
        if (it == weights.end()) throw AssetError("LPIPS asset lacks " + key);
        if (it->second.sizes() != torch::IntArrayRef({1, channels[k], 1, 1}))
            throw AssetError("LPIPS head " + key + " has an unexpected shape");
        lin_.push_back(it->second.detach());
    }
}

Lpips Lpips::load(const fs::path& dir) {
    const auto resolved = perceptual_asset_dir(dir);
    if (!resolved) throw AssetError(std::string("LPIPS weights not configured") + kAssetHelp);
    return Lpips(load_asset(*resolved, kLpipsVggAsset));
}

torch::Tensor Lpips::distance(const torch::Tensor& pred, const torch::Tensor& target) const {
    if (pred.sizes() != target.sizes() || pred.dim() != 4) throw ConfigError("lpips: inputs must be equal [B,3,H,W]");
    torch::NoGradGuard no_grad;
    const auto opts = pred.options();
    const auto shift = torch::tensor({-0.030, -0.088, -0.188}, opts).view({1, 3, 1, 1});
    const auto scale = torch::tensor({0.458, 0.448, 0.450}, opts).view({1, 3, 1, 1});
    auto prep = [&](const torch::Tensor& x) { return ((x * 2 - 1) - shift) / scale; };
    const auto f0 = features_.forward(prep(pred));
    const auto f1 = features_.forward(prep(target));
    auto unit = [](const torch::Tensor& f) { return f / (f.pow(2).sum(1, true).sqrt() + 1e-10); };
    torch::Tensor total = torch::zeros({pred.size(0)}, opts);
    for (std::size_t k = 0; k < f0.size(); ++k) {
        const auto d = (unit(f0[k]) - unit(f1[k])).pow(2);
        total = total + F::conv2d(d, lin_[k].to(d.dtype())).mean({1, 2, 3});
    }
    return total;
}

}  // namespace rpbg
