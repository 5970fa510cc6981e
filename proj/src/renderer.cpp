#include "rpbg/renderer.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "rpbg/errors.hpp"

namespace fs = std::filesystem;
namespace nn = torch::nn;

namespace rpbg {

// ---------------------------------------------------------------- config

std::pair<int, int> ffc_split(int channels, double ratio) {
    const double global = channels * ratio;
    const int g = static_cast<int>(std::lround(global));
    if (std::abs(global - g) > 1e-9 || g < 1 || g >= channels) {
        std::ostringstream os;
        os << "FFC split ratio " << ratio << " does not divide " << channels
           << " channels into non-empty local and global parts";
        throw ConfigError(os.str());
    }
    return {channels - g, g};
}

void RendererConfig::validate() const {
    if (in_channels < 1) throw ConfigError("renderer in_channels must be >= 1");
    if (scales < 1) throw ConfigError("renderer scales must be >= 1");
    if (static_cast<int>(widths.size()) != scales)
        throw ConfigError("renderer widths list has " + std::to_string(widths.size()) + " entries for " +
                          std::to_string(scales) + " scales");
    for (int w : widths) {
        if (w < 2) throw ConfigError("renderer widths must be >= 2");
        ffc_split(w, ffc_global_ratio);
    }
}

std::string RendererConfig::to_yaml() const {
    YAML::Emitter out;
    out << YAML::BeginMap;
    out << YAML::Key << "in_channels" << YAML::Value << in_channels;
    out << YAML::Key << "scales" << YAML::Value << scales;
    out << YAML::Key << "widths" << YAML::Value << YAML::Flow << widths;
    out << YAML::Key << "ffc_global_ratio" << YAML::Value << ffc_global_ratio;
    out << YAML::Key << "attention" << YAML::Value
        << (attention == AttentionMode::PerPixel ? "per_pixel" : "per_channel");
    out << YAML::EndMap;
    return std::string(out.c_str()) + "\n";
}

RendererConfig RendererConfig::from_yaml(const std::string& text) {
    RendererConfig c;
    try {
        const YAML::Node n = YAML::Load(text);
        c.in_channels = n["in_channels"].as<int>(c.in_channels);
        c.scales = n["scales"].as<int>(c.scales);
        if (n["widths"]) c.widths = n["widths"].as<std::vector<int>>();
        c.ffc_global_ratio = n["ffc_global_ratio"].as<double>(c.ffc_global_ratio);
        const auto mode = n["attention"].as<std::string>("per_pixel");
        if (mode == "per_pixel")
            c.attention = AttentionMode::PerPixel;
        else if (mode == "per_channel")
            c.attention = AttentionMode::PerChannel;
        else
            throw ConfigError("unknown attention mode '" + mode + "'");
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("renderer config: ") + e.what());
    }
    c.validate();
    return c;
}

// ---------------------------------------------------------------- blocks

namespace {

nn::Conv2d conv(int in, int out, int kernel, int stride = 1) {
    return nn::Conv2d(nn::Conv2dOptions(in, out, kernel)
                          .stride(stride)
                          .padding(kernel / 2)
                          .padding_mode(torch::kReplicate)
                          .bias(true));
}

nn::InstanceNorm2d instance_norm(int channels) {
    return nn::InstanceNorm2d(nn::InstanceNorm2dOptions(channels).affine(true));
}

}  // namespace

FourierUnitImpl::FourierUnitImpl(int channels_) : channels(channels_) {
    spectral = register_module("spectral", nn::Conv2d(nn::Conv2dOptions(2 * channels, 2 * channels, 1).bias(false)));
}

torch::Tensor FourierUnitImpl::forward(const torch::Tensor& x) {
    const auto h = x.size(-2);
    const auto w = x.size(-1);
    const auto freq = torch::fft::rfft2(x, c10::nullopt, {-2, -1}, "ortho");
    const auto stacked = torch::cat({torch::real(freq), torch::imag(freq)}, 1);
    const auto mixed = spectral->forward(stacked);
    const auto back = torch::complex(mixed.slice(1, 0, channels).contiguous(),
                                     mixed.slice(1, channels, 2 * channels).contiguous());
    return torch::fft::irfft2(back, std::vector<std::int64_t>{h, w}, {-2, -1}, "ortho");
}

SpectralTransformImpl::SpectralTransformImpl(int channels) {
    conv_in = register_module("conv_in", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
    fourier = register_module("fourier", FourierUnit(channels));
    conv_out = register_module("conv_out", nn::Conv2d(nn::Conv2dOptions(channels, channels, 1)));
}

torch::Tensor SpectralTransformImpl::forward(const torch::Tensor& x) {
    const auto h = torch::relu(conv_in->forward(x));
    return conv_out->forward(h + fourier->forward(h));
}

FfcBlockImpl::FfcBlockImpl(int channels, double global_ratio) {
    std::tie(local_channels, global_channels) = ffc_split(channels, global_ratio);
    local_to_local = register_module("local_to_local", conv(local_channels, local_channels, 3));
    global_to_local = register_module("global_to_local", conv(global_channels, local_channels, 3));
    local_to_global = register_module("local_to_global", conv(local_channels, global_channels, 3));
    global_to_global = register_module("global_to_global", SpectralTransform(global_channels));
    norm = register_module("norm", instance_norm(channels));
}

torch::Tensor FfcBlockImpl::forward(const torch::Tensor& x) {
    const auto xl = x.slice(1, 0, local_channels);
    const auto xg = x.slice(1, local_channels, local_channels + global_channels);
    const auto yl = local_to_local->forward(xl) + global_to_local->forward(xg);
    const auto yg = local_to_global->forward(xl) + global_to_global->forward(xg);
    return torch::relu(norm->forward(torch::cat({yl, yg}, 1)));
}

DacBlockImpl::DacBlockImpl(int in_channels, int out_channels, double global_ratio, AttentionMode mode) {
    local = register_module("local", conv(in_channels, out_channels, 3));
    lift = register_module("lift", conv(in_channels, out_channels, 1));
    global = register_module("spectral", FfcBlock(out_channels, global_ratio));
    fuse = register_module("fuse", conv(2 * out_channels, out_channels, 1));
    gate = register_module("gate", conv(out_channels, mode == AttentionMode::PerPixel ? 1 : out_channels, 3));
    content = register_module("content", conv(out_channels, out_channels, 3));
}

DacOutput DacBlockImpl::forward(const torch::Tensor& x) {
    const auto l = torch::relu(local->forward(x));
    const auto g = global->forward(lift->forward(x));
    const auto fused = torch::relu(fuse->forward(torch::cat({l, g}, 1)));
    DacOutput out;
    out.attention = torch::sigmoid(gate->forward(fused));
    out.features = out.attention * torch::leaky_relu(content->forward(fused), 0.2);
    return out;
}

ResBlockImpl::ResBlockImpl(int channels) {
    conv1 = register_module("conv1", conv(channels, channels, 3));
    norm1 = register_module("norm1", instance_norm(channels));
    conv2 = register_module("conv2", conv(channels, channels, 3));
    norm2 = register_module("norm2", instance_norm(channels));
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
    auto h = torch::relu(norm1->forward(conv1->forward(x)));
    h = norm2->forward(conv2->forward(h));
    return x + h;
}

// ---------------------------------------------------------------- renderer

NeuralRendererImpl::NeuralRendererImpl(RendererConfig config) : config_(std::move(config)) {
    config_.validate();
    const auto& w = config_.widths;
    const int s_count = config_.scales;
    for (int s = 0; s < s_count; ++s) {
        dac->push_back(DacBlock(config_.in_channels, w[s], config_.ffc_global_ratio, config_.attention));
        if (s > 0) {
            down->push_back(conv(w[s - 1], w[s], 3, 2));
            merge->push_back(conv(2 * w[s], w[s], 1));
        }
        encode->push_back(ResBlock(w[s]));
        if (s + 1 < s_count) {
            fuse_up->push_back(conv(w[s + 1] + w[s], w[s], 1));
            decode->push_back(ResBlock(w[s]));
        }
    }
    register_module("dac", dac);
    register_module("down", down);
    register_module("merge", merge);
    register_module("encode", encode);
    register_module("fuse_up", fuse_up);
    register_module("decode", decode);
    head = register_module("head", conv(w[0], 3, 3));
}

RenderOutput NeuralRendererImpl::forward(const std::vector<torch::Tensor>& buffers) {
    const int s_count = config_.scales;
    if (static_cast<int>(buffers.size()) != s_count)
        throw ConfigError("renderer expects " + std::to_string(s_count) + " buffers, got " +
                          std::to_string(buffers.size()));
    const auto h0 = buffers[0].size(2);
    const auto w0 = buffers[0].size(3);
    for (int s = 0; s < s_count; ++s) {
        const auto& b = buffers[static_cast<std::size_t>(s)];
        const std::int64_t div = std::int64_t{1} << s;
        if (b.dim() != 4 || b.size(1) != config_.in_channels || b.size(2) != (h0 + div - 1) / div ||
            b.size(3) != (w0 + div - 1) / div)
            throw ConfigError("buffer at scale " + std::to_string(s) + " violates the pyramid shape rule");
    }

    RenderOutput out;
    std::vector<torch::Tensor> enc(static_cast<std::size_t>(s_count));
    for (int s = 0; s < s_count; ++s) {
        DacOutput d = dac[static_cast<std::size_t>(s)]->as<DacBlock>()->forward(buffers[static_cast<std::size_t>(s)]);
        out.attention.push_back(d.attention);
        torch::Tensor x = d.features;
        if (s > 0) {
            const auto idx = static_cast<std::size_t>(s - 1);
            const auto shrunk = torch::relu(down[idx]->as<nn::Conv2d>()->forward(enc[idx]));
            x = torch::relu(merge[idx]->as<nn::Conv2d>()->forward(torch::cat({shrunk, x}, 1)));
        }
        enc[static_cast<std::size_t>(s)] = encode[static_cast<std::size_t>(s)]->as<ResBlock>()->forward(x);
    }

    torch::Tensor y = enc.back();
    for (int s = s_count - 2; s >= 0; --s) {
        const auto& skip = enc[static_cast<std::size_t>(s)];
        auto up = torch::nn::functional::interpolate(
            y, torch::nn::functional::InterpolateFuncOptions()
                   .scale_factor(std::vector<double>{2.0, 2.0})
                   .mode(torch::kNearest));
        up = up.slice(2, 0, skip.size(2)).slice(3, 0, skip.size(3));
        const auto idx = static_cast<std::size_t>(s);
        y = torch::relu(fuse_up[idx]->as<nn::Conv2d>()->forward(torch::cat({up, skip}, 1)));
        y = decode[idx]->as<ResBlock>()->forward(y);
    }
    out.raw = head->forward(y);
    return out;
}

NeuralRenderer make_renderer(const RendererConfig& config, std::uint64_t seed) {
    torch::manual_seed(seed);
    NeuralRenderer r(config);
    torch::NoGradGuard no_grad;
    for (std::size_t i = 0; i < r->dac->size(); ++i) r->dac[i]->as<DacBlock>()->gate->bias.zero_();
    return r;
}

torch::Tensor render(NeuralRenderer& renderer, const std::vector<torch::Tensor>& buffers) {
    torch::NoGradGuard no_grad;
    return renderer->forward(buffers).image();
}

std::vector<ParamEntry> parameter_report(const NeuralRenderer& renderer) {
    std::vector<ParamEntry> out;
    for (const auto& p : renderer->named_parameters()) {
        ParamEntry e;
        e.name = p.key();
        e.shape = p.value().sizes().vec();
        e.numel = p.value().numel();
        out.push_back(std::move(e));
    }
    return out;
}

std::int64_t parameter_count(const NeuralRenderer& renderer) {
    std::int64_t n = 0;
    for (const auto& p : renderer->parameters()) n += p.numel();
    return n;
}

void save_renderer(const NeuralRenderer& renderer, const fs::path& dir) {
    fs::create_directories(dir);
    const std::string yaml = renderer->config().to_yaml();
    torch::serialize::OutputArchive archive;
    renderer->save(archive);
    archive.write("__config__", c10::IValue(yaml));
    archive.save_to((dir / "params.pt").string());
    std::ofstream(dir / "arch.yaml") << yaml;
}

NeuralRenderer load_renderer(const fs::path& dir) {
    const fs::path file = dir / "params.pt";
    if (!fs::exists(file)) throw DataError(dir.string() + ": missing renderer params.pt", "E_CHECKPOINT");
    torch::serialize::InputArchive archive;
    try {
        archive.load_from(file.string());
    } catch (const c10::Error& e) {
        throw FormatError(file.string() + ": unreadable renderer archive");
    }
    c10::IValue cfg;
    if (!archive.try_read("__config__", cfg) || !cfg.isString())
        throw FormatError(file.string() + ": renderer archive lacks an embedded config");
    NeuralRenderer r(RendererConfig::from_yaml(cfg.toStringRef()));
    try {
        r->load(archive);
    } catch (const c10::Error& e) {
        throw FormatError(file.string() + ": renderer parameters do not match the embedded config");
    }
    return r;
}

}  // namespace rpbg
