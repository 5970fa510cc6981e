#include "rpbg/trainer.hpp"

#include <yaml-cpp/yaml.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "rpbg/errors.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace rpbg {

namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "rpbg-checkpoint";

std::string read_text(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path.string(), "E_IO");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

const std::set<std::string> kTopKeys = {"lr_texture", "lr_renderer", "batch_size", "crop",     "plateau",
                                        "max_epochs", "max_steps",   "seed",       "deterministic",
                                        "env_mode",   "raster",      "loss",       "renderer", "perceptual_dir",
                                        "checkpoint_every", "grad_clip"};

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
    if (!(lr_texture > 0) || !(lr_renderer > 0)) throw ConfigError("learning rates must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (crop < 1) throw ConfigError("crop must be >= 1");
    if (plateau_patience < 1) throw ConfigError("plateau patience must be >= 1");
    if (!(plateau_factor > 0 && plateau_factor < 1)) throw ConfigError("plateau factor must lie in (0,1)");
    if (max_epochs < 0 || max_steps < 0) throw ConfigError("max_epochs and max_steps must be nonnegative");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
    if (!(grad_clip >= 0) || !std::isfinite(grad_clip)) throw ConfigError("grad_clip must be finite and >= 0");
    const std::int64_t div = std::int64_t{1} << (renderer.scales - 1);
    if (crop < div) throw ConfigError("crop smaller than the coarsest pyramid level");
    weights.validate();
    renderer.validate();
}

std::string TrainConfig::to_yaml() const {
    YAML::Node n;
    n["lr_texture"] = lr_texture;
    n["lr_renderer"] = lr_renderer;
    n["batch_size"] = batch_size;
    n["crop"] = crop;
    n["plateau"]["patience"] = plateau_patience;
    n["plateau"]["factor"] = plateau_factor;
    n["max_epochs"] = max_epochs;
    n["max_steps"] = max_steps;
    n["seed"] = seed;
    n["deterministic"] = deterministic;
    n["env_mode"] = env_mode == EnvMode::Learnable ? "learnable" : "zeros";
    n["grad_clip"] = grad_clip;
    n["raster"] = raster == RasterBackend::Reference ? "reference" : "native";
    n["loss"]["huber"] = weights.huber;
    n["loss"]["vgg"] = weights.vgg;
    n["loss"]["fft"] = weights.fft;
    n["renderer"] = YAML::Load(renderer.to_yaml());
    if (!perceptual_dir.empty()) n["perceptual_dir"] = perceptual_dir.string();
    n["checkpoint_every"] = checkpoint_every;
    return YAML::Dump(n) + "\n";
}

TrainConfig TrainConfig::from_yaml(const std::string& text) {
    TrainConfig c;
    c.source_text = text;
    try {
        const YAML::Node n = YAML::Load(text);
        if (n.IsNull()) {
            c.validate();
            return c;
        }
        if (!n.IsMap()) throw ConfigError("training config must be a key-value map");
        for (const auto& kv : n) {
            const auto key = kv.first.as<std::string>();
            if (!kTopKeys.count(key)) throw ConfigError("unknown training config key '" + key + "'");
        }
        c.lr_texture = n["lr_texture"].as<double>(c.lr_texture);
        c.lr_renderer = n["lr_renderer"].as<double>(c.lr_renderer);
        c.batch_size = n["batch_size"].as<int>(c.batch_size);
        c.crop = n["crop"].as<int>(c.crop);
        if (const auto p = n["plateau"]) {
            c.plateau_patience = p["patience"].as<int>(c.plateau_patience);
            c.plateau_factor = p["factor"].as<double>(c.plateau_factor);
        }
        c.max_epochs = n["max_epochs"].as<int>(c.max_epochs);
        c.max_steps = n["max_steps"].as<std::int64_t>(c.max_steps);
        c.seed = n["seed"].as<std::uint64_t>(c.seed);
        c.deterministic = n["deterministic"].as<bool>(c.deterministic);
        const auto env = n["env_mode"].as<std::string>("learnable");
        if (env == "learnable")
            c.env_mode = EnvMode::Learnable;
        else if (env == "zeros")
            c.env_mode = EnvMode::Zeros;
        else
            throw ConfigError("unknown env_mode '" + env + "' (expected learnable|zeros)");
        c.grad_clip = n["grad_clip"].as<double>(c.grad_clip);
        c.raster = parse_backend(n["raster"].as<std::string>("reference"));
        if (const auto l = n["loss"]) {
            c.weights.huber = l["huber"].as<double>(c.weights.huber);
            c.weights.vgg = l["vgg"].as<double>(c.weights.vgg);
            c.weights.fft = l["fft"].as<double>(c.weights.fft);
        }
        if (const auto r = n["renderer"]) c.renderer = RendererConfig::from_yaml(YAML::Dump(r));
        c.perceptual_dir = n["perceptual_dir"].as<std::string>("");
        c.checkpoint_every = n["checkpoint_every"].as<int>(c.checkpoint_every);
    } catch (const YAML::Exception& e) {
        throw ConfigError(std::string("training config: ") + e.what());
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const fs::path& path) { return from_yaml(read_text(path)); }

// ---------------------------------------------------------------- batches

namespace {

// Reflect-pads [3,H,W] on the right/bottom up to at least (h, w).
torch::Tensor pad_reflect(torch::Tensor img, std::int64_t h, std::int64_t w) {
    auto x = img.unsqueeze(0);
    while (x.size(2) < h || x.size(3) < w) {
        const auto ph = std::min(std::max<std::int64_t>(h - x.size(2), 0), x.size(2) - 1);
        const auto pw = std::min(std::max<std::int64_t>(w - x.size(3), 0), x.size(3) - 1);
        if (ph == 0 && pw == 0) {
            x = F::pad(x, F::PadFuncOptions({0, std::max<std::int64_t>(w - x.size(3), 0), 0,
                                             std::max<std::int64_t>(h - x.size(2), 0)})
                              .mode(torch::kReplicate));
            break;
        }
        x = F::pad(x, F::PadFuncOptions({0, pw, 0, ph}).mode(torch::kReflect));
    }
    return x.squeeze(0);
}

}  // namespace

std::vector<CropSample> sample_batch(const Scene& scene, const std::vector<int>& ids, int batch_size, int crop,
                                     std::mt19937_64& rng) {
    if (ids.empty()) throw DataError("training split is empty", "E_EMPTY_SPLIT");
    if (batch_size < 1 || crop < 1) throw ConfigError("batch_size and crop must be positive");
    std::uniform_int_distribution<std::size_t> pick(0, ids.size() - 1);
    std::vector<CropSample> batch;
    batch.reserve(static_cast<std::size_t>(batch_size));
    for (int b = 0; b < batch_size; ++b) {
        const PosedImage& view = scene.image(ids[pick(rng)]);
        const torch::Tensor img = view.load();
        const int w = view.camera.width, h = view.camera.height;
        CropSample s;
        s.image_id = view.id;
        s.pose = view.pose;
        s.origin.u = w > crop ? std::uniform_int_distribution<int>(0, w - crop)(rng) : 0;
        s.origin.v = h > crop ? std::uniform_int_distribution<int>(0, h - crop)(rng) : 0;
        if (w >= crop && h >= crop) {
            s.camera = crop_camera(view.camera, s.origin, {crop, crop});
            s.target = img.slice(1, s.origin.v, s.origin.v + crop).slice(2, s.origin.u, s.origin.u + crop);
        } else {
            s.padded = true;
            s.camera = view.camera;
            s.camera.cx -= s.origin.u;
            s.camera.cy -= s.origin.v;
            s.camera.width = crop;
            s.camera.height = crop;
            s.target = pad_reflect(img, crop, crop)
                           .slice(1, s.origin.v, s.origin.v + crop)
                           .slice(2, s.origin.u, s.origin.u + crop);
        }
        batch.push_back(std::move(s));
    }
    return batch;
}

// ---------------------------------------------------------------- scheduler

bool PlateauState::update(double loss) {
    if (loss < best) {
        best = loss;
        bad_epochs = 0;
        return false;
    }
    if (++bad_epochs >= patience) {
        bad_epochs = 0;
        return true;
    }
    return false;
}

double plateau_scheduler(std::span<const double> history, double current_lr, int patience, double factor) {
    PlateauState state{patience, factor};
    bool reduce = false;
    for (double loss : history) reduce = state.update(loss);
    return reduce ? current_lr * factor : current_lr;
}

// ---------------------------------------------------------------- sparse adam

SparseRowAdam::SparseRowAdam(std::int64_t rows, std::int64_t cols, double lr_, double beta1, double beta2,
                             double eps)
    : lr(lr_),
      m(torch::zeros({rows, cols}, torch::kFloat32)),
      v(torch::zeros({rows, cols}, torch::kFloat32)),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps) {}

void SparseRowAdam::step(torch::Tensor& param, const torch::Tensor& grad, const torch::Tensor& rows) {
    if (!grad.defined() || rows.numel() == 0) return;
    torch::NoGradGuard no_grad;
    ++steps;
    const auto g = grad.index_select(0, rows);
    const auto mr = m.index_select(0, rows).mul_(beta1_).add_(g, 1.0 - beta1_);
    const auto vr = v.index_select(0, rows).mul_(beta2_).addcmul_(g, g, 1.0 - beta2_);
    m.index_copy_(0, rows, mr);
    v.index_copy_(0, rows, vr);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps));
    const auto denom = vr.sqrt().div_(std::sqrt(bc2)).add_(eps_);
    const auto update = mr.div(denom).mul_(lr / bc1);
    param.index_copy_(0, rows, param.index_select(0, rows).sub_(update));
}

void SparseRowAdam::append_rows(std::int64_t n) {
    m = torch::cat({m, torch::zeros({n, m.size(1)}, m.options())});
    v = torch::cat({v, torch::zeros({n, v.size(1)}, v.options())});
}

void SparseRowAdam::keep_rows(const torch::Tensor& keep_index) {
    m = m.index_select(0, keep_index).contiguous();
    v = v.index_select(0, keep_index).contiguous();
}

// ---------------------------------------------------------------- checkpoint

namespace {

nlohmann::json record_json(const EpochRecord& r) {
    return {{"epoch", r.epoch},         {"steps", r.steps},   {"loss", r.loss},
            {"huber", r.huber},         {"vgg", r.vgg},       {"fft", r.fft},
            {"lr_texture", r.lr_texture}, {"lr_renderer", r.lr_renderer}, {"seconds", r.seconds},
            {"partial", r.partial}};
}

void write_log(const TrainLog& log, const fs::path& path) {
    std::ofstream out(path);
    for (const auto& r : log.epochs) out << record_json(r).dump() << "\n";
}

TrainLog read_log(const fs::path& path) {
    TrainLog log;
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw FormatError(path.string() + ": invalid log row");
        EpochRecord r;
        r.epoch = j.value("epoch", 0);
        r.steps = j.value("steps", std::int64_t{0});
        r.loss = j.value("loss", 0.0);
        r.huber = j.value("huber", 0.0);
        r.vgg = j.value("vgg", 0.0);
        r.fft = j.value("fft", 0.0);
        r.lr_texture = j.value("lr_texture", 0.0);
        r.lr_renderer = j.value("lr_renderer", 0.0);
        r.seconds = j.value("seconds", 0.0);
        r.partial = j.value("partial", false);
        log.epochs.push_back(r);
    }
    return log;
}

}  // namespace

void save_checkpoint(const fs::path& dir, const PointModel& model, const TrainConfig& config, const TrainLog& log,
                     const fs::path& scene_dir) {
    model.check_aligned();
    fs::create_directories(dir);
    save_texture(model.cloud, model.texture, dir / "texture");
    save_renderer(model.renderer, dir / "renderer");
    write_log(log, dir / "log.jsonl");
    std::ofstream(dir / "config.yaml") << (config.source_text.empty() ? config.to_yaml() : config.source_text);
    std::ofstream(dir / "effective_config.yaml") << config.to_yaml();
    const nlohmann::json meta = {{"format", kCheckpointFormat},
                                 {"version", kCheckpointVersion},
                                 {"scene", scene_dir.empty() ? std::string() : fs::absolute(scene_dir).string()},
                                 {"points", model.cloud.size()}};
    std::ofstream(dir / "checkpoint.json") << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream meta_in(dir / "checkpoint.json");
    if (!meta_in) throw DataError(dir.string() + ": not a checkpoint (missing checkpoint.json)", "E_CHECKPOINT");
    const auto meta = nlohmann::json::parse(meta_in, nullptr, false);
    if (meta.is_discarded() || meta.value("format", "") != kCheckpointFormat)
        throw FormatError(dir.string() + "/checkpoint.json: unrecognized checkpoint format");
    if (meta.value("version", 0) != kCheckpointVersion)
        throw DataError(dir.string() + ": checkpoint version " + std::to_string(meta.value("version", 0)) +
                            " unsupported (expected " + std::to_string(kCheckpointVersion) + ")",
                        "E_CHECKPOINT_VERSION");
    Checkpoint ck;
    auto [cloud, texture] = load_texture(dir / "texture");
    ck.model.cloud = std::move(cloud);
    ck.model.texture = std::move(texture);
    ck.model.renderer = load_renderer(dir / "renderer");
    ck.model.check_aligned();
    if (ck.model.renderer->config().in_channels != ck.model.texture.channels())
        throw DataError(dir.string() + ": renderer input channels differ from texture channels", "E_DESYNC");
    ck.config = TrainConfig::from_yaml(read_text(dir / "effective_config.yaml"));
    ck.config.source_text = read_text(dir / "config.yaml");
    ck.log = read_log(dir / "log.jsonl");
    ck.scene_dir = meta.value("scene", "");
    return ck;
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(const Scene& scene, TrainConfig config) : scene_(scene), config_(std::move(config)) {
    config_.renderer.in_channels = scene_.texture_channels;
    config_.validate();
    if (config_.deterministic) {
        torch::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
    model_.cloud = scene_.cloud;
    model_.texture = init_texture(static_cast<std::int64_t>(scene_.cloud.size()), scene_.texture_channels);
    model_.renderer = make_renderer(config_.renderer, config_.seed);
    setup();
}

Trainer::Trainer(const Scene& scene, TrainConfig config, PointModel model)
    : scene_(scene), config_(std::move(config)), model_(std::move(model)) {
    model_.check_aligned();
    config_.renderer = model_.renderer->config();
    config_.validate();
    if (config_.deterministic) {
        torch::set_num_threads(1);
        at::globalContext().setDeterministicAlgorithms(true, false);
    }
    torch::manual_seed(config_.seed);
    model_.texture.features = model_.texture.features.detach().clone().set_requires_grad(true);
    model_.texture.env = model_.texture.env.detach().clone().set_requires_grad(true);
    setup();
}

void Trainer::setup() {
    scene_.load_pixels();
    rng_.seed(config_.seed);
    plateau_ = PlateauState{config_.plateau_patience, config_.plateau_factor};
    if (config_.env_mode == EnvMode::Zeros) {
        model_.texture.env = torch::zeros_like(model_.texture.env).set_requires_grad(false);
    }
    renderer_opt_ = std::make_unique<torch::optim::Adam>(model_.renderer->parameters(),
                                                         torch::optim::AdamOptions(config_.lr_renderer));
    texture_opt_ = std::make_unique<SparseRowAdam>(model_.texture.size(), model_.texture.channels(),
                                                   config_.lr_texture);
    env_opt_ = std::make_unique<SparseRowAdam>(1, model_.texture.channels(), config_.lr_texture);
    if (config_.weights.vgg > 0) vgg_ = std::make_unique<VggPerceptualLoss>(VggPerceptualLoss::load(config_.perceptual_dir));
    touched_.assign(model_.cloud.size(), 0);
}

void clip_grad_norm(const std::vector<torch::Tensor>& grads, double max_norm, const char* group) {
    // Accumulated in float64: the first step's norms can exceed the float32 range.
    double sq = 0.0;
    for (const auto& g : grads) sq += g.to(torch::kFloat64).pow(2).sum().item<double>();
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError(std::string("non-finite ") + group + " gradient");
    if (norm <= max_norm) return;
    for (auto g : grads) {
        torch::NoGradGuard ng;
        g.copy_((g.to(torch::kFloat64) * (max_norm / norm)).to(g.scalar_type()));
    }
}

void Trainer::apply_lr() {
    for (auto& group : renderer_opt_->param_groups())
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(config_.lr_renderer * lr_scale_);
    texture_opt_->lr = config_.lr_texture * lr_scale_;
    env_opt_->lr = config_.lr_texture * lr_scale_;
}

double Trainer::step() {
    try {
        const auto batch =
            sample_batch(scene_, scene_.split.train_ids, config_.batch_size, config_.crop, rng_);
        const int scales = model_.scales();
        std::vector<std::vector<Fragment>> pyramids;
        pyramids.reserve(batch.size());
        std::vector<torch::Tensor> targets;
        const auto n = static_cast<std::int64_t>(model_.cloud.size());
        std::vector<std::uint8_t> mark(static_cast<std::size_t>(n), 0);
        bool env_seen = false;
        for (const CropSample& s : batch) {
            if (s.padded && !warned_padding_) {
                log_warn("image " + std::to_string(s.image_id) + " is smaller than the crop; reflect-padding");
                warned_padding_ = true;
            }
            pyramids.push_back(rasterize_pyramid(model_.cloud, s.camera, s.pose, scales, config_.raster));
            for (const Fragment& f : pyramids.back()) {
                for (std::int32_t i : f.index) {
                    if (i == kEnvIndex)
                        env_seen = true;
                    else
                        mark[static_cast<std::size_t>(i)] = 1;
                }
            }
            targets.push_back(s.target);
        }
        std::vector<std::int64_t> rows;
        for (std::int64_t i = 0; i < n; ++i) {
            if (mark[static_cast<std::size_t>(i)]) {
                rows.push_back(i);
                touched_[static_cast<std::size_t>(i)] = 1;
            }
        }

        auto& tex = model_.texture;
        tex.features.mutable_grad() = torch::Tensor();
        if (tex.env.requires_grad()) tex.env.mutable_grad() = torch::Tensor();
        renderer_opt_->zero_grad();

        const auto buffers = neural_buffers(tex, pyramids);
        const auto out = model_.renderer->forward(buffers);
        const auto terms = total_loss(out.raw, torch::stack(targets), config_.weights, vgg_.get());
        const double loss = terms.total.item<double>();
        if (!std::isfinite(loss))
            throw NumericError("non-finite loss at step " + std::to_string(total_steps_ + 1) +
                               "; last good checkpoint retained");
        terms.total.backward();
        if (config_.grad_clip > 0) {
            std::vector<torch::Tensor> renderer_grads;
            for (auto& p : model_.renderer->parameters())
                if (p.grad().defined()) renderer_grads.push_back(p.grad());
            clip_grad_norm(renderer_grads, config_.grad_clip, "renderer");
            clip_grad_norm({tex.features.grad()}, config_.grad_clip, "texture");
            if (tex.env.requires_grad() && tex.env.grad().defined()) clip_grad_norm({tex.env.grad()}, config_.grad_clip, "env");
        }
        renderer_opt_->step();
        {
            torch::NoGradGuard no_grad;
            const auto row_index = torch::tensor(rows, torch::kInt64);
            texture_opt_->step(tex.features, tex.features.grad(), row_index);
            if (config_.env_mode == EnvMode::Learnable && env_seen)
                env_opt_->step(tex.env, tex.env.grad(), torch::zeros({1}, torch::kInt64));
        }
        ++total_steps_;
        log_.step_losses.push_back(loss);
        last_terms_ = terms.values();
        return loss;
    } catch (const std::bad_alloc&) {
        throw ConfigError("out of host memory during a training step; reduce crop or batch_size", "E_MEMORY");
    }
}

EpochRecord Trainer::run_epoch(std::int64_t step_budget) {
    const auto full = static_cast<std::int64_t>(scene_.split.train_ids.size());
    if (full == 0) throw DataError("training split is empty", "E_EMPTY_SPLIT");
    const std::int64_t n = step_budget > 0 ? std::min(full, step_budget) : full;
    EpochRecord rec;
    rec.epoch = ++epoch_;
    rec.lr_texture = config_.lr_texture * lr_scale_;
    rec.lr_renderer = config_.lr_renderer * lr_scale_;
    const auto t0 = std::chrono::steady_clock::now();
    for (std::int64_t i = 0; i < n; ++i) {
        rec.loss += step();
        rec.huber += last_terms_.huber;
        rec.vgg += last_terms_.vgg;
        rec.fft += last_terms_.fft;
    }
    const double dn = static_cast<double>(n);
    rec.loss /= dn;
    rec.huber /= dn;
    rec.vgg /= dn;
    rec.fft /= dn;
    rec.steps = n;
    rec.partial = n < full;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_.epochs.push_back(rec);
    if (!rec.partial && plateau_.update(rec.loss)) {
        lr_scale_ *= config_.plateau_factor;
        apply_lr();
        log_info("plateau: learning rates scaled to x" + std::to_string(lr_scale_));
    }
    return rec;
}

void Trainer::train_steps(std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i) step();
}

const TrainLog& Trainer::run(const std::optional<fs::path>& checkpoint_dir) {
    int since_ckpt = 0;
    while (epoch_ < config_.max_epochs && (config_.max_steps == 0 || total_steps_ < config_.max_steps)) {
        const auto budget = config_.max_steps > 0 ? config_.max_steps - total_steps_ : 0;
        const EpochRecord rec = run_epoch(budget);
        log_info("epoch " + std::to_string(rec.epoch) + " loss " + std::to_string(rec.loss) + " (" +
                 std::to_string(rec.seconds) + " s)");
        if (checkpoint_dir && ++since_ckpt >= config_.checkpoint_every) {
            save(*checkpoint_dir);
            since_ckpt = 0;
        }
    }
    if (checkpoint_dir && since_ckpt > 0) save(*checkpoint_dir);
    if (checkpoint_dir && !fs::exists(*checkpoint_dir)) save(*checkpoint_dir);
    return log_;
}

void Trainer::save(const fs::path& dir) const {
    const fs::path tmp = dir.string() + ".partial";
    fs::remove_all(tmp);
    save_checkpoint(tmp, model_, config_, log_, scene_.root);
    const fs::path opt = tmp / "optimizer";
    fs::create_directories(opt);
    torch::save(*renderer_opt_, (opt / "renderer_adam.pt").string());
    write_matrix(texture_opt_->m, opt / "texture_m.bin");
    write_matrix(texture_opt_->v, opt / "texture_v.bin");
    write_matrix(env_opt_->m, opt / "env_m.bin");
    write_matrix(env_opt_->v, opt / "env_v.bin");
    const nlohmann::json state = {{"total_steps", total_steps_},  {"epoch", epoch_},
                                  {"lr_scale", lr_scale_},        {"plateau_best", plateau_.best},
                                  {"plateau_bad_epochs", plateau_.bad_epochs},
                                  {"texture_steps", texture_opt_->steps}, {"env_steps", env_opt_->steps}};
    std::ofstream(opt / "state.json") << state.dump(2) << "\n";
    fs::remove_all(dir);
    fs::rename(tmp, dir);
}

void Trainer::append_points(const PointCloud& extra) {
    if (extra.empty()) return;
    const auto k = static_cast<std::int64_t>(extra.size());
    PointCloud merged = model_.cloud;
    if (merged.has_colors() && !extra.has_colors()) {
        PointCloud padded = extra;
        padded.colors.assign(extra.size(), Vec3f(0.5f, 0.5f, 0.5f));
        merged.append(padded);
    } else {
        merged.append(extra);
    }
    model_.cloud = std::move(merged);
    auto& tex = model_.texture;
    tex.features = torch::cat({tex.features.detach(), torch::zeros({k, tex.channels()}, tex.features.options())})
                       .set_requires_grad(true);
    texture_opt_->append_rows(k);
    touched_.resize(model_.cloud.size(), 0);
}

void Trainer::keep_points(std::span<const bool> keep) {
    auto [cloud, texture] = prune(model_.cloud, model_.texture, keep);
    std::vector<std::int64_t> index;
    std::vector<std::uint8_t> touched;
    for (std::size_t i = 0; i < keep.size(); ++i) {
        if (!keep[i]) continue;
        index.push_back(static_cast<std::int64_t>(i));
        touched.push_back(touched_[i]);
    }
    texture_opt_->keep_rows(torch::tensor(index, torch::kInt64));
    model_.cloud = std::move(cloud);
    model_.texture.features = texture.features.detach().clone().set_requires_grad(true);
    touched_ = std::move(touched);
}

}  // namespace rpbg
