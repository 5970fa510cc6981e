#include "rpbg/metrics.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "rpbg/errors.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace rpbg {

namespace {

torch::Tensor as_batch(const torch::Tensor& x) {
    auto d = x.detach().to(torch::kFloat64);
    return d.dim() == 3 ? d.unsqueeze(0) : d;
}

void check_pair(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
    if (a.sizes() != b.sizes())
        throw ConfigError(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " + c10::str(b.sizes()));
    if (a.dim() != 3 && a.dim() != 4) throw ConfigError(std::string(what) + ": expected [C,H,W] or [B,C,H,W]");
}

torch::Tensor gaussian_window(int size, double sigma) {
    auto g = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
    g = torch::exp(-(g * g) / (2 * sigma * sigma));
    g = g / g.sum();
    return g.unsqueeze(1) * g.unsqueeze(0);
}

nlohmann::json row_json(const ViewMetrics& r) {
    nlohmann::json j = {{"id", r.id}, {"name", r.name}, {"psnr", r.psnr}, {"ssim", r.ssim}};
    j["lpips"] = r.lpips ? nlohmann::json(*r.lpips) : nlohmann::json(nullptr);
    return j;
}

}  // namespace

double psnr(const torch::Tensor& pred, const torch::Tensor& target) {
    check_pair(pred, target, "psnr");
    const double mse = (as_batch(pred) - as_batch(target)).pow(2).mean().item<double>();
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const torch::Tensor& pred, const torch::Tensor& target) {
    check_pair(pred, target, "ssim");
    constexpr int kWin = 11;
    const auto x = as_batch(pred);
    const auto y = as_batch(target);
    if (x.size(2) < kWin || x.size(3) < kWin)
        throw ConfigError("ssim: image " + std::to_string(x.size(3)) + "x" + std::to_string(x.size(2)) +
                          " smaller than the 11x11 window");
    const auto c = x.size(1);
    const auto w = gaussian_window(kWin, 1.5).expand({c, 1, kWin, kWin}).contiguous();
    auto filt = [&](const torch::Tensor& t) { return F::conv2d(t, w, F::Conv2dFuncOptions().groups(c)); };
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    const auto mx = filt(x), my = filt(y);
    const auto sxx = filt(x * x) - mx * mx;
    const auto syy = filt(y * y) - my * my;
    const auto sxy = filt(x * y) - mx * my;
    const auto map = ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
    return map.mean().item<double>();
}

void MetricsReport::recompute_means() {
    mean_psnr = mean_ssim = 0.0;
    mean_lpips.reset();
    if (rows.empty()) return;
    double lp = 0.0;
    bool all_lpips = true;
    for (const auto& r : rows) {
        mean_psnr += r.psnr;
        mean_ssim += r.ssim;
        if (r.lpips)
            lp += *r.lpips;
        else
            all_lpips = false;
    }
    const double n = static_cast<double>(rows.size());
    mean_psnr /= n;
    mean_ssim /= n;
    if (all_lpips) mean_lpips = lp / n;
}

std::string MetricsReport::table() const {
    std::ostringstream os;
    auto lp = [](const std::optional<double>& v) {
        std::ostringstream s;
        if (v)
            s << std::fixed << std::setprecision(4) << *v;
        else
            s << "n/a";
        return s.str();
    };
    os << std::left << std::setw(8) << "id" << std::setw(24) << "name" << std::right << std::setw(10) << "PSNR"
       << std::setw(10) << "SSIM" << std::setw(10) << "LPIPS" << "\n";
    os << std::fixed;
    for (const auto& r : rows) {
        os << std::left << std::setw(8) << r.id << std::setw(24) << r.name.substr(0, 23) << std::right
           << std::setw(10) << std::setprecision(2) << r.psnr << std::setw(10) << std::setprecision(4) << r.ssim
           << std::setw(10) << lp(r.lpips) << "\n";
    }
    os << std::left << std::setw(32) << "mean" << std::right << std::setw(10) << std::setprecision(2) << mean_psnr
       << std::setw(10) << std::setprecision(4) << mean_ssim << std::setw(10) << lp(mean_lpips) << "\n";
    return os.str();
}

void MetricsReport::write(const fs::path& dir) const {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "metrics.jsonl");
        for (const auto& r : rows) out << row_json(r).dump() << "\n";
    }
    nlohmann::json summary = {{"views", rows.size()}, {"psnr", mean_psnr}, {"ssim", mean_ssim}, {"config", config}};
    summary["lpips"] = mean_lpips ? nlohmann::json(*mean_lpips) : nlohmann::json(nullptr);
    std::ofstream(dir / "summary.json") << summary.dump(2) << "\n";
    std::ofstream(dir / "table.txt") << table();
}

MetricsReport MetricsReport::read(const fs::path& dir) {
    MetricsReport report;
    std::ifstream in(dir / "metrics.jsonl");
    if (!in) throw DataError("cannot open " + (dir / "metrics.jsonl").string(), "E_IO");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw FormatError((dir / "metrics.jsonl").string() + ": invalid JSON row");
        ViewMetrics r;
        r.id = j.at("id").get<int>();
        r.name = j.value("name", "");
        r.psnr = j.at("psnr").get<double>();
        r.ssim = j.at("ssim").get<double>();
        if (!j.at("lpips").is_null()) r.lpips = j.at("lpips").get<double>();
        report.rows.push_back(std::move(r));
    }
    std::ifstream s(dir / "summary.json");
    if (s) {
        const auto j = nlohmann::json::parse(s, nullptr, false);
        if (!j.is_discarded()) {
            report.mean_psnr = j.value("psnr", 0.0);
            report.mean_ssim = j.value("ssim", 0.0);
            if (j.contains("lpips") && !j["lpips"].is_null()) report.mean_lpips = j["lpips"].get<double>();
            report.config = j.value("config", nlohmann::json::object());
        }
    }
    return report;
}

MetricsReport evaluate_split(const Scene& scene, const PointModel& model, const std::vector<int>& ids,
                             const EvalOptions& options) {
    MetricsReport report;
    if (ids.empty()) {
        log_warn("evaluation split is empty; writing an empty report");
        return report;
    }
    if (!options.lpips) log_warn("LPIPS weights not loaded; lpips is reported as null");
    if (options.image_dir) fs::create_directories(*options.image_dir);
    for (int id : ids) {
        const PosedImage& view = scene.image(id);
        const torch::Tensor target = view.load();
        const torch::Tensor pred = render_view(model, view.camera, view.pose, options.backend);
        ViewMetrics r;
        r.id = id;
        r.name = view.name;
        r.psnr = psnr(pred, target);
        r.ssim = ssim(pred, target);
        if (options.lpips) r.lpips = options.lpips->distance(pred.unsqueeze(0), target.unsqueeze(0)).item<double>();
        if (options.image_dir) write_image(pred, *options.image_dir / (std::to_string(id) + ".png"));
        report.rows.push_back(std::move(r));
    }
    report.recompute_means();
    return report;
}

}  // namespace rpbg
