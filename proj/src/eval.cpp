#include "harivo/eval.hpp"

#include "harivo/data/clips.hpp"
#include "harivo/errors.hpp"
#include "harivo/util/log.hpp"

#include <cmath>

namespace harivo {

double smoothness_metric(const torch::Tensor& video) {
    if (video.dim() != 4) throw ShapeError("smoothness: expected (F, C, H, W)");
    const auto frames = video.size(0);
    if (frames < 2) throw ParameterError("smoothness needs at least two frames");
    auto v = video.detach().to(torch::kDouble);
    auto d = (v.narrow(0, 1, frames - 1) - v.narrow(0, 0, frames - 1)).flatten(1);
    const double n = static_cast<double>(d.size(1));
    return (d.norm(2, 1) / std::sqrt(n)).mean().item<double>();
}

torch::Tensor h_features(T2VModel& model, const torch::Tensor& video, const torch::Tensor& ids, std::int64_t t_probe,
                         const NoiseSchedule& schedule, std::uint64_t seed) {
    if (video.dim() != 4) throw ShapeError("h_features: expected (F, C, H, W)");
    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    auto x0 = video.unsqueeze(0).to(torch::kFloat);
    auto frame_noise = torch::randn({1, 1, x0.size(2), x0.size(3), x0.size(4)}, gen, x0.options());
    auto eps = frame_noise.expand(x0.sizes()).contiguous();
    auto x_t = q_sample(x0, t_probe, eps, schedule);
    std::vector<std::int64_t> t{t_probe};
    auto tokens = model->generate_frame_tokens(model->encode_text(ids), Mode::full);
    auto out = model->forward(x_t, t, tokens, Mode::full, true);
    if (was_training) model->train();
    return out.record->h[0].flatten(1).to(torch::kDouble);
}

double mean_pairwise_cosine(const torch::Tensor& features) {
    const auto n = features.size(0);
    if (n < 2) throw ParameterError("pairwise cosine needs at least two rows");
    auto u = torch::nn::functional::normalize(features.to(torch::kDouble),
                                              torch::nn::functional::NormalizeFuncOptions().dim(1).eps(1e-12));
    auto sim = torch::mm(u, u.t());
    // off-diagonal mean
    const double total = sim.sum().item<double>() - sim.diagonal().sum().item<double>();
    return total / static_cast<double>(n * (n - 1));
}

double mean_cross_cosine(const torch::Tensor& a, const torch::Tensor& b) {
    namespace F = torch::nn::functional;
    auto opts = F::NormalizeFuncOptions().dim(1).eps(1e-12);
    auto ua = F::normalize(a.to(torch::kDouble), opts), ub = F::normalize(b.to(torch::kDouble), opts);
    return torch::mm(ua, ub.t()).mean().item<double>();
}

double h_consistency_metric(T2VModel& model, const torch::Tensor& video, const torch::Tensor& ids,
                            std::int64_t t_probe, const NoiseSchedule& schedule, std::uint64_t seed) {
    return std::clamp(mean_pairwise_cosine(h_features(model, video, ids, t_probe, schedule, seed)), -1.0, 1.0);
}

EvalReport evaluate(T2VModel& model, const std::vector<std::string>& prompts, const SamplerConfig& sampler,
                    const NoiseSchedule& schedule, std::int64_t t_probe) {
    if (prompts.empty()) throw ParameterError("evaluate: no prompts");
    EvalReport report;
    report.sampler = sampler;
    report.t_probe = t_probe;
    const auto& vocab = Vocabulary::builtin();
    for (std::size_t i = 0; i < prompts.size(); ++i) {
        auto cfg = sampler;
        cfg.seed = sampler.seed + i;
        auto ids = caption_ids(vocab, {prompts[i]}, model->config().max_tokens);
        auto video = sample_video(model, ids, cfg, schedule)[0];
        VideoScore s;
        s.prompt = prompts[i];
        s.seed = cfg.seed;
        s.smoothness = smoothness_metric(video);
        s.h_consistency = h_consistency_metric(model, video, ids, t_probe, schedule, cfg.seed);
        report.per_video.push_back(s);
        log::info("eval '" + s.prompt + "': smoothness " + std::to_string(s.smoothness) + ", h-consistency " +
                  std::to_string(s.h_consistency));
    }
    for (const auto& s : report.per_video) {
        report.smoothness += s.smoothness;
        report.h_consistency += s.h_consistency;
    }
    report.smoothness /= static_cast<double>(report.per_video.size());
    report.h_consistency /= static_cast<double>(report.per_video.size());
    return report;
}

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& s : r.per_video) {
        per.push_back({{"prompt", s.prompt}, {"seed", s.seed}, {"smoothness", s.smoothness},
                       {"h_consistency", s.h_consistency}});
    }
    return {{"schema_version", kEvalSchemaVersion},
            {"smoothness", r.smoothness},
            {"h_consistency", r.h_consistency},
            {"t_probe", r.t_probe},
            {"sampler", to_json(r.sampler)},
            {"per_video", per}};
}

}  // namespace harivo
