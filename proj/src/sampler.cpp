#include "harivo/sampler.hpp"

#include "harivo/errors.hpp"
#include "harivo/util/log.hpp"

#include <cmath>
#include <string>

namespace harivo {

void SamplerConfig::validate() const {
    if (steps < 1) throw ParameterError("sampler: steps must be >= 1");
    if (!(cfg_high >= 0.0) || !(cfg_low >= 0.0)) throw ParameterError("sampler: cfg scales must be >= 0");
    if (!(cfg_switch_fraction >= 0.0 && cfg_switch_fraction <= 1.0)) {
        throw ParameterError("sampler: cfg_switch_fraction must lie in [0, 1]");
    }
    if (!(mg_alpha >= 0.0)) throw ParameterError("sampler: mg_alpha must be >= 0");
    if (!(eta >= 0.0)) throw ParameterError("sampler: eta must be >= 0");
}

nlohmann::json to_json(const SamplerConfig& c) {
    return {{"steps", c.steps},       {"cfg_high", c.cfg_high}, {"cfg_low", c.cfg_low},
            {"cfg_switch_fraction", c.cfg_switch_fraction},     {"mg_alpha", c.mg_alpha},
            {"eta", c.eta},           {"seed", c.seed}};
}

SamplerConfig sampler_config_from_json(const nlohmann::json& j) {
    reject_unknown_keys(j, {"steps", "cfg_high", "cfg_low", "cfg_switch_fraction", "mg_alpha", "eta", "seed"},
                        "sampler");
    SamplerConfig c;
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) j.at(key).get_to(field);
        };
        get("steps", c.steps);
        get("cfg_high", c.cfg_high);
        get("cfg_low", c.cfg_low);
        get("cfg_switch_fraction", c.cfg_switch_fraction);
        get("mg_alpha", c.mg_alpha);
        get("eta", c.eta);
        get("seed", c.seed);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("sampler: ") + e.what());
    }
    c.validate();
    return c;
}

double cfg_scale_at(const SamplerConfig& config, std::int64_t t, std::int64_t T) {
    return static_cast<double>(t) >= config.cfg_switch_fraction * static_cast<double>(T) ? config.cfg_high
                                                                                         : config.cfg_low;
}

torch::Tensor cfg_combine(const torch::Tensor& eps_uncond, const torch::Tensor& eps_cond, double scale) {
    if (eps_uncond.sizes() != eps_cond.sizes()) throw ShapeError("cfg: prediction shapes differ");
    if (scale == 0.0) return eps_uncond.clone();
    if (scale == 1.0) return eps_cond.clone();
    return eps_uncond + scale * (eps_cond - eps_uncond);
}

torch::Tensor cfg_eps(T2VModel& model, const torch::Tensor& x_t, std::int64_t t, const TokenBundle& cond,
                      const TokenBundle& uncond, double scale) {
    if (cond.per_frame.sizes() != uncond.per_frame.sizes()) throw ShapeError("cfg: token bundles differ in shape");
    const auto b = x_t.size(0);
    // one batched forward for both branches
    TokenBundle both;
    both.per_frame = torch::cat({uncond.per_frame, cond.per_frame});
    both.text = torch::cat({uncond.text, cond.text});
    both.mode = Mode::full;
    both.frames = cond.frames;
    std::vector<std::int64_t> ts(static_cast<std::size_t>(2 * b), t);
    auto eps = model->forward(torch::cat({x_t, x_t}), ts, both, Mode::full).eps;
    return cfg_combine(eps.narrow(0, 0, b), eps.narrow(0, b, b), scale);
}

namespace {

// Average of the two middle values for even counts; rows of a (B, n) tensor.
torch::Tensor row_median(const torch::Tensor& v) {
    auto sorted = std::get<0>(v.sort(1));
    const auto n = v.size(1);
    if (n % 2 == 1) return sorted.select(1, n / 2);
    return 0.5 * (sorted.select(1, n / 2 - 1) + sorted.select(1, n / 2));
}

}  // namespace

torch::Tensor mg_guidance(const torch::Tensor& eps_pred, const torch::Tensor& x_t, std::int64_t t,
                          const NoiseSchedule& schedule, double alpha, double* mean_abs_g) {
    if (eps_pred.sizes() != x_t.sizes()) throw ShapeError("mg_guidance: eps and x_t shapes differ");
    if (x_t.dim() != 5) throw ShapeError("mg_guidance: expected (B,F,C,H,W)");
    const auto frames = x_t.size(1);
    if (frames < 3) throw ParameterError("mg_guidance needs at least three frames");
    if (mean_abs_g) *mean_abs_g = 0.0;
    if (alpha == 0.0) return eps_pred;

    const double omega = mg_omega(schedule, t);
    auto x0 = predict_x0(x_t, eps_pred, t, schedule).to(torch::kDouble);
    auto d = x0.narrow(1, 1, frames - 1) - x0.narrow(1, 0, frames - 1);  // (B, F-1, C, H, W)
    auto n = d.flatten(2).norm(2, 2);                                     // (B, F-1)
    auto median = row_median(n);
    auto s = median.pow(2) / std::log(static_cast<double>(frames - 1));  // (B)

    auto s_b = s.view({-1, 1});
    auto degenerate = s_b <= 0.0;
    auto safe_s = torch::where(degenerate, torch::ones_like(s_b), s_b);
    auto coeff = 2.0 * torch::exp(-n.pow(2) / safe_s) / safe_s * omega;  // (B, F-1)
    coeff = torch::where(degenerate, torch::zeros_like(coeff), coeff);
    auto g = coeff.view({coeff.size(0), coeff.size(1), 1, 1, 1}) * d;
    if (!torch::isfinite(g).all().item<bool>()) throw NumericError("mg_guidance: non-finite guidance");
    if (mean_abs_g) *mean_abs_g = g.abs().mean().item<double>();

    auto full = torch::cat({torch::zeros_like(g.narrow(1, 0, 1)), g}, 1).to(eps_pred.dtype());
    return eps_pred + alpha * full;
}

torch::Tensor ddim_step(const torch::Tensor& x_t, const torch::Tensor& eps_pred, std::int64_t t,
                        std::int64_t t_prev, const NoiseSchedule& schedule, double eta,
                        std::optional<at::Generator> gen) {
    if (!(t > t_prev && t_prev >= -1)) throw ParameterError("ddim_step: timesteps must decrease");
    auto x0 = predict_x0(x_t, eps_pred, t, schedule);
    if (t_prev < 0) return x0;
    const double ab_t = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);
    double sigma = 0.0;
    if (eta > 0.0) sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev));
    auto out = std::sqrt(ab_prev) * x0 + std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma)) * eps_pred;
    if (sigma > 0.0) {
        auto z = gen ? torch::randn(x_t.sizes(), *gen, x_t.options()) : torch::randn_like(x_t);
        out = out + sigma * z;
    }
    return out;
}

std::vector<std::int64_t> ddim_timesteps(std::int64_t T, std::int64_t steps) {
    if (steps < 1 || steps > T) throw ParameterError("ddim: steps must lie in [1, T]");
    const std::int64_t stride = T / steps;
    std::vector<std::int64_t> ts;
    for (std::int64_t i = steps - 1; i >= 0; --i) ts.push_back(i * stride);
    return ts;
}

torch::Tensor sample_video(T2VModel& model, const torch::Tensor& ids, const SamplerConfig& config,
                           const NoiseSchedule& schedule, files::LineWriter* trace) {
    config.validate();
    const auto& mc = model->config();
    if (config.mg_alpha > 0.0 && mc.frames < 3) throw ParameterError("mg guidance needs at least three frames");
    if (ids.dim() != 2 || ids.size(1) != mc.max_tokens) throw ShapeError("sample_video: ids must be (B, M)");

    torch::NoGradGuard no_grad;
    const bool was_training = model->is_training();
    model->eval();

    const auto b = ids.size(0);
    auto cond = model->generate_frame_tokens(model->encode_text(ids), Mode::full);
    auto empty = torch::full_like(ids, Vocabulary::eos_id);
    auto uncond = model->generate_frame_tokens(model->encode_text(empty), Mode::full);

    auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);
    auto x = torch::randn({b, mc.frames, mc.channels, mc.height, mc.width}, gen, torch::kFloat);

    auto ts = ddim_timesteps(schedule.T(), config.steps);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const auto t = ts[i];
        const auto t_prev = i + 1 < ts.size() ? ts[i + 1] : -1;
        const double scale = cfg_scale_at(config, t, schedule.T());
        auto eps = cfg_eps(model, x, t, cond, uncond, scale);
        double g_mag = 0.0;
        eps = mg_guidance(eps, x, t, schedule, config.mg_alpha, &g_mag);
        x = ddim_step(x, eps, t, t_prev, schedule, config.eta, gen);
        if (!torch::isfinite(x).all().item<bool>()) throw NumericError("sampling diverged at t=" + std::to_string(t));
        if (trace) {
            trace->write_line(
                nlohmann::json{{"step", i}, {"t", t}, {"cfg", scale}, {"mean_abs_g", g_mag}}.dump());
        }
        log::debug("sample step " + std::to_string(i) + " t=" + std::to_string(t));
    }
    if (was_training) model->train();
    return x.clamp(-1.0, 1.0);
}

torch::Tensor sample_video(T2VModel& model, std::string_view caption, const Vocabulary& vocab,
                           const SamplerConfig& config, const NoiseSchedule& schedule, files::LineWriter* trace) {
    auto ids = vocab.encode(caption, model->config().max_tokens);
    return sample_video(model, torch::tensor(ids, torch::kInt64).unsqueeze(0), config, schedule, trace);
}

}  // namespace harivo
