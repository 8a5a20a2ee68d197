#include "harivo/cli.hpp"

#include "harivo/data/clips.hpp"
#include "harivo/data/image_io.hpp"
#include "harivo/data/manifest.hpp"
#include "harivo/errors.hpp"
#include "harivo/eval.hpp"
#include "harivo/noise_prior.hpp"
#include "harivo/sampler.hpp"
#include "harivo/train/checkpoint.hpp"
#include "harivo/train/run_config.hpp"
#include "harivo/train/trainer.hpp"
#include "harivo/util/files.hpp"
#include "harivo/util/log.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

namespace harivo {

namespace fs = std::filesystem;

namespace {

struct SampleArgs {
    std::string checkpoint, prompt, out;
    std::optional<double> alpha;
    std::optional<std::int64_t> steps;
    std::optional<std::uint64_t> seed;
};

// Sampler settings and schedule stored with a training checkpoint, if any.
std::pair<SamplerConfig, NoiseSchedule> run_settings(const LoadedCheckpoint& ck) {
    if (ck.info.extra.contains("run_config")) {
        auto rc = run_config_from_json(ck.info.extra.at("run_config"));
        return {rc.sampler, rc.schedule.build()};
    }
    return {SamplerConfig{}, NoiseSchedule::standard()};
}

void write_json(const fs::path& path, const nlohmann::json& j) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    files::write_atomic(path, j.dump(2) + "\n");
}

int run_pretrain(const std::string& config_path) {
    auto config = load_run_config(config_path);
    auto data = make_dataset(config);
    auto model = build_model(config.model, config.model.seed);
    fs::create_directories(config.output_dir());
    files::LineWriter metrics(config.output_dir() / "pretrain_metrics.jsonl");
    auto result = pretrain_spatial(model, config, *data, &metrics);
    CheckpointInfo info;
    info.step = config.train.pretrain_steps;
    info.phase = "pretrain";
    info.extra = {{"run_config", to_json(config)}};
    save_checkpoint(config.pretrained_dir(), model, NegativeQueue(static_cast<std::size_t>(config.model.queue_capacity)),
                    info);
    std::cout << nlohmann::json{{"phase", "pretrain"},
                                {"steps", result.losses.size()},
                                {"final_loss", result.losses.empty() ? 0.0 : result.losses.back()},
                                {"checkpoint", config.pretrained_dir().string()}}
                     .dump()
              << "\n";
    return 0;
}

int run_train(const std::string& config_path, const std::string& resume) {
    auto config = load_run_config(config_path);
    auto data = make_dataset(config);
    auto trainer = InflationTrainer::resume(config, resume.empty() ? config.pretrained_dir() : fs::path(resume));
    fs::create_directories(config.output_dir());
    files::LineWriter metrics(config.output_dir() / "train_metrics.jsonl", /*truncate=*/resume.empty());
    const auto& tc = config.train;
    LossBreakdown last;
    while (trainer.current_step() < tc.steps) {
        const auto step = trainer.current_step();
        last = trainer.step(*data);
        if (step % tc.log_interval == 0) {
            auto rec = to_json(last);
            rec["step"] = step;
            rec["lr"] = tc.learning_rate_at(step);
            metrics.write_line(rec.dump());
        }
        if (step % 20 == 0) log::info("train step " + std::to_string(step) + " total " + std::to_string(last.total));
        if (tc.checkpoint_interval > 0 && trainer.current_step() % tc.checkpoint_interval == 0 &&
            trainer.current_step() < tc.steps) {
            char name[32];
            std::snprintf(name, sizeof(name), "step_%06lld", static_cast<long long>(trainer.current_step()));
            trainer.save(config.output_dir() / "checkpoints" / name);
        }
    }
    trainer.save(config.final_dir());
    std::cout << nlohmann::json{{"phase", "train"},
                                {"steps", trainer.current_step()},
                                {"final", to_json(last)},
                                {"checkpoint", config.final_dir().string()}}
                     .dump()
              << "\n";
    return 0;
}

int run_sample(const SampleArgs& a) {
    auto ck = load_checkpoint(a.checkpoint);
    auto [sampler, schedule] = run_settings(ck);
    if (a.alpha) sampler.mg_alpha = *a.alpha;
    if (a.steps) sampler.steps = *a.steps;
    if (a.seed) sampler.seed = *a.seed;
    const fs::path out(a.out);
    fs::create_directories(out);
    torch::Tensor video;
    {
        files::LineWriter trace(out / "trace.jsonl");
        video = sample_video(ck.model, a.prompt, Vocabulary::builtin(), sampler, schedule, &trace)[0];
    }
    write_clip_frames(out, video);
    image::write_gif(out / "clip.gif", video);
    std::cout << nlohmann::json{{"frames", video.size(0)}, {"out", out.string()}, {"seed", sampler.seed},
                                {"mg_alpha", sampler.mg_alpha}, {"steps", sampler.steps}}
                     .dump()
              << "\n";
    return 0;
}

std::vector<std::string> eval_prompts(std::int64_t limit) {
    std::vector<std::string> all;
    for (const auto& spec : caption_grid()) all.push_back(caption_for(spec));
    if (limit <= 0 || limit >= static_cast<std::int64_t>(all.size())) return all;
    // spread the subset over the grid
    std::vector<std::string> out;
    for (std::int64_t i = 0; i < limit; ++i) out.push_back(all[static_cast<std::size_t>(i * all.size() / limit)]);
    return out;
}

int run_eval(const std::string& checkpoint, const std::string& config_path, const std::string& out,
             std::optional<std::int64_t> t_probe) {
    auto config = load_run_config(config_path);
    auto ck = load_checkpoint(checkpoint, config.model);
    auto schedule = config.schedule.build();
    auto report = evaluate(ck.model, eval_prompts(config.data.eval_prompt_limit), config.sampler, schedule,
                           t_probe.value_or(schedule.T() / 4));
    auto j = to_json(report);
    j["checkpoint"] = checkpoint;
    write_json(out, j);
    std::cout << nlohmann::json{{"smoothness", report.smoothness}, {"h_consistency", report.h_consistency},
                                {"videos", report.per_video.size()}}
                     .dump()
              << "\n";
    return 0;
}

int run_analyze_noise(const std::string& kind, double shared_weight, std::int64_t trials,
                      const std::vector<std::int64_t>& shape, std::uint64_t seed, const std::string& out,
                      const std::string& csv) {
    NoiseSpec spec;
    spec.kind = noise_kind_from_string(kind);
    if (shape.size() != 4) throw ParameterError("--shape needs four values F,C,H,W");
    std::copy(shape.begin(), shape.end(), spec.shape.begin());
    spec.shared_weight = shared_weight;
    spec.seed = seed;
    auto result = gaussianity_experiment(spec, trials);
    auto j = to_json(result);
    j["schema_version"] = 1;
    j["threshold"] = kGaussianityThreshold;
    write_json(out, j);
    if (!csv.empty()) write_trials_csv(csv, result);
    std::cout << j.dump() << "\n";
    return 0;
}

// Rows = tokens, columns = frames; maps (tokens, F, h, w) in [0, 1], each cell scaled up.
torch::Tensor heatmap_grid(const torch::Tensor& maps, std::int64_t scale) {
    const auto tokens = maps.size(0), frames = maps.size(1), h = maps.size(2), w = maps.size(3);
    const auto cell_h = h * scale, cell_w = w * scale;
    auto grid = torch::full({1, tokens * (cell_h + 1) + 1, frames * (cell_w + 1) + 1}, -1.0f);
    for (std::int64_t k = 0; k < tokens; ++k) {
        for (std::int64_t f = 0; f < frames; ++f) {
            auto cell = maps[k][f].repeat_interleave(scale, 0).repeat_interleave(scale, 1);
            grid[0]
                .narrow(0, 1 + k * (cell_h + 1), cell_h)
                .narrow(1, 1 + f * (cell_w + 1), cell_w)
                .copy_(cell * 2.0 - 1.0);
        }
    }
    return grid;
}

// Mean over tokens and pixels of the across-frame variance of each token's map.
double across_frame_variance(const torch::Tensor& maps) {
    if (maps.size(0) == 0) return 0.0;
    return maps.var(1, /*unbiased=*/false).mean().item<double>();
}

int run_inspect_attn(const std::string& checkpoint, const std::string& prompt, const std::string& out,
                     std::optional<std::uint64_t> seed, std::optional<std::int64_t> t_probe) {
    auto ck = load_checkpoint(checkpoint);
    auto [sampler, schedule] = run_settings(ck);
    if (seed) sampler.seed = *seed;
    const auto& mc = ck.model->config();
    const auto& vocab = Vocabulary::builtin();
    auto ids = caption_ids(vocab, {prompt}, mc.max_tokens);
    auto video = sample_video(ck.model, ids, sampler, schedule)[0];

    torch::NoGradGuard no_grad;
    ck.model->eval();
    const auto t = t_probe.value_or(schedule.T() / 2);
    auto gen = at::make_generator<at::CPUGeneratorImpl>(sampler.seed);
    auto x0 = video.unsqueeze(0);
    auto x_t = q_sample(x0, t, torch::randn(x0.sizes(), gen, x0.options()), schedule);
    std::vector<std::int64_t> ts{t};
    auto tokens = ck.model->generate_frame_tokens(ck.model->encode_text(ids), Mode::full);
    auto rec = *ck.model->forward(x_t, ts, tokens, Mode::full, true).record;

    // the output-nearest decoder layer has the finest maps
    const auto& cross = rec.cross_attn.back();  // (1, F, heads, q, M + K)
    const auto [h, w] = rec.layer_hw.back();
    auto maps = cross[0].mean(1).permute({2, 0, 1}).reshape({cross.size(4), mc.frames, h, w});  // (tokens, F, h, w)
    const auto words = static_cast<std::int64_t>((ids[0] != Vocabulary::eos_id).sum().item<std::int64_t>());
    auto text_maps = maps.narrow(0, 0, words);
    auto frame_maps = maps.narrow(0, mc.max_tokens, mc.frame_tokens);

    auto normalize = [](torch::Tensor m) {
        if (m.size(0) == 0) return m;
        auto peak = m.flatten(1).amax(1).clamp_min(1e-12).view({-1, 1, 1, 1});
        return m / peak;
    };
    const fs::path dir(out);
    fs::create_directories(dir);
    const auto scale = std::max<std::int64_t>(1, 64 / std::max(h, w));
    if (mc.frame_tokens > 0) image::write_png(dir / "frame_tokens.png", heatmap_grid(normalize(frame_maps), scale));
    if (words > 0) image::write_png(dir / "text_tokens.png", heatmap_grid(normalize(text_maps), scale));
    write_clip_frames(dir / "frames", video);

    nlohmann::json stats{{"schema_version", 1},
                         {"prompt", prompt},
                         {"t_probe", t},
                         {"layer_hw", {h, w}},
                         {"frame_tokens", mc.frame_tokens},
                         {"frame_token_variance", across_frame_variance(frame_maps)},
                         {"text_token_variance", across_frame_variance(text_maps)}};
    write_json(dir / "attention.json", stats);
    std::cout << stats.dump() << "\n";
    return 0;
}

}  // namespace

int cli(int argc, char** argv) {
    CLI::App app{"Video diffusion inflation toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all");

    std::string config_path, resume, checkpoint, out;
    auto* pretrain = app.add_subcommand("pretrain", "train the per-frame spatial model, then freeze it");
    pretrain->add_option("--config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);

    auto* train = app.add_subcommand("train", "train the inflated parts on top of the frozen spatial model");
    train->add_option("--config", config_path, "run config JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--resume", resume, "continue from this checkpoint directory");

    SampleArgs sample_args;
    double alpha = 0.0;
    std::int64_t steps = 0;
    std::uint64_t seed = 0;
    auto* sample = app.add_subcommand("sample", "generate a clip from a prompt");
    sample->add_option("--checkpoint", sample_args.checkpoint)->required();
    sample->add_option("--prompt", sample_args.prompt)->required();
    auto* alpha_opt = sample->add_option("--alpha", alpha, "mitigating-gradient strength")->check(CLI::NonNegativeNumber);
    auto* steps_opt = sample->add_option("--steps", steps, "DDIM steps")->check(CLI::PositiveNumber);
    auto* seed_opt = sample->add_option("--seed", seed);
    sample->add_option("--out", sample_args.out)->required();

    std::int64_t t_probe = 0;
    auto* eval = app.add_subcommand("eval", "score sampled clips over the caption grid");
    eval->add_option("--checkpoint", checkpoint)->required();
    eval->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    eval->add_option("--out", out)->required();
    auto* eval_t = eval->add_option("--t-probe", t_probe, "timestep for h-space features")->check(CLI::NonNegativeNumber);

    std::string kind = "iid", csv;
    double shared_weight = 0.5;
    std::int64_t trials = 10000;
    std::vector<std::int64_t> shape{8, 3, 32, 32};
    std::uint64_t noise_seed = 0;
    auto* noise = app.add_subcommand("analyze-noise", "Jarque-Bera Gaussianity of noise priors");
    noise->add_option("--kind", kind)->check(CLI::IsMember({"iid", "correlated"}));
    noise->add_option("--shared-weight", shared_weight)->check(CLI::Range(0.0, 1.0));
    noise->add_option("--trials", trials)->check(CLI::PositiveNumber);
    noise->add_option("--shape", shape, "F C H W")->expected(4)->delimiter(',');
    noise->add_option("--seed", noise_seed);
    noise->add_option("--csv", csv, "per-trial statistics");
    noise->add_option("--out", out)->required();

    std::string prompt;
    std::uint64_t attn_seed = 0;
    std::int64_t attn_t = 0;
    auto* inspect = app.add_subcommand("inspect-attn", "cross-attention heatmaps of the frame-wise tokens");
    inspect->add_option("--checkpoint", checkpoint)->required();
    inspect->add_option("--prompt", prompt)->required();
    inspect->add_option("--out", out)->required();
    auto* attn_seed_opt = inspect->add_option("--seed", attn_seed);
    auto* attn_t_opt = inspect->add_option("--t", attn_t)->check(CLI::NonNegativeNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*pretrain) return run_pretrain(config_path);
        if (*train) return run_train(config_path, resume);
        if (*sample) {
            if (*alpha_opt) sample_args.alpha = alpha;
            if (*steps_opt) sample_args.steps = steps;
            if (*seed_opt) sample_args.seed = seed;
            return run_sample(sample_args);
        }
        if (*eval) return run_eval(checkpoint, config_path, out, *eval_t ? std::optional(t_probe) : std::nullopt);
        if (*noise) return run_analyze_noise(kind, shared_weight, trials, shape, noise_seed, out, csv);
        if (*inspect) {
            return run_inspect_attn(checkpoint, prompt, out, *attn_seed_opt ? std::optional(attn_seed) : std::nullopt,
                                    *attn_t_opt ? std::optional(attn_t) : std::nullopt);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const c10::Error& e) {
        std::cerr << "error: " << e.what_without_backtrace() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int cli(const std::vector<std::string>& args) {
    std::vector<char*> argv;
    for (const auto& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    return cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace harivo
