#include "harivo/train/trainer.hpp"

#include "harivo/data/clips.hpp"
#include "harivo/errors.hpp"
#include "harivo/util/log.hpp"

#include <cmath>
#include <sstream>

namespace harivo {

namespace {

std::uint64_t step_seed(std::uint64_t seed, std::int64_t step, std::uint64_t salt) {
    std::uint64_t s = seed * 0x9E3779B97F4A7C15ULL ^ (static_cast<std::uint64_t>(step) + 1) * 0xBF58476D1CE4E5B9ULL ^
                      salt * 0x94D049BB133111EBULL;
    s ^= s >> 31;
    s *= 0xD6E8FEB86659FD93ULL;
    s ^= s >> 32;
    return s;
}

constexpr std::uint64_t kPretrainSalt = 1, kTrainSalt = 2;

}  // namespace

std::unique_ptr<ClipSource> make_dataset(const RunConfig& config) {
    const auto& m = config.model;
    if (config.data.source == "manifest") {
        return std::make_unique<ManifestDataset>(
            load_manifest(config.resolve(config.data.manifest), m.frames, m.height, m.width));
    }
    return std::make_unique<InMemoryClips>(
        synthetic_clips(config.data.num_clips, m.frames, m.height, m.width, config.data.seed));
}

Batch draw_batch(const ClipSource& data, const ModelConfig& model, const NoiseSchedule& schedule,
                 std::int64_t batch_size, double caption_dropout, std::uint64_t seed, std::int64_t step) {
    if (data.size() == 0) throw StateError("empty dataset");
    auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
    Batch b;
    auto picks = torch::randint(static_cast<std::int64_t>(data.size()), {batch_size}, gen, torch::kInt64);
    auto drop = torch::rand({batch_size}, gen, torch::kDouble);
    auto ts = torch::randint(schedule.T(), {batch_size}, gen, torch::kInt64);
    std::vector<torch::Tensor> videos;
    std::vector<std::string> captions;
    for (std::int64_t i = 0; i < batch_size; ++i) {
        auto clip = data.get(static_cast<std::size_t>(picks[i].item<std::int64_t>()));
        if (clip.video.size(0) != model.frames || clip.video.size(1) != model.channels ||
            clip.video.size(2) != model.height || clip.video.size(3) != model.width) {
            throw ShapeError("clip shape does not match the model config");
        }
        videos.push_back(clip.video);
        captions.push_back(drop[i].item<double>() < caption_dropout ? std::string() : clip.caption);
        b.video_ids.push_back(clip.video_id);
        b.t.push_back(ts[i].item<std::int64_t>());
        if (model.frames >= 2) {
            auto perm = torch::randperm(model.frames, gen, torch::kInt64);
            b.pair.push_back({perm[0].item<std::int64_t>(), perm[1].item<std::int64_t>()});
        }
    }
    b.x0 = torch::stack(videos);
    b.ids = caption_ids(Vocabulary::builtin(), captions, model.max_tokens);
    b.eps = torch::randn(b.x0.sizes(), gen, b.x0.options());
    return b;
}

PretrainResult pretrain_spatial(T2VModel& model, const RunConfig& config, const ClipSource& data,
                                files::LineWriter* metrics) {
    if (model->spatial_frozen()) throw StateError("pretrain: spatial parameters are already frozen");
    const auto schedule = config.schedule.build();
    const auto& mc = model->config();
    const auto& tc = config.train;
    torch::optim::Adam opt(model->spatial_parameters(), torch::optim::AdamOptions(tc.pretrain_learning_rate));
    model->train();
    PretrainResult result;
    for (std::int64_t s = 0; s < tc.pretrain_steps; ++s) {
        auto batch = draw_batch(data, mc, schedule, tc.batch_size, tc.caption_dropout,
                                step_seed(tc.seed, s, kPretrainSalt), s);
        // frames become independent images with independent timesteps
        auto gen = at::make_generator<at::CPUGeneratorImpl>(step_seed(tc.seed, s, kPretrainSalt + 100));
        const auto n = batch.x0.size(0) * mc.frames;
        auto x0 = batch.x0.reshape({n, mc.channels, mc.height, mc.width});
        auto eps = batch.eps.reshape(x0.sizes());
        auto tt = torch::randint(schedule.T(), {n}, gen, torch::kInt64);
        std::vector<std::int64_t> t(tt.data_ptr<std::int64_t>(), tt.data_ptr<std::int64_t>() + n);
        auto x_t = q_sample(x0, t, eps, schedule);
        auto context = model->encode_text(batch.ids).repeat_interleave(mc.frames, 0);
        auto loss = simple_loss(model->spatial_forward(x_t, t, context), eps);
        const double value = loss.item<double>();
        if (!std::isfinite(value)) throw NumericError("pretrain: non-finite loss at step " + std::to_string(s));
        // linear decay to a tenth of the base rate
        const double frac = tc.pretrain_steps > 1 ? static_cast<double>(s) / (tc.pretrain_steps - 1) : 0.0;
        for (auto& group : opt.param_groups()) {
            static_cast<torch::optim::AdamOptions&>(group.options()).lr(tc.pretrain_learning_rate * (1.0 - 0.9 * frac));
        }
        opt.zero_grad();
        loss.backward();
        opt.step();
        result.losses.push_back(value);
        if (metrics && s % tc.log_interval == 0) {
            metrics->write_line(nlohmann::json{{"phase", "pretrain"}, {"step", s}, {"simple", value}}.dump());
        }
        if (s % 50 == 0) log::info("pretrain step " + std::to_string(s) + " loss " + std::to_string(value));
    }
    model->freeze_spatial();
    return result;
}

InflationTrainer::InflationTrainer(const RunConfig& config, T2VModel model, NegativeQueue queue, std::int64_t step)
    : config_(config),
      schedule_(config.schedule.build()),
      model_(std::move(model)),
      queue_(std::move(queue)),
      step_(step) {
    if (!model_->spatial_frozen()) throw StateError("train: spatial parameters must be pretrained and frozen");
    optimizer_ = std::make_unique<torch::optim::Adam>(model_->trainable_parameters(),
                                                      torch::optim::AdamOptions(config_.train.learning_rate_start));
}

LossBreakdown InflationTrainer::step(const ClipSource& data) {
    const auto& tc = config_.train;
    auto batch = draw_batch(data, model_->config(), schedule_, tc.batch_size, tc.caption_dropout,
                            step_seed(tc.seed, step_, kTrainSalt), step_);
    return train_step(batch);
}

LossBreakdown InflationTrainer::train_step(const Batch& batch) {
    const auto& tc = config_.train;
    const auto& mc = model_->config();
    const auto b = batch.x0.size(0);
    model_->train();

    auto x_t = q_sample(batch.x0, batch.t, batch.eps, schedule_);
    auto text = model_->encode_text(batch.ids);
    auto full = model_->forward(x_t, batch.t, model_->generate_frame_tokens(text, Mode::full), Mode::full, true);
    auto image = model_->forward(x_t, batch.t, model_->generate_frame_tokens(text, Mode::image_only), Mode::image_only);

    auto simple = simple_loss(full.eps, batch.eps);
    auto reg = reg_loss(full.eps, image.eps, batch.t, schedule_.T());
    auto trs = trs_loss(*full.record, static_cast<std::size_t>(mc.decoder_attention_layers()));

    // one positive pair per clip from the bottleneck features
    const auto& h = full.record->h;
    std::vector<torch::Tensor> firsts, seconds;
    for (std::int64_t i = 0; i < b; ++i) {
        firsts.push_back(h[i][batch.pair[i][0]]);
        seconds.push_back(h[i][batch.pair[i][1]]);
    }
    auto z = model_->project_h_batch(torch::cat({torch::stack(firsts), torch::stack(seconds)}));
    auto z1 = z.narrow(0, 0, b), z2 = z.narrow(0, b, b);
    torch::Tensor dc = torch::zeros({}, simple.options());
    std::int64_t dc_terms = 0;
    for (std::int64_t i = 0; i < b; ++i) {
        auto negatives = queue_.matrix(batch.video_ids[i]);
        if (negatives.size(0) == 0) continue;
        dc = dc + dc_loss(z1[i], z2[i], negatives, tc.temperature);
        ++dc_terms;
    }
    if (dc_terms > 0) dc = dc / static_cast<double>(dc_terms);

    auto total = weighted_total(simple, reg, trs, dc, tc.weights);
    const auto out = [&] {
        try {
            return total_loss(simple.item<double>(), reg.item<double>(), trs.item<double>(), dc.item<double>(),
                              tc.weights);
        } catch (const NumericError&) {
            std::ostringstream msg;
            msg << "non-finite loss at step " << step_ << ": simple=" << simple.item<double>()
                << " reg=" << reg.item<double>() << " trs=" << trs.item<double>() << " dc=" << dc.item<double>();
            throw NumericError(msg.str());
        }
    }();

    for (auto& group : optimizer_->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(tc.learning_rate_at(step_));
    }
    optimizer_->zero_grad();
    total.backward();
    optimizer_->step();

    std::vector<std::int64_t> ids;
    for (std::int64_t i = 0; i < b; ++i) ids.push_back(batch.video_ids[i]);
    for (std::int64_t i = 0; i < b; ++i) ids.push_back(batch.video_ids[i]);
    queue_.push(torch::cat({z1, z2}).detach(), ids);
    ++step_;
    return out;
}

void InflationTrainer::save(const std::filesystem::path& dir) {
    CheckpointInfo info;
    info.step = step_;
    info.phase = "train";
    info.extra = {{"run_config", to_json(config_)}};
    save_checkpoint(dir, model_, queue_, info, optimizer_.get());
}

InflationTrainer InflationTrainer::resume(const RunConfig& config, const std::filesystem::path& dir) {
    auto ck = load_checkpoint(dir, config.model);
    const auto step = ck.info.phase == "train" ? ck.info.step : 0;
    InflationTrainer trainer(config, ck.model, std::move(ck.queue), step);
    if (ck.info.phase == "train" && ck.optimizer_state) load_optimizer_state(*trainer.optimizer_, *ck.optimizer_state);
    return trainer;
}

std::vector<double> moving_average(const std::vector<double>& values, std::size_t window) {
    std::vector<double> out;
    if (window == 0 || values.size() < window) return out;
    double acc = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        acc += values[i];
        if (i >= window) acc -= values[i - window];
        if (i + 1 >= window) out.push_back(acc / static_cast<double>(window));
    }
    return out;
}

nlohmann::json to_json(const LossBreakdown& b) {
    return {{"simple", b.simple}, {"reg", b.reg}, {"trs", b.trs}, {"dc", b.dc}, {"total", b.total},
            {"weights", {{"trs", b.weights.trs}, {"reg", b.weights.reg}, {"dc", b.weights.dc}}}};
}

}  // namespace harivo
