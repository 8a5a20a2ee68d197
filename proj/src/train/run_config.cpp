#include "harivo/train/run_config.hpp"

#include "harivo/errors.hpp"
#include "harivo/util/files.hpp"

namespace harivo {

namespace fs = std::filesystem;

double TrainConfig::learning_rate_at(std::int64_t step) const {
    if (steps <= 1) return learning_rate_start;
    const double frac = std::clamp(static_cast<double>(step) / static_cast<double>(steps - 1), 0.0, 1.0);
    return learning_rate_start + (learning_rate_end - learning_rate_start) * frac;
}

void TrainConfig::validate() const {
    if (pretrain_steps < 0 || steps < 0) throw ConfigError("train: step counts must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate_start > 0 && learning_rate_end > 0 && pretrain_learning_rate > 0)) {
        throw ConfigError("train: learning rates must be positive");
    }
    if (!(temperature > 0)) throw ConfigError("train: temperature must be positive");
    if (!(caption_dropout >= 0 && caption_dropout <= 1)) throw ConfigError("train: caption_dropout must lie in [0, 1]");
    if (checkpoint_interval < 0 || log_interval < 1) throw ConfigError("train: bad checkpoint/log interval");
}

fs::path RunConfig::resolve(const std::string& p) const {
    fs::path path(p);
    return path.is_absolute() || base_dir.empty() ? path : base_dir / path;
}

fs::path RunConfig::output_dir() const { return resolve(train.output_dir); }
fs::path RunConfig::pretrained_dir() const {
    return train.init_checkpoint.empty() ? output_dir() / "pretrained" : resolve(train.init_checkpoint);
}
fs::path RunConfig::final_dir() const { return output_dir() / "final"; }

nlohmann::json to_json(const RunConfig& c) {
    const auto& t = c.train;
    return {
        {"model", to_json(c.model)},
        {"schedule", {{"T", c.schedule.T}, {"beta_start", c.schedule.beta_start}, {"beta_end", c.schedule.beta_end}}},
        {"train",
         {{"pretrain_steps", t.pretrain_steps},
          {"pretrain_learning_rate", t.pretrain_learning_rate},
          {"steps", t.steps},
          {"batch_size", t.batch_size},
          {"learning_rate_start", t.learning_rate_start},
          {"learning_rate_end", t.learning_rate_end},
          {"lambda_trs", t.weights.trs},
          {"lambda_reg", t.weights.reg},
          {"lambda_dc", t.weights.dc},
          {"temperature", t.temperature},
          {"caption_dropout", t.caption_dropout},
          {"checkpoint_interval", t.checkpoint_interval},
          {"log_interval", t.log_interval},
          {"output_dir", t.output_dir},
          {"init_checkpoint", t.init_checkpoint},
          {"seed", t.seed}}},
        {"sampler", to_json(c.sampler)},
        {"data",
         {{"source", c.data.source},
          {"manifest", c.data.manifest},
          {"num_clips", c.data.num_clips},
          {"seed", c.data.seed},
          {"eval_prompt_limit", c.data.eval_prompt_limit}}},
    };
}

RunConfig run_config_from_json(const nlohmann::json& j, const fs::path& base_dir) {
    reject_unknown_keys(j, {"model", "schedule", "train", "sampler", "data"}, "config");
    RunConfig c;
    c.base_dir = base_dir;
    if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
    if (j.contains("sampler")) c.sampler = sampler_config_from_json(j.at("sampler"));
    try {
        auto get = [](const nlohmann::json& sec, const char* key, auto& field) {
            if (sec.contains(key)) sec.at(key).get_to(field);
        };
        if (j.contains("schedule")) {
            const auto& s = j.at("schedule");
            reject_unknown_keys(s, {"T", "beta_start", "beta_end"}, "schedule");
            get(s, "T", c.schedule.T);
            get(s, "beta_start", c.schedule.beta_start);
            get(s, "beta_end", c.schedule.beta_end);
        }
        if (j.contains("train")) {
            const auto& t = j.at("train");
            reject_unknown_keys(t,
                                {"pretrain_steps", "pretrain_learning_rate", "steps", "batch_size",
                                 "learning_rate_start", "learning_rate_end", "lambda_trs", "lambda_reg", "lambda_dc",
                                 "temperature", "caption_dropout", "checkpoint_interval", "log_interval",
                                 "output_dir", "init_checkpoint", "seed"},
                                "train");
            get(t, "pretrain_steps", c.train.pretrain_steps);
            get(t, "pretrain_learning_rate", c.train.pretrain_learning_rate);
            get(t, "steps", c.train.steps);
            get(t, "batch_size", c.train.batch_size);
            get(t, "learning_rate_start", c.train.learning_rate_start);
            get(t, "learning_rate_end", c.train.learning_rate_end);
            get(t, "lambda_trs", c.train.weights.trs);
            get(t, "lambda_reg", c.train.weights.reg);
            get(t, "lambda_dc", c.train.weights.dc);
            get(t, "temperature", c.train.temperature);
            get(t, "caption_dropout", c.train.caption_dropout);
            get(t, "checkpoint_interval", c.train.checkpoint_interval);
            get(t, "log_interval", c.train.log_interval);
            get(t, "output_dir", c.train.output_dir);
            get(t, "init_checkpoint", c.train.init_checkpoint);
            get(t, "seed", c.train.seed);
        }
        if (j.contains("data")) {
            const auto& d = j.at("data");
            reject_unknown_keys(d, {"source", "manifest", "num_clips", "seed", "eval_prompt_limit"}, "data");
            get(d, "source", c.data.source);
            get(d, "manifest", c.data.manifest);
            get(d, "num_clips", c.data.num_clips);
            get(d, "seed", c.data.seed);
            get(d, "eval_prompt_limit", c.data.eval_prompt_limit);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    try {
        c.schedule.build();
    } catch (const ParameterError& e) {
        throw ConfigError(std::string("schedule: ") + e.what());
    }
    c.train.validate();
    if (c.data.source != "synthetic" && c.data.source != "manifest") {
        throw ConfigError("data: source must be 'synthetic' or 'manifest'");
    }
    if (c.data.source == "manifest" && c.data.manifest.empty()) throw ConfigError("data: manifest path missing");
    if (c.data.num_clips < 1) throw ConfigError("data: num_clips must be >= 1");
    if (c.data.eval_prompt_limit < 0) throw ConfigError("data: eval_prompt_limit must be >= 0");
    return c;
}

RunConfig load_run_config(const fs::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(files::read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

}  // namespace harivo
