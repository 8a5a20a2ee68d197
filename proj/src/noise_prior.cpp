#include "harivo/noise_prior.hpp"

#include "harivo/errors.hpp"
#include "harivo/util/files.hpp"

#include <ATen/Parallel.h>

#include <cmath>
#include <sstream>

namespace harivo {

const char* to_string(NoiseKind kind) { return kind == NoiseKind::iid ? "iid" : "correlated"; }

NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "iid") return NoiseKind::iid;
    if (s == "correlated") return NoiseKind::correlated;
    throw ParameterError("unknown noise kind '" + s + "' (expected iid or correlated)");
}

void NoiseSpec::validate() const {
    for (auto d : shape) {
        if (d <= 0) throw ParameterError("noise shape dimensions must be positive");
    }
    if (!(shared_weight >= 0.0 && shared_weight <= 1.0)) throw ParameterError("shared_weight must lie in [0, 1]");
}

torch::Tensor sample_noise(const NoiseSpec& spec, at::Generator& gen) {
    spec.validate();
    const auto [f, c, h, w] = spec.shape;
    auto opts = torch::TensorOptions().dtype(torch::kDouble);
    if (spec.kind == NoiseKind::iid) return torch::randn({1, f, c, h, w}, gen, opts);
    auto shared = torch::randn({1, 1, c, h, w}, gen, opts);
    auto own = torch::randn({1, f, c, h, w}, gen, opts);
    return std::sqrt(spec.shared_weight) * shared + std::sqrt(1.0 - spec.shared_weight) * own;
}

torch::Tensor sample_noise(const NoiseSpec& spec) {
    auto gen = at::make_generator<at::CPUGeneratorImpl>(spec.seed);
    return sample_noise(spec, gen);
}

JarqueBera jarque_bera(const torch::Tensor& sample) {
    auto x = sample.detach().to(torch::kDouble).flatten();
    const auto n = x.numel();
    if (n < 8) throw ParameterError("jarque_bera needs at least 8 values");
    auto d = x - x.mean();
    const double m2 = d.pow(2).mean().item<double>();
    if (!(m2 > 0.0)) throw DegenerateInputError("jarque_bera: constant sample");
    const double m3 = d.pow(3).mean().item<double>();
    const double m4 = d.pow(4).mean().item<double>();
    const double skew = m3 / std::pow(m2, 1.5);
    const double kurt = m4 / (m2 * m2) - 3.0;
    JarqueBera out;
    out.statistic = static_cast<double>(n) / 6.0 * (skew * skew + kurt * kurt / 4.0);
    // chi-square with two degrees of freedom: survival function exp(-x/2)
    out.p_value = std::exp(-out.statistic / 2.0);
    return out;
}

JarqueBera jarque_bera(const std::vector<double>& sample) {
    return jarque_bera(torch::tensor(sample, torch::kDouble));
}

GaussianityResult gaussianity_experiment(const NoiseSpec& spec, std::int64_t n_trials) {
    if (n_trials < 1) throw ParameterError("gaussianity_experiment needs n_trials >= 1");
    spec.validate();
    GaussianityResult result;
    result.spec = spec;
    result.n_trials = n_trials;
    result.trials.resize(static_cast<std::size_t>(n_trials));
    at::parallel_for(0, n_trials, 1, [&](std::int64_t begin, std::int64_t end) {
        for (std::int64_t i = begin; i < end; ++i) {
            // splitmix-style mixing keeps neighbouring seeds apart
            std::uint64_t s = spec.seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(i) + 1;
            s = (s ^ (s >> 30)) * 0xBF58476D1CE4E5B9ULL;
            s = (s ^ (s >> 27)) * 0x94D049BB133111EBULL;
            s ^= s >> 31;
            auto gen = at::make_generator<at::CPUGeneratorImpl>(s);
            result.trials[static_cast<std::size_t>(i)] = jarque_bera(sample_noise(spec, gen));
        }
    });
    std::int64_t passed = 0;
    double stat_sum = 0.0;
    for (const auto& t : result.trials) {
        if (t.p_value > kGaussianityThreshold) ++passed;
        stat_sum += t.statistic;
    }
    result.pass_rate = static_cast<double>(passed) / static_cast<double>(n_trials);
    result.mean_statistic = stat_sum / static_cast<double>(n_trials);
    return result;
}

nlohmann::json to_json(const GaussianityResult& r) {
    nlohmann::json j{{"kind", to_string(r.spec.kind)},
                     {"shape", r.spec.shape},
                     {"n_trials", r.n_trials},
                     {"pass_rate", r.pass_rate},
                     {"mean_statistic", r.mean_statistic},
                     {"seed", r.spec.seed}};
    j["shared_weight"] = r.spec.kind == NoiseKind::correlated ? nlohmann::json(r.spec.shared_weight) : nlohmann::json();
    return j;
}

void write_trials_csv(const std::filesystem::path& path, const GaussianityResult& result) {
    std::ostringstream out;
    out.precision(17);
    out << "trial,statistic,p_value\n";
    for (std::size_t i = 0; i < result.trials.size(); ++i) {
        out << i << ',' << result.trials[i].statistic << ',' << result.trials[i].p_value << '\n';
    }
    files::write_atomic(path, out.str());
}

}  // namespace harivo
