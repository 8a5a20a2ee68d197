#include "harivo/diffusion.hpp"

#include "harivo/errors.hpp"

#include <cmath>
#include <string>

namespace harivo {

NoiseSchedule NoiseSchedule::linear(std::int64_t T, double beta_start, double beta_end) {
    if (T < 2) throw ParameterError("noise schedule needs T >= 2, got " + std::to_string(T));
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ParameterError("noise schedule needs 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.betas_.resize(T);
    s.alphas_.resize(T);
    s.alpha_bars_.resize(T);
    double prod = 1.0;
    for (std::int64_t t = 0; t < T; ++t) {
        double beta = beta_start + (beta_end - beta_start) * static_cast<double>(t) / static_cast<double>(T - 1);
        s.betas_[t] = beta;
        s.alphas_[t] = 1.0 - beta;
        prod *= s.alphas_[t];
        s.alpha_bars_[t] = prod;
    }
    return s;
}

void NoiseSchedule::check_timestep(std::int64_t t) const {
    if (t < 0 || t >= T()) {
        throw ParameterError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T()) + ")");
    }
}

double NoiseSchedule::beta(std::int64_t t) const {
    check_timestep(t);
    return betas_[t];
}

double NoiseSchedule::alpha_bar(std::int64_t t) const {
    check_timestep(t);
    return alpha_bars_[t];
}

void check_video(const torch::Tensor& x, std::string_view what) {
    if (!x.defined() || x.dim() != 5) {
        throw ShapeError(std::string(what) + ": expected a (B,F,C,H,W) tensor");
    }
    for (auto d : x.sizes()) {
        if (d <= 0) throw ShapeError(std::string(what) + ": all dimensions must be positive");
    }
    if (!torch::isfinite(x).all().item<bool>()) {
        throw NumericError(std::string(what) + ": contains NaN or Inf");
    }
}

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
    if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
        throw ShapeError(std::string(op) + ": operand shapes differ");
    }
}

// (B, 1, 1, ...) coefficient tensor broadcastable against `like`.
torch::Tensor per_item(const torch::Tensor& like, std::span<const std::int64_t> t, const NoiseSchedule& schedule,
                       double (*fn)(double)) {
    if (like.dim() == 0 || static_cast<std::int64_t>(t.size()) != like.size(0)) {
        throw ShapeError("need one timestep per batch item");
    }
    std::vector<double> vals(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) vals[i] = fn(schedule.alpha_bar(t[i]));
    std::vector<std::int64_t> shape(like.dim(), 1);
    shape[0] = static_cast<std::int64_t>(t.size());
    return torch::tensor(vals, torch::kDouble).to(like.scalar_type()).view(shape);
}

double sqrt_ab(double ab) { return std::sqrt(ab); }
double sqrt_one_minus_ab(double ab) { return std::sqrt(1.0 - ab); }

}  // namespace

torch::Tensor q_sample(const torch::Tensor& x0, std::int64_t t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule) {
    check_same_shape(x0, eps, "q_sample");
    const double ab = schedule.alpha_bar(t);
    return std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
}

torch::Tensor q_sample(const torch::Tensor& x0, std::span<const std::int64_t> t, const torch::Tensor& eps,
                       const NoiseSchedule& schedule) {
    check_same_shape(x0, eps, "q_sample");
    return per_item(x0, t, schedule, sqrt_ab) * x0 + per_item(x0, t, schedule, sqrt_one_minus_ab) * eps;
}

torch::Tensor predict_x0(const torch::Tensor& x_t, const torch::Tensor& eps_pred, std::int64_t t,
                         const NoiseSchedule& schedule) {
    check_same_shape(x_t, eps_pred, "predict_x0");
    const double ab = schedule.alpha_bar(t);
    return (x_t - std::sqrt(1.0 - ab) * eps_pred) / std::sqrt(ab);
}

torch::Tensor predict_x0(const torch::Tensor& x_t, const torch::Tensor& eps_pred, std::span<const std::int64_t> t,
                         const NoiseSchedule& schedule) {
    check_same_shape(x_t, eps_pred, "predict_x0");
    return (x_t - per_item(x_t, t, schedule, sqrt_one_minus_ab) * eps_pred) / per_item(x_t, t, schedule, sqrt_ab);
}

torch::Tensor forward_step(const torch::Tensor& x_prev, std::int64_t t, const torch::Tensor& eps,
                           const NoiseSchedule& schedule) {
    check_same_shape(x_prev, eps, "forward_step");
    const double beta = schedule.beta(t);
    return std::sqrt(1.0 - beta) * x_prev + std::sqrt(beta) * eps;
}

double mg_omega(const NoiseSchedule& schedule, std::int64_t t) {
    const double ab = schedule.alpha_bar(t);
    return std::sqrt((1.0 - ab) / ab);
}

}  // namespace harivo
