#include "harivo/losses.hpp"

#include "harivo/errors.hpp"

#include <cmath>
#include <string>

namespace harivo {

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* op) {
    if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
        throw ShapeError(std::string(op) + ": operand shapes differ");
    }
}

torch::Tensor normalized(const torch::Tensor& z, const char* what) {
    auto norm = z.norm();
    if (!(norm.item<double>() > 0.0)) throw NumericError(std::string(what) + " has zero norm");
    return z / norm;
}

}  // namespace

torch::Tensor simple_loss(const torch::Tensor& eps_pred, const torch::Tensor& eps) {
    check_same_shape(eps_pred, eps, "simple_loss");
    return (eps_pred - eps).pow(2).mean();
}

torch::Tensor reg_loss(const torch::Tensor& eps_full, const torch::Tensor& eps_image, std::int64_t t,
                       std::int64_t T) {
    check_same_shape(eps_full, eps_image, "reg_loss");
    if (T <= 0 || t < 0 || t > T) throw ParameterError("reg_loss: timestep outside [0, T]");
    const double lambda = 1.0 - static_cast<double>(t) / static_cast<double>(T);
    return lambda * (eps_full - eps_image).pow(2).mean();
}

torch::Tensor reg_loss(const torch::Tensor& eps_full, const torch::Tensor& eps_image,
                       std::span<const std::int64_t> t, std::int64_t T) {
    check_same_shape(eps_full, eps_image, "reg_loss");
    if (static_cast<std::int64_t>(t.size()) != eps_full.size(0)) {
        throw ShapeError("reg_loss: need one timestep per clip");
    }
    std::vector<double> lambdas;
    for (auto ti : t) {
        if (T <= 0 || ti < 0 || ti > T) throw ParameterError("reg_loss: timestep outside [0, T]");
        lambdas.push_back(1.0 - static_cast<double>(ti) / static_cast<double>(T));
    }
    auto w = torch::tensor(lambdas, torch::kDouble).to(eps_full.dtype());
    auto per_clip = (eps_full - eps_image).pow(2).flatten(1).mean(1);
    return (w * per_clip).mean();
}

torch::Tensor trs_loss(const AttentionRecord& record, std::optional<std::size_t> expected_layers) {
    const auto& maps = record.self_attn;
    if (maps.empty()) throw StateError("trs_loss: record has no decoder self-attention maps");
    if (expected_layers && maps.size() != *expected_layers) {
        throw StateError("trs_loss: expected " + std::to_string(*expected_layers) + " decoder maps, got " +
                         std::to_string(maps.size()));
    }
    const double n_layers = static_cast<double>(maps.size());
    torch::Tensor total;
    for (std::size_t i = 0; i < maps.size(); ++i) {
        const auto& a = maps[i];
        if (!a.defined() || a.dim() < 2) throw StateError("trs_loss: malformed attention map");
        const auto frames = a.size(1);
        if (frames < 2) throw ParameterError("trs_loss needs at least two frames");
        auto diff = a.narrow(1, 1, frames - 1) - a.narrow(1, 0, frames - 1);
        // mean over map elements for each consecutive pair, summed over pairs
        auto per_pair = diff.abs().transpose(0, 1).reshape({frames - 1, -1}).mean(1).sum();
        auto term = (static_cast<double>(i + 1) / n_layers) * per_pair;
        total = total.defined() ? total + term : term;
    }
    return total;
}

NegativeQueue::NegativeQueue(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw ParameterError("negative queue capacity must be positive");
}

void NegativeQueue::push(const torch::Tensor& z, std::span<const std::int64_t> video_ids) {
    if (z.dim() != 2 || z.size(0) != static_cast<std::int64_t>(video_ids.size())) {
        throw ShapeError("push_negatives: expected (N, dim) vectors with N video ids");
    }
    if (!entries_.empty() && entries_.front().z.size(0) != z.size(1)) {
        throw ShapeError("push_negatives: dimension differs from queued vectors");
    }
    auto rows = z.detach().to(torch::kFloat).contiguous();
    // validate everything before mutating
    std::vector<torch::Tensor> unit;
    for (std::int64_t i = 0; i < rows.size(0); ++i) unit.push_back(normalized(rows[i], "queued vector").clone());
    for (std::size_t i = 0; i < unit.size(); ++i) {
        entries_.push_back({unit[i], video_ids[i]});
        if (entries_.size() > capacity_) entries_.pop_front();
    }
}

void NegativeQueue::push_raw(const torch::Tensor& z, std::int64_t video_id) {
    auto v = z.detach().to(torch::kFloat).contiguous().clone();
    if (v.dim() != 1) throw ShapeError("queue entries are vectors");
    if (std::abs(v.norm().item<double>() - 1.0) > 1e-5) throw NumericError("queue entry is not unit norm");
    entries_.push_back({v, video_id});
    if (entries_.size() > capacity_) entries_.pop_front();
}

torch::Tensor NegativeQueue::matrix(std::optional<std::int64_t> exclude_video) const {
    std::vector<torch::Tensor> rows;
    for (const auto& e : entries_) {
        if (exclude_video && e.video_id == *exclude_video) continue;
        rows.push_back(e.z);
    }
    if (rows.empty()) {
        const auto dim = entries_.empty() ? 0 : entries_.front().z.size(0);
        return torch::zeros({0, dim});
    }
    return torch::stack(rows);
}

void push_negatives(NegativeQueue& queue, const torch::Tensor& z, std::span<const std::int64_t> video_ids) {
    queue.push(z, video_ids);
}

torch::Tensor dc_loss(const torch::Tensor& z1, const torch::Tensor& z2, const torch::Tensor& negatives,
                      double tau) {
    if (!(tau > 0.0)) throw ParameterError("dc_loss: temperature must be positive");
    if (!negatives.defined() || negatives.dim() != 2 || negatives.size(0) == 0) {
        throw StateError("dc_loss: negative queue is empty");
    }
    if (z1.dim() != 1 || z1.sizes() != z2.sizes() || negatives.size(1) != z1.size(0)) {
        throw ShapeError("dc_loss: vector dimensions differ");
    }
    auto u1 = normalized(z1, "dc_loss z1");
    auto u2 = normalized(z2, "dc_loss z2");
    auto q = negatives.detach().to(z1.dtype());
    q = q / q.norm(2, 1, true);
    auto pos = (u1 * u2).sum() / tau;
    auto neg = torch::logsumexp(torch::mv(q, u1) / tau, 0);
    return neg - pos;
}

torch::Tensor dc_loss(const torch::Tensor& z1, const torch::Tensor& z2, const NegativeQueue& queue, double tau) {
    if (queue.empty()) throw StateError("dc_loss: negative queue is empty");
    return dc_loss(z1, z2, queue.matrix(), tau);
}

LossBreakdown total_loss(double simple, double reg, double trs, double dc, const LossWeights& weights) {
    for (double v : {simple, reg, trs, dc, weights.trs, weights.reg, weights.dc}) {
        if (!std::isfinite(v)) throw NumericError("total_loss: non-finite input");
    }
    LossBreakdown out;
    out.simple = simple;
    out.reg = reg;
    out.trs = trs;
    out.dc = dc;
    out.weights = weights;
    out.total = simple + weights.trs * trs + weights.reg * reg + weights.dc * dc;
    return out;
}

torch::Tensor weighted_total(const torch::Tensor& simple, const torch::Tensor& reg, const torch::Tensor& trs,
                             const torch::Tensor& dc, const LossWeights& weights) {
    return simple + weights.trs * trs + weights.reg * reg + weights.dc * dc;
}

}  // namespace harivo
