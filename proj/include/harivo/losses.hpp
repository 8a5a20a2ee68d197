#pragma once

#include "harivo/model/t2v_model.hpp"

#include <torch/torch.h>

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>

namespace harivo {

// Mean squared error between predicted and true noise.
torch::Tensor simple_loss(const torch::Tensor& eps_pred, const torch::Tensor& eps);

// (1 - t/T) * mse(eps_full, eps_image). Gradient flows into both operands.
torch::Tensor reg_loss(const torch::Tensor& eps_full, const torch::Tensor& eps_image, std::int64_t t,
                       std::int64_t T);
// Per-clip weights for a batch with one timestep per clip; averaged over clips.
torch::Tensor reg_loss(const torch::Tensor& eps_full, const torch::Tensor& eps_image,
                       std::span<const std::int64_t> t, std::int64_t T);

// sum_i (i/N) sum_j meanAbs(A_i^j - A_i^{j-1}) over the decoder self-attention
// maps, each (B, F, heads, q, q). expected_layers, when given, must match.
torch::Tensor trs_loss(const AttentionRecord& record, std::optional<std::size_t> expected_layers = {});

// Fixed-capacity FIFO of unit vectors tagged with the id of the video they came from.
class NegativeQueue {
public:
    struct Entry {
        torch::Tensor z;  // (dim), unit norm, no grad
        std::int64_t video_id;
    };

    explicit NegativeQueue(std::size_t capacity = 512);

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::deque<Entry>& entries() const { return entries_; }

    // Normalizes and appends rows of z (N, dim); evicts oldest entries beyond capacity.
    void push(const torch::Tensor& z, std::span<const std::int64_t> video_ids);

    // Appends an already-normalized vector verbatim (checkpoint restore).
    void push_raw(const torch::Tensor& z, std::int64_t video_id);

    // (n, dim) matrix of stored vectors, oldest first; optionally dropping one video's entries.
    torch::Tensor matrix(std::optional<std::int64_t> exclude_video = {}) const;

    void clear() { entries_.clear(); }

private:
    std::size_t capacity_;
    std::deque<Entry> entries_;
};

void push_negatives(NegativeQueue& queue, const torch::Tensor& z, std::span<const std::int64_t> video_ids);

inline constexpr double kDefaultTemperature = 0.1;

// -<z1,z2>/tau + log sum_q exp(<z1,q>/tau) on L2-normalized vectors. The
// positive pair is not part of the denominator. negatives: (n, dim), treated as constants.
torch::Tensor dc_loss(const torch::Tensor& z1, const torch::Tensor& z2, const torch::Tensor& negatives,
                      double tau = kDefaultTemperature);
torch::Tensor dc_loss(const torch::Tensor& z1, const torch::Tensor& z2, const NegativeQueue& queue,
                      double tau = kDefaultTemperature);

struct LossWeights {
    double trs = 0.1;
    double reg = 0.1;
    double dc = 0.1;
};

struct LossBreakdown {
    double simple = 0.0;
    double reg = 0.0;
    double trs = 0.0;
    double dc = 0.0;
    double total = 0.0;
    LossWeights weights;
};

LossBreakdown total_loss(double simple, double reg, double trs, double dc, const LossWeights& weights = {});

// Differentiable counterpart used by the trainer; same weighting.
torch::Tensor weighted_total(const torch::Tensor& simple, const torch::Tensor& reg, const torch::Tensor& trs,
                             const torch::Tensor& dc, const LossWeights& weights);

}  // namespace harivo
