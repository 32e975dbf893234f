#pragma once

#include "unicp/linalg.hpp"
#include "unicp/trace.hpp"
#include "unicp/types.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace unicp {

struct ModelConfig {
    std::size_t num_blocks = 6;
    std::size_t dim        = 64;  // m
    std::size_t tokens     = 64;  // s, tokens per frame
    std::size_t frames     = 8;   // f
    std::size_t steps      = 30;  // T
    std::uint64_t seed     = 42;
    // Denoising step size: eta_max at both ends of the schedule, eta_min in the middle.
    double eta_min = 0.005;
    double eta_max = 0.3;

    void validate() const;

    // Step size for timestep t in [1, T] (execution runs t = T down to 1).
    double step_size(std::size_t step) const;

    bool operator==(const ModelConfig&) const = default;
};

struct AttentionWeights {
    Mat w_q, w_k, w_v, w_o;  // each m x m
};

struct MlpWeights {
    Mat w1;  // m x 2m
    Mat b1;  // 1 x 2m
    Mat w2;  // 2m x m
    Mat b2;  // 1 x m
};

struct Block {
    AttentionWeights spatial;
    AttentionWeights temporal;
    MlpWeights mlp;

    const AttentionWeights& attention(AttnKind kind) const {
        return kind == AttnKind::spatial ? spatial : temporal;
    }
};

struct Model {
    ModelConfig config;
    std::vector<Block> blocks;
};

// f stacked s x m matrices.
struct LatentState {
    std::size_t frames = 0;
    std::size_t tokens = 0;
    std::size_t dim    = 0;
    std::vector<Mat> values;

    static LatentState zeros(std::size_t frames, std::size_t tokens, std::size_t dim);

    bool operator==(const LatentState&) const = default;
};

struct AttentionResult {
    Mat map;     // rows = queries, cols = sequence length; stacked for unit batches
    Mat output;  // rows = queries, cols = m
    MacCount macs = 0;
};

// Seeded weights, N(0, 1/fan_in) with a decaying per-channel gain on everything
// written back to the residual stream.
Model init_model(const ModelConfig& cfg);

LatentState initial_state(const ModelConfig& cfg);

// Sinusoidal embedding of timestep t, length m.
std::vector<double> timestep_embedding(const ModelConfig& cfg, std::size_t step);

// a = softmax((X Wq)(X Wk)^T / sqrt(m)),  o = (a (X Wv)) Wo.
AttentionResult attention_forward(const Mat& x, const AttentionWeights& w);

// o = (map (X Wv)) Wo with a map computed at an earlier step.
AttentionResult map_reuse_forward(const Mat& x, const AttentionWeights& w, const Mat& map);

// Per-row RMS normalization, zero rows stay zero.
Mat rms_normalize(const Mat& x);

// Attention sequences for one unit: spatial -> one s x m matrix per frame,
// temporal -> one f x m matrix per token position. Input is already normalized.
std::vector<Mat> unit_inputs(const LatentState& normalized, AttnKind kind);

// Batched helpers over every sequence of a unit; results are stacked in
// sequence order.
AttentionResult unit_attention(std::span<const Mat> inputs, const AttentionWeights& w);
AttentionResult unit_map_reuse(std::span<const Mat> inputs, const AttentionWeights& w,
                               const Mat& stacked_map);

// Adds a stacked unit output back onto the residual stream.
void scatter_add(LatentState& state, AttnKind kind, const Mat& stacked_output);

struct UnitCall {
    std::size_t step;
    std::size_t block;
    AttnKind kind;
    std::span<const Mat> inputs;
    const AttentionWeights& weights;
};

// Decides how one attention unit executes. Implementations return the stacked
// output and fill decision, k, drifts and macs of `row`.
class AttentionDispatch {
public:
    virtual ~AttentionDispatch() = default;
    virtual Mat attend(const UnitCall& call, TraceRow& row) = 0;
};

// Always computes full attention.
class FullDispatch final : public AttentionDispatch {
public:
    Mat attend(const UnitCall& call, TraceRow& row) override;
};

// Spatial attention, temporal attention, MLP, each pre-normalized with a residual add.
LatentState block_forward(const LatentState& state, std::size_t block_index, const Block& block,
                          std::size_t step, AttentionDispatch& dispatch, RunTrace* trace);

// Network output at timestep `step`: the blocks applied to x + embedding(step).
LatentState model_forward(const Model& model, const LatentState& x, std::size_t step,
                          AttentionDispatch& dispatch, RunTrace* trace);

// Same network evaluated without any dispatch layer.
LatentState reference_model_forward(const Model& model, const LatentState& x, std::size_t step);

// x_{t-1} = x_t - eta(t) * model(x_t, t). Throws ErrorCode::numeric on non-finite values.
LatentState denoise_step(const Model& model, const LatentState& x, std::size_t step,
                         AttentionDispatch& dispatch, RunTrace* trace);

struct RunResult {
    LatentState final_state;
    RunTrace trace;
};

RunResult denoise_run(const Model& model, AttentionDispatch& dispatch);

MacCount baseline_macs_per_step(const ModelConfig& cfg);

}  // namespace unicp
