#include "unicp/model.hpp"

#include "unicp/error.hpp"
#include "unicp/macs.hpp"
#include "unicp/parallel.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace unicp {

namespace {

// Gain on residual-stream channel j is exp(-kChannelDecay * j / m). Gives block
// inputs a decaying covariance spectrum, which is what the slicing exploits.
constexpr double kChannelDecay = 3.0;
constexpr double kEmbedAmplitude = 0.5;
// Sharpens the step-size profile so the quiet middle of the schedule is wide.
constexpr double kTaperPower = 3.0;
constexpr double kNormEps = 1e-6;
constexpr std::uint64_t kNoiseStream = 0x9e3779b97f4a7c15ULL;

double channel_gain(std::size_t j, std::size_t m) {
    return std::exp(-kChannelDecay * static_cast<double>(j) / static_cast<double>(m));
}

Mat random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    Mat out(rows, cols);
    for (double& v : out.values()) v = dist(rng);
    return out;
}

void scale_columns_by_gain(Mat& w) {
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < w.cols(); ++c) w(r, c) *= channel_gain(c, w.cols());
}

// Query/key outputs follow the residual channel ordering, rescaled to unit mean
// square gain so score logits stay O(1).
void scale_columns_by_normalized_gain(Mat& w) {
    const std::size_t m = w.cols();
    double ms = 0.0;
    for (std::size_t c = 0; c < m; ++c) ms += channel_gain(c, m) * channel_gain(c, m);
    const double norm = std::sqrt(static_cast<double>(m) / ms);
    for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t c = 0; c < m; ++c) w(r, c) *= norm * channel_gain(c, m);
}

AttentionWeights random_attention(std::mt19937_64& rng, std::size_t m) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(m));
    AttentionWeights w;
    w.w_q = random_matrix(rng, m, m, sd);
    w.w_k = random_matrix(rng, m, m, sd);
    w.w_v = random_matrix(rng, m, m, sd);
    w.w_o = random_matrix(rng, m, m, sd);
    scale_columns_by_normalized_gain(w.w_q);
    scale_columns_by_normalized_gain(w.w_k);
    scale_columns_by_gain(w.w_o);
    return w;
}

double gelu(double x) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

Mat mlp_forward(const Mat& x, const MlpWeights& w) {
    Mat h = matmul(x, w.w1);
    for (std::size_t r = 0; r < h.rows(); ++r) {
        auto row = h.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = gelu(row[c] + w.b1(0, c));
    }
    Mat out = matmul(h, w.w2);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) row[c] += w.b2(0, c);
    }
    return out;
}

LatentState normalize_state(const LatentState& s) {
    LatentState out = s;
    for (auto& frame : out.values) frame = rms_normalize(frame);
    return out;
}

void require_state_shape(const LatentState& s, const ModelConfig& cfg) {
    if (s.frames != cfg.frames || s.tokens != cfg.tokens || s.dim != cfg.dim ||
        s.values.size() != cfg.frames) {
        throw invalid_argument("latent state shape does not match model config");
    }
}

void apply_mlp(LatentState& h, const Block& block, std::size_t step, std::size_t block_index,
               RunTrace* trace) {
    const LatentState n = normalize_state(h);
    for (std::size_t fr = 0; fr < h.frames; ++fr) add_inplace(h.values[fr], mlp_forward(n.values[fr], block.mlp));
    if (trace != nullptr) {
        TraceRow row;
        row.step  = step;
        row.block = block_index;
        row.kind  = RowKind::mlp;
        row.macs  = macs_mlp(h.frames * h.tokens, h.dim);
        trace->rows.push_back(row);
    }
}

LatentState embed(const Model& model, const LatentState& x, std::size_t step) {
    const auto emb = timestep_embedding(model.config, step);
    LatentState h  = x;
    for (auto& frame : h.values)
        for (std::size_t r = 0; r < frame.rows(); ++r)
            for (std::size_t c = 0; c < frame.cols(); ++c) frame(r, c) += emb[c];
    return h;
}

}  // namespace

void ModelConfig::validate() const {
    if (num_blocks < 1 || tokens < 1 || frames < 1) {
        throw invalid_argument("model config: blocks, tokens and frames must be >= 1");
    }
    if (dim < 4) throw invalid_argument("model config: dim must be >= 4");
    if (steps < 2) throw invalid_argument("model config: steps must be >= 2");
    if (!(eta_min >= 0.0) || !(eta_max >= 0.0) || !std::isfinite(eta_min) || !std::isfinite(eta_max)) {
        throw invalid_argument("model config: step sizes must be finite and >= 0");
    }
}

double ModelConfig::step_size(std::size_t step) const {
    if (step < 1 || step > steps) {
        throw invalid_argument("step " + std::to_string(step) + " outside [1, " + std::to_string(steps) + "]");
    }
    const double u     = static_cast<double>(steps - step) / static_cast<double>(steps - 1);
    const double taper = std::pow(0.5 * (1.0 + std::cos(2.0 * std::numbers::pi * u)), kTaperPower);
    return eta_min + (eta_max - eta_min) * taper;
}

LatentState LatentState::zeros(std::size_t frames, std::size_t tokens, std::size_t dim) {
    LatentState s;
    s.frames = frames;
    s.tokens = tokens;
    s.dim    = dim;
    s.values.assign(frames, Mat(tokens, dim));
    return s;
}

Model init_model(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const std::size_t m = cfg.dim;
    Model model;
    model.config = cfg;
    model.blocks.reserve(cfg.num_blocks);
    for (std::size_t b = 0; b < cfg.num_blocks; ++b) {
        Block block;
        block.spatial  = random_attention(rng, m);
        block.temporal = random_attention(rng, m);
        block.mlp.w1   = random_matrix(rng, m, 2 * m, 1.0 / std::sqrt(static_cast<double>(m)));
        block.mlp.b1   = random_matrix(rng, 1, 2 * m, 0.02);
        block.mlp.w2   = random_matrix(rng, 2 * m, m, 1.0 / std::sqrt(static_cast<double>(2 * m)));
        block.mlp.b2   = random_matrix(rng, 1, m, 0.02);
        scale_columns_by_gain(block.mlp.w2);
        scale_columns_by_gain(block.mlp.b2);
        model.blocks.push_back(std::move(block));
    }
    return model;
}

LatentState initial_state(const ModelConfig& cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed ^ kNoiseStream);
    std::normal_distribution<double> dist(0.0, 1.0);
    LatentState s = LatentState::zeros(cfg.frames, cfg.tokens, cfg.dim);
    for (auto& frame : s.values)
        for (std::size_t r = 0; r < frame.rows(); ++r)
            for (std::size_t c = 0; c < frame.cols(); ++c) frame(r, c) = dist(rng) * channel_gain(c, cfg.dim);
    return s;
}

std::vector<double> timestep_embedding(const ModelConfig& cfg, std::size_t step) {
    const double tau = static_cast<double>(step) / static_cast<double>(cfg.steps);
    std::vector<double> emb(cfg.dim);
    for (std::size_t j = 0; j < cfg.dim; ++j) {
        const double freq = 1.0 + 3.0 * static_cast<double>(j) / static_cast<double>(cfg.dim);
        emb[j] = kEmbedAmplitude * channel_gain(j, cfg.dim) * std::sin(freq * tau + static_cast<double>(j));
    }
    return emb;
}

Mat rms_normalize(const Mat& x) {
    Mat out = x;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row  = out.row(r);
        double ss = 0.0;
        for (double v : row) ss += v * v;
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(row.size()) + kNormEps);
        for (double& v : row) v *= inv;
    }
    return out;
}

AttentionResult attention_forward(const Mat& x, const AttentionWeights& w) {
    if (x.cols() != w.w_q.rows()) {
        throw invalid_argument("attention_forward: input " + x.shape_string() + " vs weights " +
                               w.w_q.shape_string());
    }
    const std::size_t s = x.rows();
    const std::size_t m = x.cols();
    const Mat q         = matmul(x, w.w_q);
    const Mat k         = matmul(x, w.w_k);
    const Mat v         = matmul(x, w.w_v);
    AttentionResult out;
    out.map    = softmax_rows(scale(matmul_transposed(q, k), 1.0 / std::sqrt(static_cast<double>(m))));
    out.output = matmul(matmul(out.map, v), w.w_o);
    out.macs   = macs_full_attention(s, m);
    return out;
}

AttentionResult map_reuse_forward(const Mat& x, const AttentionWeights& w, const Mat& map) {
    if (map.rows() != x.rows() || map.cols() != x.rows()) {
        throw invalid_argument("map_reuse_forward: map " + map.shape_string() + " does not fit input " +
                               x.shape_string());
    }
    AttentionResult out;
    out.map    = map;
    out.output = matmul(matmul(map, matmul(x, w.w_v)), w.w_o);
    out.macs   = macs_map_reuse(x.rows(), x.cols());
    return out;
}

std::vector<Mat> unit_inputs(const LatentState& normalized, AttnKind kind) {
    if (kind == AttnKind::spatial) return normalized.values;
    std::vector<Mat> seqs(normalized.tokens, Mat(normalized.frames, normalized.dim));
    for (std::size_t p = 0; p < normalized.tokens; ++p)
        for (std::size_t fr = 0; fr < normalized.frames; ++fr) {
            auto src = normalized.values[fr].row(p);
            auto dst = seqs[p].row(fr);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    return seqs;
}

namespace {

AttentionResult stack(std::vector<AttentionResult>& parts) {
    std::vector<Mat> maps, outputs;
    maps.reserve(parts.size());
    outputs.reserve(parts.size());
    AttentionResult out;
    for (auto& p : parts) {
        maps.push_back(std::move(p.map));
        outputs.push_back(std::move(p.output));
        out.macs += p.macs;
    }
    out.map    = vstack(maps);
    out.output = vstack(outputs);
    return out;
}

}  // namespace

AttentionResult unit_attention(std::span<const Mat> inputs, const AttentionWeights& w) {
    std::vector<AttentionResult> parts(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) { parts[i] = attention_forward(inputs[i], w); });
    return stack(parts);
}

AttentionResult unit_map_reuse(std::span<const Mat> inputs, const AttentionWeights& w,
                               const Mat& stacked_map) {
    std::size_t rows = 0;
    for (const auto& x : inputs) rows += x.rows();
    if (stacked_map.rows() != rows) {
        throw invalid_argument("unit_map_reuse: cached map " + stacked_map.shape_string() +
                               " does not cover " + std::to_string(rows) + " query rows");
    }
    std::vector<std::size_t> offsets(inputs.size());
    for (std::size_t i = 1; i < inputs.size(); ++i) offsets[i] = offsets[i - 1] + inputs[i - 1].rows();
    std::vector<AttentionResult> parts(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) {
        parts[i] = map_reuse_forward(inputs[i], w, row_block(stacked_map, offsets[i], inputs[i].rows()));
    });
    return stack(parts);
}

void scatter_add(LatentState& state, AttnKind kind, const Mat& stacked_output) {
    if (stacked_output.rows() != state.frames * state.tokens || stacked_output.cols() != state.dim) {
        throw invalid_argument("scatter_add: output " + stacked_output.shape_string() +
                               " does not match latent state");
    }
    for (std::size_t fr = 0; fr < state.frames; ++fr)
        for (std::size_t p = 0; p < state.tokens; ++p) {
            const std::size_t src_row =
                kind == AttnKind::spatial ? fr * state.tokens + p : p * state.frames + fr;
            auto src = stacked_output.row(src_row);
            auto dst = state.values[fr].row(p);
            for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
        }
}

Mat FullDispatch::attend(const UnitCall& call, TraceRow& row) {
    AttentionResult r = unit_attention(call.inputs, call.weights);
    row.decision      = DecisionKind::full;
    row.macs          = r.macs;
    return std::move(r.output);
}

LatentState block_forward(const LatentState& state, std::size_t block_index, const Block& block,
                          std::size_t step, AttentionDispatch& dispatch, RunTrace* trace) {
    LatentState h = state;
    for (AttnKind kind : {AttnKind::spatial, AttnKind::temporal}) {
        const auto inputs = unit_inputs(normalize_state(h), kind);
        TraceRow row;
        row.step  = step;
        row.block = block_index;
        row.kind  = row_kind(kind);
        const Mat out = dispatch.attend(UnitCall{step, block_index, kind, inputs, block.attention(kind)}, row);
        scatter_add(h, kind, out);
        if (trace != nullptr) trace->rows.push_back(row);
    }
    apply_mlp(h, block, step, block_index, trace);
    return h;
}

LatentState model_forward(const Model& model, const LatentState& x, std::size_t step,
                          AttentionDispatch& dispatch, RunTrace* trace) {
    require_state_shape(x, model.config);
    LatentState h = embed(model, x, step);
    for (std::size_t b = 0; b < model.blocks.size(); ++b) h = block_forward(h, b, model.blocks[b], step, dispatch, trace);
    return h;
}

LatentState reference_model_forward(const Model& model, const LatentState& x, std::size_t step) {
    require_state_shape(x, model.config);
    LatentState h = embed(model, x, step);
    for (const Block& block : model.blocks) {
        for (AttnKind kind : {AttnKind::spatial, AttnKind::temporal}) {
            const auto seqs = unit_inputs(normalize_state(h), kind);
            const std::size_t len = seqs.front().rows();
            Mat stacked(seqs.size() * len, h.dim);
            for (std::size_t i = 0; i < seqs.size(); ++i) {
                const Mat o = attention_forward(seqs[i], block.attention(kind)).output;
                for (std::size_t r = 0; r < len; ++r)
                    for (std::size_t c = 0; c < h.dim; ++c) stacked(i * len + r, c) = o(r, c);
            }
            scatter_add(h, kind, stacked);
        }
        apply_mlp(h, block, step, 0, nullptr);
    }
    return h;
}

LatentState denoise_step(const Model& model, const LatentState& x, std::size_t step,
                         AttentionDispatch& dispatch, RunTrace* trace) {
    const LatentState out = model_forward(model, x, step, dispatch, trace);
    const double eta      = model.config.step_size(step);
    LatentState next      = x;
    for (std::size_t fr = 0; fr < next.frames; ++fr) {
        auto dst = next.values[fr].values();
        auto src = out.values[fr].values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= eta * src[i];
        if (!all_finite(next.values[fr])) {
            throw Error(ErrorCode::numeric, "non-finite latent value at step " + std::to_string(step));
        }
    }
    return next;
}

RunResult denoise_run(const Model& model, AttentionDispatch& dispatch) {
    RunResult result;
    result.final_state = initial_state(model.config);
    for (std::size_t step = model.config.steps; step >= 1; --step) {
        result.final_state = denoise_step(model, result.final_state, step, dispatch, &result.trace);
    }
    return result;
}

MacCount baseline_macs_per_step(const ModelConfig& cfg) {
    const MacCount per_block = cfg.frames * macs_full_attention(cfg.tokens, cfg.dim) +
                               cfg.tokens * macs_full_attention(cfg.frames, cfg.dim) +
                               macs_mlp(cfg.frames * cfg.tokens, cfg.dim);
    return per_block * cfg.num_blocks;
}

}  // namespace unicp
