#include "unicp/dws.hpp"

#include "unicp/error.hpp"
#include "unicp/macs.hpp"
#include "unicp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

namespace unicp {

std::string_view aggregation_name(Aggregation a) {
    return a == Aggregation::conservative ? "conservative" : "smallest";
}

Aggregation aggregation_from_name(std::string_view name) {
    if (name == "conservative") return Aggregation::conservative;
    if (name == "smallest") return Aggregation::smallest;
    throw invalid_argument("unknown aggregation '" + std::string(name) + "'");
}

std::string_view dispatch_mode_name(DispatchMode m) { return m == DispatchMode::online ? "online" : "replay"; }

DispatchMode dispatch_mode_from_name(std::string_view name) {
    if (name == "online") return DispatchMode::online;
    if (name == "replay") return DispatchMode::replay;
    throw invalid_argument("unknown dispatch mode '" + std::string(name) + "'");
}

void RatioBounds::validate() const {
    if (!(lo >= 0.0) || !(hi >= lo) || !(hi < 1.0)) {
        throw invalid_argument("ratio bounds must satisfy 0 <= lo <= hi < 1 (got lo=" + std::to_string(lo) +
                               ", hi=" + std::to_string(hi) + ")");
    }
}

CacheMap CacheMap::all_full(const ModelConfig& model) {
    CacheMap map;
    map.model = model;
    map.grid.assign(model.num_blocks * kAttnKinds, std::string(model.steps, 'F'));
    map.final_n.assign(model.num_blocks * kAttnKinds, std::nullopt);
    return map;
}

DecisionKind CacheMap::cell(std::size_t block, AttnKind kind, std::size_t step) const {
    if (step < 1 || step > model.steps || block >= model.num_blocks) {
        throw invalid_argument("cache map: cell (" + std::to_string(block) + ", step " + std::to_string(step) +
                               ") outside the grid");
    }
    return decision_from_letter(grid[unit_index(block, kind)][model.steps - step]);
}

void CacheMap::set_cell(std::size_t block, AttnKind kind, std::size_t step, DecisionKind d) {
    if (step < 1 || step > model.steps || block >= model.num_blocks) {
        throw invalid_argument("cache map: cell outside the grid");
    }
    grid[unit_index(block, kind)][model.steps - step] = decision_letter(d);
}

std::array<std::size_t, 4> CacheMap::tallies() const {
    std::array<std::size_t, 4> out{};
    for (const auto& row : grid)
        for (char c : row) ++out[static_cast<std::size_t>(decision_from_letter(c))];
    return out;
}

void CacheMap::validate() const {
    const std::size_t units = model.num_blocks * kAttnKinds;
    if (grid.size() != units || final_n.size() != units) {
        throw invalid_argument("cache map: expected " + std::to_string(units) + " unit rows");
    }
    for (std::size_t u = 0; u < units; ++u) {
        if (grid[u].size() != model.steps) {
            throw invalid_argument("cache map: row " + std::to_string(u) + " has " + std::to_string(grid[u].size()) +
                                   " cells, expected " + std::to_string(model.steps));
        }
        for (char c : grid[u]) decision_from_letter(c);
        if (final_n[u] && (*final_n[u] < 1 || *final_n[u] > model.dim)) {
            throw invalid_argument("cache map: final_n out of range for unit " + std::to_string(u));
        }
        if (grid[u].find('P') != std::string::npos && (!final_n[u] || *final_n[u] >= model.dim)) {
            throw invalid_argument("cache map: unit " + std::to_string(u) + " has P cells without a sliced dimension");
        }
    }
}

std::vector<std::size_t> default_calibration_steps(std::size_t steps) {
    std::vector<std::size_t> out;
    for (std::size_t third = 0; third < 3; ++third) {
        const std::size_t exec_index = third * steps / 3;
        const std::size_t step       = steps - exec_index;
        if (std::find(out.begin(), out.end(), step) == out.end()) out.push_back(step);
    }
    return out;
}

MacCount cell_macs(const ModelConfig& cfg, AttnKind kind, DecisionKind cell, std::size_t n) {
    const std::size_t seqs = kind == AttnKind::spatial ? cfg.frames : cfg.tokens;
    const std::size_t len  = kind == AttnKind::spatial ? cfg.tokens : cfg.frames;
    switch (cell) {
        case DecisionKind::full: return seqs * macs_full_attention(len, cfg.dim);
        case DecisionKind::pruned: return seqs * macs_sliced(len, cfg.dim, n);
        case DecisionKind::reuse_map: return seqs * macs_map_reuse(len, cfg.dim);
        case DecisionKind::reuse_output: return macs_output_reuse;
    }
    return 0;
}

namespace {

void notify(const DecisionObserver& observer, const UnitCall& call, const BlockCacheState& before_state,
            const std::deque<HistoryEntry>& history, const AttentionResult& current,
            const SchedulerConfig& sched, const Decision& d) {
    observer(DecisionEvent{call.step, call.block, call.kind, before_state.window(), history, current, sched, d});
}

// Full-compute pass that also captures calibration inputs and simulates the
// scheduler over the exact outputs.
class CalibrationDispatch final : public AttentionDispatch {
public:
    CalibrationDispatch(const Model& model, const SchedulerConfig& sched, std::vector<std::size_t> calib_steps,
                        const DecisionObserver& observer)
        : sched_(sched),
          calib_steps_(std::move(calib_steps)),
          observer_(observer),
          states_(model.config.num_blocks * kAttnKinds, BlockCacheState(sched.window)),
          captures_(model.config.num_blocks * kAttnKinds),
          plan_(CacheMap::all_full(model.config)) {}

    Mat attend(const UnitCall& call, TraceRow& row) override {
        const std::size_t u = unit_index(call.block, call.kind);
        AttentionResult r   = unit_attention(call.inputs, call.weights);
        row.decision        = DecisionKind::full;
        row.macs            = r.macs;

        if (std::find(calib_steps_.begin(), calib_steps_.end(), call.step) != calib_steps_.end()) {
            captures_[u].steps.push_back(call.step);
            captures_[u].inputs.emplace_back(call.inputs.begin(), call.inputs.end());
            captures_[u].full_outputs.push_back(r.output);
        }

        BlockCacheState& state = states_[u];
        if (const ActiveCache* c = consume_cache(state, call.step)) {
            plan_.set_cell(call.block, call.kind, call.step,
                           c->kind == CacheKind::output ? DecisionKind::reuse_output : DecisionKind::reuse_map);
        } else {
            const bool after_fallthrough = state.status() == CacheStatus::processed;
            std::deque<HistoryEntry> before;
            if (observer_) before = state.history();
            const Decision d = edcw_decide(state, r, call.step, sched_);
            if (observer_) notify(observer_, call, state, before, r, sched_, d);
            plan_.set_cell(call.block, call.kind, call.step, after_fallthrough ? DecisionKind::pruned : DecisionKind::full);
        }
        return std::move(r.output);
    }

    std::vector<CalibrationCapture>& captures() { return captures_; }
    CacheMap& plan() { return plan_; }

private:
    const SchedulerConfig& sched_;
    std::vector<std::size_t> calib_steps_;
    const DecisionObserver& observer_;
    std::vector<BlockCacheState> states_;
    std::vector<CalibrationCapture> captures_;
    CacheMap plan_;
};

struct UnitCalibration {
    std::shared_ptr<const PcaBasis> basis;
    std::size_t final_n = 0;
    std::vector<CalibrationRecord> records;
};

UnitCalibration calibrate_unit(const Block& block, std::size_t block_index, AttnKind kind,
                               const CalibrationCapture& cap, const SchedulerConfig& sched,
                               const CalibrationOptions& options, std::size_t m) {
    std::vector<Mat> pooled;
    for (const auto& batch : cap.inputs) pooled.insert(pooled.end(), batch.begin(), batch.end());
    UnitCalibration out;
    out.basis = std::make_shared<const PcaBasis>(compute_basis(pooled, cap.steps));

    // Keep the pruned fraction >= lo even after rounding n up.
    const auto n_ceiling = static_cast<std::size_t>(
        std::floor(static_cast<double>(m) * (1.0 - options.ratio.lo) + 1e-9));
    const AttentionWeights& w = block.attention(kind);

    std::vector<std::size_t> per_step_n;
    std::vector<std::size_t> accepted_n;
    for (std::size_t i = 0; i < cap.steps.size(); ++i) {
        const double delta = sched.delta_at(cap.steps[i]);
        std::optional<std::size_t> best;
        for (std::size_t j = 0;; ++j) {
            const double fraction = options.ratio.lo + static_cast<double>(j) * options.sweep_step;
            if (fraction > options.ratio.hi + 1e-12) break;
            const std::size_t n = std::min(retained_dim(m, fraction), std::max<std::size_t>(n_ceiling, 1));
            const SlicedWeights sw = slice_weights(w, out.basis, n);
            const double err = rel_l2(unit_sliced_attention(cap.inputs[i], w, sw).output, cap.full_outputs[i]);
            const bool ok    = err <= delta;
            out.records.push_back(CalibrationRecord{block_index, kind, cap.steps[i], n, err, ok});
            if (!ok) break;
            best = n;
        }
        per_step_n.push_back(best.value_or(m));
        if (best) accepted_n.push_back(*best);
    }

    if (accepted_n.empty()) {
        out.final_n = m;
    } else if (options.aggregation == Aggregation::conservative) {
        out.final_n = *std::max_element(per_step_n.begin(), per_step_n.end());
    } else {
        out.final_n = *std::min_element(accepted_n.begin(), accepted_n.end());
    }
    return out;
}

}  // namespace

CalibrationResult dws_calibrate(const Model& model, const SchedulerConfig& sched, const CalibrationOptions& options,
                                const DecisionObserver& observer) {
    const ModelConfig& cfg = model.config;
    cfg.validate();
    sched.validate(cfg.steps);
    options.ratio.validate();
    if (!(options.sweep_step > 0.0)) throw invalid_argument("calibration: sweep step must be > 0");

    std::vector<std::size_t> calib_steps =
        options.calib_steps.empty() ? default_calibration_steps(cfg.steps) : options.calib_steps;
    for (std::size_t s : calib_steps)
        if (s < 1 || s > cfg.steps) throw invalid_argument("calibration step " + std::to_string(s) + " outside schedule");

    CalibrationDispatch capture(model, sched, calib_steps, observer);
    CalibrationResult result;
    result.baseline = denoise_run(model, capture);

    const std::size_t units = cfg.num_blocks * kAttnKinds;
    std::vector<UnitCalibration> per_unit(units);
    for (std::size_t u = 0; u < units; ++u)
        if (capture.captures()[u].steps.empty()) throw invalid_argument("calibration: empty capture for unit " + std::to_string(u));

    parallel_for(units, [&](std::size_t u) {
        const std::size_t b = u / kAttnKinds;
        const auto kind     = static_cast<AttnKind>(u % kAttnKinds);
        per_unit[u] = calibrate_unit(model.blocks[b], b, kind, capture.captures()[u], sched, options, cfg.dim);
    });

    CacheMap map    = std::move(capture.plan());
    map.delta       = sched.delta;
    map.window      = sched.window;
    map.ratio       = options.ratio;
    map.mode        = DispatchMode::replay;
    map.aggregation = options.aggregation;
    result.sliced.resize(units);
    for (std::size_t u = 0; u < units; ++u) {
        const std::size_t b = u / kAttnKinds;
        const auto kind     = static_cast<AttnKind>(u % kAttnKinds);
        map.final_n[u]      = per_unit[u].final_n;
        result.sliced[u]    = slice_weights(model.blocks[b].attention(kind), per_unit[u].basis, per_unit[u].final_n);
        if (per_unit[u].final_n >= cfg.dim) std::replace(map.grid[u].begin(), map.grid[u].end(), 'P', 'F');
        result.records.insert(result.records.end(), per_unit[u].records.begin(), per_unit[u].records.end());
    }
    map.validate();
    result.map      = std::move(map);
    result.captures = std::move(capture.captures());
    return result;
}

OnlineDispatch::OnlineDispatch(const Model& model, SchedulerConfig sched, UnitSlices sliced, DecisionObserver observer)
    : sched_(std::move(sched)),
      sliced_(std::move(sliced)),
      observer_(std::move(observer)),
      states_(model.config.num_blocks * kAttnKinds, BlockCacheState(std::max<std::size_t>(sched_.window, 1))),
      executed_(CacheMap::all_full(model.config)) {
    sched_.validate(model.config.steps);
    if (!sliced_.empty() && sliced_.size() != model.config.num_blocks * kAttnKinds) {
        throw invalid_argument("online dispatch: sliced weights cover " + std::to_string(sliced_.size()) + " units");
    }
    executed_.delta  = sched_.delta;
    executed_.window = sched_.window;
    executed_.mode   = DispatchMode::online;
    for (std::size_t u = 0; u < sliced_.size(); ++u)
        if (sliced_[u]) executed_.final_n[u] = sliced_[u]->n;
}

Mat OnlineDispatch::attend(const UnitCall& call, TraceRow& row) {
    const std::size_t u    = unit_index(call.block, call.kind);
    BlockCacheState& state = states_[u];
    if (const ActiveCache* c = consume_cache(state, call.step)) {
        row.k = c->window;
        if (c->kind == CacheKind::output) {
            row.decision = DecisionKind::reuse_output;
            row.macs     = macs_output_reuse;
            executed_.set_cell(call.block, call.kind, call.step, row.decision);
            return c->payload;
        }
        AttentionResult r = unit_map_reuse(call.inputs, call.weights, c->payload);
        row.decision      = DecisionKind::reuse_map;
        row.macs          = r.macs;
        executed_.set_cell(call.block, call.kind, call.step, row.decision);
        return std::move(r.output);
    }

    const SlicedWeights* sw = u < sliced_.size() && sliced_[u] ? &*sliced_[u] : nullptr;
    const bool use_sliced   = state.status() == CacheStatus::processed && sw != nullptr && sw->n < call.inputs.front().cols();
    AttentionResult r = use_sliced ? unit_sliced_attention(call.inputs, call.weights, *sw)
                                   : unit_attention(call.inputs, call.weights);
    std::deque<HistoryEntry> before;
    if (observer_) before = state.history();
    const Decision d = edcw_decide(state, r, call.step, sched_);
    if (observer_) notify(observer_, call, state, before, r, sched_, d);

    row.decision     = use_sliced ? DecisionKind::pruned : DecisionKind::full;
    row.k            = d.window;
    row.drift_output = d.drift_output;
    row.drift_map    = d.drift_map;
    row.macs         = r.macs;
    executed_.set_cell(call.block, call.kind, call.step, row.decision);
    return std::move(r.output);
}

ReplayDispatch::ReplayDispatch(const Model& model, CacheMap map, UnitSlices sliced)
    : plan_(std::move(map)),
      sliced_(std::move(sliced)),
      last_(model.config.num_blocks * kAttnKinds),
      executed_(CacheMap::all_full(model.config)) {
    if (plan_.model.num_blocks != model.config.num_blocks || plan_.model.steps != model.config.steps ||
        plan_.model.dim != model.config.dim) {
        throw invalid_argument("replay dispatch: cache map does not match the model");
    }
    plan_.validate();
    executed_.delta       = plan_.delta;
    executed_.window      = plan_.window;
    executed_.ratio       = plan_.ratio;
    executed_.aggregation = plan_.aggregation;
    executed_.mode        = DispatchMode::replay;
    executed_.final_n     = plan_.final_n;
}

std::size_t ReplayDispatch::reuse_run_window(std::size_t unit, std::size_t step) const {
    const std::string& row = plan_.grid[unit];
    std::size_t col        = plan_.model.steps - step;
    // Walk back to the computing cell that opened this run.
    std::size_t start = col;
    while (start > 0 && (row[start] == 'O' || row[start] == 'M')) --start;
    if (row[start] == 'O' || row[start] == 'M') return 0;
    std::size_t end = start + 1;
    while (end < row.size() && (row[end] == 'O' || row[end] == 'M')) ++end;
    const std::size_t reuse = end - start - 1;
    return reuse == 0 ? 0 : reuse + 1;
}

Mat ReplayDispatch::attend(const UnitCall& call, TraceRow& row) {
    const std::size_t u    = unit_index(call.block, call.kind);
    const DecisionKind cell = plan_.cell(call.block, call.kind, call.step);
    row.decision            = cell;
    row.k                   = reuse_run_window(u, call.step);
    executed_.set_cell(call.block, call.kind, call.step, cell);

    switch (cell) {
        case DecisionKind::full:
        case DecisionKind::pruned: {
            AttentionResult r;
            if (cell == DecisionKind::pruned) {
                if (u >= sliced_.size() || !sliced_[u]) {
                    throw Error(ErrorCode::missing_artifact, "replay: no sliced weights for pruned unit (block " +
                                                                 std::to_string(call.block) + ", " +
                                                                 std::string(attn_kind_name(call.kind)) + ")");
                }
                r = unit_sliced_attention(call.inputs, call.weights, *sliced_[u]);
            } else {
                r = unit_attention(call.inputs, call.weights);
            }
            row.macs = r.macs;
            Mat out  = r.output;
            last_[u] = std::move(r);
            return out;
        }
        case DecisionKind::reuse_output:
        case DecisionKind::reuse_map: {
            if (!last_[u]) {
                throw invalid_argument("replay: reuse cell at step " + std::to_string(call.step) +
                                       " before any computed cell");
            }
            if (cell == DecisionKind::reuse_output) {
                row.macs = macs_output_reuse;
                return last_[u]->output;
            }
            AttentionResult r = unit_map_reuse(call.inputs, call.weights, last_[u]->map);
            row.macs          = r.macs;
            return std::move(r.output);
        }
    }
    return {};
}

StepResult dispatch_step(const Model& model, const LatentState& state, std::size_t step, AttentionDispatch& dispatch) {
    RunTrace trace;
    StepResult out;
    out.next = denoise_step(model, state, step, dispatch, &trace);
    out.rows = std::move(trace.rows);
    return out;
}

}  // namespace unicp
