#include "unicp/edcw.hpp"

#include "unicp/error.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace unicp {

void SchedulerConfig::validate(std::size_t steps) const {
    if (!(delta >= 0.0)) throw invalid_argument("scheduler: delta must be >= 0");
    if (window < 1) throw invalid_argument("scheduler: search window K must be >= 1");
    if (!per_step_delta.empty()) {
        if (per_step_delta.size() != steps) {
            throw invalid_argument("scheduler: per-step delta has " + std::to_string(per_step_delta.size()) +
                                   " entries, expected " + std::to_string(steps));
        }
        for (double d : per_step_delta)
            if (!(d >= 0.0)) throw invalid_argument("scheduler: per-step delta must be >= 0");
    }
}

double SchedulerConfig::delta_at(std::size_t step) const {
    if (per_step_delta.empty()) return delta;
    if (step < 1 || step > per_step_delta.size()) return delta;
    return per_step_delta[step - 1];
}

BlockCacheState::BlockCacheState(std::size_t window) : window_(window) {
    if (window_ < 1) throw invalid_argument("BlockCacheState: window must be >= 1");
}

const HistoryEntry* BlockCacheState::find(std::size_t step) const {
    for (const auto& e : history_)
        if (e.step == step) return &e;
    return nullptr;
}

void BlockCacheState::record(std::size_t step, AttentionResult result) {
    if (!history_.empty() && step >= history_.back().step) {
        throw std::logic_error("BlockCacheState::record: step " + std::to_string(step) +
                               " not after " + std::to_string(history_.back().step));
    }
    history_.push_back(HistoryEntry{step, std::move(result)});
    while (history_.size() > window_) history_.pop_front();
}

void BlockCacheState::arm(CacheKind kind, Mat payload, std::size_t window, std::size_t step) {
    const std::size_t span = window - 1;
    active_ = ActiveCache{kind, std::move(payload), window, step > span ? step - span : 0};
    status_ = CacheStatus::cached;
}

void BlockCacheState::mark_processed() noexcept {
    active_.reset();
    status_ = CacheStatus::processed;
}

void BlockCacheState::clear_cache() noexcept {
    active_.reset();
    status_ = CacheStatus::idle;
}

Decision edcw_decide(BlockCacheState& state, const AttentionResult& current, std::size_t step,
                     const SchedulerConfig& cfg) {
    if (state.status() == CacheStatus::cached) {
        throw std::logic_error("edcw_decide: called while a cache is active");
    }
    Decision d;
    auto scan = [&](auto&& pick, double& best) -> std::size_t {
        for (std::size_t k = state.window(); k >= 1; --k) {
            const HistoryEntry* e = state.find(step + k);
            if (e == nullptr) continue;
            const double drift = rel_l2(pick(current), pick(e->result));
            if (drift <= cfg.delta_at(step + k)) {
                best = drift;
                return k;
            }
            best = std::isnan(best) ? drift : std::min(best, drift);
        }
        return 0;
    };

    const auto output_of = [](const AttentionResult& r) -> const Mat& { return r.output; };
    const auto map_of    = [](const AttentionResult& r) -> const Mat& { return r.map; };

    if (const std::size_t k = scan(output_of, d.drift_output); k > 0) {
        d.kind   = DecisionKind::reuse_output;
        d.window = k;
        state.arm(CacheKind::output, current.output, k, step);
    } else if (const std::size_t k2 = scan(map_of, d.drift_map); k2 > 0) {
        d.kind   = DecisionKind::reuse_map;
        d.window = k2;
        state.arm(CacheKind::map, current.map, k2, step);
    } else {
        d.kind = DecisionKind::pruned;
        state.mark_processed();
    }
    state.record(step, current);
    return d;
}

const ActiveCache* consume_cache(BlockCacheState& state, std::size_t step) {
    const auto& active = state.active();
    if (!active) return nullptr;
    if (step < active->expires_at_step) {
        state.clear_cache();
        return nullptr;
    }
    return &*active;
}

}  // namespace unicp
