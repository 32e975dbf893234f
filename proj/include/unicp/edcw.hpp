#pragma once

#include "unicp/model.hpp"
#include "unicp/trace.hpp"
#include "unicp/types.hpp"

#include <cstddef>
#include <deque>
#include <optional>
#include <vector>

namespace unicp {

struct SchedulerConfig {
    double delta       = 0.025;
    std::size_t window = 4;  // K
    // Optional per-step override, per_step_delta[t - 1] for timestep t.
    std::vector<double> per_step_delta;

    // Throws on negative thresholds, K == 0, or an override of the wrong length.
    void validate(std::size_t steps) const;

    double delta_at(std::size_t step) const;
};

enum class CacheStatus : std::uint8_t {
    idle,       // F: nothing cached, next compute is full
    cached,     // T: an armed cache is being served
    processed,  // the last decision fell through to slicing
};

enum class CacheKind : std::uint8_t { output, map };

struct HistoryEntry {
    std::size_t step;
    AttentionResult result;
};

struct ActiveCache {
    CacheKind kind;
    Mat payload;
    std::size_t window;           // k that armed it
    std::size_t expires_at_step;  // last timestep served (steps count down)
};

// Per-unit scheduler state: status flag, the last K computed results, and the
// armed cache if any.
class BlockCacheState {
public:
    explicit BlockCacheState(std::size_t window);

    CacheStatus status() const noexcept { return status_; }
    std::size_t window() const noexcept { return window_; }
    const std::deque<HistoryEntry>& history() const noexcept { return history_; }
    const std::optional<ActiveCache>& active() const noexcept { return active_; }

    // Entry computed exactly at `step`, or nullptr.
    const HistoryEntry* find(std::size_t step) const;

    // Appends a computed result. Steps must strictly decrease; the oldest entry
    // is evicted beyond K.
    void record(std::size_t step, AttentionResult result);

    void arm(CacheKind kind, Mat payload, std::size_t window, std::size_t step);
    void mark_processed() noexcept;
    void clear_cache() noexcept;

private:
    std::size_t window_;
    CacheStatus status_ = CacheStatus::idle;
    std::deque<HistoryEntry> history_;
    std::optional<ActiveCache> active_;
};

struct Decision {
    DecisionKind kind  = DecisionKind::pruned;
    std::size_t window = 0;  // matched k for reuse decisions, else 0
    // Drift at the matched k for the tier that hit; otherwise the smallest drift
    // seen during that tier's scan. NaN when the tier was not scanned or no
    // history entry was in reach.
    double drift_output = kNotMeasured;
    double drift_map    = kNotMeasured;
};

// One pass of the two-tier scan. `current` is the result just computed at
// `step`; the state must not be serving a cache. Scans k = K..1 against the
// entry k steps earlier (timestep step + k), first on outputs then on maps,
// compares with rel_l2 against the threshold of that earlier step, arms the
// first hit, and otherwise marks the state processed. `current` is always
// recorded into the history.
Decision edcw_decide(BlockCacheState& state, const AttentionResult& current, std::size_t step,
                     const SchedulerConfig& cfg);

// Returns the cache serving `step`, or nullptr. An expired cache is cleared and
// the status reset to idle.
const ActiveCache* consume_cache(BlockCacheState& state, std::size_t step);

}  // namespace unicp
