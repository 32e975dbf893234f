#pragma once

#include "unicp/edcw.hpp"
#include "unicp/model.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace unicp {

struct Spike {
    std::size_t step;  // timestep t in [1, T]
    double magnitude;
};

// Target drift between consecutive results, in execution order: drifts[i] is
// rel_l2(o at execution index i, o at index i - 1), i.e. the change arriving
// at timestep T - i. drifts[0] has no predecessor and is ignored. Spikes
// override the drift of their timestep.
struct DriftProfile {
    std::vector<double> drifts;
    std::vector<Spike> spikes;

    std::size_t steps() const noexcept { return drifts.size(); }
    void validate() const;
    // Drift arriving at timestep t after spikes are applied.
    double drift_at(std::size_t step) const;
};

inline constexpr double kMaxScriptedDrift = 2.0;

struct HarnessSequence {
    std::vector<std::size_t> steps;  // T down to 1
    std::vector<AttentionResult> results;
};

// Output sequence o = B + alpha D with B, D orthonormal in the Frobenius sense
// and alpha chosen step by step so rel_l2 to the predecessor equals the target.
// Maps follow the same recurrence on A0 + beta P, A0 uniform row-stochastic and
// P with zero row sums, at `map_ratio` times the output drift. Rows of every map
// sum to one.
HarnessSequence synthesize_sequence(const DriftProfile& profile, std::size_t s, std::size_t m, std::uint64_t seed,
                                    double map_ratio = 0.5);

struct ArmedWindow {
    std::size_t step;    // timestep of the decision
    std::size_t window;  // matched k
    CacheKind kind;
};

struct HarnessStep {
    std::size_t step = 0;
    bool computed    = false;
    // Executed path: F or P when computed, O or M when served from cache.
    DecisionKind executed = DecisionKind::full;
    Decision decision;          // scheduler output, computed steps only
    double reuse_error = 0.0;   // rel_l2 of the served value to the true one
};

struct FixedWindowResult {
    std::size_t window = 0;
    std::vector<bool> reused;  // execution order
    double accumulated_error = 0.0;
};

struct HarnessResult {
    std::vector<HarnessStep> steps;
    std::vector<ArmedWindow> armed;
    double accumulated_error = 0.0;  // sum of reuse errors
    std::vector<FixedWindowResult> fixed;
};

// Feeds a synthesized sequence through the scheduler step by step. Map reuse
// error is measured on maps. Each fixed-window comparator computes at every
// k-th step and serves the output unconditionally in between.
HarnessResult run_scheduler_on_sequence(const HarnessSequence& seq, const SchedulerConfig& sched,
                                        const std::vector<std::size_t>& fixed_windows = {});

HarnessResult run_scheduler_on_profile(const DriftProfile& profile, const SchedulerConfig& sched,
                                       const std::vector<std::size_t>& fixed_windows = {}, std::size_t s = 16,
                                       std::size_t m = 8, std::uint64_t seed = 7);

// Fixed-window comparator on its own.
FixedWindowResult run_fixed_window(const HarnessSequence& seq, std::size_t window);

// True when the lookback of a decision at `step` with match k covers the change
// arriving at `spike_step`, i.e. step <= spike_step < step + k.
bool window_spans(std::size_t step, std::size_t k, std::size_t spike_step);

struct ProfileFile {
    DriftProfile profile;
    SchedulerConfig sched;
};

// Text format: '#' comments, header lines "T <int>", "delta <real>", "K <int>",
// then one drift per line in execution order and "@<step> <magnitude>" spikes.
ProfileFile parse_profile(std::string_view text);
std::string format_profile(const ProfileFile& file);

// drifts `edge` over the first and last `edge_fraction` of the steps, `middle`
// elsewhere.
DriftProfile u_profile(std::size_t steps, double edge, double middle, double edge_fraction = 0.2);

}  // namespace unicp
