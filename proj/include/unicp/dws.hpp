#pragma once

#include "unicp/edcw.hpp"
#include "unicp/model.hpp"
#include "unicp/pcas.hpp"
#include "unicp/trace.hpp"
#include "unicp/types.hpp"

#include <array>
#include <cstddef>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unicp {

enum class Aggregation : std::uint8_t {
    conservative,  // largest per-step minimal passing n
    smallest,      // smallest accepted n across calibration steps
};

enum class DispatchMode : std::uint8_t { online, replay };

std::string_view aggregation_name(Aggregation a);
Aggregation aggregation_from_name(std::string_view name);
std::string_view dispatch_mode_name(DispatchMode m);
DispatchMode dispatch_mode_from_name(std::string_view name);

// Bounds on the pruned fraction 1 - n/m.
struct RatioBounds {
    double lo = 0.1;
    double hi = 0.4;

    void validate() const;

    bool operator==(const RatioBounds&) const = default;
};

// Block x kind x step grid of executed paths plus the retained dimension per unit.
struct CacheMap {
    ModelConfig model;
    double delta       = 0.0;
    std::size_t window = 0;
    RatioBounds ratio;
    DispatchMode mode       = DispatchMode::replay;
    Aggregation aggregation = Aggregation::conservative;

    // grid[unit_index(block, kind)][T - step]: columns run in execution order.
    std::vector<std::string> grid;
    std::vector<std::optional<std::size_t>> final_n;

    static CacheMap all_full(const ModelConfig& model);

    DecisionKind cell(std::size_t block, AttnKind kind, std::size_t step) const;
    void set_cell(std::size_t block, AttnKind kind, std::size_t step, DecisionKind d);

    // Cell counts indexed by DecisionKind.
    std::array<std::size_t, 4> tallies() const;

    // Throws when the grid shape is off or a P cell has no n < m.
    void validate() const;

    bool operator==(const CacheMap&) const = default;
};

std::string cache_map_export(const CacheMap& map);
// Lines starting with '#' are ignored on import.
CacheMap cache_map_import(std::string_view text);

struct CalibrationRecord {
    std::size_t block;
    AttnKind kind;
    std::size_t step;
    std::size_t candidate_n;
    double measured_error;
    bool accepted;
};

// Inputs and full-compute outputs of one unit at its calibration steps.
struct CalibrationCapture {
    std::vector<std::size_t> steps;
    std::vector<std::vector<Mat>> inputs;
    std::vector<Mat> full_outputs;
};

struct CalibrationOptions {
    RatioBounds ratio;
    Aggregation aggregation = Aggregation::conservative;
    double sweep_step       = 0.05;
    // Empty selects the first step of each third of the schedule.
    std::vector<std::size_t> calib_steps;
};

// Snapshot handed to observers each time the scheduler takes a decision.
struct DecisionEvent {
    std::size_t step;
    std::size_t block;
    AttnKind kind;
    std::size_t window;                  // K
    const std::deque<HistoryEntry>& history;  // before `current` was recorded
    const AttentionResult& current;
    const SchedulerConfig& config;
    const Decision& decision;
};

using DecisionObserver = std::function<void(const DecisionEvent&)>;

using UnitSlices = std::vector<std::optional<SlicedWeights>>;

struct CalibrationResult {
    CacheMap map;
    UnitSlices sliced;  // per unit, n == final_n
    std::vector<CalibrationRecord> records;
    std::vector<CalibrationCapture> captures;
    RunResult baseline;
};

std::vector<std::size_t> default_calibration_steps(std::size_t steps);

// Runs a full-compute pass, fits a basis per unit from the calibration inputs,
// sweeps the pruned fraction upward from lo in sweep_step increments while the
// sliced output stays within delta of the full output, aggregates the per-step
// dimensions, and fills the grid by replaying the scheduler over the baseline
// outputs with slicing as the fall-through tier.
CalibrationResult dws_calibrate(const Model& model, const SchedulerConfig& sched, const CalibrationOptions& options,
                                const DecisionObserver& observer = {});

// Live scheduling: each unit serves armed caches, otherwise computes (sliced when
// its last decision fell through and a sliced projection with n < m exists) and
// re-decides on that result.
class OnlineDispatch final : public AttentionDispatch {
public:
    OnlineDispatch(const Model& model, SchedulerConfig sched, UnitSlices sliced = {},
                   DecisionObserver observer = {});

    Mat attend(const UnitCall& call, TraceRow& row) override;

    // Executed grid so far, mode online.
    const CacheMap& executed() const noexcept { return executed_; }

private:
    SchedulerConfig sched_;
    UnitSlices sliced_;
    DecisionObserver observer_;
    std::vector<BlockCacheState> states_;
    CacheMap executed_;
};

// Precomputed grid: F full, P sliced, O last computed output, M last computed map
// with fresh values.
class ReplayDispatch final : public AttentionDispatch {
public:
    ReplayDispatch(const Model& model, CacheMap map, UnitSlices sliced);

    Mat attend(const UnitCall& call, TraceRow& row) override;

    const CacheMap& executed() const noexcept { return executed_; }

private:
    std::size_t reuse_run_window(std::size_t unit, std::size_t step) const;

    CacheMap plan_;
    UnitSlices sliced_;
    std::vector<std::optional<AttentionResult>> last_;
    CacheMap executed_;
};

struct StepResult {
    LatentState next;
    std::vector<TraceRow> rows;
};

StepResult dispatch_step(const Model& model, const LatentState& state, std::size_t step, AttentionDispatch& dispatch);

// MACs one unit spends at one step on the given path (n only matters for P).
MacCount cell_macs(const ModelConfig& cfg, AttnKind kind, DecisionKind cell, std::size_t n);

}  // namespace unicp
