#pragma once

#include "unicp/dws.hpp"
#include "unicp/edcw.hpp"
#include "unicp/model.hpp"

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unicp::cli {

enum class RunMode : std::uint8_t { baseline, calibrate, unicp_online, unicp_replay, harness, compare };

std::string_view run_mode_name(RunMode m);

struct Preset {
    std::string_view name;
    double delta;
};

inline constexpr Preset kPresets[] = {
    {"E1", 0.025}, {"E2", 0.05}, {"E3", 0.075}, {"E4", 0.125}, {"E5", 0.175},
};

// Threshold for a preset name; throws on an unknown one.
double preset_delta(std::string_view name);

struct RunSpec {
    RunMode mode = RunMode::baseline;
    ModelConfig model;
    SchedulerConfig scheduler;
    RatioBounds ratio;
    Aggregation aggregation = Aggregation::conservative;
    std::optional<std::string> preset;
    bool prune = true;

    std::filesystem::path out = "out";
    // Where calibration artifacts are read from; defaults to `out`.
    std::optional<std::filesystem::path> calib_dir;
    std::optional<std::filesystem::path> baseline_trace;
    // harness: profile file, built-in spiked U profile when absent.
    std::optional<std::filesystem::path> profile;
    std::vector<std::size_t> fixed_windows{2, 3, 4};
    // compare: reference then candidate.
    std::vector<std::filesystem::path> inputs;

    void validate() const;

    std::filesystem::path calibration_dir() const { return calib_dir.value_or(out); }
};

// One-line canonical JSON of everything that determines a command's artifacts.
std::string spec_echo(const RunSpec& spec);

// Applies a JSON config document onto `spec`. Unknown keys are rejected.
void apply_config(RunSpec& spec, std::string_view json_text);

// Artifact names inside the output directory.
inline constexpr std::string_view kBaselineState = "baseline_state.bin";
inline constexpr std::string_view kBaselineTrace = "baseline_trace.csv";
inline constexpr std::string_view kCacheMap      = "cache_map.txt";
inline constexpr std::string_view kSlicedWeights = "sliced_weights.bin";
inline constexpr std::string_view kCalibRecords  = "calibration.csv";
inline constexpr std::string_view kRunState      = "unicp_state.bin";
inline constexpr std::string_view kRunTrace      = "unicp_trace.csv";
inline constexpr std::string_view kRunMap        = "unicp_cache_map.txt";
inline constexpr std::string_view kHarnessSteps  = "harness_steps.csv";
inline constexpr std::string_view kHarnessReport = "harness_report.json";
inline constexpr std::string_view kQualityReport = "quality_report.json";

int cmd_baseline(const RunSpec& spec, std::ostream& out);
int cmd_calibrate(const RunSpec& spec, std::ostream& out);
int cmd_run_unicp(const RunSpec& spec, std::ostream& out);
int cmd_harness(const RunSpec& spec, std::ostream& out);
int cmd_compare(const RunSpec& spec, std::ostream& out);

// Parses arguments, runs the command and maps failures to exit codes:
// 0 success, 2 configuration or validation, 3 missing artifact, 4 numeric.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace unicp::cli
