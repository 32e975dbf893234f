#pragma once

#include "unicp/types.hpp"

#include <array>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace unicp {

enum class RowKind : std::uint8_t { spatial, temporal, mlp };

constexpr RowKind row_kind(AttnKind k) {
    return k == AttnKind::spatial ? RowKind::spatial : RowKind::temporal;
}

std::string_view row_kind_name(RowKind k);

inline constexpr double kNotMeasured = std::numeric_limits<double>::quiet_NaN();

// One executed unit. For rows that computed attention (F or P) `k` is the window
// armed by the scheduler at this step (0 when nothing was armed) and the drifts
// are the values the scheduler measured. Reuse rows (O or M) carry the window
// they are serving and no drifts.
struct TraceRow {
    std::size_t step  = 0;
    std::size_t block = 0;
    RowKind kind      = RowKind::spatial;
    DecisionKind decision = DecisionKind::full;
    std::size_t k         = 0;
    double drift_output   = kNotMeasured;
    double drift_map      = kNotMeasured;
    MacCount macs         = 0;
};

struct TraceTotals {
    MacCount macs_total = 0;
    MacCount attention_macs = 0;
    // Indexed by DecisionKind, attention rows only.
    std::array<std::size_t, 4> attention_decisions{};
    // Indexed by DecisionKind, every row (MLP rows count as full).
    std::array<std::size_t, 4> decisions{};
};

struct RunTrace {
    std::vector<TraceRow> rows;

    TraceTotals totals() const;
    std::size_t attention_rows() const;
};

inline constexpr std::string_view kTraceHeader =
    "step,block,kind,decision,k,drift_output,drift_map,macs";

// Delimiter-separated export. `preamble` lines are written first, each prefixed
// with "# "; an empty trace with no preamble is exactly the header line.
std::string trace_export(const RunTrace& trace, const std::vector<std::string>& preamble = {});

// Inverse of trace_export; '#' lines are skipped.
RunTrace trace_parse(std::string_view text);

// Shortest-safe round-trip representation used by every text artifact.
std::string format_real(double v);

}  // namespace unicp
