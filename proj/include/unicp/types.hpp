#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace unicp {

using MacCount = std::uint64_t;

enum class AttnKind : std::uint8_t { spatial = 0, temporal = 1 };

inline constexpr std::size_t kAttnKinds = 2;

// What executed at one (block, kind, step) cell. The letters are the cache map
// alphabet and the trace `decision` column.
enum class DecisionKind : std::uint8_t { full, reuse_output, reuse_map, pruned };

constexpr char decision_letter(DecisionKind d) {
    switch (d) {
        case DecisionKind::full: return 'F';
        case DecisionKind::reuse_output: return 'O';
        case DecisionKind::reuse_map: return 'M';
        case DecisionKind::pruned: return 'P';
    }
    return '?';
}

// Throws unicp::Error on an unknown letter.
DecisionKind decision_from_letter(char c);

constexpr std::string_view attn_kind_name(AttnKind k) {
    return k == AttnKind::spatial ? "spatial" : "temporal";
}

AttnKind attn_kind_from_name(std::string_view name);

// Index of a (block, kind) attention unit in per-unit arrays.
constexpr std::size_t unit_index(std::size_t block, AttnKind kind) {
    return block * kAttnKinds + static_cast<std::size_t>(kind);
}

}  // namespace unicp
