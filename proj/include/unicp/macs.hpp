#pragma once

#include "unicp/types.hpp"

#include <cstddef>

namespace unicp {

// Multiply-accumulate counts for one attention sequence of length s over model
// width m. Only dense matmuls are counted; softmax and nonlinearities are free.

// Q, K, V projections + output projection (4sm^2) and the two score/value
// products (2s^2 m).
MacCount macs_full_attention(std::size_t s, std::size_t m);

// Query/key projected straight into n dims, V and output untouched.
MacCount macs_sliced(std::size_t s, std::size_t m, std::size_t n);

// Map served from cache: V projection, a*V, output projection.
MacCount macs_map_reuse(std::size_t s, std::size_t m);

inline constexpr MacCount macs_output_reuse = 0;

// Two-layer MLP m -> 2m -> m over `tokens` rows.
MacCount macs_mlp(std::size_t tokens, std::size_t m);

}  // namespace unicp
