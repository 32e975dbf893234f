#pragma once

#include "unicp/dws.hpp"
#include "unicp/model.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace unicp {

// Binary containers shared by weights, sliced weights and latent states.
//
//   magic      8 bytes ("UNICPWTS", "UNICPSLC" or "UNICPSTA")
//   version    u32 (1)
//   config     u64 blocks, dim, tokens, frames, steps, seed; f64 eta_min, eta_max
//   payload    kind-specific, all integers u64 and reals f64, little-endian
//
// Weights payload: per block, spatial then temporal {Wq, Wk, Wv, Wo}, then
// MLP {W1, b1, W2, b2}, each matrix as raw row-major values.
// Sliced payload: u64 unit count, then per unit u64 block, kind, n, calibration
// step count, the steps, followed by all float data in unit order:
// R (m x m), eigenvalues (m), Wq R D (m x n), Wk R D (m x n).
// State payload: f stacked s x m frames.

std::string encode_weights(const Model& model);
Model decode_weights(std::string_view bytes);

std::string encode_sliced(const ModelConfig& cfg, const UnitSlices& sliced);
UnitSlices decode_sliced(std::string_view bytes, ModelConfig* cfg_out = nullptr);

std::string encode_state(const ModelConfig& cfg, const LatentState& state);
LatentState decode_state(std::string_view bytes, ModelConfig* cfg_out = nullptr);

// Whole-file helpers. Reading a missing file throws ErrorCode::missing_artifact.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace unicp
