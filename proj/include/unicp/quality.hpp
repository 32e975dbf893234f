#pragma once

#include "unicp/model.hpp"

#include <cstddef>
#include <string>

namespace unicp {

inline constexpr double kPsnrCapDb        = 99.0;
inline constexpr std::size_t kSsimWindow  = 8;

double mean_squared_error(const LatentState& a, const LatentState& b);

// 10 log10(peak^2 / MSE), kPsnrCapDb when MSE == 0.
double psnr(const LatentState& a, const LatentState& b, double peak);

// Single-scale SSIM with a uniform window. Each frame's s tokens are laid out
// as a sqrt(s) x sqrt(s) grid; every channel is scored separately over all
// window positions (stride 1, window side min(8, sqrt(s))) and the per-window
// values are averaged over positions, channels and frames.
double ssim(const LatentState& a, const LatentState& b, double dynamic_range);

// Side of the SSIM window for a given token count; throws when s is not square.
std::size_t ssim_window_side(std::size_t tokens);

// ||a - b|| / ||b|| over the whole state.
double state_rel_l2(const LatentState& a, const LatentState& b);

// max - min over every value of the state.
double value_range(const LatentState& s);

struct QualityReport {
    double psnr_db = 0.0;
    double ssim    = 0.0;
    double rel_l2  = 0.0;
    double mse     = 0.0;
    // Constants used, echoed in the report.
    double peak          = 0.0;
    double dynamic_range = 0.0;
    std::size_t window   = 0;
};

// `reference` is the baseline output; peak and dynamic range come from its value range.
QualityReport compare_states(const LatentState& candidate, const LatentState& reference);

}  // namespace unicp
