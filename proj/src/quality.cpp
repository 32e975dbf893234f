#include "unicp/quality.hpp"

#include "unicp/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace unicp {

namespace {

void require_same_shape(const LatentState& a, const LatentState& b) {
    if (a.frames != b.frames || a.tokens != b.tokens || a.dim != b.dim || a.values.size() != b.values.size()) {
        throw invalid_argument("state shapes differ: " + std::to_string(a.frames) + "x" + std::to_string(a.tokens) +
                               "x" + std::to_string(a.dim) + " vs " + std::to_string(b.frames) + "x" +
                               std::to_string(b.tokens) + "x" + std::to_string(b.dim));
    }
}

}  // namespace

double mean_squared_error(const LatentState& a, const LatentState& b) {
    require_same_shape(a, b);
    double sum        = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < a.values.size(); ++f) {
        const auto av = a.values[f].values();
        const auto bv = b.values[f].values();
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = av[i] - bv[i];
            sum += d * d;
        }
        count += av.size();
    }
    if (count == 0) throw invalid_argument("mean_squared_error: empty state");
    return sum / static_cast<double>(count);
}

double psnr(const LatentState& a, const LatentState& b, double peak) {
    if (!(peak > 0.0)) throw invalid_argument("psnr: peak must be > 0");
    const double mse = mean_squared_error(a, b);
    if (mse == 0.0) return kPsnrCapDb;
    return std::min(kPsnrCapDb, 10.0 * std::log10(peak * peak / mse));
}

std::size_t ssim_window_side(std::size_t tokens) {
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
    if (tokens == 0 || side * side != tokens) {
        throw invalid_argument("ssim: token count " + std::to_string(tokens) +
                               " is not a perfect square; use rel_l2 for this shape");
    }
    return std::min(kSsimWindow, side);
}

double ssim(const LatentState& a, const LatentState& b, double dynamic_range) {
    require_same_shape(a, b);
    if (!(dynamic_range > 0.0)) throw invalid_argument("ssim: dynamic range must be > 0");
    const std::size_t w    = ssim_window_side(a.tokens);
    const auto side        = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(a.tokens))));
    const double c1        = (0.01 * dynamic_range) * (0.01 * dynamic_range);
    const double c2        = (0.03 * dynamic_range) * (0.03 * dynamic_range);
    const double n         = static_cast<double>(w * w);
    const std::size_t span = side - w + 1;

    double total      = 0.0;
    std::size_t count = 0;
    for (std::size_t f = 0; f < a.values.size(); ++f) {
        const Mat& fa = a.values[f];
        const Mat& fb = b.values[f];
        for (std::size_t c = 0; c < a.dim; ++c) {
            for (std::size_t y0 = 0; y0 < span; ++y0) {
                for (std::size_t x0 = 0; x0 < span; ++x0) {
                    double mu_a = 0.0, mu_b = 0.0;
                    for (std::size_t y = y0; y < y0 + w; ++y)
                        for (std::size_t x = x0; x < x0 + w; ++x) {
                            mu_a += fa(y * side + x, c);
                            mu_b += fb(y * side + x, c);
                        }
                    mu_a /= n;
                    mu_b /= n;
                    double var_a = 0.0, var_b = 0.0, cov = 0.0;
                    for (std::size_t y = y0; y < y0 + w; ++y)
                        for (std::size_t x = x0; x < x0 + w; ++x) {
                            const double da = fa(y * side + x, c) - mu_a;
                            const double db = fb(y * side + x, c) - mu_b;
                            var_a += da * da;
                            var_b += db * db;
                            cov += da * db;
                        }
                    var_a /= n;
                    var_b /= n;
                    cov /= n;
                    const double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
                    const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
                    total += num / den;
                    ++count;
                }
            }
        }
    }
    return total / static_cast<double>(count);
}

double state_rel_l2(const LatentState& a, const LatentState& b) {
    require_same_shape(a, b);
    double diff = 0.0, ref = 0.0;
    for (std::size_t f = 0; f < a.values.size(); ++f) {
        const auto av = a.values[f].values();
        const auto bv = b.values[f].values();
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = av[i] - bv[i];
            diff += d * d;
            ref += bv[i] * bv[i];
        }
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-12);
}

double value_range(const LatentState& s) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (const Mat& m : s.values)
        for (double v : m.values()) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (lo > hi) throw invalid_argument("value_range: empty state");
    return hi - lo;
}

QualityReport compare_states(const LatentState& candidate, const LatentState& reference) {
    require_same_shape(candidate, reference);
    QualityReport r;
    r.peak          = value_range(reference);
    if (!(r.peak > 0.0)) r.peak = 1.0;
    r.dynamic_range = r.peak;
    r.window        = ssim_window_side(reference.tokens);
    r.mse           = mean_squared_error(candidate, reference);
    r.psnr_db       = psnr(candidate, reference, r.peak);
    r.ssim          = ssim(candidate, reference, r.dynamic_range);
    r.rel_l2        = state_rel_l2(candidate, reference);
    return r;
}

}  // namespace unicp
