#include "unicp/macs.hpp"

#include "unicp/error.hpp"

#include <string>

namespace unicp {

namespace {

void require_positive(std::size_t s, std::size_t m, const char* what) {
    if (s == 0 || m == 0) {
        throw invalid_argument(std::string(what) + ": dimensions must be positive (s=" +
                               std::to_string(s) + ", m=" + std::to_string(m) + ")");
    }
}

}  // namespace

MacCount macs_full_attention(std::size_t s, std::size_t m) {
    require_positive(s, m, "macs_full_attention");
    const MacCount S = s, M = m;
    return 4 * S * M * M + 2 * S * S * M;
}

MacCount macs_sliced(std::size_t s, std::size_t m, std::size_t n) {
    require_positive(s, m, "macs_sliced");
    if (n == 0 || n > m) {
        throw invalid_argument("macs_sliced: n=" + std::to_string(n) + " outside [1, " +
                               std::to_string(m) + "]");
    }
    const MacCount S = s, M = m, N = n;
    return 2 * S * M * N + 2 * S * M * M + S * S * N + S * S * M;
}

MacCount macs_map_reuse(std::size_t s, std::size_t m) {
    require_positive(s, m, "macs_map_reuse");
    const MacCount S = s, M = m;
    return 2 * S * M * M + S * S * M;
}

MacCount macs_mlp(std::size_t tokens, std::size_t m) {
    require_positive(tokens, m, "macs_mlp");
    const MacCount T = tokens, M = m;
    return 4 * T * M * M;
}

}  // namespace unicp
