#include "oracles.hpp"
#include "unicp/error.hpp"
#include "unicp/macs.hpp"
#include "unicp/pcas.hpp"

#include <doctest.h>

#include <memory>

using namespace unicp;

namespace {

AttentionWeights random_weights(std::size_t m, std::mt19937_64& rng) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(m));
    return {oracle::random_mat(m, m, rng, sd), oracle::random_mat(m, m, rng, sd), oracle::random_mat(m, m, rng, sd),
            oracle::random_mat(m, m, rng, sd)};
}

}  // namespace

TEST_CASE("basis is the eigenbasis of the pooled covariance") {
    std::mt19937_64 rng(1);
    std::vector<Mat> xs;
    for (int i = 0; i < 3; ++i) xs.push_back(oracle::random_mat(10, 6, rng));
    const PcaBasis b = compute_basis(xs, {3, 2, 1});
    CHECK(b.calib_steps == std::vector<std::size_t>{3, 2, 1});
    const Mat cov = oracle::pooled_covariance(xs);
    const Mat cr  = oracle::naive_matmul(cov, b.rotation);
    for (std::size_t j = 0; j < 6; ++j) {
        CHECK(b.eigenvalues[j] >= -1e-9);
        if (j > 0) CHECK(b.eigenvalues[j - 1] >= b.eigenvalues[j]);
        for (std::size_t i = 0; i < 6; ++i) CHECK(cr(i, j) == doctest::Approx(b.eigenvalues[j] * b.rotation(i, j)));
    }
    CHECK_THROWS_AS(compute_basis(std::vector<Mat>{}), Error);
    const Mat mixed[] = {Mat(2, 3), Mat(2, 4)};
    CHECK_THROWS_AS(compute_basis(mixed), Error);
}

TEST_CASE("reconstruction error equals the dropped spectrum") {
    std::mt19937_64 rng(2);
    const Mat x      = oracle::random_mat(20, 8, rng);
    const Mat xs[]   = {x};
    const PcaBasis b = compute_basis(xs);
    for (std::size_t n = 0; n <= 8; ++n) {
        double dropped = 0.0;
        for (std::size_t j = n; j < 8; ++j) dropped += b.eigenvalues[j];
        CHECK(reconstruction_error(x, b, n) == doctest::Approx(std::sqrt(std::max(dropped, 0.0))).epsilon(1e-9));
    }
    CHECK(reconstruction_error(x, b, 8) < 1e-12 * oracle::frob(x));
    CHECK_THROWS_AS(reconstruction_error(x, b, 9), Error);
}

TEST_CASE("retained dimension rounding") {
    CHECK(retained_dim(64, 0.0) == 64);
    CHECK(retained_dim(64, 0.1) == 58);   // ceil(57.6)
    CHECK(retained_dim(64, 0.25) == 48);  // exact
    CHECK(retained_dim(64, 0.4) == 39);   // ceil(38.4)
    CHECK(retained_dim(10, 0.3) == 7);    // 10 * 0.7 is 7 up to rounding
    CHECK(retained_dim(4, 0.99) == 1);
    CHECK(retained_dim(4, 1.0) == 1);
}

TEST_CASE("sliced attention equals the reconstruct-then-multiply oracle") {
    std::mt19937_64 rng(3);
    const std::size_t m = 12, s = 9;
    const AttentionWeights w = random_weights(m, rng);
    std::vector<Mat> calib;
    for (int i = 0; i < 4; ++i) calib.push_back(oracle::random_mat(s, m, rng));
    auto basis = std::make_shared<const PcaBasis>(compute_basis(calib));
    const Mat x = oracle::random_mat(s, m, rng);
    for (std::size_t n = 1; n <= m; ++n) {
        const SlicedWeights sw  = slice_weights(w, basis, n);
        const AttentionResult r = sliced_attention_forward(x, w, sw);
        const auto ref          = oracle::sliced_attention(x, w, basis->rotation, n);
        CHECK(oracle::max_abs_diff(r.map, ref.map) < 1e-12);
        CHECK(oracle::rel_diff(r.output, ref.output) < 1e-11);
        CHECK(r.macs == macs_sliced(s, m, n));
        CHECK(r.macs == oracle::count_attention_macs(s, m, n, false));
    }
    CHECK_THROWS_AS(slice_weights(w, basis, 0), Error);
    CHECK_THROWS_AS(slice_weights(w, basis, m + 1), Error);
    CHECK_THROWS_AS(slice_weights(w, nullptr, 2), Error);
}

TEST_CASE("full retained width reproduces dense attention") {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t m = 4 + trial % 9, s = 3 + trial % 7;
        const AttentionWeights w = random_weights(m, rng);
        const Mat xs[]           = {oracle::random_mat(s, m, rng)};
        auto basis               = std::make_shared<const PcaBasis>(compute_basis(xs));
        const Mat x              = oracle::random_mat(s, m, rng);
        const auto sliced        = sliced_attention_forward(x, w, slice_weights(w, basis, m));
        CHECK(rel_l2(sliced.output, attention_forward(x, w).output) < 1e-10);
    }
}

TEST_CASE("unit batches stack per-sequence results") {
    std::mt19937_64 rng(5);
    const std::size_t m = 6;
    const AttentionWeights w = random_weights(m, rng);
    const std::vector<Mat> inputs{oracle::random_mat(4, m, rng), oracle::random_mat(4, m, rng)};
    auto basis               = std::make_shared<const PcaBasis>(compute_basis(inputs));
    const SlicedWeights sw   = slice_weights(w, basis, 3);
    const AttentionResult u  = unit_sliced_attention(inputs, w, sw);
    CHECK(u.output.rows() == 8);
    CHECK(u.macs == 2 * macs_sliced(4, m, 3));
    const AttentionResult second = sliced_attention_forward(inputs[1], w, sw);
    CHECK(row_block(u.output, 4, 4) == second.output);
}
