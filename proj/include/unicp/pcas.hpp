#pragma once

#include "unicp/linalg.hpp"
#include "unicp/model.hpp"

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

namespace unicp {

// Eigenbasis of the pooled input covariance sum(X^T X).
struct PcaBasis {
    Mat rotation;                         // R, m x m, columns by descending eigenvalue
    std::vector<double> eigenvalues;      // length m
    std::vector<std::size_t> calib_steps;
};

// Query/key projections folded with R D, where D keeps the first n columns.
struct SlicedWeights {
    std::size_t n = 0;
    Mat wq_sliced;  // W_q R D, m x n
    Mat wk_sliced;  // W_k R D, m x n
    std::shared_ptr<const PcaBasis> basis;
};

PcaBasis compute_basis(std::span<const Mat> calib_inputs, std::vector<std::size_t> calib_steps = {});

SlicedWeights slice_weights(const AttentionWeights& w, std::shared_ptr<const PcaBasis> basis, std::size_t n);

// Attention with scores taken in the reduced space:
// a = softmax((X Wq R D)(X Wk R D)^T / sqrt(m)). V and the output projection are
// untouched. The scale keeps the original m so n == m reproduces full attention.
AttentionResult sliced_attention_forward(const Mat& x, const AttentionWeights& w, const SlicedWeights& sw);

AttentionResult unit_sliced_attention(std::span<const Mat> inputs, const AttentionWeights& w,
                                      const SlicedWeights& sw);

// ||X - X R D D^T R^T||_F
double reconstruction_error(const Mat& x, const PcaBasis& basis, std::size_t n);

// Retained dimension for a pruned fraction: ceil(m (1 - fraction)), clamped to [1, m].
std::size_t retained_dim(std::size_t m, double pruned_fraction);

}  // namespace unicp
