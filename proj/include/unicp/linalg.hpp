#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace unicp {

// Dense row-major matrix of doubles.
class Mat {
public:
    Mat() = default;
    Mat(std::size_t rows, std::size_t cols, double fill = 0.0);
    Mat(std::size_t rows, std::size_t cols, std::vector<double> data);
    Mat(std::initializer_list<std::initializer_list<double>> rows);

    static Mat identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    std::string shape_string() const;

    bool operator==(const Mat& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct EigResult {
    std::vector<double> eigenvalues;  // descending
    Mat eigenvectors;                 // column j pairs with eigenvalues[j]
};

Mat matmul(const Mat& a, const Mat& b);
// a * b^T without materializing the transpose.
Mat matmul_transposed(const Mat& a, const Mat& b);
Mat transpose(const Mat& a);
Mat add(const Mat& a, const Mat& b);
Mat sub(const Mat& a, const Mat& b);
Mat scale(const Mat& a, double s);
void add_inplace(Mat& a, const Mat& b);

// First n columns.
Mat leading_columns(const Mat& a, std::size_t n);
// Stacks matrices with equal column count top to bottom.
Mat vstack(std::span<const Mat> parts);
// Rows [first, first + count).
Mat row_block(const Mat& a, std::size_t first, std::size_t count);

double frobenius_norm(const Mat& a);
// ||a - b||_F / max(||b||_F, 1e-12)
double rel_l2(const Mat& a, const Mat& b);

Mat softmax_rows(const Mat& m);

bool all_finite(const Mat& m);

// Cyclic Jacobi eigensolver for symmetric input. The input is symmetrized as
// (M + M^T) / 2 before rotation. Eigenvector columns carry a deterministic sign:
// the largest-magnitude entry of each column is positive.
EigResult sym_eig(const Mat& m);

}  // namespace unicp
