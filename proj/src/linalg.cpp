#include "unicp/linalg.hpp"

#include "unicp/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace unicp {

namespace {

constexpr double kRelFloor       = 1e-12;
constexpr double kJacobiTol      = 1e-10;
constexpr int kJacobiMaxSweeps   = 100;

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw invalid_argument(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                               b.shape_string());
    }
}

double off_diagonal_norm(const Mat& a) {
    double acc = 0.0;
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c)
            if (r != c) acc += a(r, c) * a(r, c);
    return std::sqrt(acc);
}

}  // namespace

Mat::Mat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw invalid_argument("Mat: data length " + std::to_string(data_.size()) +
                               " does not match " + shape_string());
    }
}

Mat::Mat(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw invalid_argument("Mat: ragged initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Mat Mat::identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

std::string Mat::shape_string() const {
    std::ostringstream os;
    os << rows_ << "x" << cols_;
    return os.str();
}

Mat matmul(const Mat& a, const Mat& b) {
    if (a.cols() != b.rows()) {
        throw invalid_argument("matmul: inner dimensions differ (" + a.shape_string() + " * " +
                               b.shape_string() + ")");
    }
    Mat out(a.rows(), b.cols());
    const std::size_t inner = a.cols();
    const std::size_t n     = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* orow = out.row(i).data();
        for (std::size_t k = 0; k < inner; ++k) {
            const double aik  = a(i, k);
            const double* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Mat matmul_transposed(const Mat& a, const Mat& b) {
    if (a.cols() != b.cols()) {
        throw invalid_argument("matmul_transposed: column counts differ (" + a.shape_string() +
                               " * (" + b.shape_string() + ")^T)");
    }
    Mat out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            auto brow  = b.row(j);
            double acc = 0.0;
            for (std::size_t k = 0; k < arow.size(); ++k) acc += arow[k] * brow[k];
            out(i, j) = acc;
        }
    }
    return out;
}

Mat transpose(const Mat& a) {
    Mat out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    return out;
}

Mat add(const Mat& a, const Mat& b) {
    Mat out = a;
    add_inplace(out, b);
    return out;
}

void add_inplace(Mat& a, const Mat& b) {
    require_same_shape(a, b, "add");
    auto dst = a.values();
    auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Mat sub(const Mat& a, const Mat& b) {
    require_same_shape(a, b, "sub");
    Mat out = a;
    auto dst = out.values();
    auto src = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= src[i];
    return out;
}

Mat scale(const Mat& a, double s) {
    Mat out = a;
    for (double& v : out.values()) v *= s;
    return out;
}

Mat leading_columns(const Mat& a, std::size_t n) {
    if (n > a.cols()) {
        throw invalid_argument("leading_columns: " + std::to_string(n) + " exceeds " +
                               a.shape_string());
    }
    Mat out(a.rows(), n);
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < n; ++c) out(r, c) = a(r, c);
    return out;
}

Mat vstack(std::span<const Mat> parts) {
    if (parts.empty()) return {};
    const std::size_t cols = parts.front().cols();
    std::size_t rows       = 0;
    for (const auto& p : parts) {
        if (p.cols() != cols) {
            throw invalid_argument("vstack: column mismatch " + p.shape_string() + " vs " +
                                   parts.front().shape_string());
        }
        rows += p.rows();
    }
    std::vector<double> data;
    data.reserve(rows * cols);
    for (const auto& p : parts) data.insert(data.end(), p.values().begin(), p.values().end());
    return Mat(rows, cols, std::move(data));
}

Mat row_block(const Mat& a, std::size_t first, std::size_t count) {
    if (first + count > a.rows()) {
        throw invalid_argument("row_block: rows [" + std::to_string(first) + ", " +
                               std::to_string(first + count) + ") outside " + a.shape_string());
    }
    auto src = a.values().subspan(first * a.cols(), count * a.cols());
    return Mat(count, a.cols(), std::vector<double>(src.begin(), src.end()));
}

double frobenius_norm(const Mat& a) {
    double acc = 0.0;
    for (double v : a.values()) acc += v * v;
    return std::sqrt(acc);
}

double rel_l2(const Mat& a, const Mat& b) {
    require_same_shape(a, b, "rel_l2");
    double diff = 0.0;
    double ref  = 0.0;
    auto av     = a.values();
    auto bv     = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        diff += d * d;
        ref += bv[i] * bv[i];
    }
    return std::sqrt(diff) / std::max(std::sqrt(ref), kRelFloor);
}

Mat softmax_rows(const Mat& m) {
    Mat out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        auto in   = m.row(r);
        auto dst  = out.row(r);
        double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            dst[c] = std::exp(in[c] - mx);
            sum += dst[c];
        }
        for (double& v : dst) v /= sum;
    }
    return out;
}

bool all_finite(const Mat& m) {
    return std::all_of(m.values().begin(), m.values().end(),
                       [](double v) { return std::isfinite(v); });
}

EigResult sym_eig(const Mat& m) {
    if (m.rows() != m.cols()) {
        throw invalid_argument("sym_eig: matrix is not square (" + m.shape_string() + ")");
    }
    const std::size_t n = m.rows();
    Mat a(n, n);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) a(r, c) = 0.5 * (m(r, c) + m(c, r));
    Mat v = Mat::identity(n);

    const double tol = kJacobiTol * std::max(1.0, frobenius_norm(a));
    bool converged   = off_diagonal_norm(a) <= tol;
    for (int sweep = 0; sweep < kJacobiMaxSweeps && !converged; ++sweep) {
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t     = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p);
                    const double akq = a(k, q);
                    a(k, p)          = c * akp - s * akq;
                    a(k, q)          = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k);
                    const double aqk = a(q, k);
                    a(p, k)          = c * apk - s * aqk;
                    a(q, k)          = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p)          = c * vkp - s * vkq;
                    v(k, q)          = s * vkp + c * vkq;
                }
            }
        }
        converged = off_diagonal_norm(a) <= tol;
    }
    if (!converged) {
        std::ostringstream os;
        os << "sym_eig: no convergence after " << kJacobiMaxSweeps
           << " sweeps, off-diagonal residual " << off_diagonal_norm(a);
        throw Error(ErrorCode::numeric, os.str());
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return a(i, i) > a(j, j); });

    EigResult out;
    out.eigenvalues.resize(n);
    out.eigenvectors = Mat(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.eigenvalues[j]    = a(src, src);
        std::size_t pivot     = 0;
        for (std::size_t k = 1; k < n; ++k)
            if (std::abs(v(k, src)) > std::abs(v(pivot, src))) pivot = k;
        const double sign = v(pivot, src) < 0.0 ? -1.0 : 1.0;
        for (std::size_t k = 0; k < n; ++k) out.eigenvectors(k, j) = sign * v(k, src);
    }
    return out;
}

}  // namespace unicp
