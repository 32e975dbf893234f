#include "unicp/pcas.hpp"

#include "unicp/error.hpp"
#include "unicp/macs.hpp"
#include "unicp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace unicp {

PcaBasis compute_basis(std::span<const Mat> calib_inputs, std::vector<std::size_t> calib_steps) {
    if (calib_inputs.empty()) throw invalid_argument("compute_basis: no calibration inputs");
    const std::size_t m = calib_inputs.front().cols();
    Mat cov(m, m);
    for (const Mat& x : calib_inputs) {
        if (x.cols() != m) {
            throw invalid_argument("compute_basis: inconsistent width " + x.shape_string() + " vs m=" +
                                   std::to_string(m));
        }
        for (std::size_t r = 0; r < x.rows(); ++r) {
            auto row = x.row(r);
            for (std::size_t i = 0; i < m; ++i) {
                const double xi = row[i];
                if (xi == 0.0) continue;
                for (std::size_t j = 0; j < m; ++j) cov(i, j) += xi * row[j];
            }
        }
    }
    EigResult eig = sym_eig(cov);
    PcaBasis basis;
    basis.rotation    = std::move(eig.eigenvectors);
    basis.eigenvalues = std::move(eig.eigenvalues);
    basis.calib_steps = std::move(calib_steps);
    return basis;
}

SlicedWeights slice_weights(const AttentionWeights& w, std::shared_ptr<const PcaBasis> basis, std::size_t n) {
    if (!basis) throw invalid_argument("slice_weights: missing basis");
    const std::size_t m = basis->rotation.cols();
    if (n < 1 || n > m) {
        throw invalid_argument("slice_weights: n=" + std::to_string(n) + " outside [1, " + std::to_string(m) + "]");
    }
    const Mat rd = leading_columns(basis->rotation, n);
    SlicedWeights sw;
    sw.n         = n;
    sw.wq_sliced = matmul(w.w_q, rd);
    sw.wk_sliced = matmul(w.w_k, rd);
    sw.basis     = std::move(basis);
    return sw;
}

AttentionResult sliced_attention_forward(const Mat& x, const AttentionWeights& w, const SlicedWeights& sw) {
    if (x.cols() != sw.wq_sliced.rows() || x.cols() != w.w_v.rows()) {
        throw invalid_argument("sliced_attention_forward: input " + x.shape_string() + " vs sliced weights " +
                               sw.wq_sliced.shape_string());
    }
    const std::size_t s = x.rows();
    const std::size_t m = x.cols();
    const Mat zq        = matmul(x, sw.wq_sliced);
    const Mat zk        = matmul(x, sw.wk_sliced);
    const Mat v         = matmul(x, w.w_v);
    AttentionResult out;
    out.map    = softmax_rows(scale(matmul_transposed(zq, zk), 1.0 / std::sqrt(static_cast<double>(m))));
    out.output = matmul(matmul(out.map, v), w.w_o);
    out.macs   = macs_sliced(s, m, sw.n);
    return out;
}

AttentionResult unit_sliced_attention(std::span<const Mat> inputs, const AttentionWeights& w,
                                      const SlicedWeights& sw) {
    std::vector<AttentionResult> parts(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) { parts[i] = sliced_attention_forward(inputs[i], w, sw); });
    std::vector<Mat> maps, outputs;
    AttentionResult out;
    for (auto& p : parts) {
        maps.push_back(std::move(p.map));
        outputs.push_back(std::move(p.output));
        out.macs += p.macs;
    }
    out.map    = vstack(maps);
    out.output = vstack(outputs);
    return out;
}

double reconstruction_error(const Mat& x, const PcaBasis& basis, std::size_t n) {
    const std::size_t m = basis.rotation.rows();
    if (x.cols() != m) {
        throw invalid_argument("reconstruction_error: input " + x.shape_string() + " vs basis " +
                               basis.rotation.shape_string());
    }
    if (n > m) throw invalid_argument("reconstruction_error: n exceeds m");
    const Mat rd = leading_columns(basis.rotation, n);
    const Mat z  = matmul(x, rd);
    const Mat xr = matmul_transposed(z, rd);
    return frobenius_norm(sub(x, xr));
}

std::size_t retained_dim(std::size_t m, double pruned_fraction) {
    const double keep = static_cast<double>(m) * (1.0 - pruned_fraction);
    const auto n      = static_cast<std::size_t>(std::ceil(keep - 1e-9));
    return std::clamp<std::size_t>(n, 1, m);
}

}  // namespace unicp
