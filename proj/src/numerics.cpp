#include "crisp/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "crisp/errors.hpp"

namespace crisp {

namespace {

std::string shape(std::size_t r, std::size_t c) {
    return std::to_string(r) + "x" + std::to_string(c);
}

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw DimensionError("matrix data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape(rows, cols));
    }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw DimensionError("ragged matrix initializer");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape(a.rows(), a.cols()) + " by " +
                             shape(b.rows(), b.cols()));
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto out_row = out.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto b_row = b.row(k);
            for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
        }
    }
    return out;
}

Matrix matmul_transposed(const Matrix& x, const Matrix& w) {
    if (x.cols() != w.cols()) {
        throw DimensionError("matmul_transposed: " + shape(x.rows(), x.cols()) + " by (" +
                             shape(w.rows(), w.cols()) + ")^T");
    }
    Matrix out(x.rows(), w.rows());
    for (std::size_t o = 0; o < w.rows(); ++o) {
        const auto w_row = w.row(o);
        for (std::size_t b = 0; b < x.rows(); ++b) out(b, o) = dot(x.row(b), w_row);
    }
    return out;
}

void add_transposed_product(Matrix& g, const Matrix& d, const Matrix& x) {
    if (d.rows() != x.rows() || g.rows() != d.cols() || g.cols() != x.cols()) {
        throw DimensionError("add_transposed_product: " + shape(g.rows(), g.cols()) + " += (" +
                             shape(d.rows(), d.cols()) + ")^T " + shape(x.rows(), x.cols()));
    }
    for (std::size_t o = 0; o < g.rows(); ++o) {
        double* g_row = g.row(o).data();
        const std::size_t n = g.cols();
        for (std::size_t b = 0; b < d.rows(); ++b) {
            const double scale = d(b, o);
            if (scale == 0.0) continue;
            const double* x_row = x.row(b).data();
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) g_row[j] += scale * x_row[j];
        }
    }
}

Matrix matmul_rows(const Matrix& d, const Matrix& w) {
    if (d.cols() != w.rows()) {
        throw DimensionError("matmul_rows: " + shape(d.rows(), d.cols()) + " by " + shape(w.rows(), w.cols()));
    }
    Matrix out(d.rows(), w.cols());
    for (std::size_t o = 0; o < w.rows(); ++o) {
        const double* w_row = w.row(o).data();
        const std::size_t n = w.cols();
        for (std::size_t b = 0; b < d.rows(); ++b) {
            const double scale = d(b, o);
            if (scale == 0.0) continue;
            double* out_row = out.row(b).data();
#pragma omp simd
            for (std::size_t j = 0; j < n; ++j) out_row[j] += scale * w_row[j];
        }
    }
    return out;
}

Vector matvec(const Matrix& a, std::span<const double> x) {
    if (a.cols() != x.size()) {
        throw DimensionError("matvec: " + shape(a.rows(), a.cols()) + " by vector of " +
                             std::to_string(x.size()));
    }
    Vector y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
    return y;
}

Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
    if (a.rows() != x.size()) {
        throw DimensionError("matvec_transposed: " + shape(a.rows(), a.cols()) +
                             " by vector of " + std::to_string(x.size()));
    }
    Vector y(a.cols(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double xi = x[i];
        if (xi == 0.0) continue;
        const double* row = a.row(i).data();
        double* py = y.data();
        const std::size_t n = a.cols();
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) py[j] += xi * row[j];
    }
    return y;
}

void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v, double scale) {
    if (a.rows() != u.size() || a.cols() != v.size()) {
        throw DimensionError("add_outer: " + shape(a.rows(), a.cols()) + " vs " +
                             shape(u.size(), v.size()));
    }
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double ui = scale * u[i];
        if (ui == 0.0) continue;
        double* row = a.row(i).data();
        const double* pv = v.data();
        const std::size_t n = v.size();
#pragma omp simd
        for (std::size_t j = 0; j < n; ++j) row[j] += ui * pv[j];
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " +
                             std::to_string(b.size()));
    }
    const double* pa = a.data();
    const double* pb = b.data();
    const std::size_t n = a.size();
    double s = 0.0;
#pragma omp simd reduction(+ : s)
    for (std::size_t i = 0; i < n; ++i) s += pa[i] * pb[i];
    return s;
}

double norm(std::span<const double> v) {
    return std::sqrt(dot(v, v));
}

std::pair<Vector, double> l2_normalize(std::span<const double> v) {
    const double n = norm(v);
    if (!(n > 0.0)) throw DegenerateInputError("l2_normalize: zero-norm vector");
    if (!std::isfinite(n)) throw NumericError("l2_normalize: non-finite norm");
    Vector unit(v.begin(), v.end());
    for (double& x : unit) x /= n;
    return {std::move(unit), n};
}

Matrix softmax_rows(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto in = m.row(r);
        auto o = out.row(r);
        if (in.empty()) continue;
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp(in[c] - mx);
            sum += o[c];
        }
        for (double& x : o) x /= sum;
    }
    return out;
}

Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double eps) {
    Vector probe(x.begin(), x.end());
    Vector grad(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + eps;
        const double up = f(probe);
        probe[i] = x[i] - eps;
        const double down = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite_diff_grad: non-finite function value at coordinate " +
                               std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * eps);
    }
    return grad;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("pearson: length mismatch");
    if (a.size() < 2) throw DegenerateInputError("pearson: need at least two values");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa <= 0.0 || sbb <= 0.0) throw DegenerateInputError("pearson: zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite value");
    }
}

} // namespace crisp
