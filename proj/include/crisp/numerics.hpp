#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace crisp {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
    Matrix(std::initializer_list<std::initializer_list<double>> rows);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    Matrix transposed() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// X Wᵀ for a batch X (B×in) and weights W (out×in); returns B×out.
Matrix matmul_transposed(const Matrix& x, const Matrix& w);
/// G += Dᵀ X with D (B×out), X (B×in), G (out×in).
void add_transposed_product(Matrix& g, const Matrix& d, const Matrix& x);
/// D W with D (B×out), W (out×in); returns B×in. Streams W once.
Matrix matmul_rows(const Matrix& d, const Matrix& w);

/// y = A x
Vector matvec(const Matrix& a, std::span<const double> x);
/// y = Aᵀ x
Vector matvec_transposed(const Matrix& a, std::span<const double> x);
/// A += scale · u vᵀ
void add_outer(Matrix& a, std::span<const double> u, std::span<const double> v, double scale = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> v);

/// Unit vector and the original norm. Throws DegenerateInputError on a zero vector.
std::pair<Vector, double> l2_normalize(std::span<const double> v);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& m);

/// Central finite-difference gradient of `f` at `x`.
Vector finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                        std::span<const double> x, double eps);

/// Signed Pearson correlation. Throws DegenerateInputError on zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Throws NumericError naming `what` when any value is not finite.
void require_finite(std::span<const double> values, const char* what);

} // namespace crisp
