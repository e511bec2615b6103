#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace bssr {

// Row-major dense matrix of doubles. The single numeric container used for
// parameters, activations and gradients throughout the library.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    std::span<const double> row(std::size_t i) const;
    Matrix slice_rows(std::size_t begin, std::size_t end) const;

    bool all_finite() const;
    // Throws NumericError unless every entry is finite.
    void require_finite(const char* what) const;

    bool operator==(const Matrix& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

double dot(std::span<const double> u, std::span<const double> v);

enum class MapFn { Relu, ReluDerivative, Exp, NegExp };

Matrix elem_map(const Matrix& m, MapFn fn);

double max_abs(std::span<const double> v);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace bssr
