#include "bssr/matrix.hpp"

#include <cmath>
#include <string>

#include "bssr/errors.hpp"

namespace bssr {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m;
    m.rows_ = rows.size();
    m.cols_ = rows.size() ? rows.begin()->size() : 0;
    m.data_.reserve(m.rows_ * m.cols_);
    for (const auto& r : rows) {
        if (r.size() != m.cols_)
            throw ShapeError("from_rows: ragged row lengths");
        m.data_.insert(m.data_.end(), r.begin(), r.end());
    }
    return m;
}

std::span<const double> Matrix::row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
}

Matrix Matrix::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows_)
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + "," +
                         std::to_string(end) + ") out of " + std::to_string(rows_));
    Matrix out(end - begin, cols_);
    std::copy(data_.begin() + begin * cols_, data_.begin() + end * cols_, out.data_.begin());
    return out;
}

bool Matrix::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Matrix::require_finite(const char* what) const {
    if (!all_finite())
        throw NumericError(std::string(what) + ": non-finite entry");
}

static std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows())
        throw ShapeError("matmul: " + shape_str(a) + " * " + shape_str(b));
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j)
            t(j, i) = m(i, j);
    return t;
}

double dot(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size())
        throw ShapeError("dot: lengths " + std::to_string(u.size()) + " vs " +
                         std::to_string(v.size()));
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
    return s;
}

Matrix elem_map(const Matrix& m, MapFn fn) {
    Matrix out(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) {
        const double x = m.data()[i];
        double y = 0.0;
        switch (fn) {
            case MapFn::Relu: y = x > 0.0 ? x : 0.0; break;
            case MapFn::ReluDerivative: y = x > 0.0 ? 1.0 : 0.0; break;
            case MapFn::Exp: y = std::exp(x); break;
            case MapFn::NegExp: y = std::exp(-x); break;
        }
        if (!std::isfinite(y))
            throw NumericError("elem_map: non-finite result at flat index " + std::to_string(i));
        out.data()[i] = y;
    }
    return out;
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw ShapeError("max_abs_diff: length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

}  // namespace bssr
