#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eqlab {

/// Dense real matrix stored column-major: one contiguous column per variable.
/// Expression evaluation walks whole columns, so this layout is the hot path.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) {
            return {};
        }
        Matrix m(rows.size(), rows.front().size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (rows[i].size() != m.cols_) {
                throw std::invalid_argument("Matrix::from_rows: inconsistent row width");
            }
            for (std::size_t j = 0; j < m.cols_; ++j) {
                m(i, j) = rows[i][j];
            }
        }
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool empty() const { return rows_ == 0; }

    double& operator()(std::size_t r, std::size_t c) { return data_[c * rows_ + r]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[c * rows_ + r]; }

    std::span<const double> col(std::size_t c) const { return {data_.data() + c * rows_, rows_}; }
    std::span<double> col(std::size_t c) { return {data_.data() + c * rows_, rows_}; }

    std::vector<double> row(std::size_t r) const {
        std::vector<double> out(cols_);
        for (std::size_t c = 0; c < cols_; ++c) {
            out[c] = (*this)(r, c);
        }
        return out;
    }

    void append_row(std::span<const double> values) {
        if (rows_ == 0 && cols_ == 0) {
            cols_ = values.size();
        }
        if (values.size() != cols_) {
            throw std::invalid_argument("Matrix::append_row: width mismatch");
        }
        std::vector<double> next((rows_ + 1) * cols_);
        for (std::size_t c = 0; c < cols_; ++c) {
            for (std::size_t r = 0; r < rows_; ++r) {
                next[c * (rows_ + 1) + r] = data_[c * rows_ + r];
            }
            next[c * (rows_ + 1) + rows_] = values[c];
        }
        data_ = std::move(next);
        ++rows_;
    }

    /// Rows picked by index, in the given order.
    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix m(idx.size(), cols_);
        for (std::size_t c = 0; c < cols_; ++c) {
            for (std::size_t k = 0; k < idx.size(); ++k) {
                m(k, c) = (*this)(idx[k], c);
            }
        }
        return m;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Labeled observations: feature matrix plus target vector.
struct Dataset {
    Matrix x;
    std::vector<double> y;
    std::vector<std::string> names;

    std::size_t size() const { return y.size(); }
    bool empty() const { return y.empty(); }
};

}  // namespace eqlab
