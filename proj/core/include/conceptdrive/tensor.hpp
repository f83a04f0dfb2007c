#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "conceptdrive/errors.hpp"

namespace conceptdrive {

/// Dense row-major matrix of doubles. Rank <= 2 is all the pipeline needs:
/// vectors are 1 x n or n x 1, scalars are 1 x 1.
class Tensor {
public:
    Tensor() = default;
    Tensor(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
    /// 2-D initializer list, e.g. Tensor{{1,2},{3,4}}. Ragged rows throw ShapeError.
    Tensor(std::initializer_list<std::initializer_list<double>> rows);

    static Tensor row(std::vector<double> values);
    static Tensor column(std::vector<double> values);
    static Tensor scalar(double value);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Tensor& other) const {
        return rows_ == other.rows_ && cols_ == other.cols_;
    }

    double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    /// Value of a 1 x 1 tensor; ShapeError otherwise.
    double item() const;

    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

}  // namespace conceptdrive
