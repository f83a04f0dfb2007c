#include "conceptdrive/tensor.hpp"

#include <cmath>
#include <utility>

namespace conceptdrive {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_)
        throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) throw ShapeError("ragged initializer for tensor");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Tensor Tensor::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(1, n, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(n, 1, std::move(values));
}

Tensor Tensor::scalar(double value) { return Tensor(1, 1, {value}); }

double Tensor::item() const {
    if (rows_ != 1 || cols_ != 1)
        throw ShapeError("item() on a " + std::to_string(rows_) + "x" + std::to_string(cols_) +
                         " tensor");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace conceptdrive
