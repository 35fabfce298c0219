// Copyright 2026 The mmiali Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <new>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmiali {

/// Raised for every contract violation in the library: shape mismatches,
/// invalid configuration, non-finite values and malformed files.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

/// 64-byte aligned allocation. Eigen's small-product kernels pick their path
/// from the buffer address, so a fixed alignment keeps results a function of
/// the values alone.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t n) noexcept { ::operator delete(p, n * sizeof(T), kAlign); }

    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept {
        return true;
    }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t k = 0; k < shape.size(); ++k) {
        if (k) os << ',';
        os << shape[k];
    }
    os << ']';
    return os.str();
}

[[noreturn]] inline void shape_error(const char* op, const Shape& a, const Shape& b) {
    throw Error(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

/// Dense row-major f64 array. Plain value type; graph membership lives in ad::Var.
class Tensor {
public:
    Tensor() : shape_{0}, data_{} {}
    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
    Tensor(Shape shape, std::initializer_list<double> data) : Tensor(std::move(shape), Storage(data)) {}
    Tensor(Shape shape, const std::vector<double>& data) : Tensor(std::move(shape), Storage(data.begin(), data.end())) {}
    Tensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size()) {
            throw Error("Tensor: shape " + shape_str(shape_) + " does not hold " +
                        std::to_string(data_.size()) + " values");
        }
    }

    static Tensor scalar(double v) { return Tensor(Shape{1}, Storage{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor(Shape{rows, cols}, fill);
    }
    /// Builds a matrix from nested rows; all rows must have equal length.
    static Tensor from_rows(const std::vector<std::vector<double>>& rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.front().size() : 0;
        Storage data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw Error("Tensor::from_rows: ragged rows");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor(Shape{r, c}, std::move(data));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    /// Leading (batch) dimension.
    std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_.front(); }
    /// Product of all trailing dimensions.
    std::size_t cols() const noexcept { return rows() ? size() / rows() : 0; }
    bool is_scalar() const noexcept { return size() == 1; }

    Storage& data() noexcept { return data_; }
    const Storage& data() const noexcept { return data_; }
    std::vector<double> values() const { return {data_.begin(), data_.end()}; }
    double& operator[](std::size_t k) { return data_[k]; }
    double operator[](std::size_t k) const { return data_[k]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double item() const {
        if (!is_scalar()) throw Error("Tensor::item: tensor of shape " + shape_str(shape_) + " is not scalar");
        return data_.front();
    }

    bool all_finite() const noexcept {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Rows [begin, end) as a new tensor.
    Tensor slice_rows(std::size_t begin, std::size_t end) const {
        if (begin > end || end > rows()) throw Error("Tensor::slice_rows: range out of bounds");
        Shape s = shape_;
        s.front() = end - begin;
        const std::size_t c = cols();
        return Tensor(s, Storage(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                             data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
    }

    /// Rows picked by index, in order.
    Tensor gather_rows(const std::vector<std::size_t>& index) const {
        Shape s = shape_;
        s.front() = index.size();
        Tensor out(s);
        const std::size_t c = cols();
        for (std::size_t k = 0; k < index.size(); ++k) {
            if (index[k] >= rows()) throw Error("Tensor::gather_rows: index out of range");
            std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(index[k] * c), c,
                        out.data_.begin() + static_cast<std::ptrdiff_t>(k * c));
        }
        return out;
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    Storage data_;
};

}  // namespace mmiali
