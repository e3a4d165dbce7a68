#pragma once

#include <cstddef>
#include <cstring>
#include <span>
#include <type_traits>
#include <vector>

namespace langunits {

/// Dense row-major matrix. Rows index languages throughout the engine.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    T& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<T> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::span<T> flat() { return data_; }
    std::span<const T> flat() const { return data_; }

    /// Bitwise equality, so NaN payloads and signed zeros compare exactly.
    friend bool operator==(const Matrix& a, const Matrix& b) {
        static_assert(std::is_trivially_copyable_v<T>);
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
               (a.data_.empty() ||
                std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(T)) == 0);
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

} // namespace langunits
