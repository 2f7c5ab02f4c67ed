#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cfql {

/**
Dense row-major tensor of 64-bit floats.

The product of the extents in `shape` always equals `data.size()`. Rank-0
tensors (scalars) are represented by an empty shape and a single element.
*/
struct DenseArray {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    DenseArray() = default;

    DenseArray(std::vector<std::size_t> shape_, std::vector<double> data_)
        : shape(std::move(shape_)), data(std::move(data_)) {
        if (element_count(shape) != data.size())
            throw std::invalid_argument("DenseArray: shape product " +
                                        std::to_string(element_count(shape)) +
                                        " does not match data length " + std::to_string(data.size()));
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

    static DenseArray zeros(std::vector<std::size_t> shape) {
        std::size_t n = element_count(shape);
        return DenseArray(std::move(shape), std::vector<double>(n, 0.0));
    }

    static DenseArray full(std::vector<std::size_t> shape, double value) {
        std::size_t n = element_count(shape);
        return DenseArray(std::move(shape), std::vector<double>(n, value));
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    std::size_t extent(std::size_t dim) const {
        if (dim >= shape.size()) throw std::out_of_range("DenseArray::extent: dim out of range");
        return shape[dim];
    }

    /// Number of rows of a rank-2 array (batch size by convention).
    std::size_t rows() const { return rank() == 2 ? shape[0] : throw_rank2(); }
    /// Number of columns of a rank-2 array (feature width by convention).
    std::size_t cols() const { return rank() == 2 ? shape[1] : throw_rank2(); }

    double& operator()(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    std::span<double> row(std::size_t r) {
        return std::span<double>(data.data() + r * shape[1], shape[1]);
    }
    std::span<const double> row(std::size_t r) const {
        return std::span<const double>(data.data() + r * shape[1], shape[1]);
    }

    bool same_shape(const DenseArray& other) const { return shape == other.shape; }

  private:
    [[noreturn]] std::size_t throw_rank2() const {
        throw std::logic_error("DenseArray: rank-2 accessor used on rank-" + std::to_string(rank()) +
                               " array");
    }
};

/// True when every element is finite.
bool all_finite(const DenseArray& a);

/// Largest absolute difference between two same-shaped arrays.
double max_abs_diff(const DenseArray& a, const DenseArray& b);

}  // namespace cfql
