#pragma once

#include <complex>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mew {

using Shape = std::vector<std::size_t>;
using cplx = std::complex<double>;

/// Thrown for shape/contract violations inside the numerical core.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);
void check_shape(const Shape& shape);

/// Dense row-major real tensor (f64). Value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor zeros(const Shape& shape);
    static Tensor ones(const Shape& shape);
    static Tensor full(const Shape& shape, double value);

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    double* ptr() { return data_.data(); }
    const double* ptr() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t c, std::size_t h, std::size_t w) {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }
    double at(std::size_t c, std::size_t h, std::size_t w) const {
        return data_[(c * shape_[1] + h) * shape_[2] + w];
    }

    /// Same data, new shape of equal element count.
    Tensor reshaped(Shape shape) const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Dense row-major complex tensor.
class ComplexTensor {
public:
    ComplexTensor() = default;
    explicit ComplexTensor(Shape shape);
    ComplexTensor(Shape shape, std::vector<cplx> data);

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    std::span<cplx> data() { return data_; }
    std::span<const cplx> data() const { return data_; }
    cplx& operator[](std::size_t i) { return data_[i]; }
    const cplx& operator[](std::size_t i) const { return data_[i]; }

    /// Real and imaginary planes stacked as a leading axis of extent 2.
    Tensor to_planes() const;
    static ComplexTensor from_planes(const Tensor& planes);

    bool operator==(const ComplexTensor& other) const = default;

private:
    Shape shape_;
    std::vector<cplx> data_;
};

// Elementwise kernels; shapes must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double alpha, const Tensor& b);

/// Pairwise-tree sum (blocks of 8 summed left to right, then halves combined).
double pairwise_sum(std::span<const double> values);
double sum(const Tensor& a);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b);
bool all_finite(const Tensor& a);

std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts);
Tensor concat_channels(std::span<const Tensor> parts);
Tensor concat_channels(std::initializer_list<Tensor> parts);

/// Stack equally shaped tensors along a new leading axis.
Tensor stack(std::span<const Tensor> items);
/// Slice item i along the leading axis (drops that axis).
Tensor unstack_item(const Tensor& batch, std::size_t i);

}  // namespace mew
