#include "mew/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace mew {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

void check_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("shape must have at least one dimension");
    for (std::size_t d : shape)
        if (d == 0) throw ShapeError("dimension sizes must be >= 1, got " + shape_str(shape));
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_numel(shape_))
        throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_str(shape_));
}

Tensor Tensor::zeros(const Shape& shape) { return Tensor(shape); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }

Tensor Tensor::full(const Shape& shape, double value) {
    Tensor t(shape);
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

Tensor Tensor::reshaped(Shape shape) const {
    check_shape(shape);
    if (shape_numel(shape) != data_.size())
        throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return Tensor(std::move(shape), data_);
}

ComplexTensor::ComplexTensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_numel(shape_), cplx{});
}

ComplexTensor::ComplexTensor(Shape shape, std::vector<cplx> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_numel(shape_)) throw ShapeError("complex data length does not match shape");
}

Tensor ComplexTensor::to_planes() const {
    Shape s{2};
    s.insert(s.end(), shape_.begin(), shape_.end());
    Tensor t(s);
    const std::size_t n = data_.size();
    for (std::size_t i = 0; i < n; ++i) {
        t[i] = data_[i].real();
        t[n + i] = data_[i].imag();
    }
    return t;
}

ComplexTensor ComplexTensor::from_planes(const Tensor& planes) {
    if (planes.rank() < 2 || planes.dim(0) != 2) throw ShapeError("from_planes expects leading axis of extent 2");
    Shape s(planes.shape().begin() + 1, planes.shape().end());
    ComplexTensor z(s);
    const std::size_t n = z.size();
    for (std::size_t i = 0; i < n; ++i) z[i] = {planes[i], planes[n + i]};
    return z;
}

namespace {

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
    require_same(a, b, op);
    Tensor out(a.shape());
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    double* po = out.ptr();
    for (std::size_t i = 0; i < out.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = a;
    for (double& v : out.data()) v *= s;
    return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require_same(a, b, "add_inplace");
    double* pa = a.ptr();
    const double* pb = b.ptr();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

void axpy_inplace(Tensor& a, double alpha, const Tensor& b) {
    require_same(a, b, "axpy_inplace");
    double* pa = a.ptr();
    const double* pb = b.ptr();
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] += alpha * pb[i];
}

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double sum(const Tensor& a) { return pairwise_sum(a.data()); }

double max_abs(const Tensor& a) {
    double m = 0.0;
    for (double v : a.data()) m = std::max(m, std::abs(v));
    return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: complex shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

bool all_finite(const Tensor& a) {
    return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

std::vector<Tensor> split_channels(const Tensor& x, std::size_t parts) {
    if (x.rank() != 3) throw ShapeError("split_channels expects [C,H,W], got " + shape_str(x.shape()));
    if (parts == 0 || x.dim(0) % parts != 0)
        throw ShapeError("split_channels: C=" + std::to_string(x.dim(0)) + " not divisible by " +
                         std::to_string(parts));
    const std::size_t c = x.dim(0) / parts;
    const std::size_t block = c * x.dim(1) * x.dim(2);
    std::vector<Tensor> out;
    out.reserve(parts);
    for (std::size_t p = 0; p < parts; ++p) {
        Tensor t({c, x.dim(1), x.dim(2)});
        std::copy_n(x.ptr() + p * block, block, t.ptr());
        out.push_back(std::move(t));
    }
    return out;
}

Tensor concat_channels(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no parts");
    const std::size_t h = parts[0].dim(1), w = parts[0].dim(2);
    std::size_t c = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != 3 || p.dim(1) != h || p.dim(2) != w)
            throw ShapeError("concat_channels: mismatched part " + shape_str(p.shape()));
        c += p.dim(0);
    }
    Tensor out({c, h, w});
    double* dst = out.ptr();
    for (const Tensor& p : parts) dst = std::copy(p.data().begin(), p.data().end(), dst);
    return out;
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
    return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) throw ShapeError("stack: no items");
    Shape s{items.size()};
    s.insert(s.end(), items[0].shape().begin(), items[0].shape().end());
    Tensor out(s);
    double* dst = out.ptr();
    for (const Tensor& t : items) {
        if (t.shape() != items[0].shape()) throw ShapeError("stack: shape mismatch");
        dst = std::copy(t.data().begin(), t.data().end(), dst);
    }
    return out;
}

Tensor unstack_item(const Tensor& batch, std::size_t i) {
    if (batch.rank() < 2 || i >= batch.dim(0)) throw ShapeError("unstack_item: index out of range");
    Shape s(batch.shape().begin() + 1, batch.shape().end());
    const std::size_t n = shape_numel(s);
    std::vector<double> d(batch.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                          batch.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    return Tensor(std::move(s), std::move(d));
}

}  // namespace mew
