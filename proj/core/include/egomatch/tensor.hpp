#ifndef EGOMATCH_TENSOR_HPP
#define EGOMATCH_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace egomatch {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Cache-line aligned allocation. Vectorized kernels peel a number of leading
/// elements that depends on the address, which changes rounding; fixing the
/// alignment keeps results identical from run to run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};

    AlignedAllocator() = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

    template <class U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept { return true; }
};

using AlignedBuffer = std::vector<double, AlignedAllocator<double>>;

/// Raised when operand shapes are incompatible; the message names both shapes.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major float64 array. data().size() == shape_numel(shape()) always.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
    static Tensor vector(std::initializer_list<double> values);
    static Tensor from(Shape shape, std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    double* ptr() noexcept { return data_.data(); }
    const double* ptr() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    /// Value of a single-element tensor.
    double item() const;

    /// Same data, new shape with equal element count.
    Tensor reshaped(Shape shape) const;

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    Shape shape_;
    AlignedBuffer data_;
};

}  // namespace egomatch

#endif  // EGOMATCH_TENSOR_HPP
