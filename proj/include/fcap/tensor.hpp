#pragma once

#include <cstdint>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "fcap/errors.hpp"

namespace fcap {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

// Dense row-major tensor. Layout is N x C x H x W for image batches and
// N x D for vectors. Values are immutable once an op has produced them;
// only the gradient buffer is written during backward passes.
template <typename S>
class TensorT {
public:
    using value_type = S;

    TensorT() = default;

    explicit TensorT(Shape shape) : shape_(std::move(shape)) {
        data_.resize(static_cast<std::size_t>(shape_numel(shape_)), S(0));
    }

    TensorT(Shape shape, std::vector<S> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_str(shape_));
    }

    const Shape& shape() const { return shape_; }
    std::int64_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t ndim() const { return shape_.size(); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    S* data() { return data_.data(); }
    const S* data() const { return data_.data(); }
    std::vector<S>& values() { return data_; }
    const std::vector<S>& values() const { return data_; }

    S& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    S operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    bool has_grad() const { return !grad_.empty(); }

    // Allocates (zeroed) gradient storage of identical shape.
    void ensure_grad() {
        if (grad_.empty()) grad_.assign(data_.size(), S(0));
    }
    void zero_grad() {
        if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), S(0));
    }

    S* grad() { return grad_.data(); }
    const S* grad() const { return grad_.data(); }
    std::vector<S>& grad_values() { return grad_; }
    const std::vector<S>& grad_values() const { return grad_; }

    bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<S> data_;
    std::vector<S> grad_;
};

using Tensor = TensorT<float>;

template <typename S>
using TensorPtrT = std::shared_ptr<TensorT<S>>;
using TensorPtr = TensorPtrT<float>;

template <typename S, typename... Args>
TensorPtrT<S> make_tensor(Args&&... args) {
    return std::make_shared<TensorT<S>>(std::forward<Args>(args)...);
}

extern template class TensorT<float>;
extern template class TensorT<double>;

} // namespace fcap
