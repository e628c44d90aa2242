#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sws {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <class T>
class BasicTensor;

namespace detail {

template <class T>
struct TensorImpl;

// One recorded primitive: the inputs it read and the rule that pushes the
// output gradient back into them.
template <class T>
struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
    std::function<void(TensorImpl<T>& out)> backward;
};

template <class T>
struct TensorImpl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::unique_ptr<Node<T>> node;

    // Grad buffer, allocated as zeros on first use.
    std::vector<T>& grad_buffer() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
        return grad;
    }
};

}  // namespace detail

/// Dense row-major tensor handle. Copies of a handle alias one storage; use
/// clone() for an independent copy. Parameters shared across layer positions
/// are simply the same handle held in several places.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;

    static BasicTensor zeros(Shape shape, bool requires_grad = false);
    static BasicTensor full(Shape shape, T value, bool requires_grad = false);
    static BasicTensor from_values(Shape shape, std::vector<T> values, bool requires_grad = false);
    static BasicTensor scalar(T value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<T> data();
    std::span<const T> data() const;
    T item() const;

    bool requires_grad() const;
    BasicTensor& set_requires_grad(bool on);
    bool is_leaf() const;
    bool has_grad() const;
    std::span<T> grad();
    std::span<const T> grad() const;
    void zero_grad();

    /// Independent leaf copy of the values (gradient history is dropped).
    BasicTensor clone() const;
    bool shares_storage(const BasicTensor& other) const { return impl_ && impl_ == other.impl_; }

    void backward() const;

    // Access for primitive implementations.
    const std::shared_ptr<detail::TensorImpl<T>>& impl() const { return impl_; }
    explicit BasicTensor(std::shared_ptr<detail::TensorImpl<T>> impl) : impl_(std::move(impl)) {}

private:
    std::shared_ptr<detail::TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <class To, class From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& src) {
    std::vector<To> values(src.data().begin(), src.data().end());
    return BasicTensor<To>::from_values(src.shape(), std::move(values), src.requires_grad());
}

/// Disables graph recording on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Reverse pass from a single-element loss. Leaf gradients accumulate across
/// calls; intermediate gradients are reset at the start of every call.
template <class T>
void backward(const BasicTensor<T>& loss);

/// Builds the output of a primitive. When recording is on and any input
/// requires a gradient, the node is attached and the output requires grad.
/// This is also the hook for user-defined primitives in tests.
template <class T>
BasicTensor<T> record_op(const char* op, Shape shape, std::vector<T> values,
                         const std::vector<BasicTensor<T>>& inputs,
                         std::function<void(detail::TensorImpl<T>& out)> backward_rule);

}  // namespace sws
