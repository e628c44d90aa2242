#include "sws/tensor.hpp"

#include <algorithm>
#include <unordered_set>

#include "sws/error.hpp"

namespace sws {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

template <class T>
BasicTensor<T> BasicTensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T(0), requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value, bool requires_grad) {
    const auto n = shape_numel(shape);
    return from_values(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <class T>
BasicTensor<T> BasicTensor<T>::from_values(Shape shape, std::vector<T> values, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
        throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(values.size()) +
                             " values");
    }
    auto impl = std::make_shared<detail::TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    impl->requires_grad = requires_grad;
    return BasicTensor(std::move(impl));
}

template <class T>
BasicTensor<T> BasicTensor<T>::scalar(T value, bool requires_grad) {
    return from_values({}, {value}, requires_grad);
}

template <class T>
const Shape& BasicTensor<T>::shape() const {
    return impl_->shape;
}

template <class T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
    if (axis >= impl_->shape.size()) {
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
    }
    return impl_->shape[axis];
}

template <class T>
std::size_t BasicTensor<T>::numel() const {
    return impl_->data.size();
}

template <class T>
std::span<T> BasicTensor<T>::data() {
    return impl_->data;
}

template <class T>
std::span<const T> BasicTensor<T>::data() const {
    return impl_->data;
}

template <class T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <class T>
bool BasicTensor<T>::requires_grad() const {
    return impl_->requires_grad;
}

template <class T>
BasicTensor<T>& BasicTensor<T>::set_requires_grad(bool on) {
    impl_->requires_grad = on;
    return *this;
}

template <class T>
bool BasicTensor<T>::is_leaf() const {
    return impl_->node == nullptr;
}

template <class T>
bool BasicTensor<T>::has_grad() const {
    return impl_->grad.size() == impl_->data.size();
}

template <class T>
std::span<T> BasicTensor<T>::grad() {
    return impl_->grad_buffer();
}

template <class T>
std::span<const T> BasicTensor<T>::grad() const {
    return impl_->grad_buffer();
}

template <class T>
void BasicTensor<T>::zero_grad() {
    impl_->grad.clear();
}

template <class T>
BasicTensor<T> BasicTensor<T>::clone() const {
    return from_values(impl_->shape, impl_->data, impl_->requires_grad);
}

template <class T>
void BasicTensor<T>::backward() const {
    sws::backward(*this);
}

template <class T>
void backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw ValidationError("backward() needs a single-element loss, got " +
                              (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    }
    using Impl = detail::TensorImpl<T>;
    Impl* root = loss.impl().get();

    // Iterative post-order DFS; reversed it lists every node after all of
    // its consumers.
    std::vector<Impl*> order;
    std::unordered_set<Impl*> seen;
    std::vector<std::pair<Impl*, std::size_t>> stack;
    if (root->node) {
        stack.emplace_back(root, 0);
        seen.insert(root);
    }
    while (!stack.empty()) {
        auto& [impl, next] = stack.back();
        if (next < impl->node->inputs.size()) {
            Impl* child = impl->node->inputs[next++].get();
            if (child->node && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(impl);
            stack.pop_back();
        }
    }
    std::reverse(order.begin(), order.end());

    for (Impl* impl : order) impl->grad.assign(impl->data.size(), T(0));
    if (!root->requires_grad) return;
    root->grad_buffer()[0] += T(1);
    for (Impl* impl : order) impl->node->backward(*impl);
}

template <class T>
BasicTensor<T> record_op(const char* op, Shape shape, std::vector<T> values,
                         const std::vector<BasicTensor<T>>& inputs,
                         std::function<void(detail::TensorImpl<T>& out)> backward_rule) {
    auto out = BasicTensor<T>::from_values(std::move(shape), std::move(values), false);
    if (!grad_enabled()) return out;
    const bool any = std::any_of(inputs.begin(), inputs.end(),
                                 [](const BasicTensor<T>& t) { return t.defined() && t.requires_grad(); });
    if (!any) return out;
    auto node = std::make_unique<detail::Node<T>>();
    node->op = op;
    for (const auto& t : inputs) {
        if (t.defined()) node->inputs.push_back(t.impl());
    }
    node->backward = std::move(backward_rule);
    out.impl()->node = std::move(node);
    out.impl()->requires_grad = true;
    return out;
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void backward<float>(const BasicTensor<float>&);
template void backward<double>(const BasicTensor<double>&);
template BasicTensor<float> record_op<float>(const char*, Shape, std::vector<float>,
                                             const std::vector<BasicTensor<float>>&,
                                             std::function<void(detail::TensorImpl<float>&)>);
template BasicTensor<double> record_op<double>(const char*, Shape, std::vector<double>,
                                               const std::vector<BasicTensor<double>>&,
                                               std::function<void(detail::TensorImpl<double>&)>);

}  // namespace sws
