#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace restore {

/// Dimension sizes, outermost first. Layout is always row-major, and image
/// tensors are [B, C, H, W].
using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Allocator with 64-byte alignment. Tensor storage uses it so that the
/// vectorized kernels see the same alignment, and so take the same
/// summation order, on every run.
template <class T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() noexcept = default;
    template <class U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <class U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <class T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

template <class T>
struct TensorImpl {
    Shape shape;
    Buffer<T> data;
    Buffer<T> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
};

/// Handle to a dense tensor. Copies share storage; use detach() for a deep copy.
template <class T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> values);
    explicit BasicTensor(std::shared_ptr<TensorImpl<T>> impl) : impl_(std::move(impl)) {}

    static BasicTensor scalar(T value) { return BasicTensor(Shape{1}, value); }

    bool defined() const noexcept { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    /// Negative indices count from the back.
    int dim(int i) const;
    std::size_t numel() const { return impl_->data.size(); }

    std::span<T> data() { return impl_->data; }
    std::span<const T> data() const { return impl_->data; }
    T* ptr() { return impl_->data.data(); }
    const T* ptr() const { return impl_->data.data(); }
    T item() const;

    bool has_grad() const { return !impl_->grad.empty(); }
    std::span<const T> grad() const { return impl_->grad; }
    std::span<T> grad() { return impl_->grad; }
    void zero_grad() { impl_->grad.clear(); }

    bool requires_grad() const { return impl_->requires_grad; }
    BasicTensor& set_requires_grad(bool on) {
        impl_->requires_grad = on;
        return *this;
    }

    /// Deep copy of the values, detached from any recorded computation.
    BasicTensor detach() const;

    TensorImpl<T>* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl<T>>& shared() const { return impl_; }

private:
    std::shared_ptr<TensorImpl<T>> impl_;
};

using Tensor = BasicTensor<float>;

/// Thread-local switch; when off, operations record nothing and outputs never
/// require grad.
class GradMode {
public:
    static bool enabled();
    static void set_enabled(bool on);
};

class NoGradGuard {
public:
    NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
    ~NoGradGuard() { GradMode::set_enabled(previous_); }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

/// Ordered record of differentiable operations for one element type. Nodes are
/// appended as operations execute, so inputs always precede their consumers.
template <class T>
class Tape {
public:
    using Impl = TensorImpl<T>;
    /// Receives the finished output node; its grad holds d(loss)/d(output).
    using BackwardFn = std::function<void(const Impl& output)>;

    struct Node {
        std::vector<std::shared_ptr<Impl>> inputs;
        std::shared_ptr<Impl> output;
        BackwardFn backward;
    };

    static Tape& current();

    void record(Node node) { nodes_.push_back(std::move(node)); }
    std::size_t size() const noexcept { return nodes_.size(); }
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    void clear() { nodes_.clear(); }

    /// Nodes whose backward rule ran during the most recent backward().
    std::size_t last_replayed() const noexcept { return last_replayed_; }

    void backward(const BasicTensor<T>& loss);

private:
    std::vector<Node> nodes_;
    std::size_t last_replayed_ = 0;
};

/// Accumulates d(loss)/d(x) into every reachable tensor that requires grad,
/// then clears the current tape. The loss must hold exactly one element.
template <class T>
void backward(const BasicTensor<T>& loss) {
    Tape<T>::current().backward(loss);
}

namespace detail {

/// Grad buffer of `impl`, zero-allocated on first use.
template <class T>
std::span<T> grad_buffer(TensorImpl<T>& impl) {
    if (impl.grad.empty()) impl.grad.assign(impl.data.size(), T(0));
    return impl.grad;
}

template <class T>
bool any_requires_grad(std::initializer_list<const BasicTensor<T>*> inputs) {
    if (!GradMode::enabled()) return false;
    for (const auto* t : inputs)
        if (t && t->defined() && t->requires_grad()) return true;
    return false;
}

/// Builds an operation result and, when any input requires grad, records a
/// tape node whose backward rule receives the output (values and gradient).
template <class T>
BasicTensor<T> make_result(Shape shape, Buffer<T> values,
                           std::initializer_list<const BasicTensor<T>*> inputs,
                           typename Tape<T>::BackwardFn backward_fn) {
    auto impl = std::make_shared<TensorImpl<T>>();
    impl->shape = std::move(shape);
    impl->data = std::move(values);
    if (any_requires_grad(inputs)) {
        impl->requires_grad = true;
        typename Tape<T>::Node node;
        for (const auto* t : inputs)
            if (t && t->defined()) node.inputs.push_back(t->shared());
        node.output = impl;
        node.backward = std::move(backward_fn);
        Tape<T>::current().record(std::move(node));
    }
    return BasicTensor<T>(std::move(impl));
}

}  // namespace detail

}  // namespace restore
