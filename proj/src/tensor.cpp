#include "restore/tensor.hpp"

#include <sstream>

namespace restore {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : impl_(std::make_shared<TensorImpl<T>>()) {
    const std::size_t n = shape_numel(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(n, fill);
}

template <class T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> values)
    : impl_(std::make_shared<TensorImpl<T>>()) {
    if (shape_numel(shape) != values.size())
        throw ShapeError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    impl_->shape = std::move(shape);
    impl_->data.assign(values.begin(), values.end());
}

template <class T>
int BasicTensor<T>::dim(int i) const {
    const int r = rank();
    if (i < 0) i += r;
    if (i < 0 || i >= r)
        throw ShapeError("axis " + std::to_string(i) + " out of range for " + shape_str(shape()));
    return impl_->shape[static_cast<std::size_t>(i)];
}

template <class T>
T BasicTensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

template <class T>
BasicTensor<T> BasicTensor<T>::detach() const {
    auto copy = std::make_shared<TensorImpl<T>>();
    copy->shape = impl_->shape;
    copy->data = impl_->data;
    return BasicTensor<T>(std::move(copy));
}

namespace {
thread_local bool grad_mode_enabled = true;
}

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool on) { grad_mode_enabled = on; }

template <class T>
Tape<T>& Tape<T>::current() {
    thread_local Tape<T> tape;
    return tape;
}

template <class T>
void Tape<T>::backward(const BasicTensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ShapeError("backward() needs a scalar loss, got " +
                         (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    if (!loss.requires_grad()) throw std::logic_error("backward() on a loss that does not require grad");
    detail::grad_buffer(*loss.impl())[0] += T(1);
    last_replayed_ = 0;
    // Move the nodes out first so rules may not observe a half-cleared tape.
    std::vector<Node> nodes = std::move(nodes_);
    nodes_.clear();
    for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) {
        if (it->output->grad.empty()) continue;
        it->backward(*it->output);
        ++last_replayed_;
    }
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace restore
