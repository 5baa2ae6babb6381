#include "mgt/nn/tape.hpp"

#include <stdexcept>
#include <string>

namespace mgt::nn {

template <typename T>
typename Tape<T>::Node& Tape<T>::node(Var v) {
    if (!v.valid() || v.id >= nodes_.size()) throw std::logic_error("variable not recorded on this tape");
    return nodes_[v.id];
}

template <typename T>
const typename Tape<T>::Node& Tape<T>::node(Var v) const {
    if (!v.valid() || v.id >= nodes_.size()) throw std::logic_error("variable not recorded on this tape");
    return nodes_[v.id];
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::input(Tensor<T> value) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = grad_enabled_;
    n.retains_grad = true;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::param(Parameter<T>& p) {
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Var Tape<T>::frozen(const Parameter<T>& p) {
    Node n;
    n.ref = &p.value;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
    return node(v).value();
}

template <typename T>
const Tensor<T>& Tape<T>::grad(Var v) const {
    const Node& n = node(v);
    if (n.param) return n.param->grad;
    return n.grad;
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return push(std::move(value), std::vector<Var>(inputs), std::move(fn));
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn) {
    Node n;
    n.owned = std::move(value);
    if (grad_enabled_) {
        for (Var in : inputs) {
            if (node(in).requires_grad) {
                n.requires_grad = true;
                break;
            }
        }
    }
    if (n.requires_grad) n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(Var v) {
    Node& n = node(v);
    Tensor<T>& g = n.param ? n.param->grad : n.grad;
    if (g.size() != n.value().size()) g = Tensor<T>(n.value().shape());
    return g;
}

template <typename T>
void Tape<T>::backward(Var loss) {
    if (nodes_.empty()) throw std::logic_error("backward called before any forward computation");
    Node& root = node(loss);
    if (root.value().size() != 1) {
        throw std::logic_error("backward needs a scalar loss, got shape " + root.value().shape_string());
    }
    for (auto& n : nodes_) {
        if (!n.param) n.grad = Tensor<T>();
    }
    if (!root.requires_grad) return;
    grad_buffer(loss)[0] += T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.backward || n.grad.empty()) continue;
        n.backward(*this, n.grad);
    }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace mgt::nn
