#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <limits>

#include "mgt/nn/tensor.hpp"

namespace mgt::nn {

struct Var {
    std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
    bool valid() const noexcept { return id != std::numeric_limits<std::uint32_t>::max(); }
};

// Reverse-mode tape. Nodes are appended in evaluation order, so reverse
// insertion order is a valid topological order for backward().
//
// Parameter leaves reference the Parameter directly: forward reads its value
// without copying and backward accumulates straight into Parameter::grad, so
// repeated backward calls add up until the caller zeroes the grads.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor<T> value);
    // Leaf that keeps its gradient (inspect with grad()).
    Var input(Tensor<T> value);
    Var param(Parameter<T>& p);
    // Read-only parameter leaf; never receives gradient.
    Var frozen(const Parameter<T>& p);

    const Tensor<T>& value(Var v) const;
    const Tensor<T>& grad(Var v) const;
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    bool grad_enabled() const noexcept { return grad_enabled_; }
    std::size_t size() const noexcept { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and runs every recorded backward function.
    // Throws std::logic_error if `loss` is not a scalar recorded on this tape.
    void backward(Var loss);

    // Op-implementer interface.
    Var push(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn fn);
    Var push(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn fn);
    // Gradient accumulator for `v`, zero-initialized on first use.
    Tensor<T>& grad_buffer(Var v);

private:
    struct Node {
        Tensor<T> owned;
        const Tensor<T>* ref = nullptr;
        Tensor<T> grad;
        Parameter<T>* param = nullptr;
        BackwardFn backward;
        bool requires_grad = false;
        bool retains_grad = false;

        const Tensor<T>& value() const { return ref ? *ref : owned; }
    };

    Node& node(Var v);
    const Node& node(Var v) const;

    // deque keeps references to existing nodes stable across push_back.
    std::deque<Node> nodes_;
    bool grad_enabled_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace mgt::nn
