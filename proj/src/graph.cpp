#include "fcap/graph.hpp"

#include <algorithm>

#include "fcap/rng.hpp"

namespace fcap {

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::input(TensorPtrT<S> value, bool requires_grad) {
    Node n;
    n.kind = OpKind::Input;
    n.out = std::move(value);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::parameter(TensorPtrT<S> value) {
    Node n;
    n.kind = OpKind::Parameter;
    n.out = std::move(value);
    n.requires_grad = true;
    return push(std::move(n));
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::conv2d(NodeId x, NodeId w, NodeId b, std::int64_t stride) {
    Node n;
    n.kind = OpKind::Conv2d;
    n.in[0] = x;
    n.in[1] = w;
    n.in[2] = b;
    n.stride = stride;
    n.requires_grad = nodes_[x].requires_grad || nodes_[w].requires_grad || nodes_[b].requires_grad;
    n.out = make_tensor<S>();
    kernels::conv2d_forward(*nodes_[x].out, *nodes_[w].out, *nodes_[b].out, stride, *n.out);
    return push(std::move(n));
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::linear(NodeId x, NodeId w, NodeId b) {
    Node n;
    n.kind = OpKind::Linear;
    n.in[0] = x;
    n.in[1] = w;
    n.in[2] = b;
    n.requires_grad = nodes_[x].requires_grad || nodes_[w].requires_grad || nodes_[b].requires_grad;
    n.out = make_tensor<S>();
    kernels::linear_forward(*nodes_[x].out, *nodes_[w].out, *nodes_[b].out, *n.out);
    return push(std::move(n));
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::relu(NodeId x) {
    Node n;
    n.kind = OpKind::Relu;
    n.in[0] = x;
    n.requires_grad = nodes_[x].requires_grad;
    n.out = make_tensor<S>();
    kernels::relu_forward(*nodes_[x].out, *n.out);
    return push(std::move(n));
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::tanh(NodeId x) {
    Node n;
    n.kind = OpKind::Tanh;
    n.in[0] = x;
    n.requires_grad = nodes_[x].requires_grad;
    n.out = make_tensor<S>();
    kernels::tanh_forward(*nodes_[x].out, *n.out);
    return push(std::move(n));
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::dropout(NodeId x, double p, Mode mode, std::uint64_t seed) {
    Node n;
    n.kind = OpKind::Dropout;
    n.in[0] = x;
    n.p = p;
    n.train = (mode == Mode::Train);
    n.seed = seed;
    n.requires_grad = nodes_[x].requires_grad;
    n.out = make_tensor<S>();
    kernels::dropout_forward(*nodes_[x].out, p, n.train, seed, *n.out);
    return push(std::move(n));
}

template <typename S>
typename GraphT<S>::NodeId GraphT<S>::mse(NodeId pred, NodeId target) {
    Node n;
    n.kind = OpKind::Mse;
    n.in[0] = pred;
    n.in[1] = target;
    n.requires_grad = nodes_[pred].requires_grad || nodes_[target].requires_grad;
    n.scalar_value = kernels::mse_forward(*nodes_[pred].out, *nodes_[target].out);
    n.out = make_tensor<S>(Shape{1}, std::vector<S>{static_cast<S>(n.scalar_value)});
    return push(std::move(n));
}

template <typename S>
double GraphT<S>::scalar(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (n.out->numel() != 1)
        throw ParameterError("scalar() called on a node with " + std::to_string(n.out->numel()) +
                             " elements");
    return n.kind == OpKind::Mse ? n.scalar_value : static_cast<double>((*n.out)[0]);
}

template <typename S>
S* GraphT<S>::grad_of(NodeId id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.kind == OpKind::Parameter) {
        n.out->ensure_grad();
        return n.out->grad();
    }
    if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(n.out->numel()), S(0));
    return n.grad.data();
}

template <typename S>
const std::vector<S>& GraphT<S>::grad(NodeId id) const {
    const Node& n = nodes_.at(id);
    if (n.kind == OpKind::Parameter) return n.out->grad_values();
    return n.grad;
}

template <typename S>
void GraphT<S>::backward(NodeId root, S scale) {
    Node& r = nodes_.at(root);
    if (r.out->numel() != 1)
        throw ParameterError("backward root must be scalar, got shape " +
                             shape_str(r.out->shape()));
    for (Node& n : nodes_) n.visits = 0;
    if (!r.requires_grad) return;
    S* rg = grad_of(root);
    rg[0] += scale;

    for (NodeId id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        const bool has_grad =
            n.kind == OpKind::Parameter ? n.out->has_grad() : !n.grad.empty();
        if (!n.requires_grad || !has_grad) continue;
        n.visits++;
        const S* dy = n.kind == OpKind::Parameter ? n.out->grad() : n.grad.data();
        switch (n.kind) {
        case OpKind::Input:
        case OpKind::Parameter:
            break;
        case OpKind::Conv2d:
            kernels::conv2d_backward(*nodes_[n.in[0]].out, *nodes_[n.in[1]].out, n.stride, dy,
                                     grad_of(n.in[1]), grad_of(n.in[2]), grad_of(n.in[0]));
            break;
        case OpKind::Linear:
            kernels::linear_backward(*nodes_[n.in[0]].out, *nodes_[n.in[1]].out, dy,
                                     grad_of(n.in[1]), grad_of(n.in[2]), grad_of(n.in[0]));
            break;
        case OpKind::Relu:
            if (S* dx = grad_of(n.in[0])) kernels::relu_backward(*nodes_[n.in[0]].out, dy, dx);
            break;
        case OpKind::Tanh:
            if (S* dx = grad_of(n.in[0])) kernels::tanh_backward(*n.out, dy, dx);
            break;
        case OpKind::Dropout:
            if (S* dx = grad_of(n.in[0]))
                kernels::dropout_backward(n.p, n.train, n.seed, n.out->numel(), dy, dx);
            break;
        case OpKind::Mse:
            kernels::mse_backward(*nodes_[n.in[0]].out, *nodes_[n.in[1]].out, dy[0],
                                  grad_of(n.in[0]), grad_of(n.in[1]));
            break;
        }
    }
}

template <typename S>
double grad_check(
    const std::function<typename GraphT<S>::NodeId(GraphT<S>&, typename GraphT<S>::NodeId)>& build,
    const TensorT<S>& input, S epsilon, int max_coords, std::uint64_t seed) {
    // Analytic gradient of the loss with respect to every input coordinate.
    GraphT<S> g;
    auto in_id = g.input(make_tensor<S>(input), true);
    auto root = build(g, in_id);
    if (g.value(root).numel() != 1)
        throw ParameterError("grad_check subgraph must produce a scalar");
    g.backward(root);
    const std::vector<S> analytic = g.grad(in_id);

    const std::int64_t n = input.numel();
    std::vector<std::int64_t> coords;
    if (n <= max_coords) {
        coords.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    } else {
        Pcg32 rng(seed_hash(seed, "grad_check"));
        for (int i = 0; i < max_coords; ++i)
            coords.push_back(rng.next_below(static_cast<std::uint32_t>(n)));
    }

    auto eval = [&](const TensorT<S>& x) {
        GraphT<S> h;
        auto id = h.input(make_tensor<S>(x), false);
        return h.scalar(build(h, id));
    };

    double max_rel = 0.0;
    TensorT<S> probe = input;
    for (std::int64_t c : coords) {
        const S orig = probe[c];
        probe[c] = orig + epsilon;
        const double fp = eval(probe);
        probe[c] = orig - epsilon;
        const double fm = eval(probe);
        probe[c] = orig;
        const double numeric = (fp - fm) / (2.0 * static_cast<double>(epsilon));
        const double a = static_cast<double>(analytic[static_cast<std::size_t>(c)]);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(a - numeric) / denom);
    }
    return max_rel;
}

template class GraphT<float>;
template class GraphT<double>;
template double grad_check<float>(
    const std::function<GraphT<float>::NodeId(GraphT<float>&, GraphT<float>::NodeId)>&,
    const TensorT<float>&, float, int, std::uint64_t);
template double grad_check<double>(
    const std::function<GraphT<double>::NodeId(GraphT<double>&, GraphT<double>::NodeId)>&,
    const TensorT<double>&, double, int, std::uint64_t);

} // namespace fcap
