#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fcap/kernels.hpp"
#include "fcap/tensor.hpp"

namespace fcap {

enum class Mode { Train, Eval };

enum class OpKind { Input, Parameter, Conv2d, Linear, Relu, Tanh, Dropout, Mse };

// Define-by-run reverse-mode tape over the layer set the two networks need.
// Ops evaluate eagerly at construction; backward() walks the tape in reverse
// creation order, which is a reverse topological order because inputs always
// precede their consumers. Gradients accumulate additively across fan-out.
//
// Parameter leaves accumulate into the gradient buffer of the shared tensor
// itself, so one parameter set can collect gradients from several graphs
// (micro-batches) before an optimizer step.
template <typename S>
class GraphT {
public:
    using NodeId = std::int32_t;

    NodeId input(TensorPtrT<S> value, bool requires_grad = false);
    NodeId parameter(TensorPtrT<S> value);

    NodeId conv2d(NodeId x, NodeId w, NodeId b, std::int64_t stride);
    NodeId linear(NodeId x, NodeId w, NodeId b);
    NodeId relu(NodeId x);
    NodeId tanh(NodeId x);
    NodeId dropout(NodeId x, double p, Mode mode, std::uint64_t seed);
    NodeId mse(NodeId pred, NodeId target);

    const TensorT<S>& value(NodeId id) const { return *nodes_.at(id).out; }
    TensorPtrT<S> value_ptr(NodeId id) const { return nodes_.at(id).out; }

    // Scalar value of an mse node, accumulated in double.
    double scalar(NodeId id) const;

    // Seeds the root (which must be scalar) with `scale` and propagates.
    // Each reachable node is visited exactly once.
    void backward(NodeId root, S scale = S(1));

    // Gradient collected at a node during the last backward().
    const std::vector<S>& grad(NodeId id) const;

    int backward_visits(NodeId id) const { return nodes_.at(id).visits; }
    std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        OpKind kind;
        NodeId in[3] = {-1, -1, -1};
        TensorPtrT<S> out;
        std::vector<S> grad;
        bool requires_grad = false;
        std::int64_t stride = 1;
        double p = 0.0;
        bool train = false;
        std::uint64_t seed = 0;
        double scalar_value = 0.0;
        int visits = 0;
    };

    S* grad_of(NodeId id);
    NodeId push(Node n);

    std::vector<Node> nodes_;
};

using Graph = GraphT<float>;

// Central finite-difference check. `build` assembles a scalar-valued graph on
// top of an input node; the analytic input gradient is compared against
// (f(x+eps) - f(x-eps)) / (2 eps) on up to `max_coords` sampled coordinates.
// Returns the maximum of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// The subgraph must be deterministic (fixed dropout seeds).
template <typename S>
double grad_check(
    const std::function<typename GraphT<S>::NodeId(GraphT<S>&, typename GraphT<S>::NodeId)>& build,
    const TensorT<S>& input, S epsilon, int max_coords = 64, std::uint64_t seed = 1);

extern template class GraphT<float>;
extern template class GraphT<double>;
extern template double grad_check<float>(
    const std::function<GraphT<float>::NodeId(GraphT<float>&, GraphT<float>::NodeId)>&,
    const TensorT<float>&, float, int, std::uint64_t);
extern template double grad_check<double>(
    const std::function<GraphT<double>::NodeId(GraphT<double>&, GraphT<double>::NodeId)>&,
    const TensorT<double>&, double, int, std::uint64_t);

} // namespace fcap
