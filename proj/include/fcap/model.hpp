#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fcap/graph.hpp"
#include "fcap/pca.hpp"
#include "fcap/tensor.hpp"

namespace fcap {

enum class ArchKind { Conv, Fc };
enum class Activation { None, Relu, Tanh };
enum class LayerKind { Conv, Linear, Dropout };

struct LayerDesc {
    LayerKind kind;
    std::string name;
    std::int64_t in = 0;  // conv: input channels, linear: input width
    std::int64_t out = 0; // conv: output channels, linear: output width
    std::int64_t stride = 1;
    double p = 0.0; // dropout probability
    Activation act = Activation::None;
};

// Declarative layer list for the two fixed architectures: the all-convolutional
// network over a whitened 1x240x320 grayscale image, and the fully-connected
// baseline over 3000 input-image PCA coefficients. Only the output width
// (3 * vertex count) varies.
struct ModelSpec {
    ArchKind kind = ArchKind::Conv;
    std::int64_t n_out = 0;
    std::int64_t in_channels = 1, in_h = 240, in_w = 320; // conv input descriptor
    std::int64_t in_dim = 3000;                           // fc input descriptor
    std::vector<LayerDesc> layers;

    // Width of the layer feeding the output layer (160 in both tables).
    std::int64_t penultimate_width() const;
};

// n_out must be divisible by 3 (three coordinates per vertex). The conv
// spec's first fully-connected width is derived from the shape algebra and
// checked against 9720.
ModelSpec build_model(ArchKind kind, std::int64_t n_out);

// Flattened feature count entering the first fully-connected layer when the
// conv trunk is applied to a 1 x in_h x in_w input.
std::int64_t conv_trunk_features(std::int64_t in_h, std::int64_t in_w);

struct Parameters {
    // Indexed parallel to ModelSpec::layers; null entries for dropout layers.
    std::vector<TensorPtr> weights;
    std::vector<TensorPtr> biases;

    std::vector<std::pair<std::string, TensorPtr>> named(const ModelSpec& spec) const;
    std::int64_t count() const;
};

// He-normal initialization (std = sqrt(2 / fan_in), zero biases) everywhere
// except the output layer, whose weight rows are set from the output-mesh
// PCA basis and whose bias is the PCA mean, so an all-zero penultimate
// activation produces the mean mesh. The output layer stays trainable.
Parameters initialize(const ModelSpec& spec, std::uint64_t seed, const PcaBasis& output_basis);

// Builds the forward graph on top of an existing input node and returns the
// prediction node. Dropout seeds derive from `seed` per layer.
Graph::NodeId build_forward(Graph& g, const ModelSpec& spec, const Parameters& params,
                            Graph::NodeId input, Mode mode, std::uint64_t seed);

// Deterministic given (params, batch, mode, seed); eval mode bypasses dropout.
Tensor forward_batch(const ModelSpec& spec, const Parameters& params, const Tensor& batch,
                     Mode mode, std::uint64_t seed);

std::int64_t parameter_count(const ModelSpec& spec);

// Layer table as text, one row per layer, for eyeball diffing.
std::string describe(const ModelSpec& spec);

} // namespace fcap
