#include "fcap/model.hpp"

#include <cmath>
#include <sstream>

#include "fcap/kernels.hpp"
#include "fcap/rng.hpp"

namespace fcap {

std::int64_t ModelSpec::penultimate_width() const {
    for (auto it = layers.rbegin(); it != layers.rend(); ++it)
        if (it->kind != LayerKind::Dropout && it->name != "output") return it->out;
    throw ParameterError("model spec has no output layer");
}

std::int64_t conv_trunk_features(std::int64_t in_h, std::int64_t in_w) {
    std::int64_t h = in_h, w = in_w, c = 1;
    const std::int64_t widths[] = {64, 96, 144, 216, 324, 486};
    for (std::int64_t stage = 0; stage < 6; ++stage) {
        c = widths[stage];
        h = (h + 1) / 2; // stride-2 'a' layer, ceil
        w = (w + 1) / 2;
        // stride-1 'b' layer keeps the extent
    }
    return c * h * w;
}

ModelSpec build_model(ArchKind kind, std::int64_t n_out) {
    if (n_out <= 0 || n_out % 3 != 0)
        throw ParameterError("n_out must be a positive multiple of 3 (x,y,z per vertex), got " +
                             std::to_string(n_out));
    ModelSpec spec;
    spec.kind = kind;
    spec.n_out = n_out;
    if (kind == ArchKind::Conv) {
        const std::int64_t widths[] = {64, 96, 144, 216, 324, 486};
        std::int64_t in_ch = 1;
        for (int stage = 0; stage < 6; ++stage) {
            const std::int64_t out_ch = widths[stage];
            const std::string base = "conv" + std::to_string(stage + 1);
            spec.layers.push_back(
                {LayerKind::Conv, base + "a", in_ch, out_ch, 2, 0.0, Activation::Relu});
            spec.layers.push_back(
                {LayerKind::Conv, base + "b", out_ch, out_ch, 1, 0.0, Activation::Relu});
            in_ch = out_ch;
        }
        spec.layers.push_back({LayerKind::Dropout, "drop", 0, 0, 1, 0.2, Activation::None});
        const std::int64_t flat = conv_trunk_features(spec.in_h, spec.in_w);
        if (flat != 9720)
            throw DimensionError("conv trunk produces " + std::to_string(flat) +
                                 " features, expected 9720");
        spec.layers.push_back({LayerKind::Linear, "fc", flat, 160, 1, 0.0, Activation::None});
        spec.layers.push_back({LayerKind::Linear, "output", 160, n_out, 1, 0.0, Activation::None});
    } else {
        spec.layers.push_back({LayerKind::Linear, "fc1", 3000, 2000, 1, 0.0, Activation::Relu});
        spec.layers.push_back({LayerKind::Dropout, "drop1", 0, 0, 1, 0.2, Activation::None});
        spec.layers.push_back({LayerKind::Linear, "fc2", 2000, 1000, 1, 0.0, Activation::Tanh});
        spec.layers.push_back({LayerKind::Dropout, "drop2", 0, 0, 1, 0.2, Activation::None});
        spec.layers.push_back({LayerKind::Linear, "fc3", 1000, 160, 1, 0.0, Activation::None});
        spec.layers.push_back({LayerKind::Linear, "output", 160, n_out, 1, 0.0, Activation::None});
    }
    return spec;
}

std::vector<std::pair<std::string, TensorPtr>> Parameters::named(const ModelSpec& spec) const {
    std::vector<std::pair<std::string, TensorPtr>> out;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        if (!weights[i]) continue;
        out.emplace_back(spec.layers[i].name + "/weight", weights[i]);
        out.emplace_back(spec.layers[i].name + "/bias", biases[i]);
    }
    return out;
}

std::int64_t Parameters::count() const {
    std::int64_t n = 0;
    for (const auto& w : weights)
        if (w) n += w->numel();
    for (const auto& b : biases)
        if (b) n += b->numel();
    return n;
}

Parameters initialize(const ModelSpec& spec, std::uint64_t seed, const PcaBasis& output_basis) {
    const std::int64_t penult = spec.penultimate_width();
    if (output_basis.k != penult)
        throw DimensionError("output basis has " + std::to_string(output_basis.k) +
                             " components but the penultimate layer is " +
                             std::to_string(penult) + " wide");
    if (output_basis.d != spec.n_out)
        throw DimensionError("output basis dimension " + std::to_string(output_basis.d) +
                             " does not match n_out " + std::to_string(spec.n_out));

    Parameters params;
    params.weights.resize(spec.layers.size());
    params.biases.resize(spec.layers.size());
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& l = spec.layers[i];
        if (l.kind == LayerKind::Dropout) continue;
        if (l.name == "output") {
            // output = mean + coeffs * components, i.e. weight = components^T.
            auto w = make_tensor<float>(Shape{l.out, l.in});
            for (std::int64_t r = 0; r < l.out; ++r)
                for (std::int64_t c = 0; c < l.in; ++c)
                    (*w)[r * l.in + c] =
                        output_basis.components[static_cast<std::size_t>(c * output_basis.d + r)];
            auto b = make_tensor<float>(Shape{l.out},
                                        std::vector<float>(output_basis.mean.begin(),
                                                           output_basis.mean.end()));
            params.weights[i] = std::move(w);
            params.biases[i] = std::move(b);
            continue;
        }
        Pcg32 rng(seed_hash(seed, "init", static_cast<std::uint64_t>(i)));
        const std::int64_t fan_in = l.kind == LayerKind::Conv ? l.in * 9 : l.in;
        const float stddev = std::sqrt(2.0f / static_cast<float>(fan_in));
        const Shape wshape = l.kind == LayerKind::Conv ? Shape{l.out, l.in, 3, 3}
                                                       : Shape{l.out, l.in};
        auto w = make_tensor<float>(wshape);
        for (std::int64_t j = 0; j < w->numel(); ++j)
            (*w)[j] = static_cast<float>(rng.gaussian()) * stddev;
        params.weights[i] = std::move(w);
        params.biases[i] = make_tensor<float>(Shape{l.out});
    }
    return params;
}

Graph::NodeId build_forward(Graph& g, const ModelSpec& spec, const Parameters& params,
                            Graph::NodeId input, Mode mode, std::uint64_t seed) {
    Graph::NodeId cur = input;
    for (std::size_t i = 0; i < spec.layers.size(); ++i) {
        const LayerDesc& l = spec.layers[i];
        switch (l.kind) {
        case LayerKind::Conv: {
            auto w = g.parameter(params.weights[i]);
            auto b = g.parameter(params.biases[i]);
            cur = g.conv2d(cur, w, b, l.stride);
            break;
        }
        case LayerKind::Linear: {
            // the linear op views NxCxHxW as Nx(C*H*W), so the conv trunk
            // feeds the fc layer without an explicit reshape
            auto w = g.parameter(params.weights[i]);
            auto b = g.parameter(params.biases[i]);
            cur = g.linear(cur, w, b);
            break;
        }
        case LayerKind::Dropout:
            cur = g.dropout(cur, l.p, mode, seed_hash(seed, "dropout", static_cast<std::uint64_t>(i)));
            break;
        }
        if (l.act == Activation::Relu) cur = g.relu(cur);
        if (l.act == Activation::Tanh) cur = g.tanh(cur);
    }
    return cur;
}

Tensor forward_batch(const ModelSpec& spec, const Parameters& params, const Tensor& batch,
                     Mode mode, std::uint64_t seed) {
    if (spec.kind == ArchKind::Conv) {
        if (batch.ndim() != 4 || batch.dim(1) != spec.in_channels || batch.dim(2) != spec.in_h ||
            batch.dim(3) != spec.in_w)
            throw DimensionError("conv model expects Nx" + std::to_string(spec.in_channels) + "x" +
                                 std::to_string(spec.in_h) + "x" + std::to_string(spec.in_w) +
                                 " input, got " + shape_str(batch.shape()));
    } else {
        if (batch.ndim() != 2 || batch.dim(1) != spec.in_dim)
            throw DimensionError("fc model expects Nx" + std::to_string(spec.in_dim) +
                                 " input, got " + shape_str(batch.shape()));
    }
    Graph g;
    auto in = g.input(make_tensor<float>(batch), false);
    auto out = build_forward(g, spec, params, in, mode, seed);
    return g.value(out);
}

std::int64_t parameter_count(const ModelSpec& spec) {
    std::int64_t n = 0;
    for (const LayerDesc& l : spec.layers) {
        if (l.kind == LayerKind::Conv) n += l.out * l.in * 9 + l.out;
        if (l.kind == LayerKind::Linear) n += l.out * l.in + l.out;
    }
    return n;
}

std::string describe(const ModelSpec& spec) {
    std::ostringstream os;
    os << "name    description\n";
    if (spec.kind == ArchKind::Conv)
        os << "input   Input " << spec.in_channels << "x" << spec.in_h << "x" << spec.in_w
           << " image\n";
    else
        os << "input   Input " << spec.in_dim << " image PCA coefficients\n";
    for (const LayerDesc& l : spec.layers) {
        os << l.name;
        for (std::size_t p = l.name.size(); p < 8; ++p) os << ' ';
        switch (l.kind) {
        case LayerKind::Conv:
            os << "Conv 3x3, " << l.in << "->" << l.out << ", stride " << l.stride << "x"
               << l.stride;
            break;
        case LayerKind::Linear:
            os << "Fully connected " << l.in << "->" << l.out;
            break;
        case LayerKind::Dropout:
            os << "Dropout, p=" << l.p;
            break;
        }
        if (l.act == Activation::Relu) os << ", ReLU";
        else if (l.act == Activation::Tanh) os << ", tanh";
        else if (l.kind == LayerKind::Linear) os << ", linear activation";
        os << "\n";
    }
    return os.str();
}

} // namespace fcap
