#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fcap/model.hpp"
#include "fcap/pca.hpp"

namespace fcap {

// Self-contained model snapshot: spec, every parameter tensor, the input
// normalization fitted at training time (scalar whitening for the conv path,
// image PCA basis for the fc path), output-basis provenance, and optionally
// the optimizer state needed for exact resume.
//
// On disk: magic "FCAP", little-endian 32-bit version, a length-prefixed
// section table, then sections; tensors are a shape header plus a raw 32-bit
// little-endian float payload. Round-trips are bit-exact.
struct Checkpoint {
    std::uint32_t version = 1;
    ModelSpec spec;
    Parameters params;

    bool has_whitening = false;
    WhiteningStats whitening;

    bool has_input_basis = false;
    PcaBasis input_basis;

    struct OutputBasisInfo {
        bool present = false;
        std::int64_t k = 0, d = 0;
        double total_variance = 0.0;
        std::vector<float> variances;
    } output_basis;

    struct AdamSnapshot {
        bool present = false;
        std::int64_t t = 0;
        std::vector<std::vector<float>> m, v; // parallel to params.named() order
    } adam;

    std::int64_t train_step = 0;
    std::uint64_t seed = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

} // namespace fcap
