#pragma once

#include <cstdint>
#include <vector>

#include "fcap/errors.hpp"

namespace fcap {

// Principal component basis of a data matrix. Rows of `components` are the
// orthonormal principal directions (k x D); `variances` holds the matching
// eigenvalues of the sample covariance in non-increasing order;
// `total_variance` is the full covariance trace, so explained-variance
// ratios can be formed without the discarded tail.
struct PcaBasis {
    std::int64_t k = 0;
    std::int64_t d = 0;
    std::vector<float> mean;       // D
    std::vector<float> components; // k x D, row-major
    std::vector<float> variances;  // k
    double total_variance = 0.0;

    double explained_fraction() const {
        if (total_variance <= 0.0) return 1.0;
        double s = 0.0;
        for (float v : variances) s += v;
        return s / total_variance;
    }
};

struct PcaTarget {
    enum class Mode { Count, Fraction } mode = Mode::Fraction;
    std::int64_t count = 0;
    double fraction = 0.999;
    std::int64_t cap = 0; // 0 = uncapped

    static PcaTarget by_count(std::int64_t k, std::int64_t cap = 0) {
        return {Mode::Count, k, 0.0, cap};
    }
    static PcaTarget by_fraction(double f, std::int64_t cap = 0) {
        return {Mode::Fraction, 0, f, cap};
    }
};

// Fits the top principal directions of an M x D row-major matrix. Centering
// uses the column means; the eigenproblem is solved on whichever of the
// covariance (D x D) or Gram (M x M) matrix is smaller. Component signs are
// fixed by making the largest-magnitude entry of each row positive. A count
// target larger than min(M-1, D) is clamped with a warning on stderr.
PcaBasis fit_pca(const float* data, std::int64_t m, std::int64_t d, const PcaTarget& target);

// coeffs = components * (sample - mean)
std::vector<float> pca_project(const PcaBasis& basis, const float* sample, std::int64_t d);
// sample = mean + components^T * coeffs
std::vector<float> pca_reconstruct(const PcaBasis& basis, const float* coeffs, std::int64_t k);

// Scalar pixel statistics over the union of all training-image pixels,
// fixed at training time and reused verbatim for validation and inference.
struct WhiteningStats {
    double mean = 0.0;
    double std = 1.0;
};

class WhiteningAccumulator {
public:
    void add(const float* pixels, std::int64_t n) {
        for (std::int64_t i = 0; i < n; ++i) {
            sum_ += pixels[i];
            sum_sq_ += static_cast<double>(pixels[i]) * pixels[i];
        }
        count_ += n;
    }
    WhiteningStats finish() const;

private:
    double sum_ = 0.0;
    double sum_sq_ = 0.0;
    std::int64_t count_ = 0;
};

void apply_whitening(float* pixels, std::int64_t n, const WhiteningStats& stats);

} // namespace fcap
