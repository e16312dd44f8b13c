#include "fcap/pca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>

namespace fcap {

namespace {

using MatrixXfR = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Deterministic sign rule: the largest-magnitude entry of each component is
// made positive; ties resolve to the lowest index.
void fix_signs(MatrixXfR& components) {
    for (Eigen::Index r = 0; r < components.rows(); ++r) {
        Eigen::Index best = 0;
        float best_abs = -1.0f;
        for (Eigen::Index c = 0; c < components.cols(); ++c) {
            const float a = std::abs(components(r, c));
            if (a > best_abs) {
                best_abs = a;
                best = c;
            }
        }
        if (components(r, best) < 0.0f) components.row(r) = -components.row(r);
    }
}

// Modified Gram-Schmidt in double. The rows coming out of the Gram-matrix
// path carry float rounding (and pure noise on zero-variance directions);
// this pins the orthonormality invariant down to ~1e-7.
void reorthonormalize(MatrixXfR& components) {
    Eigen::MatrixXd q = components.cast<double>();
    for (Eigen::Index i = 0; i < q.rows(); ++i) {
        for (Eigen::Index j = 0; j < i; ++j) q.row(i) -= q.row(i).dot(q.row(j)) * q.row(j);
        const double norm = q.row(i).norm();
        if (norm > 0.0) q.row(i) /= norm;
    }
    components = q.cast<float>();
}

std::int64_t choose_k(const Eigen::VectorXd& eigenvalues, const PcaTarget& target,
                      double total_variance, std::int64_t avail) {
    std::int64_t k = 0;
    if (target.mode == PcaTarget::Mode::Count) {
        k = target.count;
        if (k < 1) throw ParameterError("fit_pca component count must be >= 1");
        if (k > avail) {
            std::cerr << "fit_pca: requested " << k << " components but only " << avail
                      << " are available (min(M-1, D)); clamping\n";
            k = avail;
        }
    } else {
        const double f = target.fraction;
        if (f <= 0.0 || f > 1.0)
            throw ParameterError("fit_pca variance fraction must be in (0, 1], got " +
                                 std::to_string(f));
        if (total_variance <= 0.0) {
            k = 1; // constant data: a single (arbitrary) direction carries everything
        } else {
            double acc = 0.0;
            k = avail;
            for (std::int64_t i = 0; i < avail; ++i) {
                acc += eigenvalues(i);
                if (acc / total_variance >= f) {
                    k = i + 1;
                    break;
                }
            }
        }
    }
    if (target.cap > 0) k = std::min(k, target.cap);
    return std::min(k, avail);
}

} // namespace

PcaBasis fit_pca(const float* data, std::int64_t m, std::int64_t d, const PcaTarget& target) {
    if (m < 2) throw DataError("fit_pca needs at least 2 samples, got " + std::to_string(m));
    if (d < 1) throw DataError("fit_pca needs at least 1 dimension");

    Eigen::Map<const MatrixXfR> x(data, m, d);

    PcaBasis basis;
    basis.d = d;
    basis.mean.resize(static_cast<std::size_t>(d));
    Eigen::VectorXd mean = x.cast<double>().colwise().mean();
    for (std::int64_t j = 0; j < d; ++j)
        basis.mean[static_cast<std::size_t>(j)] = static_cast<float>(mean(j));

    // Centered copy stays in float so the wide image case (D = 76800) fits.
    MatrixXfR centered = x;
    centered.rowwise() -= mean.cast<float>().transpose();

    const double denom = static_cast<double>(m - 1);
    basis.total_variance = centered.cast<double>().squaredNorm() / denom;

    const std::int64_t avail = std::min<std::int64_t>(m - 1, d);
    Eigen::VectorXd eigenvalues(avail); // descending, clamped to >= 0
    MatrixXfR comp;

    if (d <= m) {
        Eigen::MatrixXd cov =
            (centered.transpose().cast<double>() * centered.cast<double>()) / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
        if (solver.info() != Eigen::Success) throw DataError("fit_pca eigensolver failed");
        for (std::int64_t i = 0; i < avail; ++i)
            eigenvalues(i) = std::max(solver.eigenvalues()(d - 1 - i), 0.0);
        const std::int64_t k = choose_k(eigenvalues, target, basis.total_variance, avail);
        comp.resize(k, d);
        for (std::int64_t i = 0; i < k; ++i)
            comp.row(i) = solver.eigenvectors().col(d - 1 - i).cast<float>().transpose();
    } else {
        // Gram trick: for G = (X X^T)/(M-1) with eigenpairs (lambda, u), the
        // principal direction is X^T u normalized. Only k rows are formed, so
        // the wide case never materializes an avail x D matrix.
        Eigen::MatrixXd gram = (centered * centered.transpose()).cast<double>() / denom;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
        if (solver.info() != Eigen::Success) throw DataError("fit_pca eigensolver failed");
        for (std::int64_t i = 0; i < avail; ++i)
            eigenvalues(i) = std::max(solver.eigenvalues()(m - 1 - i), 0.0);
        const std::int64_t k = choose_k(eigenvalues, target, basis.total_variance, avail);
        MatrixXfR u(m, k);
        for (std::int64_t i = 0; i < k; ++i)
            u.col(i) = solver.eigenvectors().col(m - 1 - i).cast<float>();
        comp.resize(k, d);
        comp.noalias() = u.transpose() * centered;
        reorthonormalize(comp);
    }
    fix_signs(comp);

    basis.k = comp.rows();
    basis.variances.resize(static_cast<std::size_t>(basis.k));
    for (std::int64_t i = 0; i < basis.k; ++i)
        basis.variances[static_cast<std::size_t>(i)] = static_cast<float>(eigenvalues(i));
    basis.components.resize(static_cast<std::size_t>(basis.k * d));
    Eigen::Map<MatrixXfR>(basis.components.data(), basis.k, d) = comp;
    return basis;
}

std::vector<float> pca_project(const PcaBasis& basis, const float* sample, std::int64_t d) {
    if (d != basis.d)
        throw DimensionError("pca_project sample length " + std::to_string(d) +
                             " does not match basis dimension " + std::to_string(basis.d));
    Eigen::Map<const MatrixXfR> c(basis.components.data(), basis.k, basis.d);
    Eigen::Map<const Eigen::VectorXf> s(sample, d);
    Eigen::Map<const Eigen::VectorXf> mu(basis.mean.data(), d);
    std::vector<float> out(static_cast<std::size_t>(basis.k));
    Eigen::Map<Eigen::VectorXf>(out.data(), basis.k).noalias() = c * (s - mu);
    return out;
}

std::vector<float> pca_reconstruct(const PcaBasis& basis, const float* coeffs, std::int64_t k) {
    if (k != basis.k)
        throw DimensionError("pca_reconstruct coefficient length " + std::to_string(k) +
                             " does not match basis size " + std::to_string(basis.k));
    Eigen::Map<const MatrixXfR> c(basis.components.data(), basis.k, basis.d);
    Eigen::Map<const Eigen::VectorXf> z(coeffs, k);
    Eigen::Map<const Eigen::VectorXf> mu(basis.mean.data(), basis.d);
    std::vector<float> out(static_cast<std::size_t>(basis.d));
    Eigen::Map<Eigen::VectorXf>(out.data(), basis.d).noalias() = mu + c.transpose() * z;
    return out;
}

WhiteningStats WhiteningAccumulator::finish() const {
    if (count_ == 0) throw DataError("whitening needs at least one image");
    const double n = static_cast<double>(count_);
    const double mean = sum_ / n;
    const double var = sum_sq_ / n - mean * mean;
    if (var <= 0.0)
        throw DataError("whitening failed: pixel variance is zero (constant images)");
    return WhiteningStats{mean, std::sqrt(var)};
}

void apply_whitening(float* pixels, std::int64_t n, const WhiteningStats& stats) {
    if (stats.std <= 0.0) throw ParameterError("whitening std must be positive");
    const float mean = static_cast<float>(stats.mean);
    const float inv = static_cast<float>(1.0 / stats.std);
    for (std::int64_t i = 0; i < n; ++i) pixels[i] = (pixels[i] - mean) * inv;
}

} // namespace fcap
