#pragma once

#include "canopy/error.hpp"
#include "canopy/features.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace canopy {

template <typename Scalar>
struct PcaModelT {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

    Vector mean;
    Matrix components;  // n_features x n_components, orthonormal columns
    Vector explained_variance;
    Vector explained_variance_ratio;

    Index n_components() const { return components.cols(); }

    template <typename Derived>
    Matrix transform(const Eigen::MatrixBase<Derived>& x) const {
        return (x.rowwise() - mean.transpose()) * components;
    }

    template <typename Derived>
    Matrix inverse_transform(const Eigen::MatrixBase<Derived>& z) const {
        return (z * components.transpose()).rowwise() + mean.transpose();
    }
};

using ReductionModel = PcaModelT<double>;

namespace detail {

// Deterministic sign: the largest-magnitude entry of each component is positive.
template <typename Matrix>
void fix_signs(Matrix& comps) {
    for (Index j = 0; j < comps.cols(); ++j) {
        Index arg = 0;
        comps.col(j).cwiseAbs().maxCoeff(&arg);
        if (comps(arg, j) < 0) comps.col(j) *= -1;
    }
}

}  // namespace detail

// Fits on rows of x.
template <typename Derived>
PcaModelT<typename Derived::Scalar> fit_pca(const Eigen::MatrixBase<Derived>& x,
                                             typename Derived::Scalar variance_target) {
    using Scalar = typename Derived::Scalar;
    using Model = PcaModelT<Scalar>;
    using Matrix = typename Model::Matrix;
    using Vector = typename Model::Vector;

    const Index n = x.rows(), d = x.cols();
    if (n < 2) throw ValidationError("PCA needs at least 2 rows", "features");
    if (d < 1) throw ValidationError("PCA needs at least 1 feature", "features");
    if (!(variance_target > 0) || variance_target > 1) {
        throw ValidationError("variance target must be in (0, 1]", "variance_target");
    }

    Model m;
    m.mean = x.colwise().mean().transpose();
    const Matrix xc = x.rowwise() - m.mean.transpose();
    const Scalar denom = static_cast<Scalar>(n - 1);

    Vector evals;
    Matrix evecs;
    if (d <= n) {
        const Matrix cov = (xc.transpose() * xc) / denom;
        Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
        if (es.info() != Eigen::Success) throw ValidationError("PCA eigen-decomposition failed", "features");
        evals = es.eigenvalues();
        evecs = es.eigenvectors();
    } else {
        // Gram route: X X^T shares the nonzero spectrum of X^T X.
        const Matrix gram = (xc * xc.transpose()) / denom;
        Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
        if (es.info() != Eigen::Success) throw ValidationError("PCA eigen-decomposition failed", "features");
        evals = es.eigenvalues();
        evecs.resize(d, n);
        for (Index j = 0; j < n; ++j) {
            const Scalar lam = std::max<Scalar>(evals(j), 0);
            if (lam > 0) {
                evecs.col(j) = xc.transpose() * es.eigenvectors().col(j) / std::sqrt(lam * denom);
            } else {
                evecs.col(j).setZero();
            }
        }
    }

    const Index k_all = evals.size();
    std::vector<Index> order(static_cast<std::size_t>(k_all));
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return evals(a) > evals(b); });

    Vector sorted(k_all);
    for (Index j = 0; j < k_all; ++j) sorted(j) = std::max<Scalar>(evals(order[static_cast<std::size_t>(j)]), 0);
    const Scalar total = sorted.sum();
    const Scalar scale = xc.cwiseAbs().maxCoeff();
    if (!(total > 0) || total <= std::numeric_limits<Scalar>::epsilon() * scale * scale * static_cast<Scalar>(d)) {
        throw ValidationError("degenerate features: zero variance", "features");
    }

    Index keep = 0;
    Scalar cum = 0;
    const Scalar tol = static_cast<Scalar>(1e-12);
    for (Index j = 0; j < k_all; ++j) {
        cum += sorted(j);
        ++keep;
        if (cum / total >= variance_target - tol) break;
    }

    m.components.resize(d, keep);
    for (Index j = 0; j < keep; ++j) m.components.col(j) = evecs.col(order[static_cast<std::size_t>(j)]);
    detail::fix_signs(m.components);
    m.explained_variance = sorted.head(keep);
    m.explained_variance_ratio = m.explained_variance / total;
    return m;
}

struct PcaResult {
    ReductionModel model;
    FeatureMatrix reduced;
};

PcaResult pca_fit_transform(const FeatureMatrix& features, double variance_target);

}  // namespace canopy
