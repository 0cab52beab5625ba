#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "smlelm/error.hpp"

namespace smlelm {

using Eigen::Index;
using Eigen::MatrixXd;

struct GramMatrix {
    MatrixXd k;
    double sigma = 1.0;
};

namespace detail {

inline MatrixXd squared_distances(const MatrixXd& x1, const MatrixXd& x2)
{
    MatrixXd d = -2.0 * (x1.transpose() * x2);
    d.colwise() += x1.colwise().squaredNorm().transpose();
    d.rowwise() += x2.colwise().squaredNorm();
    return d.cwiseMax(0.0);
}

} // namespace detail

/// K[i,j] = exp(-|x1_i - x2_j|^2 / (2 sigma^2)); columns are samples.
inline GramMatrix gaussian_gram(const MatrixXd& x1, const MatrixXd& x2, double sigma)
{
    if (!(sigma > 0.0))
        throw ContractError("gaussian_gram: sigma must be positive");
    if (x1.rows() != x2.rows())
        throw ContractError("gaussian_gram: feature dimensions differ (" + std::to_string(x1.rows()) + " vs "
                            + std::to_string(x2.rows()) + ")");
    const double scale = -1.0 / (2.0 * sigma * sigma);
    return {(detail::squared_distances(x1, x2).array() * scale).exp().matrix(), sigma};
}

/// Gram of a sample set with itself: exactly symmetric, unit diagonal.
inline GramMatrix gaussian_gram(const MatrixXd& x, double sigma)
{
    GramMatrix g = gaussian_gram(x, x, sigma);
    const MatrixXd sym = 0.5 * (g.k + g.k.transpose());
    g.k = sym;
    g.k.diagonal().setOnes();
    return g;
}

/// mu * Kw + (1 - mu) * Ks, elementwise.
inline GramMatrix composite_gram(const GramMatrix& kw, const GramMatrix& ks, double mu)
{
    if (kw.k.rows() != ks.k.rows() || kw.k.cols() != ks.k.cols())
        throw ContractError("composite_gram: spectral and spatial Gram shapes differ");
    if (!(mu >= 0.0 && mu <= 1.0))
        throw ContractError("composite_gram: mu must lie in [0,1]");
    return {mu * kw.k + (1.0 - mu) * ks.k, kw.sigma};
}

} // namespace smlelm
