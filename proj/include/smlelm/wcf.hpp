#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smlelm/data_model.hpp"
#include "smlelm/error.hpp"
#include "smlelm/kernels.hpp"

namespace smlelm {

enum class CombineRule { linear, sqrt };

struct WcfConfig {
    Index window = 13; ///< odd window width
    double z = 0.2;    ///< spectral-distance decay of the neighbour weights
    double mu = 0.1;   ///< spectral share
    CombineRule rule = CombineRule::linear;

    void validate() const
    {
        if (window < 1 || window % 2 == 0)
            throw ContractError("wcf: window must be an odd count >= 1, got " + std::to_string(window));
        if (!(z > 0.0))
            throw ContractError("wcf: z must be positive");
        if (!(mu >= 0.0 && mu <= 1.0))
            throw ContractError("wcf: mu must lie in [0,1]");
    }
};

/// Weighted spatial mean of each pixel's window:
///   x_s = sum_k v_k x_k / sum_k v_k,  v_k = exp(-z |x_center - x_k|^2).
/// Out-of-image cells are clamped to the border, so the window always holds
/// window*window (possibly repeated) spectra. The centre pixel is included.
inline MatrixXd spatial_mean(const HsiCube& cube, const std::vector<PixelCoord>& coords, const WcfConfig& cfg)
{
    cfg.validate();
    const Index a = (cfg.window - 1) / 2;
    MatrixXd out(cube.bands(), static_cast<Index>(coords.size()));
    Eigen::VectorXd acc(cube.bands());
    for (std::size_t i = 0; i < coords.size(); ++i) {
        const auto [r0, c0] = coords[i];
        if (r0 < 0 || r0 >= cube.rows() || c0 < 0 || c0 >= cube.cols())
            throw ContractError("spatial_mean: pixel coordinate outside the cube");
        const auto center = cube.spectrum(r0, c0);
        acc.setZero();
        double wsum = 0.0;
        for (Index dr = -a; dr <= a; ++dr) {
            const Index r = std::clamp<Index>(r0 + dr, 0, cube.rows() - 1);
            for (Index dc = -a; dc <= a; ++dc) {
                const Index c = std::clamp<Index>(c0 + dc, 0, cube.cols() - 1);
                const auto x = cube.spectrum(r, c);
                const double v = std::exp(-cfg.z * (x - center).squaredNorm());
                acc += v * x;
                wsum += v;
            }
        }
        out.col(static_cast<Index>(i)) = acc / wsum;
    }
    return out;
}

/// linear: mu Hw + (1-mu) Hs;  sqrt: sqrt(mu) Hw + sqrt(1-mu) Hs.
inline MatrixXd combine_hidden(const MatrixXd& hw, const MatrixXd& hs, const WcfConfig& cfg)
{
    if (hw.rows() != hs.rows() || hw.cols() != hs.cols())
        throw ContractError("combine_hidden: spectral and spatial matrices differ in shape");
    if (!(cfg.mu >= 0.0 && cfg.mu <= 1.0))
        throw ContractError("combine_hidden: mu must lie in [0,1]");
    if (cfg.rule == CombineRule::linear)
        return cfg.mu * hw + (1.0 - cfg.mu) * hs;
    return std::sqrt(cfg.mu) * hw + std::sqrt(1.0 - cfg.mu) * hs;
}

/// Composite Gaussian kernel between (spectral, spatial) feature pairs of
/// two sample sets: mu K(xw) + (1-mu) K(xs). Rows index set a, columns set b.
inline GramMatrix wcf_kernel(const MatrixXd& xw_a, const MatrixXd& xs_a, const MatrixXd& xw_b, const MatrixXd& xs_b,
                             double sigma_w, double sigma_s, double mu)
{
    return composite_gram(gaussian_gram(xw_a, xw_b, sigma_w), gaussian_gram(xs_a, xs_b, sigma_s), mu);
}

/// Training-set composite kernel (symmetric, unit diagonal).
inline GramMatrix wcf_kernel(const MatrixXd& xw, const MatrixXd& xs, double sigma_w, double sigma_s, double mu)
{
    return composite_gram(gaussian_gram(xw, sigma_w), gaussian_gram(xs, sigma_s), mu);
}

} // namespace smlelm
