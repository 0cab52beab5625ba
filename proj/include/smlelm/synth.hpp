#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smlelm/data_model.hpp"
#include "smlelm/error.hpp"
#include "smlelm/rng.hpp"

namespace smlelm {

/// Synthetic scene: rectangular class patches, a smooth class-specific
/// mean spectrum per class and i.i.d. Gaussian noise on every band.
struct SynthConfig {
    Index rows = 48;
    Index cols = 48;
    Index bands = 20;
    int classes = 4;
    double separation = 1.0; ///< scales the class-specific part of the spectra
    double noise = 0.05;     ///< per-band noise standard deviation
    Index min_patch = 16;
    Index max_patch = 24;
    std::uint64_t seed = 0;

    void validate() const
    {
        if (rows < 1 || cols < 1 || bands < 1)
            throw ContractError("synth: rows, cols and bands must be >= 1");
        if (classes < 1 || classes > 255)
            throw ContractError("synth: classes must lie in 1..255");
        if (separation < 0.0 || noise < 0.0)
            throw ContractError("synth: separation and noise must be non-negative");
        if (min_patch < 1 || max_patch < min_patch)
            throw ContractError("synth: need 1 <= min_patch <= max_patch");
    }
};

struct SynthScene {
    HsiCube cube;
    LabelGrid labels;
    MatrixXd class_means; ///< bands x classes
};

namespace detail {

inline std::vector<Index> random_cuts(Index length, Index lo, Index hi, Rng& rng)
{
    std::vector<Index> sizes;
    Index left = length;
    while (left > 0) {
        Index s = lo + static_cast<Index>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        if (left - s < lo)
            s = left; // fold a short remainder into the last segment
        sizes.push_back(s);
        left -= s;
    }
    return sizes;
}

} // namespace detail

inline SynthScene make_synthetic_scene(const SynthConfig& cfg)
{
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "synth"));
    const auto band_pos = [&](Index k) {
        return cfg.bands > 1 ? static_cast<double>(k) / static_cast<double>(cfg.bands - 1) : 0.5;
    };

    // shared smooth background plus a class-specific bump mixture, RMS 0.1 before scaling
    MatrixXd means(cfg.bands, cfg.classes);
    for (int c = 0; c < cfg.classes; ++c) {
        Eigen::VectorXd bump = Eigen::VectorXd::Zero(cfg.bands);
        for (int j = 0; j < 3; ++j) {
            const double amp = rng.normal();
            const double centre = rng.canonical();
            for (Index k = 0; k < cfg.bands; ++k) {
                const double t = (band_pos(k) - centre) / 0.15;
                bump(k) += amp * std::exp(-0.5 * t * t);
            }
        }
        const double rms = std::sqrt(bump.squaredNorm() / static_cast<double>(cfg.bands));
        if (rms > 0.0)
            bump *= 0.1 / rms;
        for (Index k = 0; k < cfg.bands; ++k)
            means(k, c) = 0.5 + 0.15 * std::sin(3.0 * band_pos(k)) + cfg.separation * bump(k);
    }

    // rectangular patches; classes dealt from a shuffled cycle so each appears
    const auto row_cuts = detail::random_cuts(cfg.rows, std::min(cfg.min_patch, cfg.rows),
                                              std::min(cfg.max_patch, cfg.rows), rng);
    std::vector<int> grid(static_cast<std::size_t>(cfg.rows * cfg.cols), 0);
    std::vector<int> order(static_cast<std::size_t>(cfg.classes));
    std::iota(order.begin(), order.end(), 1);
    std::size_t dealt = 0;
    Index r0 = 0;
    for (Index rh : row_cuts) {
        const auto col_cuts = detail::random_cuts(cfg.cols, std::min(cfg.min_patch, cfg.cols),
                                                  std::min(cfg.max_patch, cfg.cols), rng);
        Index c0 = 0;
        for (Index cw : col_cuts) {
            if (dealt % order.size() == 0)
                rng.shuffle(std::span<int>(order));
            const int cls = order[dealt % order.size()];
            ++dealt;
            for (Index r = r0; r < r0 + rh; ++r)
                for (Index c = c0; c < c0 + cw; ++c)
                    grid[static_cast<std::size_t>(r * cfg.cols + c)] = cls;
            c0 += cw;
        }
        r0 += rh;
    }
    if (dealt < order.size())
        throw ContractError("synth: only " + std::to_string(dealt) + " patches for " + std::to_string(cfg.classes)
                            + " classes; lower min_patch/max_patch");

    MatrixXd pixels(cfg.bands, cfg.rows * cfg.cols);
    for (Index p = 0; p < cfg.rows * cfg.cols; ++p) {
        const int cls = grid[static_cast<std::size_t>(p)];
        for (Index k = 0; k < cfg.bands; ++k)
            pixels(k, p) = means(k, cls - 1) + cfg.noise * rng.normal();
    }
    return {HsiCube(cfg.rows, cfg.cols, std::move(pixels)), LabelGrid(cfg.rows, cfg.cols, std::move(grid)),
            std::move(means)};
}

} // namespace smlelm
