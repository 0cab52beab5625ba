#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include <Eigen/Dense>

#include "smlelm/error.hpp"
#include "smlelm/rng.hpp"

namespace smlelm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Activation { sigmoid };

/// Random input layer of an ELM: weights (L x d, one neuron per row) and
/// biases (L). Never modified after construction.
class HiddenLayer {
public:
    HiddenLayer(MatrixXd weights, VectorXd biases, Activation activation = Activation::sigmoid)
        : weights_(std::move(weights)), biases_(std::move(biases)), activation_(activation)
    {
        if (weights_.rows() != biases_.size())
            throw ContractError("HiddenLayer: bias count must equal neuron count");
        if (!weights_.allFinite() || !biases_.allFinite())
            throw ContractError("HiddenLayer: weights and biases must be finite");
    }

    Index neurons() const { return weights_.rows(); }
    Index input_dim() const { return weights_.cols(); }
    const MatrixXd& weights() const { return weights_; }
    const VectorXd& biases() const { return biases_; }
    Activation activation() const { return activation_; }

private:
    MatrixXd weights_;
    VectorXd biases_;
    Activation activation_;
};

/// Weights uniform on [-1,1], biases uniform on [0,1], drawn row by row.
inline HiddenLayer init_hidden(std::uint64_t seed, Index neurons, Index input_dim)
{
    if (neurons < 1 || input_dim < 1)
        throw ContractError("init_hidden: neuron count and input dimension must be >= 1");
    Rng rng(seed);
    MatrixXd w(neurons, input_dim);
    for (Index j = 0; j < neurons; ++j)
        for (Index k = 0; k < input_dim; ++k)
            w(j, k) = rng.uniform(-1.0, 1.0);
    VectorXd b(neurons);
    for (Index j = 0; j < neurons; ++j)
        b(j) = rng.uniform(0.0, 1.0);
    return HiddenLayer(std::move(w), std::move(b));
}

inline double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

/// H[j,i] = sigmoid(w_j . x_i + b_j); X is d x N, H is L x N.
inline MatrixXd hidden_map(const HiddenLayer& layer, const MatrixXd& x)
{
    if (x.rows() != layer.input_dim())
        throw ContractError("hidden_map: input has " + std::to_string(x.rows()) + " rows, layer expects "
                            + std::to_string(layer.input_dim()));
    MatrixXd pre = layer.weights() * x;
    pre.colwise() += layer.biases();
    return pre.unaryExpr([](double t) { return sigmoid(t); });
}

inline void check_targets(const MatrixXd& h, const MatrixXd& y, const char* who)
{
    if (h.cols() != y.cols())
        throw ContractError(std::string(who) + ": design has " + std::to_string(h.cols())
                            + " samples but targets have " + std::to_string(y.cols()));
}

/// Minimum-norm least-squares output weights (H^T)^+ Y^T, L x M.
/// Singular values below 1e-10 * sigma_max are treated as zero.
inline MatrixXd solve_belm(const MatrixXd& h, const MatrixXd& y)
{
    check_targets(h, y, "solve_belm");
    Eigen::BDCSVD<MatrixXd> svd(h.transpose(), Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    return svd.solve(y.transpose());
}

/// Which side of the push-through identity to factorize.
enum class RidgeRoute { automatic, samples, neurons };

/// Ridge output weights H (I/C + H^T H)^{-1} Y^T. The samples route
/// factorizes the N x N system; the neurons route the equivalent L x L
/// system (I/C + H H^T) beta = H Y^T. Automatic picks the smaller one.
inline MatrixXd solve_nlelm(const MatrixXd& h, const MatrixXd& y, double c, RidgeRoute route = RidgeRoute::automatic)
{
    check_targets(h, y, "solve_nlelm");
    if (!(c > 0.0))
        throw ContractError("solve_nlelm: C must be positive");
    if (route == RidgeRoute::automatic)
        route = h.cols() <= h.rows() ? RidgeRoute::samples : RidgeRoute::neurons;

    if (route == RidgeRoute::samples) {
        MatrixXd sys = h.transpose() * h;
        sys.diagonal().array() += 1.0 / c;
        Eigen::LLT<MatrixXd> llt(sys);
        if (llt.info() != Eigen::Success)
            throw NumericError("solve_nlelm: Cholesky factorization of I/C + H^T H failed");
        return h * llt.solve(y.transpose());
    }
    MatrixXd sys = h * h.transpose();
    sys.diagonal().array() += 1.0 / c;
    Eigen::LLT<MatrixXd> llt(sys);
    if (llt.info() != Eigen::Success)
        throw NumericError("solve_nlelm: Cholesky factorization of I/C + H H^T failed");
    return llt.solve(h * y.transpose());
}

/// Kernel coefficients (I/C + K)^{-1} Y^T, N x M.
inline MatrixXd solve_kelm(const MatrixXd& k, const MatrixXd& y, double c)
{
    if (k.rows() != k.cols())
        throw ContractError("solve_kelm: kernel matrix must be square");
    check_targets(k, y, "solve_kelm");
    if (!(c > 0.0))
        throw ContractError("solve_kelm: C must be positive");
    const double asym = (k - k.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-8)
        throw ContractError("solve_kelm: kernel matrix is not symmetric (max asymmetry "
                            + std::to_string(asym) + ")");
    MatrixXd sys = k;
    sys.diagonal().array() += 1.0 / c;
    Eigen::LLT<MatrixXd> llt(sys);
    if (llt.info() != Eigen::Success)
        throw NumericError("solve_kelm: Cholesky factorization of I/C + K failed");
    return llt.solve(y.transpose());
}

} // namespace smlelm
