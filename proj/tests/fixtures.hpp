#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include <smlelm/smlelm.hpp>

namespace fixtures {

using smlelm::Index;
using smlelm::MatrixXd;

struct Problem {
    MatrixXd x;   // d x n
    MatrixXd phi; // hidden features, L x n
    MatrixXd y;   // one-hot, M x n
    std::vector<int> labels;
    smlelm::HiddenLayer layer;
};

/// Gaussian blobs around uniform class means, labels cycling 1..M, sigmoid
/// features from a fixed hidden layer.
inline Problem blobs(Index n = 60, double noise = 1.0, Index d = 5, int classes = 3, Index hidden = 10,
                     std::uint64_t seed = 7)
{
    smlelm::Rng rng(seed);
    MatrixXd means(d, classes);
    for (Index i = 0; i < d; ++i)
        for (int j = 0; j < classes; ++j)
            means(i, j) = rng.uniform(0.0, 1.0);
    MatrixXd x(d, n);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % classes);
        labels[static_cast<std::size_t>(i)] = c + 1;
        for (Index k = 0; k < d; ++k)
            x(k, i) = means(k, c) + noise * rng.normal();
    }
    auto layer = smlelm::init_hidden(seed + 4, hidden, d);
    MatrixXd phi = smlelm::hidden_map(layer, x);
    return {x, phi, smlelm::one_hot(labels, classes), labels, layer};
}

/// The 60-sample, d=5, M=3, L=10 problem most solver checks run on.
inline Problem standard() { return blobs(); }

/// Two linearly separable classes on one feature plus a constant row. The
/// feature scale is small enough that an L1 prior of 2^-5 keeps the
/// penalized estimate well inside the region the unpenalized iterates leave.
inline Problem separable_toy(double scale = 0.004, Index n = 20)
{
    smlelm::Rng rng(3);
    MatrixXd phi(2, n);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
        const int c = static_cast<int>(i % 2);
        labels[static_cast<std::size_t>(i)] = c + 1;
        phi(0, i) = (c == 1 ? 1.0 : -1.0) * rng.uniform(0.5, 1.5) * scale;
        phi(1, i) = 1.0;
    }
    return {phi, phi, smlelm::one_hot(labels, 2), labels, smlelm::init_hidden(1, 1, 1)};
}

/// Dense Kronecker B = A (x) Phi Phi^T for small oracle checks.
inline MatrixXd dense_bound(const MatrixXd& phi, int classes)
{
    const MatrixXd g = phi * phi.transpose();
    MatrixXd a = -0.5 * (MatrixXd::Identity(classes, classes)
                         - MatrixXd::Constant(classes, classes, 1.0 / static_cast<double>(classes)));
    const Index r = g.rows();
    MatrixXd b(r * classes, r * classes);
    for (int i = 0; i < classes; ++i)
        for (int j = 0; j < classes; ++j)
            b.block(i * r, j * r, r, r) = a(i, j) * g;
    return b;
}

inline MatrixXd random_matrix(smlelm::Rng& rng, Index rows, Index cols, double scale = 1.0)
{
    MatrixXd m(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i)
            m(i, j) = scale * rng.normal();
    return m;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path()
                / ("smlelm-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() { std::filesystem::remove_all(path_); }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace fixtures
