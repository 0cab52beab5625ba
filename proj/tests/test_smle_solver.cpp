#include <sstream>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace smlelm;
using fixtures::dense_bound;
using fixtures::random_matrix;

namespace {

double naive_loglik(const MatrixXd& beta, const MatrixXd& phi, const MatrixXd& y)
{
    double total = 0.0;
    for (Index i = 0; i < phi.cols(); ++i) {
        double z = 0.0, own = 0.0;
        for (Index j = 0; j < beta.cols(); ++j) {
            const double s = beta.col(j).dot(phi.col(i));
            z += std::exp(s);
            own += y(j, i) * s;
        }
        total += own - std::log(z);
    }
    return total;
}

SolverConfig mm_config(double lambda, int iters)
{
    SolverConfig c;
    c.lambda = lambda;
    c.mode = SolverMode::mm;
    c.max_iters = iters;
    c.tol_beta = 1e-300;
    c.tol_grad = 1e-300;
    return c;
}

} // namespace

TEST(LogLikelihood, Examples)
{
    auto p = fixtures::standard();
    EXPECT_NEAR(log_likelihood(MatrixXd::Zero(10, 3), p.phi, p.y), -60.0 * std::log(3.0), 1e-12);

    const double s = 1.7;
    MatrixXd beta(1, 2);
    beta << s, 0.0;
    EXPECT_NEAR(log_likelihood(beta, MatrixXd::Ones(1, 1), one_hot({1}, 2)), s - std::log(std::exp(s) + 1.0), 1e-15);

    Rng rng(3);
    const MatrixXd b = random_matrix(rng, 10, 3);
    EXPECT_NEAR(log_likelihood(b, p.phi, p.y), naive_loglik(b, p.phi, p.y), 1e-10);
    EXPECT_NEAR(evaluate_likelihood(b, p.phi, p.y).loglik, log_likelihood(b, p.phi, p.y), 1e-10);
}

TEST(LogLikelihood, StableAtLargeScores)
{
    MatrixXd beta(1, 2);
    beta << 1000.0, 0.0;
    EXPECT_NEAR(log_likelihood(beta, MatrixXd::Ones(1, 1), one_hot({2}, 2)), -1000.0, 1e-9);
    EXPECT_TRUE(softmax_probs(beta, MatrixXd::Ones(1, 1)).allFinite());
}

TEST(SoftmaxProbs, UniformShiftInvariantNormalized)
{
    auto p = fixtures::standard();
    EXPECT_TRUE(softmax_probs(MatrixXd::Zero(10, 3), p.phi).isConstant(1.0 / 3.0, 1e-15));
    Rng rng(4);
    const MatrixXd b = random_matrix(rng, 10, 3, 2.0);
    const MatrixXd pr = softmax_probs(b, p.phi);
    EXPECT_LE((pr.colwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12);
    const MatrixXd shifted = b + random_matrix(rng, 10, 1) * MatrixXd::Ones(1, 3);
    EXPECT_LE((softmax_probs(shifted, p.phi) - pr).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(softmax_probs(MatrixXd::Zero(9, 3), p.phi), ContractError);
}

TEST(GradLoglik, UniformCase)
{
    auto p = fixtures::standard();
    const MatrixXd g = grad_loglik(MatrixXd::Zero(10, 3), p.phi, p.y);
    for (int j = 0; j < 3; ++j) {
        Eigen::VectorXd expect = Eigen::VectorXd::Zero(10);
        for (Index i = 0; i < 60; ++i)
            expect += p.phi.col(i) * (p.y(j, i) - 1.0 / 3.0);
        EXPECT_LE((g.col(j) - expect).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(GradLoglik, CentralDifferences)
{
    auto p = fixtures::standard();
    Rng rng(5);
    const MatrixXd b = random_matrix(rng, 10, 3, 0.5);
    const MatrixXd g = grad_loglik(b, p.phi, p.y);
    const double h = 1e-5;
    double worst = 0.0;
    for (Index l = 0; l < b.size(); ++l) {
        MatrixXd plus = b, minus = b;
        plus.data()[l] += h;
        minus.data()[l] -= h;
        const double fd = (log_likelihood(plus, p.phi, p.y) - log_likelihood(minus, p.phi, p.y)) / (2 * h);
        worst = std::max(worst, std::abs(fd - g.data()[l]) / std::max(1.0, std::abs(g.data()[l])));
    }
    EXPECT_LE(worst, 1e-5);
}

TEST(GradLoglik, VanishesAtUnpenalizedMaximizer)
{
    auto p = fixtures::standard();
    const FitResult r = bound_fit(solve_belm(p.phi, p.y), p.phi, p.y, 3000);
    EXPECT_LE(r.trace.iterations.back().grad_norm, 1e-4);
}

TEST(StackedView, ClassMajorBlocks)
{
    MatrixXd b(2, 3);
    b << 1, 3, 5, 2, 4, 6;
    const VectorXd v = stack(b);
    for (int i = 0; i < 6; ++i)
        EXPECT_EQ(v(i), i + 1);
    EXPECT_TRUE(unstack(v, 2, 3) == b);
    EXPECT_THROW(unstack(v, 4, 2), ContractError);
}

TEST(BuildBound, IdentityDesign)
{
    const BoundFactorization bf = build_bound(MatrixXd::Identity(4, 4), 3);
    EXPECT_TRUE(bf.gram_eigenvalues().isOnes(1e-14));
    const MatrixXd b = dense_bound(MatrixXd::Identity(4, 4), 3);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(b);
    for (Index i = 0; i < eig.eigenvalues().size(); ++i) {
        const double e = eig.eigenvalues()(i);
        EXPECT_TRUE(std::abs(e) < 1e-12 || std::abs(e + 0.5) < 1e-12);
    }
}

TEST(BuildBound, TwoClassSpectrumReconstructsA)
{
    const BoundFactorization bf = build_bound(MatrixXd::Identity(2, 2), 2);
    const MatrixXd& u = bf.class_eigenvectors();
    const MatrixXd a = u * bf.class_eigenvalues().asDiagonal() * u.transpose();
    MatrixXd expect(2, 2);
    expect << 0.5, -0.5, -0.5, 0.5;
    expect *= -0.5;
    EXPECT_LE((a - expect).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_TRUE((u.transpose() * u).isIdentity(1e-14));
    EXPECT_NEAR(u(0, 0), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(BuildBound, FactorsReconstructDenseKronecker)
{
    Rng rng(6);
    const MatrixXd phi = random_matrix(rng, 3, 8);
    const BoundFactorization bf = build_bound(phi, 3);
    const MatrixXd g = phi * phi.transpose();
    const MatrixXd& ur = bf.gram_eigenvectors();
    EXPECT_LE((ur * bf.gram_eigenvalues().asDiagonal() * ur.transpose() - g).norm(), 1e-8 * g.norm());
    const MatrixXd& ua = bf.class_eigenvectors();
    const MatrixXd a = ua * bf.class_eigenvalues().asDiagonal() * ua.transpose();
    MatrixXd kron(9, 9);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            kron.block(3 * i, 3 * j, 3, 3) = a(i, j) * g;
    EXPECT_LE((kron - dense_bound(phi, 3)).cwiseAbs().maxCoeff(), 1e-10);
    // apply and diagonal agree with the dense matrix
    const MatrixXd d = random_matrix(rng, 3, 3);
    EXPECT_LE((stack(bf.apply(d)) - kron * stack(d)).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((stack(bf.diagonal()) - VectorXd(kron.diagonal())).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildBound, CapIsEnforced)
{
    EXPECT_THROW(build_bound(MatrixXd::Zero(5, 2), 2, 4), ContractError);
}

TEST(BoundQuadratic, ZeroConstantAndDenseOracle)
{
    Rng rng(7);
    const MatrixXd phi = random_matrix(rng, 3, 6);
    const BoundFactorization bf = build_bound(phi, 3);
    const MatrixXd b = dense_bound(phi, 3);
    EXPECT_EQ(bound_quadratic(VectorXd::Zero(9), bf), 0.0);
    const MatrixXd same_cols = random_matrix(rng, 3, 1) * MatrixXd::Ones(1, 3);
    EXPECT_NEAR(bound_quadratic(stack(same_cols), bf), 0.0, 1e-12);
    for (int t = 0; t < 20; ++t) {
        const VectorXd d = stack(random_matrix(rng, 3, 3));
        const double q = bound_quadratic(d, bf);
        EXPECT_NEAR(q, d.dot(b * d), 1e-10 * std::max(1.0, std::abs(q)));
        EXPECT_LE(q, 1e-10);
    }
}

TEST(SolveShifted, Examples)
{
    Rng rng(8);
    const VectorXd rhs = stack(random_matrix(rng, 3, 2));
    const BoundFactorization zero = build_bound(MatrixXd::Zero(3, 4), 2);
    EXPECT_LE((solve_shifted(zero, 2.0, rhs) + rhs / 2.0).cwiseAbs().maxCoeff(), 1e-14);

    const BoundFactorization id = build_bound(MatrixXd::Identity(3, 3), 2);
    const VectorXd null_dir = stack(random_matrix(rng, 3, 1) * MatrixXd::Ones(1, 2));
    EXPECT_LE((solve_shifted(id, 1.0, null_dir) + null_dir).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_THROW(solve_shifted(id, 0.0, null_dir), ContractError);
}

TEST(SolveShifted, ResidualAgainstDenseB)
{
    Rng rng(9);
    for (int m : {2, 3, 5}) {
        const MatrixXd phi = random_matrix(rng, 4, 12);
        const BoundFactorization bf = build_bound(phi, m);
        const MatrixXd b = dense_bound(phi, m);
        for (double gamma : {1e-6, 0.01, 3.0}) {
            const VectorXd rhs = stack(random_matrix(rng, 4, m));
            const VectorXd x = solve_shifted(bf, gamma, rhs);
            const MatrixXd shifted = b - gamma * MatrixXd::Identity(b.rows(), b.cols());
            EXPECT_LE((shifted * x - rhs).norm(), 1e-8 * rhs.norm()) << "m=" << m << " gamma=" << gamma;
        }
    }
}

TEST(BoundInequality, HoldsOnRandomPairs)
{
    for (int m : {2, 3, 4}) {
        auto p = fixtures::blobs(40, 1.0, 5, m, 8, static_cast<std::uint64_t>(m));
        const BoundFactorization bf = build_bound(p.phi, m);
        Rng rng(static_cast<std::uint64_t>(10 + m));
        for (int t = 0; t < 50; ++t) {
            const MatrixXd b = random_matrix(rng, 8, m, 2.0);
            const MatrixXd b0 = random_matrix(rng, 8, m, 2.0);
            const MatrixXd d = b - b0;
            const double lhs = log_likelihood(b, p.phi, p.y) - log_likelihood(b0, p.phi, p.y);
            const double rhs = (d.array() * grad_loglik(b0, p.phi, p.y).array()).sum() + 0.5 * bf.quadratic(d);
            EXPECT_GE(lhs - rhs, -1e-8);
        }
    }
}

TEST(MmStep, ObjectiveIsMonotone)
{
    auto p = fixtures::standard();
    const FitResult r = mm_fit(solve_belm(p.phi, p.y), p.phi, p.y, mm_config(0x1.0p-10, 50));
    ASSERT_EQ(r.trace.iterations.size(), 50u);
    double prev = r.trace.initial.objective;
    for (const auto& rec : r.trace.iterations) {
        EXPECT_GE(rec.objective, prev - 1e-9) << "iteration " << rec.iter;
        prev = rec.objective;
    }
}

TEST(MmStep, PenalizedStationaryPointIsFixed)
{
    auto p = fixtures::standard();
    SolverConfig c = mm_config(0x1.0p-5, 2000);
    c.tol_beta = 1e-12;
    const FitResult r = mm_fit(solve_belm(p.phi, p.y), p.phi, p.y, c);
    const BoundFactorization bf = build_bound(p.phi, 3);
    const MatrixXd next = mm_step(r.beta, p.phi, p.y, bf, c.lambda, c.lambda_floor_eps).beta;
    EXPECT_LE((next - r.beta).cwiseAbs().maxCoeff(), 1e-8);

    const MatrixXd zero = MatrixXd::Zero(10, 3);
    EXPECT_LE(mm_step(zero, zero, bf, 0.1, 1e-8).beta.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_THROW(mm_step(zero, zero, bf, 0.0, 1e-8), ContractError);
}

TEST(MmStep, QuadraticMaximizer)
{
    auto p = fixtures::standard();
    const BoundFactorization bf = build_bound(p.phi, 3);
    const double lambda = 0x1.0p-8;
    MatrixXd beta = solve_belm(p.phi, p.y);
    for (int t = 0; t < 20; ++t) {
        const MatrixXd g = grad_loglik(beta, p.phi, p.y);
        const QuadraticMaximizer pt = quadratic_maximizer(beta, g, bf, lambda, 1e-8);
        // gradient of the quadratic model vanishes at beta_hat
        const MatrixXd lam = prior_curvature(beta, lambda, 1e-8);
        const MatrixXd dq = g + bf.apply(pt.beta_hat - beta) - lam.cwiseProduct(pt.beta_hat - beta);
        EXPECT_LE(dq.cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_GE(pt.q1, 0.0);
        if (g.norm() > 1e-6) {
            EXPECT_GT(pt.q1, 1e-12);
        }
        beta = mm_step(beta, g, bf, lambda, 1e-8).beta;
    }
}

TEST(SoftThreshold, Examples)
{
    EXPECT_NEAR(soft_threshold(0.5, 0.1), 0.4, 1e-15);
    EXPECT_NEAR(soft_threshold(-0.3, 0.1), -0.2, 1e-15);
    EXPECT_EQ(soft_threshold(0.05, 0.1), 0.0);
    EXPECT_EQ(soft_threshold(-0.1, 0.1), 0.0);
    EXPECT_THROW(soft_threshold(MatrixXd::Ones(2, 2), -0.1), ContractError);
}

TEST(SoftThreshold, MatchesGridSearch)
{
    Rng rng(11);
    const double lambda = 0x1.0p-6, gamma = 10 * lambda;
    for (int t = 0; t < 200; ++t) {
        const double e = rng.uniform(-1.5, 1.5);
        double best_v = 0.0, best = std::numeric_limits<double>::infinity();
        for (int k = -20000; k <= 20000; ++k) {
            const double v = k * 1e-4;
            const double f = lambda * std::abs(v) + 0.5 * gamma * (e - v) * (e - v);
            if (f < best) {
                best = f;
                best_v = v;
            }
        }
        EXPECT_NEAR(soft_threshold(e, lambda / gamma), best_v, 1e-4);
    }
}

TEST(SoftThreshold, DeadZoneGrowsWithThreshold)
{
    Rng rng(12);
    const MatrixXd e = random_matrix(rng, 30, 4, 0.3);
    Index prev = -1;
    for (double t : {0.0, 0.01, 0.1, 0.2, 0.5, 1.0}) {
        const MatrixXd v = soft_threshold(e, t);
        const Index zeros = (v.array() == 0.0).count();
        EXPECT_GE(zeros, prev);
        prev = zeros;
    }
}

TEST(AdmmFit, SplitGapCloses)
{
    auto p = fixtures::standard();
    const FitResult r = admm_fit(solve_belm(p.phi, p.y), p.phi, p.y, SolverConfig{});
    EXPECT_LE(r.trace.iterations.size(), 200u);
    EXPECT_LT(r.trace.iterations.back().split_gap, 1e-4);
    EXPECT_GE(r.trace.iterations.back().loglik, r.trace.initial.loglik);
    EXPECT_TRUE(lemma_diagnostics(r.trace).grad_trend_ok);
}

TEST(AdmmFit, SmallLambdaMatchesMmPredictions)
{
    auto p = fixtures::blobs(90, 0.7);
    SolverConfig c;
    c.lambda = 0x1.0p-30;
    const MatrixXd b0 = solve_belm(p.phi, p.y);
    const FitResult a = admm_fit(b0, p.phi, p.y, c);
    SolverConfig cm = c;
    cm.mode = SolverMode::mm;
    const FitResult m = mm_fit(b0, p.phi, p.y, cm);
    EXPECT_EQ(argmax_labels(softmax_probs(a.beta, p.phi)), argmax_labels(softmax_probs(m.beta, p.phi)));
}

TEST(AdmmFit, DeterministicAndValidated)
{
    auto p = fixtures::standard();
    const MatrixXd b0 = solve_belm(p.phi, p.y);
    const FitResult a = admm_fit(b0, p.phi, p.y, SolverConfig{});
    const FitResult b = admm_fit(b0, p.phi, p.y, SolverConfig{});
    EXPECT_TRUE(a.beta == b.beta);
    EXPECT_EQ(trace_csv(a.trace), trace_csv(b.trace));

    SolverConfig bad;
    bad.lambda = 0.0;
    EXPECT_THROW(admm_fit(b0, p.phi, p.y, bad), ContractError);
    EXPECT_THROW(admm_fit(MatrixXd::Zero(9, 3), p.phi, p.y, SolverConfig{}), ContractError);
    EXPECT_EQ(SolverConfig{}.effective_gamma(), 10 * SolverConfig{}.lambda);
}

TEST(AdmmFit, NonFiniteObjectiveNamesIteration)
{
    auto p = fixtures::standard();
    MatrixXd b0 = solve_belm(p.phi, p.y);
    b0(0, 0) = 1e308;
    try {
        admm_fit(b0, p.phi, p.y, SolverConfig{});
        FAIL();
    } catch (const NumericError& e) {
        EXPECT_NE(std::string(e.what()).find("iteration"), std::string::npos);
    }
}

TEST(TraceDiagnostics, Flags)
{
    auto p = fixtures::standard();
    const FitResult r = mm_fit(solve_belm(p.phi, p.y), p.phi, p.y, mm_config(0x1.0p-10, 100));
    const DiagnosticReport clean = lemma_diagnostics(r.trace);
    EXPECT_FALSE(clean.objective_drop);
    EXPECT_TRUE(clean.grad_trend_ok);
    EXPECT_TRUE(clean.q1_checked);
    EXPECT_FALSE(clean.q1_negative);
    EXPECT_TRUE(clean.clean());

    SolverTrace bent = r.trace;
    bent.iterations[10].objective -= 10.0;
    const DiagnosticReport flagged = lemma_diagnostics(bent);
    EXPECT_TRUE(flagged.objective_drop);
    EXPECT_EQ(flagged.first_drop_iter, 11);

    bent = r.trace;
    bent.iterations[3].q1 = -1e-6;
    EXPECT_TRUE(lemma_diagnostics(bent).q1_negative);
    EXPECT_THROW(lemma_diagnostics(SolverTrace{}), ContractError);
}

TEST(TraceCsv, HeaderAndRows)
{
    auto p = fixtures::standard();
    SolverConfig c;
    c.max_iters = 3;
    const FitResult r = admm_fit(solve_belm(p.phi, p.y), p.phi, p.y, c);
    std::istringstream in(trace_csv(r.trace));
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "iter,loglik,objective,grad_norm,split_gap,nnz");
    int rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
        ++rows;
    }
    EXPECT_EQ(rows, 4);
}
