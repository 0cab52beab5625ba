#pragma once

// Sparse multinomial-logistic MAP estimation over a fixed design matrix
// (ELM hidden outputs or kernel columns), with a Laplacian prior.
//
// Coefficients are an R x M block (column j = class j). The stacked vector
// view [beta_1; ...; beta_M] is the column-major storage of that block, so
// the Kronecker bound B = A (x) Phi Phi^T acts on a block D as
// (Phi Phi^T) D A.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smlelm/error.hpp"

namespace smlelm {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class SolverMode { mm, admm };

struct SolverConfig {
    double lambda = 0x1.0p-10;    ///< Laplacian prior weight
    std::optional<double> gamma;  ///< augmented-Lagrangian weight; 10*lambda when unset
    int max_iters = 200;
    double tol_beta = 1e-6;       ///< relative change of beta between iterations
    double tol_grad = 1e-5;       ///< MM mode also stops once |grad L| falls below this
    double lambda_floor_eps = 1e-8;
    SolverMode mode = SolverMode::admm;
    Index bound_cap = 4096;       ///< largest design-matrix row count accepted by build_bound

    double effective_gamma() const { return gamma ? *gamma : 10.0 * lambda; }

    void validate() const
    {
        if (!(lambda > 0.0))
            throw ContractError("solver: lambda must be positive");
        if (!(effective_gamma() > 0.0))
            throw ContractError("solver: gamma must be positive");
        if (max_iters < 1)
            throw ContractError("solver: max_iters must be >= 1");
        if (!(tol_beta > 0.0) || !(tol_grad > 0.0) || !(lambda_floor_eps > 0.0))
            throw ContractError("solver: tolerances must be positive");
        if (bound_cap < 1)
            throw ContractError("solver: bound_cap must be >= 1");
    }
};

// ---------------------------------------------------------------------------
// Stacked-vector view
// ---------------------------------------------------------------------------

inline VectorXd stack(const MatrixXd& block) { return Eigen::Map<const VectorXd>(block.data(), block.size()); }

inline MatrixXd unstack(const VectorXd& v, Index rows, Index classes)
{
    if (v.size() != rows * classes)
        throw ContractError("unstack: vector length does not equal rows*classes");
    return Eigen::Map<const MatrixXd>(v.data(), rows, classes);
}

// ---------------------------------------------------------------------------
// Multinomial-logistic likelihood
// ---------------------------------------------------------------------------

namespace detail {

inline void check_model_shapes(const MatrixXd& beta, const MatrixXd& phi, const MatrixXd* y)
{
    if (beta.rows() != phi.rows())
        throw ContractError("coefficients have " + std::to_string(beta.rows()) + " rows but design matrix has "
                            + std::to_string(phi.rows()));
    if (y && (y->rows() != beta.cols() || y->cols() != phi.cols()))
        throw ContractError("one-hot targets must be classes x samples");
}

} // namespace detail

/// Class probabilities, M x N; each column sums to one.
inline MatrixXd softmax_probs(const MatrixXd& beta, const MatrixXd& phi)
{
    detail::check_model_shapes(beta, phi, nullptr);
    MatrixXd s = beta.transpose() * phi;
    for (Index i = 0; i < s.cols(); ++i) {
        auto col = s.col(i);
        col.array() = (col.array() - col.maxCoeff()).exp();
        col /= col.sum();
    }
    return s;
}

/// sum_i ( y_i . s_i - log sum_j exp(s_ij) ), scores s_i = beta^T phi_i.
inline double log_likelihood(const MatrixXd& beta, const MatrixXd& phi, const MatrixXd& y)
{
    detail::check_model_shapes(beta, phi, &y);
    const MatrixXd s = beta.transpose() * phi;
    double total = 0.0;
    for (Index i = 0; i < s.cols(); ++i) {
        const double m = s.col(i).maxCoeff();
        total += y.col(i).dot(s.col(i)) - (m + std::log((s.col(i).array() - m).exp().sum()));
    }
    return total;
}

/// Gradient of the log-likelihood as an R x M block: Phi (Y - P)^T.
inline MatrixXd grad_loglik(const MatrixXd& beta, const MatrixXd& phi, const MatrixXd& y)
{
    detail::check_model_shapes(beta, phi, &y);
    return phi * (y - softmax_probs(beta, phi)).transpose();
}

struct LikelihoodEval {
    double loglik = 0.0;
    MatrixXd grad; // R x M
};

/// Log-likelihood and gradient from a single pass over the scores.
inline LikelihoodEval evaluate_likelihood(const MatrixXd& beta, const MatrixXd& phi, const MatrixXd& y)
{
    detail::check_model_shapes(beta, phi, &y);
    MatrixXd p = beta.transpose() * phi;
    double total = 0.0;
    for (Index i = 0; i < p.cols(); ++i) {
        auto col = p.col(i);
        const double m = col.maxCoeff();
        const double dot = y.col(i).dot(col);
        col.array() = (col.array() - m).exp();
        const double z = col.sum();
        total += dot - (m + std::log(z));
        col /= z;
    }
    return {total, phi * (y - p).transpose()};
}

// ---------------------------------------------------------------------------
// Boehning bound B = -1/2 (I - 11^T/M) (x) Phi Phi^T, kept factorized.
// ---------------------------------------------------------------------------

class BoundFactorization {
public:
    Index features() const { return gram_values_.size(); }
    Index classes() const { return class_values_.size(); }

    /// Spectrum of Phi Phi^T (ascending, clamped at zero) and its eigenvectors.
    const VectorXd& gram_eigenvalues() const { return gram_values_; }
    const MatrixXd& gram_eigenvectors() const { return gram_vectors_; }

    /// Analytic spectrum of A: 0 once (eigenvector 1/sqrt(M)), -1/2 otherwise.
    const VectorXd& class_eigenvalues() const { return class_values_; }
    const MatrixXd& class_eigenvectors() const { return class_vectors_; }

    /// B applied to a coefficient block.
    MatrixXd apply(const MatrixXd& delta) const
    {
        check(delta);
        return gram_vectors_ * (scaled_projection(delta, [](double s) { return s; })) * class_vectors_.transpose();
    }

    /// delta^T B delta.
    double quadratic(const MatrixXd& delta) const
    {
        check(delta);
        const MatrixXd proj = gram_vectors_.transpose() * delta * class_vectors_;
        double q = 0.0;
        for (Index m = 0; m < proj.cols(); ++m)
            for (Index r = 0; r < proj.rows(); ++r)
                q += gram_values_(r) * class_values_(m) * proj(r, m) * proj(r, m);
        return q;
    }

    /// (B - gamma I)^{-1} rhs. Every eigenvalue of B - gamma I is <= -gamma.
    MatrixXd solve_shifted(double gamma, const MatrixXd& rhs) const
    {
        if (!(gamma > 0.0))
            throw ContractError("solve_shifted: gamma must be positive");
        check(rhs);
        return gram_vectors_ * scaled_projection(rhs, [gamma](double s) { return 1.0 / (s - gamma); })
               * class_vectors_.transpose();
    }

    /// B^+ rhs: pseudo-inverse, eigenvalues below 1e-12 of the largest in
    /// magnitude are dropped.
    MatrixXd solve_pseudo(const MatrixXd& rhs) const
    {
        check(rhs);
        const double cutoff = 1e-12 * 0.5 * gram_values_.maxCoeff();
        return gram_vectors_ * scaled_projection(rhs, [cutoff](double s) {
                   return std::abs(s) > cutoff ? 1.0 / s : 0.0;
               }) * class_vectors_.transpose();
    }

    /// Diagonal of B as an R x M block: A_mm * (Phi Phi^T)_rr.
    MatrixXd diagonal() const
    {
        const double a_diag = -0.5 * (1.0 - 1.0 / static_cast<double>(classes()));
        return MatrixXd(gram_diagonal_.replicate(1, classes()) * a_diag);
    }

    friend BoundFactorization build_bound(const MatrixXd& phi, Index classes, Index cap);

private:
    void check(const MatrixXd& block) const
    {
        if (block.rows() != features() || block.cols() != classes())
            throw ContractError("bound: block must be " + std::to_string(features()) + " x "
                                + std::to_string(classes()));
    }

    // U_R^T D U_A with entry (r,m) mapped through f(s_R[r] * s_A[m]).
    template <typename F>
    MatrixXd scaled_projection(const MatrixXd& d, F f) const
    {
        MatrixXd proj = gram_vectors_.transpose() * d * class_vectors_;
        for (Index m = 0; m < proj.cols(); ++m)
            for (Index r = 0; r < proj.rows(); ++r)
                proj(r, m) *= f(gram_values_(r) * class_values_(m));
        return proj;
    }

    VectorXd gram_values_;
    MatrixXd gram_vectors_;
    VectorXd gram_diagonal_;
    VectorXd class_values_;
    MatrixXd class_vectors_;
};

/// Orthonormal Helmert basis of R^M: column 0 is 1/sqrt(M), the rest span
/// the sum-zero subspace.
inline MatrixXd helmert_basis(Index m)
{
    MatrixXd u = MatrixXd::Zero(m, m);
    u.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(m)));
    for (Index k = 1; k < m; ++k) {
        const double norm = std::sqrt(static_cast<double>(k * (k + 1)));
        u.col(k).head(k).setConstant(1.0 / norm);
        u(k, k) = -static_cast<double>(k) / norm;
    }
    return u;
}

inline BoundFactorization build_bound(const MatrixXd& phi, Index classes, Index cap = 4096)
{
    if (classes < 1)
        throw ContractError("build_bound: class count must be >= 1");
    if (phi.rows() > cap)
        throw ContractError("build_bound: design matrix has " + std::to_string(phi.rows())
                            + " rows, above the configured cap " + std::to_string(cap));
    const MatrixXd gram = phi * phi.transpose();
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram);
    if (eig.info() != Eigen::Success)
        throw NumericError("build_bound: eigendecomposition of Phi Phi^T failed");

    BoundFactorization bf;
    bf.gram_values_ = eig.eigenvalues().cwiseMax(0.0);
    bf.gram_vectors_ = eig.eigenvectors();
    bf.gram_diagonal_ = gram.diagonal();
    bf.class_values_ = VectorXd::Constant(classes, -0.5);
    bf.class_values_(0) = 0.0;
    bf.class_vectors_ = helmert_basis(classes);
    return bf;
}

/// delta^T B delta for a stacked vector.
inline double bound_quadratic(const VectorXd& delta, const BoundFactorization& bf)
{
    return bf.quadratic(unstack(delta, bf.features(), bf.classes()));
}

/// (B - gamma I)^{-1} rhs for a stacked vector.
inline VectorXd solve_shifted(const BoundFactorization& bf, double gamma, const VectorXd& rhs)
{
    return stack(bf.solve_shifted(gamma, unstack(rhs, bf.features(), bf.classes())));
}

// ---------------------------------------------------------------------------
// MM update with the Laplacian prior
// ---------------------------------------------------------------------------

struct CgResult {
    MatrixXd x;
    int iterations = 0;
    double relative_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradient on (lambda*Lambda - B) x = rhs,
/// which is symmetric positive definite for lambda > 0.
inline CgResult solve_penalized(const BoundFactorization& bf, const MatrixXd& lambda_diag, const MatrixXd& rhs,
                                const MatrixXd& x0, double tol = 1e-10)
{
    const auto op = [&](const MatrixXd& x) -> MatrixXd { return lambda_diag.cwiseProduct(x) - bf.apply(x); };
    const MatrixXd precond = (lambda_diag - bf.diagonal()).cwiseInverse();
    const double rhs_norm = rhs.norm();
    CgResult res{x0, 0, 0.0};
    if (rhs_norm == 0.0) {
        res.x.setZero();
        return res;
    }
    MatrixXd r = rhs - op(res.x);
    MatrixXd z = precond.cwiseProduct(r);
    MatrixXd p = z;
    double rz = (r.array() * z.array()).sum();
    const int max_iters = static_cast<int>(10 * rhs.size());
    res.relative_residual = r.norm() / rhs_norm;
    while (res.relative_residual > tol) {
        if (res.iterations >= max_iters)
            throw NumericError("mm_step: conjugate gradient did not converge, relative residual "
                               + std::to_string(res.relative_residual));
        const MatrixXd ap = op(p);
        const double alpha = rz / (p.array() * ap.array()).sum();
        res.x += alpha * p;
        r -= alpha * ap;
        z = precond.cwiseProduct(r);
        const double rz_next = (r.array() * z.array()).sum();
        p = z + (rz_next / rz) * p;
        rz = rz_next;
        ++res.iterations;
        res.relative_residual = r.norm() / rhs_norm;
    }
    return res;
}

/// lambda * diag(1 / max(|beta_l|, eps)) as a block.
inline MatrixXd prior_curvature(const MatrixXd& beta, double lambda, double eps)
{
    return beta.unaryExpr([lambda, eps](double b) { return lambda / std::max(std::abs(b), eps); });
}

struct QuadraticMaximizer {
    MatrixXd beta_hat; ///< beta' - (B - lambda Lambda)^{-1} grad L(beta')
    double q1 = 0.0;   ///< -1/2 grad^T (B - lambda Lambda)^{-1} grad
};

/// Maximizer of the local quadratic model Q1 around beta and its value.
inline QuadraticMaximizer quadratic_maximizer(const MatrixXd& beta, const MatrixXd& grad, const BoundFactorization& bf,
                                double lambda, double eps)
{
    const MatrixXd lam = prior_curvature(beta, lambda, eps);
    const CgResult h = solve_penalized(bf, lam, grad, MatrixXd::Zero(beta.rows(), beta.cols()));
    return {beta + h.x, 0.5 * (grad.array() * h.x.array()).sum()};
}

struct MmStep {
    MatrixXd beta;
    int cg_iterations = 0;
};

/// beta' = (B - lambda Lambda)^{-1} (B beta - grad L(beta)), Lambda floored at eps.
inline MmStep mm_step(const MatrixXd& beta, const MatrixXd& grad, const BoundFactorization& bf, double lambda,
                      double eps)
{
    if (!(lambda > 0.0))
        throw ContractError("mm_step: lambda must be positive");
    const MatrixXd lam = prior_curvature(beta, lambda, eps);
    const CgResult cg = solve_penalized(bf, lam, grad - bf.apply(beta), beta);
    return {cg.x, cg.iterations};
}

inline MmStep mm_step(const MatrixXd& beta, const MatrixXd& phi, const MatrixXd& y, const BoundFactorization& bf,
                      double lambda, double eps)
{
    return mm_step(beta, grad_loglik(beta, phi, y), bf, lambda, eps);
}

// ---------------------------------------------------------------------------
// Soft threshold
// ---------------------------------------------------------------------------

inline double soft_threshold(double e, double t)
{
    const double mag = std::max(0.0, std::abs(e) - t);
    return e < 0.0 ? -mag : mag;
}

/// sign(e) * max(0, |e| - t), elementwise.
inline MatrixXd soft_threshold(const MatrixXd& e, double t)
{
    if (!(t >= 0.0))
        throw ContractError("soft_threshold: threshold must be non-negative");
    return e.unaryExpr([t](double x) { return soft_threshold(x, t); });
}

// ---------------------------------------------------------------------------
// Fitting loops and trace
// ---------------------------------------------------------------------------

struct TraceRecord {
    int iter = 0;
    double loglik = 0.0;
    double objective = 0.0; ///< loglik - lambda * |beta|_1
    double grad_norm = 0.0;
    double split_gap = 0.0; ///< |beta - v|_2 (zero outside ADMM)
    Index nnz = 0;          ///< entries of the sparse iterate with magnitude > 1e-10
    double q1 = std::numeric_limits<double>::quiet_NaN(); ///< local quadratic model maximum at the step start (MM only)
};

struct SolverTrace {
    SolverMode mode = SolverMode::admm;
    double lambda = 0.0;
    TraceRecord initial;
    std::vector<TraceRecord> iterations;
};

struct FitResult {
    MatrixXd beta;
    MatrixXd v; ///< split variable (sparse); equals beta outside ADMM
    SolverTrace trace;
    bool converged = false;
};

namespace detail {

inline Index count_nonzero(const MatrixXd& x)
{
    return (x.array().abs() > 1e-10).count();
}

inline TraceRecord make_record(int iter, const LikelihoodEval& ev, const MatrixXd& beta, const MatrixXd& v,
                               double lambda)
{
    TraceRecord rec;
    rec.iter = iter;
    rec.loglik = ev.loglik;
    rec.objective = ev.loglik - lambda * beta.lpNorm<1>();
    rec.grad_norm = ev.grad.norm();
    rec.split_gap = (beta - v).norm();
    rec.nnz = count_nonzero(v);
    if (!std::isfinite(rec.objective))
        throw NumericError("solver: non-finite objective at iteration " + std::to_string(iter));
    return rec;
}

inline double relative_change(const MatrixXd& next, const MatrixXd& prev)
{
    const double scale = std::max({prev.norm(), next.norm(), std::numeric_limits<double>::min()});
    return (next - prev).norm() / scale;
}

inline void check_fit_inputs(const MatrixXd& beta0, const MatrixXd& phi, const MatrixXd& y)
{
    detail::check_model_shapes(beta0, phi, &y);
    if (!beta0.allFinite() || !phi.allFinite())
        throw ContractError("solver: initial coefficients and design matrix must be finite");
}

} // namespace detail

/// MM iterations of the Laplacian-prior update. The trace records Q1 at
/// the start of every step.
inline FitResult mm_fit(const MatrixXd& beta0, const MatrixXd& phi, const MatrixXd& y, const SolverConfig& cfg)
{
    cfg.validate();
    detail::check_fit_inputs(beta0, phi, y);
    const BoundFactorization bf = build_bound(phi, y.rows(), cfg.bound_cap);

    FitResult out;
    out.trace.mode = SolverMode::mm;
    out.trace.lambda = cfg.lambda;
    MatrixXd beta = beta0;
    LikelihoodEval ev = evaluate_likelihood(beta, phi, y);
    out.trace.initial = detail::make_record(0, ev, beta, beta, cfg.lambda);
    for (int t = 1; t <= cfg.max_iters; ++t) {
        const double q1 = quadratic_maximizer(beta, ev.grad, bf, cfg.lambda, cfg.lambda_floor_eps).q1;
        const MatrixXd next = mm_step(beta, ev.grad, bf, cfg.lambda, cfg.lambda_floor_eps).beta;
        const double change = detail::relative_change(next, beta);
        beta = next;
        ev = evaluate_likelihood(beta, phi, y);
        auto rec = detail::make_record(t, ev, beta, beta, cfg.lambda);
        rec.q1 = q1;
        out.trace.iterations.push_back(rec);
        if (change < cfg.tol_beta || rec.grad_norm < cfg.tol_grad) {
            out.converged = true;
            break;
        }
    }
    out.v = beta;
    out.beta = std::move(beta);
    return out;
}

/// Variable splitting / augmented Lagrangian iterations:
///   beta <- (B - gamma I)^{-1} (B beta - grad L(beta) - gamma (v + b))
///   v    <- soft_threshold(beta - b, lambda / gamma)
///   b    <- b - beta + v
/// starting from v = beta0, b = 0.
inline FitResult admm_fit(const MatrixXd& beta0, const MatrixXd& phi, const MatrixXd& y, const SolverConfig& cfg)
{
    cfg.validate();
    detail::check_fit_inputs(beta0, phi, y);
    const double gamma = cfg.effective_gamma();
    const double threshold = cfg.lambda / gamma;
    const BoundFactorization bf = build_bound(phi, y.rows(), cfg.bound_cap);

    FitResult out;
    out.trace.mode = SolverMode::admm;
    out.trace.lambda = cfg.lambda;
    MatrixXd beta = beta0;
    MatrixXd v = beta0;
    MatrixXd dual = MatrixXd::Zero(beta0.rows(), beta0.cols());
    LikelihoodEval ev = evaluate_likelihood(beta, phi, y);
    out.trace.initial = detail::make_record(0, ev, beta, v, cfg.lambda);
    for (int t = 1; t <= cfg.max_iters; ++t) {
        const MatrixXd rhs = bf.apply(beta) - ev.grad - gamma * (v + dual);
        MatrixXd next = bf.solve_shifted(gamma, rhs);
        v = soft_threshold(MatrixXd(next - dual), threshold);
        dual += v - next;
        const double change = detail::relative_change(next, beta);
        beta = std::move(next);
        ev = evaluate_likelihood(beta, phi, y);
        out.trace.iterations.push_back(detail::make_record(t, ev, beta, v, cfg.lambda));
        if (change < cfg.tol_beta) {
            out.converged = true;
            break;
        }
    }
    out.beta = std::move(beta);
    out.v = std::move(v);
    return out;
}

inline FitResult fit(const MatrixXd& beta0, const MatrixXd& phi, const MatrixXd& y, const SolverConfig& cfg)
{
    return cfg.mode == SolverMode::mm ? mm_fit(beta0, phi, y, cfg) : admm_fit(beta0, phi, y, cfg);
}

/// Unpenalized bound iterations beta <- beta - B^+ grad L(beta). On
/// separable data the iterates grow without limit.
inline FitResult bound_fit(const MatrixXd& beta0, const MatrixXd& phi, const MatrixXd& y, int iterations)
{
    detail::check_fit_inputs(beta0, phi, y);
    const BoundFactorization bf = build_bound(phi, y.rows(), std::max<Index>(phi.rows(), 1));
    FitResult out;
    out.trace.mode = SolverMode::mm;
    MatrixXd beta = beta0;
    LikelihoodEval ev = evaluate_likelihood(beta, phi, y);
    out.trace.initial = detail::make_record(0, ev, beta, beta, 0.0);
    for (int t = 1; t <= iterations; ++t) {
        beta -= bf.solve_pseudo(ev.grad);
        ev = evaluate_likelihood(beta, phi, y);
        out.trace.iterations.push_back(detail::make_record(t, ev, beta, beta, 0.0));
    }
    out.v = beta;
    out.beta = std::move(beta);
    return out;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct DiagnosticReport {
    bool objective_drop = false; ///< MM trace lost more than 1e-9 in some step
    int first_drop_iter = -1;
    double worst_drop = 0.0;
    bool grad_trend_ok = false; ///< final |grad| <= 0.1 * initial |grad|
    double grad_ratio = 0.0;
    bool q1_checked = false;
    double min_q1 = std::numeric_limits<double>::quiet_NaN();
    bool q1_negative = false; ///< some Q1 below -1e-12

    bool clean() const { return !objective_drop && grad_trend_ok && !q1_negative; }
};

inline DiagnosticReport lemma_diagnostics(const SolverTrace& trace)
{
    if (trace.iterations.empty())
        throw ContractError("lemma_diagnostics: trace has no iterations");
    DiagnosticReport rep;
    if (trace.mode == SolverMode::mm) {
        double prev = trace.initial.objective;
        for (const auto& rec : trace.iterations) {
            const double drop = prev - rec.objective;
            if (drop > 1e-9) {
                if (!rep.objective_drop)
                    rep.first_drop_iter = rec.iter;
                rep.objective_drop = true;
            }
            rep.worst_drop = std::max(rep.worst_drop, drop);
            prev = rec.objective;
        }
    }
    const double g0 = trace.initial.grad_norm;
    const double g1 = trace.iterations.back().grad_norm;
    rep.grad_ratio = g0 > 0.0 ? g1 / g0 : 0.0;
    rep.grad_trend_ok = g1 <= 0.1 * g0;
    for (const auto& rec : trace.iterations) {
        if (std::isnan(rec.q1))
            continue;
        rep.min_q1 = rep.q1_checked ? std::min(rep.min_q1, rec.q1) : rec.q1;
        rep.q1_checked = true;
    }
    rep.q1_negative = rep.q1_checked && rep.min_q1 < -1e-12;
    return rep;
}

/// CSV rows: iter,loglik,objective,grad_norm,split_gap,nnz (initial state is iter 0).
inline std::string trace_csv(const SolverTrace& trace)
{
    std::string out = "iter,loglik,objective,grad_norm,split_gap,nnz\n";
    char buf[256];
    auto row = [&](const TraceRecord& r) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%lld\n", r.iter, r.loglik, r.objective,
                      r.grad_norm, r.split_gap, static_cast<long long>(r.nnz));
        out += buf;
    };
    row(trace.initial);
    for (const auto& r : trace.iterations)
        row(r);
    return out;
}

} // namespace smlelm
