#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <semiflow/linear_flow.hpp>
#include <semiflow/spectral.hpp>

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

namespace semiflow {

/// Pointwise nonlinearity with derivatives, plus the declared growth
/// constant of |f(s)| <= C (1 + |s|).
struct Nonlinearity {
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::function<double(double)> d2f;  // may be empty
    double growth_constant = 1.0;

    bool check_growth(double lo, double hi, int samples) const {
        for (int i = 0; i <= samples; ++i) {
            const double s = lo + (hi - lo) * i / samples;
            if (std::abs(f(s)) > growth_constant * (1.0 + std::abs(s)) + 1e-12) return false;
        }
        return true;
    }

    static Nonlinearity zero() {
        return {[](double) { return 0.0; }, [](double) { return 0.0; },
                [](double) { return 0.0; }, 0.0};
    }

    static Nonlinearity linear(double rate) {
        return {[rate](double s) { return rate * s; }, [rate](double) { return rate; },
                [](double) { return 0.0; }, std::abs(rate)};
    }

    static Nonlinearity sine() {
        return {[](double s) { return std::sin(s); }, [](double s) { return std::cos(s); },
                [](double s) { return -std::sin(s); }, 1.0};
    }
};

struct PicardNonContraction : std::runtime_error {
    PicardNonContraction(int iterations_, double increment_)
        : std::runtime_error("picard_solve: no contraction after " + std::to_string(iterations_) +
                             " sweeps (last increment " + std::to_string(increment_) +
                             "); tolerance too tight for this grid"),
          iterations(iterations_), increment(increment_) {}
    int iterations;
    double increment;
};

/// Trajectory of the variational solution together with the Picard
/// iteration diagnostics.
struct SemiflowSolution {
    std::vector<Eigen::VectorXd> trajectory;  // coefficients of U(t_j, x)
    int picard_iterations = 0;
    double final_increment = 0.0;

    SpectralField field_at(const SpectralBasis& basis, int j) const {
        return {basis, trajectory[j]};
    }
};

namespace detail {

/// One trapezoid sweep of I_j = dt * sum'' K(j,m) G_m through the kernel
/// recursion I_{j+1} = M_j (I_j + dt/2 G_m) + dt/2 G_{j+1}; K(j,m) is the
/// linear flow between grid times m and j along the shifted path, never
/// formed explicitly.
template <typename Mat>
std::vector<Mat> kernel_sweep(const LinearFlowProvider& provider, const std::vector<Mat>& g) {
    const double dt = provider.dt();
    std::vector<Mat> integral(g.size());
    integral[0] = Mat::Zero(g[0].rows(), g[0].cols());
    for (std::size_t j = 0; j + 1 < g.size(); ++j)
        integral[j + 1] = provider.step_matrix(static_cast<int>(j)) *
                              (integral[j] + (0.5 * dt) * g[j]) +
                          (0.5 * dt) * g[j + 1];
    return integral;
}

} // namespace detail

/// Solves the random integral equation
///   U(t) = phi(t, w) x + Int_0^t phi(t-s, theta(s, w)) F(U(s)) ds
/// by successive approximations on the grid (trapezoid in s). The kernel
/// phi(t-s, theta(s, w)) is the provider's flow between grid times s and t,
/// reached through its one-step factorization.
inline SemiflowSolution picard_solve(const LinearFlowProvider& provider, const Nonlinearity& f,
                                     const SpectralBasis& basis, const SpectralField& x,
                                     int n_steps, double tol = 1e-10, int max_iterations = 80) {
    if (n_steps > provider.steps())
        throw std::invalid_argument("picard_solve: horizon exceeds provider");
    const double scaled_tol = tol * (1.0 + x.l2_norm());

    // homogeneous part phi(t_j) x
    std::vector<Eigen::VectorXd> phi_x(n_steps + 1);
    phi_x[0] = x.coefficients();
    for (int j = 0; j < n_steps; ++j) phi_x[j + 1] = provider.step_matrix(j) * phi_x[j];

    SemiflowSolution out;
    out.trajectory = phi_x;
    std::vector<Eigen::VectorXd> g(n_steps + 1);
    for (int iter = 1; iter <= max_iterations; ++iter) {
        for (int j = 0; j <= n_steps; ++j)
            g[j] = nemytskii_apply(f.f, SpectralField(basis, out.trajectory[j])).coefficients();
        auto integral = detail::kernel_sweep(provider, g);
        double increment = 0.0;
        for (int j = 0; j <= n_steps; ++j) {
            Eigen::VectorXd next = phi_x[j] + integral[j];
            increment = std::max(increment, (next - out.trajectory[j]).norm());
            out.trajectory[j] = std::move(next);
        }
        out.picard_iterations = iter;
        out.final_increment = increment;
        if (increment < scaled_tol) return out;
    }
    throw PicardNonContraction(out.picard_iterations, out.final_increment);
}

/// Sup over the grid of the defect of U in the one-step mild recursion
/// u_{j+1} = M_j (u_j + dt F(u_j)); the two discretizations of the same
/// equation agree up to quadrature order.
inline double mild_residual(const SemiflowSolution& solution, const LinearFlowProvider& provider,
                            const Nonlinearity& f, const SpectralBasis& basis) {
    const double dt = provider.dt();
    Eigen::VectorXd u = solution.trajectory[0];
    double sup = 0.0;
    for (std::size_t j = 0; j + 1 < solution.trajectory.size(); ++j) {
        const Eigen::VectorXd fu =
            nemytskii_apply(f.f, SpectralField(basis, u)).coefficients();
        u = provider.step_matrix(static_cast<int>(j)) * (u + dt * fu);
        sup = std::max(sup, (u - solution.trajectory[j + 1]).norm());
    }
    return sup;
}

/// Directional Frechet derivative flow: solves the linear integral equation
///   Z(t) = phi(t) Y + Int_0^t phi(t-s, theta(s, w)) DF(U(s)) Z(s) ds
/// along the columns of y0. With y0 = I this assembles the full Jacobian.
inline std::vector<Eigen::MatrixXd> frechet_flow_matrix(const SemiflowSolution& solution,
                                                        const Nonlinearity& f,
                                                        const LinearFlowProvider& provider,
                                                        const SpectralBasis& basis,
                                                        const Eigen::MatrixXd& y0,
                                                        double tol = 1e-12,
                                                        int max_iterations = 120) {
    if (!f.df) throw std::invalid_argument("frechet_flow: nonlinearity has no derivative");
    const int n_steps = static_cast<int>(solution.trajectory.size()) - 1;
    const int p = basis.grid_points();

    // df(U) on the grid, fixed over the sweeps
    std::vector<Eigen::VectorXd> slope(n_steps + 1);
    for (int j = 0; j <= n_steps; ++j) {
        Eigen::VectorXd vals = basis.synthesize_coef(solution.trajectory[j]);
        for (int l = 0; l < p; ++l) vals[l] = f.df(vals[l]);
        slope[j] = std::move(vals);
    }
    auto apply_slope = [&](int j, const Eigen::MatrixXd& z) {
        Eigen::MatrixXd out(z.rows(), z.cols());
        for (int c = 0; c < z.cols(); ++c) {
            Eigen::VectorXd vals = basis.synthesize_coef(z.col(c));
            out.col(c) = basis.analyze_modes(vals.cwiseProduct(slope[j]), basis.n_modes());
        }
        return out;
    };

    std::vector<Eigen::MatrixXd> phi_y(n_steps + 1);
    phi_y[0] = y0;
    for (int j = 0; j < n_steps; ++j) phi_y[j + 1] = provider.step_matrix(j) * phi_y[j];

    std::vector<Eigen::MatrixXd> z = phi_y;
    std::vector<Eigen::MatrixXd> g(n_steps + 1);
    const double scale = 1.0 + y0.norm();
    for (int iter = 1; iter <= max_iterations; ++iter) {
        for (int j = 0; j <= n_steps; ++j) g[j] = apply_slope(j, z[j]);
        auto integral = detail::kernel_sweep(provider, g);
        double increment = 0.0;
        for (int j = 0; j <= n_steps; ++j) {
            Eigen::MatrixXd next = phi_y[j] + integral[j];
            increment = std::max(increment, (next - z[j]).norm());
            z[j] = std::move(next);
        }
        if (increment < tol * scale) return z;
    }
    throw PicardNonContraction(max_iterations, tol);
}

inline std::vector<SpectralField> frechet_flow(const SemiflowSolution& solution,
                                               const Nonlinearity& f,
                                               const LinearFlowProvider& provider,
                                               const SpectralBasis& basis, const SpectralField& y,
                                               double tol = 1e-12) {
    auto cols = frechet_flow_matrix(solution, f, provider, basis, y.coefficients(), tol);
    std::vector<SpectralField> out;
    out.reserve(cols.size());
    for (auto& c : cols) out.emplace_back(basis, Eigen::VectorXd(std::move(c)));
    return out;
}

/// Directional second derivative D2U(t,x)(y1, y2): differentiates the
/// derivative equation once more, sourcing d2f(U) (DU y1)(DU y2).
inline std::vector<SpectralField> second_derivative_flow(const SemiflowSolution& solution,
                                                         const Nonlinearity& f,
                                                         const LinearFlowProvider& provider,
                                                         const SpectralBasis& basis,
                                                         const SpectralField& y1,
                                                         const SpectralField& y2,
                                                         double tol = 1e-12,
                                                         int max_iterations = 120) {
    if (!f.d2f) throw std::invalid_argument("second_derivative_flow: missing second derivative");
    const int n_steps = static_cast<int>(solution.trajectory.size()) - 1;
    const int p = basis.grid_points();

    auto z1 = frechet_flow_matrix(solution, f, provider, basis, y1.coefficients(), tol);
    auto z2 = frechet_flow_matrix(solution, f, provider, basis, y2.coefficients(), tol);

    std::vector<Eigen::VectorXd> slope(n_steps + 1), curvature_source(n_steps + 1);
    for (int j = 0; j <= n_steps; ++j) {
        Eigen::VectorXd vals = basis.synthesize_coef(solution.trajectory[j]);
        Eigen::VectorXd s1 = basis.synthesize_coef(z1[j].col(0));
        Eigen::VectorXd s2 = basis.synthesize_coef(z2[j].col(0));
        Eigen::VectorXd sl(p), src(p);
        for (int l = 0; l < p; ++l) {
            sl[l] = f.df(vals[l]);
            src[l] = f.d2f(vals[l]) * s1[l] * s2[l];
        }
        slope[j] = std::move(sl);
        curvature_source[j] = basis.analyze_modes(src, basis.n_modes());
    }

    std::vector<Eigen::VectorXd> w(n_steps + 1, Eigen::VectorXd::Zero(basis.n_modes()));
    std::vector<Eigen::VectorXd> g(n_steps + 1);
    for (int iter = 1; iter <= max_iterations; ++iter) {
        for (int j = 0; j <= n_steps; ++j) {
            Eigen::VectorXd vals = basis.synthesize_coef(w[j]);
            g[j] = curvature_source[j] +
                   basis.analyze_modes(vals.cwiseProduct(slope[j]), basis.n_modes());
        }
        auto integral = detail::kernel_sweep(provider, g);
        double increment = 0.0;
        for (int j = 0; j <= n_steps; ++j) {
            increment = std::max(increment, (integral[j] - w[j]).norm());
            w[j] = integral[j];
        }
        if (increment < tol) {
            std::vector<SpectralField> out;
            out.reserve(w.size());
            for (auto& c : w) out.emplace_back(basis, std::move(c));
            return out;
        }
    }
    throw PicardNonContraction(max_iterations, tol);
}

/// Relative defect of U(t1+t2, x, w) against U(t2, U(t1,x,w), theta(t1,w)).
inline double cocycle_defect(const LinearFlowProvider& provider, const Nonlinearity& f,
                             const SpectralBasis& basis, const SpectralField& x, int j1, int j2,
                             double tol = 1e-12) {
    auto direct = picard_solve(provider, f, basis, x, j1 + j2, tol);
    if (j2 == 0) return 0.0;
    SpectralField mid(basis, direct.trajectory[j1]);
    auto shifted = provider.shifted(j1);
    auto second = picard_solve(*shifted, f, basis, mid, j2, tol);
    const Eigen::VectorXd& lhs = direct.trajectory[j1 + j2];
    const Eigen::VectorXd& rhs = second.trajectory[j2];
    return (lhs - rhs).norm() / lhs.norm();
}

struct CompactnessProbe {
    Eigen::VectorXd singular_values;  // top m
    double hs_tail;                   // sum of squared singular values beyond m
};

/// Top singular values of a flow Jacobian plus the Hilbert-Schmidt tail,
/// the finite-dimensional compactness certificate.
inline CompactnessProbe compactness_probe(const FlowOperator& jacobian, int m) {
    if (m > jacobian.matrix.rows())
        throw std::invalid_argument("compactness_probe: m exceeds dimension");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(jacobian.matrix);
    const Eigen::VectorXd& all = svd.singularValues();
    CompactnessProbe out;
    out.singular_values = all.head(m);
    out.hs_tail = all.tail(all.size() - m).squaredNorm();
    return out;
}

} // namespace semiflow
