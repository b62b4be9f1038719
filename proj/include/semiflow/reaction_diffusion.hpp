#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <semiflow/noise.hpp>
#include <semiflow/spectral.hpp>

#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semiflow {

/// Reaction term under the one-sided polynomial dissipativity conditions:
/// -c2 - c3 s^{2p} <= f(s) s <= c2 - c1 s^{2p} and f'(s) <= c4. c4 is the
/// sharp upper bound of f', which may be negative.
struct DissipativeNonlinearity {
    std::function<double(double)> f;
    std::function<double(double)> df;
    double c1 = 1.0, c2 = 1.0, c3 = 1.0, c4 = 1.0;
    int p = 1;

    bool check_conditions(double lo, double hi, int samples) const {
        for (int i = 0; i <= samples; ++i) {
            const double s = lo + (hi - lo) * i / samples;
            const double fs = f(s) * s;
            const double pw = std::pow(s, 2 * p);
            const double slack = 1e-10 * (1.0 + std::abs(fs) + pw);
            if (fs > c2 - c1 * pw + slack) return false;
            if (fs < -c2 - c3 * pw - slack) return false;
            if (df(s) > c4 + slack) return false;
        }
        return true;
    }

    /// f(s) = s - s^3
    static DissipativeNonlinearity cubic() {
        return {[](double s) { return s - s * s * s; },
                [](double s) { return 1.0 - 3.0 * s * s; },
                0.5, 1.0, 1.0, 1.0, 2};
    }

    /// f(s) = -s + 0.1 sin(s); sup f' = -0.9
    static DissipativeNonlinearity contracting() {
        return {[](double s) { return -s + 0.1 * std::sin(s); },
                [](double s) { return -1.0 + 0.1 * std::cos(s); },
                0.5, 1.0, 1.5, -0.9, 1};
    }

    /// f(s) = (1 - |s|^alpha) s with derivative 1 - (alpha+1) |s|^alpha
    static DissipativeNonlinearity power_law(double alpha) {
        if (alpha <= 0.0)
            throw std::invalid_argument("power_law: alpha must be positive");
        return {[alpha](double s) { return (1.0 - std::pow(std::abs(s), alpha)) * s; },
                [alpha](double s) { return 1.0 - (alpha + 1.0) * std::pow(std::abs(s), alpha); },
                0.5, 1.0, 1.0, 1.0, 1};
    }
};

/// tilde f(t, xi, s) = Q(t, xi)^{-1} f(Q(t, xi) s)
inline double tilde_f(const QFieldSample& q, const DissipativeNonlinearity& d, int j, int l,
                      double s) {
    return q.q_inv(j, l) * d.f(q.q(j, l) * s);
}

/// d tilde f / d s = f'(Q s)
inline double tilde_df(const QFieldSample& q, const DissipativeNonlinearity& d, int j, int l,
                       double s) {
    return d.df(q.q(j, l) * s);
}

/// Pathwise dissipativity constants of the transformed reaction term over
/// [0, a] x grid.
struct TransformedConstants {
    double c1t, c2t, c3t;
};

inline TransformedConstants transformed_constants(const QFieldSample& q,
                                                  const DissipativeNonlinearity& d, int n_steps) {
    if (n_steps > q.n_times())
        throw std::invalid_argument("transformed_constants: horizon exceeds Q sample");
    double min_pow = 1e300, max_pow = -1e300, max_inv_sq = -1e300;
    const double expo = 2.0 * d.p - 2.0;
    for (int j = 0; j <= n_steps; ++j) {
        for (int l = 0; l < q.grid_points(); ++l) {
            const double qq = q.q(j, l);
            const double pw = std::pow(qq, expo);
            min_pow = std::min(min_pow, pw);
            max_pow = std::max(max_pow, pw);
            max_inv_sq = std::max(max_inv_sq, 1.0 / (qq * qq));
        }
    }
    return {d.c1 * min_pow, d.c2 * max_inv_sq, d.c3 * max_pow};
}

/// Sampled verification of the transformed inequality
/// -c2t - c3t s^{2p} <= tilde f(t, xi, s) s <= c2t - c1t s^{2p}.
/// Returns the number of violations over random (t, xi, s) triples.
inline int transformed_inequality_violations(const QFieldSample& q,
                                             const DissipativeNonlinearity& d,
                                             const TransformedConstants& c, int n_steps,
                                             int n_triples, RandomStream& rng,
                                             double s_range = 8.0) {
    int violations = 0;
    for (int i = 0; i < n_triples; ++i) {
        const int j = static_cast<int>(rng.next_u64() % (n_steps + 1));
        const int l = static_cast<int>(rng.next_u64() % q.grid_points());
        const double s = s_range * (2.0 * rng.uniform() - 1.0);
        const double lhs = tilde_f(q, d, j, l, s) * s;
        const double pw = std::pow(s, 2 * d.p);
        const double slack = 1e-10 * (1.0 + std::abs(lhs) + pw);
        if (lhs > c.c2t - c.c1t * pw + slack) ++violations;
        if (lhs < -c.c2t - c.c3t * pw - slack) ++violations;
    }
    return violations;
}

struct RdStepRejection : std::runtime_error {
    RdStepRejection(int step_, double increment_)
        : std::runtime_error("rd_solve: explicit increment blew up at step " +
                             std::to_string(step_) + " (norm " + std::to_string(increment_) + ")"),
          step(step_), increment(increment_) {}
    int step;
    double increment;
};

/// Trajectories of the transformed field v and the recovered field u = Q v.
///
/// The solver state is the full collocation expansion (P sine modes, in
/// bijection with the grid values), so pointwise multiplications by Q and
/// its inverse are exact and the composition identities carry no spatial
/// projection floor. The N-mode fields of the reporting basis are
/// projections of that state.
struct RdSolution {
    std::vector<Eigen::VectorXd> v;  // P-mode coefficients
    std::vector<Eigen::VectorXd> u;
    std::vector<double> v_norms;     // energy monitor (L2, exact by Parseval)

    SpectralField v_at(const SpectralBasis& basis, int j) const {
        return {basis, v[j].head(basis.n_modes())};
    }
    SpectralField u_at(const SpectralBasis& basis, int j) const {
        return {basis, u[j].head(basis.n_modes())};
    }
    /// spectral tail sum_{m > cutoff} of the recovered field
    double u_tail(int cutoff, int j) const { return u[j].tail(u[j].size() - cutoff).squaredNorm(); }
};

namespace detail {

/// full collocation eigenvalue vector (m pi)^2, m = 1..P
inline Eigen::VectorXd full_laplacian_rates(const SpectralBasis& basis) {
    Eigen::VectorXd lam(basis.grid_points());
    for (int m = 1; m <= basis.grid_points(); ++m) lam[m - 1] = (m * kPi) * (m * kPi);
    return lam;
}

inline Eigen::VectorXd embed_full(const SpectralBasis& basis, const SpectralField& x) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.grid_points());
    c.head(x.coefficients().size()) = x.coefficients();
    return c;
}

} // namespace detail

/// Random reaction-diffusion equation dv/dt = nu Q^{-1} Lap(Q v) + tilde f(t, v),
/// integrated by exponential Euler: the stiff diagonal exactly, the
/// Q-conjugation remainder and the reaction pointwise and explicitly.
inline RdSolution rd_solve_grid(const SpectralBasis& basis, const QFieldSample& q, double dt,
                                const std::function<double(double)>& f,
                                const Eigen::VectorXd& psi_full_modes, int n_steps) {
    if (n_steps > q.n_times()) throw std::invalid_argument("rd_solve: horizon exceeds Q sample");
    const double nu = basis.viscosity();
    const int p = basis.grid_points();
    const Eigen::VectorXd lam = detail::full_laplacian_rates(basis);
    const Eigen::VectorXd decay = (-dt * nu * lam.array()).exp().matrix();

    RdSolution out;
    out.v.reserve(n_steps + 1);
    out.u.reserve(n_steps + 1);
    out.v.push_back(psi_full_modes);
    out.v_norms.push_back(psi_full_modes.norm());
    out.u.push_back(basis.analyze_modes(
        basis.synthesize_coef(psi_full_modes).cwiseProduct(q.q_row(0)), p));

    for (int j = 0; j < n_steps; ++j) {
        const Eigen::VectorXd& v = out.v.back();
        const Eigen::VectorXd v_grid = basis.synthesize_coef(v);

        // nu Q^{-1} Lap(Q v) on the grid; transforms are exact bijections
        const Eigen::VectorXd qv = v_grid.cwiseProduct(q.q_row(j));
        const Eigen::VectorXd lap_qv =
            -(lam.array() * basis.analyze_modes(qv, p).array()).matrix();
        const Eigen::VectorXd conj_grid =
            basis.synthesize_coef(lap_qv).cwiseProduct(q.q_inv_row(j));

        Eigen::VectorXd reaction(p);
        for (int l = 0; l < p; ++l) {
            const double qq = q.q(j, l);
            reaction[l] = f(qq * v_grid[l]) / qq;
            if (!std::isfinite(reaction[l])) throw RdStepRejection(j, reaction[l]);
        }

        Eigen::VectorXd explicit_modes =
            nu * basis.analyze_modes(conj_grid, p) + basis.analyze_modes(reaction, p);
        explicit_modes += (nu * lam.array() * v.array()).matrix();  // cancel the implicit part

        const double inc_norm = dt * explicit_modes.norm();
        if (!std::isfinite(inc_norm) || inc_norm > 0.5 * (1.0 + v.norm()))
            throw RdStepRejection(j, inc_norm);

        Eigen::VectorXd next = (v + dt * explicit_modes).cwiseProduct(decay);
        out.v_norms.push_back(next.norm());
        out.u.push_back(basis.analyze_modes(
            basis.synthesize_coef(next).cwiseProduct(q.q_row(j + 1)), p));
        out.v.push_back(std::move(next));
    }
    return out;
}

inline RdSolution rd_solve(const SpectralBasis& basis, const BrownianGridPath& path,
                           const std::vector<Eigen::VectorXd>& sigmas,
                           const std::function<double(double)>& f, const SpectralField& psi,
                           int n_steps) {
    QFieldSample q(path, sigmas, n_steps);
    return rd_solve_grid(basis, q, path.dt(), f, detail::embed_full(basis, psi), n_steps);
}

/// Relative defect of the transformed-field identity
/// v(t1+t2, psi, w) = Q(t1, w)^{-1} v(t2, Q(t1, w) v(t1, psi, w), theta(t1, w)).
inline double rd_cocycle_defect(const SpectralBasis& basis, const BrownianGridPath& path,
                                const std::vector<Eigen::VectorXd>& sigmas,
                                const std::function<double(double)>& f, const SpectralField& psi,
                                int j1, int j2) {
    auto direct = rd_solve(basis, path, sigmas, f, psi, j1 + j2);
    if (j2 == 0) return 0.0;
    QFieldSample q1(path, sigmas, j1);
    auto shifted_path = path.shift(j1);
    QFieldSample q_shifted(shifted_path, sigmas, j2);
    // initial condition of the shifted solve: Q(t1) v(t1) = u(t1), exact
    // as grid values
    auto second = rd_solve_grid(basis, q_shifted, path.dt(), f, direct.u[j1], j2);
    const Eigen::VectorXd rhs_grid =
        basis.synthesize_coef(second.v[j2]).cwiseProduct(q1.q_inv_row(j1));
    const Eigen::VectorXd rhs = basis.analyze_modes(rhs_grid, basis.grid_points());
    const Eigen::VectorXd& lhs = direct.v[j1 + j2];
    return (lhs - rhs).norm() / lhs.norm();
}

/// Terminal weak-form residual of u = Q v against the test mode e_m:
/// <u_J, e_m> - <psi, e_m> - sum_j [ nu <u_j, Lap e_m> dt + <f(u_j), e_m> dt
///                                   + sum_i <sigma_i u_j, e_m> dW^i_j ].
inline double weak_form_residual(const SpectralBasis& basis, const BrownianGridPath& path,
                                 const std::vector<Eigen::VectorXd>& sigmas,
                                 const std::function<double(double)>& f, const RdSolution& sol,
                                 int mode) {
    const double dt = path.dt();
    const double lap_factor = -basis.eigenvalue(mode);  // nu <u, Lap e_m> = -mu_m u_m
    const int n_steps = static_cast<int>(sol.u.size()) - 1;
    double acc = 0.0;
    for (int j = 0; j < n_steps; ++j) {
        const Eigen::VectorXd u_grid = basis.synthesize_coef(sol.u[j]);
        Eigen::VectorXd f_grid(u_grid.size());
        for (int l = 0; l < u_grid.size(); ++l) f_grid[l] = f(u_grid[l]);
        const double f_m = basis.analyze_modes(f_grid, mode)[mode - 1];
        double noise = 0.0;
        for (std::size_t i = 0; i < sigmas.size(); ++i) {
            const double su_m =
                basis.analyze_modes(u_grid.cwiseProduct(sigmas[i]), mode)[mode - 1];
            noise += su_m * path.increment(static_cast<int>(i), j);
        }
        acc += lap_factor * sol.u[j][mode - 1] * dt + f_m * dt + noise;
    }
    return std::abs(sol.u[n_steps][mode - 1] - sol.u[0][mode - 1] - acc);
}

/// (1/a) log ( |u(a, psi1) - u(a, psi2)| / |psi1 - psi2| )
inline double contraction_exponent(const SpectralBasis& basis, const BrownianGridPath& path,
                                   const std::vector<Eigen::VectorXd>& sigmas,
                                   const DissipativeNonlinearity& d, const SpectralField& psi1,
                                   const SpectralField& psi2, int n_steps) {
    if ((psi1.coefficients() - psi2.coefficients()).norm() == 0.0)
        throw std::invalid_argument("contraction_exponent: identical initial conditions");
    auto sol1 = rd_solve(basis, path, sigmas, d.f, psi1, n_steps);
    auto sol2 = rd_solve(basis, path, sigmas, d.f, psi2, n_steps);
    const double a = n_steps * path.dt();
    const double num = (sol1.u[n_steps] - sol2.u[n_steps]).norm();
    const double den = (psi1 - psi2).l2_norm();
    return std::log(num / den) / a;
}

/// (1/a) log of the transformed-field separation, for the pathwise bound
/// exponent <= (c4 - nu lambda_1) / 2.
inline double v_level_exponent(const SpectralBasis& basis, const BrownianGridPath& path,
                               const std::vector<Eigen::VectorXd>& sigmas,
                               const DissipativeNonlinearity& d, const SpectralField& psi1,
                               const SpectralField& psi2, int n_steps) {
    auto sol1 = rd_solve(basis, path, sigmas, d.f, psi1, n_steps);
    auto sol2 = rd_solve(basis, path, sigmas, d.f, psi2, n_steps);
    const double a = n_steps * path.dt();
    const double num = (sol1.v[n_steps] - sol2.v[n_steps]).norm();
    const double den = (psi1 - psi2).l2_norm();
    return std::log(num / den) / a;
}

/// (c4 - nu lambda_1 - sigma^2) / 2 with sigma^2 = inf_xi sum_i sigma_i(xi)^2
inline double contraction_bound(const SpectralBasis& basis,
                                const std::vector<Eigen::VectorXd>& sigmas, double c4) {
    Eigen::VectorXd ss = Eigen::VectorXd::Zero(sigmas.front().size());
    for (const auto& s : sigmas) ss += s.cwiseProduct(s);
    return 0.5 * (c4 - basis.eigenvalue(1) - ss.minCoeff());
}

/// Directional derivative of the transformed flow for f(u) = (1 - |u|^alpha) u,
/// by the same exponential-Euler stepping applied to the linearized equation
/// with multiplier f'(Q v) = 1 - (alpha+1) Q^alpha |v|^alpha.
inline std::vector<SpectralField> rd_linearized(const SpectralBasis& basis,
                                                const BrownianGridPath& path,
                                                const std::vector<Eigen::VectorXd>& sigmas,
                                                double alpha, const SpectralField& psi,
                                                const SpectralField& g, int n_steps) {
    if (alpha <= 0.0 || alpha >= 4.0)
        throw std::invalid_argument("rd_linearized: alpha must lie in (0, 4)");
    QFieldSample q(path, sigmas, n_steps);
    const double dt = path.dt();
    auto d = DissipativeNonlinearity::power_law(alpha);
    auto base = rd_solve_grid(basis, q, dt, d.f, detail::embed_full(basis, psi), n_steps);

    const double nu = basis.viscosity();
    const int p = basis.grid_points();
    const Eigen::VectorXd lam = detail::full_laplacian_rates(basis);
    const Eigen::VectorXd decay = (-dt * nu * lam.array()).exp().matrix();

    std::vector<SpectralField> out;
    out.reserve(n_steps + 1);
    out.emplace_back(basis, g.coefficients());
    Eigen::VectorXd z = detail::embed_full(basis, g);
    for (int j = 0; j < n_steps; ++j) {
        const Eigen::VectorXd z_grid = basis.synthesize_coef(z);
        const Eigen::VectorXd qz = z_grid.cwiseProduct(q.q_row(j));
        const Eigen::VectorXd lap_qz =
            -(lam.array() * basis.analyze_modes(qz, p).array()).matrix();
        const Eigen::VectorXd conj_grid =
            basis.synthesize_coef(lap_qz).cwiseProduct(q.q_inv_row(j));

        const Eigen::VectorXd v_grid = basis.synthesize_coef(base.v[j]);
        Eigen::VectorXd reaction(p);
        for (int l = 0; l < p; ++l) reaction[l] = d.df(q.q(j, l) * v_grid[l]) * z_grid[l];

        Eigen::VectorXd explicit_modes =
            nu * basis.analyze_modes(conj_grid, p) + basis.analyze_modes(reaction, p);
        explicit_modes += (nu * lam.array() * z.array()).matrix();
        z = (z + dt * explicit_modes).cwiseProduct(decay);
        out.emplace_back(basis, Eigen::VectorXd(z.head(basis.n_modes())));
    }
    return out;
}

/// Smallest eigenvalue (real part) of the discretized -nu Q^{-1} Lap(Q .)
/// restricted to the reporting basis at one time slice; the transformed
/// operator is similar to -nu Lap, so this diagnoses nu lambda_1 = mu_1.
inline double transformed_operator_smallest_eigenvalue(const SpectralBasis& basis,
                                                       const QFieldSample& q, int j) {
    const int n = basis.n_modes();
    Eigen::MatrixXd op(n, n);
    for (int col = 1; col <= n; ++col) {
        Eigen::VectorXd mode_grid =
            basis.synthesize_coef(SpectralField::mode(basis, col).coefficients());
        Eigen::VectorXd q_mode =
            basis.analyze_modes(mode_grid.cwiseProduct(q.q_row(j)), n);
        Eigen::VectorXd lap_grid = basis.synthesize_coef(
            (-(basis.eigenvalues().array() / basis.viscosity()) * q_mode.array()).matrix());
        op.col(col - 1) = -basis.viscosity() *
                          basis.analyze_modes(lap_grid.cwiseProduct(q.q_inv_row(j)), n);
    }
    Eigen::EigenSolver<Eigen::MatrixXd> eig(op);
    double smallest = 1e300;
    for (int i = 0; i < n; ++i) smallest = std::min(smallest, eig.eigenvalues()[i].real());
    return smallest;
}

} // namespace semiflow
