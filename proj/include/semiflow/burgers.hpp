#pragma once

#include <Eigen/Dense>

#include <semiflow/noise.hpp>
#include <semiflow/spectral.hpp>

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semiflow {

/// Additive-noise Burgers configuration: mode amplitudes lambda_k of the
/// noise expansion; the OU rates are the heat eigenvalues alpha_k = mu_k.
struct BurgersConfig {
    Eigen::VectorXd lambda;      // size K <= N
    double cfl_fraction = 0.5;   // explicit-increment rejection threshold

    int k_modes() const { return static_cast<int>(lambda.size()); }

    /// partial sum of the noise admissibility condition sum_k lambda_k / alpha_k
    double lambda_alpha_partial_sum(const SpectralBasis& basis) const {
        double s = 0.0;
        for (int k = 1; k <= k_modes(); ++k) s += lambda[k - 1] / basis.eigenvalue(k);
        return s;
    }

    static BurgersConfig decaying(int k_modes, double amplitude, double power = 2.0) {
        Eigen::VectorXd lam(k_modes);
        for (int k = 1; k <= k_modes; ++k) lam[k - 1] = amplitude / std::pow(k, power);
        return {std::move(lam)};
    }
};

struct BurgersCflRejection : std::runtime_error {
    BurgersCflRejection(int step_, double increment_)
        : std::runtime_error("burgers_solve: explicit increment exceeded the CFL fraction at step " +
                             std::to_string(step_) + " (norm " + std::to_string(increment_) + ")"),
          step(step_), increment(increment_) {}
    int step;
    double increment;
};

/// Stochastic convolution modes z_k(t_j) of Int_0^t T_{t-s} dW(s), by the
/// exact OU transition driven by the path's standardized increments.
inline std::vector<Eigen::VectorXd> wp_modes(const SpectralBasis& basis,
                                             const BrownianGridPath& path,
                                             const BurgersConfig& config, int n_steps) {
    const int k_modes = config.k_modes();
    if (k_modes > basis.n_modes())
        throw std::invalid_argument("wp_modes: more noise modes than basis modes");
    if (k_modes != path.k_paths())
        throw std::invalid_argument("wp_modes: path dimension does not match lambda");
    Eigen::VectorXd alpha(k_modes);
    for (int k = 1; k <= k_modes; ++k) alpha[k - 1] = basis.eigenvalue(k);
    OUConvolutionState state(alpha, config.lambda);
    std::vector<Eigen::VectorXd> out;
    out.reserve(n_steps + 1);
    out.push_back(state.z);
    Eigen::VectorXd incr(k_modes);
    for (int j = 0; j < n_steps; ++j) {
        for (int k = 0; k < k_modes; ++k) incr[k] = path.increment(k, j);
        state = ou_step(state, path.dt(), incr);
        out.push_back(state.z);
    }
    return out;
}

/// The convolution as basis fields, synthesized on demand.
inline std::vector<SpectralField> wp_trajectory(const SpectralBasis& basis,
                                                const BrownianGridPath& path,
                                                const BurgersConfig& config, int n_steps) {
    auto modes = wp_modes(basis, path, config, n_steps);
    std::vector<SpectralField> out;
    out.reserve(modes.size());
    for (const auto& z : modes) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.n_modes());
        c.head(z.size()) = z;
        out.emplace_back(basis, std::move(c));
    }
    return out;
}

struct BurgersSolution {
    std::vector<Eigen::VectorXd> v;   // N-mode coefficients
    std::vector<Eigen::VectorXd> u;   // u = v + W_p
    std::vector<double> v_norms;

    SpectralField v_at(const SpectralBasis& basis, int j) const { return {basis, v[j]}; }
    SpectralField u_at(const SpectralBasis& basis, int j) const { return {basis, u[j]}; }
    double u_tail(int cutoff, int j) const { return u[j].tail(u[j].size() - cutoff).squaredNorm(); }
};

namespace detail {

/// -1/2 d/dxi (w^2) = -(w w')(xi), exactly band-limited to 2N <= P-1, so the
/// projection onto N modes is alias-free.
inline Eigen::VectorXd burgers_nonlinearity(const SpectralBasis& basis, const Eigen::VectorXd& w) {
    const Eigen::VectorXd grid = basis.synthesize_coef(w);
    const Eigen::VectorXd dgrid = basis.synthesize_derivative(w);
    return -basis.analyze_modes(grid.cwiseProduct(dgrid), basis.n_modes());
}

/// directional derivative of the nonlinearity: -(d/dxi)(w g) = -(w' g + w g')
inline Eigen::VectorXd burgers_nonlinearity_derivative(const SpectralBasis& basis,
                                                       const Eigen::VectorXd& w,
                                                       const Eigen::VectorXd& g) {
    const Eigen::VectorXd w_grid = basis.synthesize_coef(w);
    const Eigen::VectorXd dw_grid = basis.synthesize_derivative(w);
    const Eigen::VectorXd g_grid = basis.synthesize_coef(g);
    const Eigen::VectorXd dg_grid = basis.synthesize_derivative(g);
    return -basis.analyze_modes(w_grid.cwiseProduct(dg_grid) + dw_grid.cwiseProduct(g_grid),
                                basis.n_modes());
}

} // namespace detail

/// Random Burgers equation dv/dt = nu Lap v - 1/2 d/dxi (v + W_p)^2 in the
/// conservative form, Crank-Nicolson on the diffusion and Adams-Bashforth 2
/// on the nonlinear term (first step by explicit Euler).
inline BurgersSolution burgers_solve(const SpectralBasis& basis, const BrownianGridPath& path,
                                     const BurgersConfig& config, const SpectralField& psi,
                                     int n_steps) {
    if (n_steps > path.steps()) throw std::invalid_argument("burgers_solve: horizon exceeds path");
    const double dt = path.dt();
    const int n = basis.n_modes();
    auto wp = wp_modes(basis, path, config, n_steps);
    auto wp_field = [&](int j) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        c.head(wp[j].size()) = wp[j];
        return c;
    };

    const Eigen::ArrayXd half_mu = 0.5 * dt * basis.eigenvalues().array();
    const Eigen::ArrayXd cn_explicit = (1.0 - half_mu) / (1.0 + half_mu);
    const Eigen::ArrayXd cn_inverse = 1.0 / (1.0 + half_mu);

    BurgersSolution out;
    out.v.reserve(n_steps + 1);
    out.u.reserve(n_steps + 1);
    out.v.push_back(psi.coefficients());
    out.u.push_back(psi.coefficients() + wp_field(0));
    out.v_norms.push_back(psi.l2_norm());

    Eigen::VectorXd prev_nl;
    for (int j = 0; j < n_steps; ++j) {
        const Eigen::VectorXd& v = out.v.back();
        const Eigen::VectorXd nl = detail::burgers_nonlinearity(basis, v + wp_field(j));
        if (dt * nl.norm() > config.cfl_fraction * (1.0 + v.norm()) || !nl.allFinite())
            throw BurgersCflRejection(j, dt * nl.norm());
        const Eigen::VectorXd ab =
            (j == 0) ? nl : Eigen::VectorXd(1.5 * nl - 0.5 * prev_nl);
        Eigen::VectorXd next =
            (cn_explicit * v.array() + dt * cn_inverse * ab.array()).matrix();
        prev_nl = nl;
        out.v_norms.push_back(next.norm());
        out.u.push_back(next + wp_field(j + 1));
        out.v.push_back(std::move(next));
    }
    return out;
}

/// Relative defect of u(t2, u(t1, psi, w), theta(t1, w)) against
/// u(t1+t2, psi, w), the shifted side's convolution rebuilt from the
/// shifted path with zero initial state.
inline double burgers_cocycle_defect(const SpectralBasis& basis, const BrownianGridPath& path,
                                     const BurgersConfig& config, const SpectralField& psi,
                                     int j1, int j2) {
    auto direct = burgers_solve(basis, path, config, psi, j1 + j2);
    if (j2 == 0) return 0.0;
    SpectralField mid(basis, direct.u[j1]);
    auto second = burgers_solve(basis, path.shift(j1), config, mid, j2);
    const Eigen::VectorXd& lhs = direct.u[j1 + j2];
    const Eigen::VectorXd& rhs = second.u[j2];
    return (lhs - rhs).norm() / lhs.norm();
}

/// Directional derivative flow Dv(t, psi) g of the random Burgers equation,
/// by the same conservative pseudospectral stepping applied to the
/// linearized equation.
inline std::vector<SpectralField> burgers_linearized(const SpectralBasis& basis,
                                                     const BrownianGridPath& path,
                                                     const BurgersConfig& config,
                                                     const SpectralField& psi,
                                                     const SpectralField& g, int n_steps) {
    auto base = burgers_solve(basis, path, config, psi, n_steps);
    auto wp = wp_modes(basis, path, config, n_steps);
    const double dt = path.dt();
    const int n = basis.n_modes();
    auto wp_field = [&](int j) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(n);
        c.head(wp[j].size()) = wp[j];
        return c;
    };

    const Eigen::ArrayXd half_mu = 0.5 * dt * basis.eigenvalues().array();
    const Eigen::ArrayXd cn_explicit = (1.0 - half_mu) / (1.0 + half_mu);
    const Eigen::ArrayXd cn_inverse = 1.0 / (1.0 + half_mu);

    std::vector<SpectralField> out;
    out.reserve(n_steps + 1);
    out.push_back(g);
    Eigen::VectorXd z = g.coefficients();
    Eigen::VectorXd prev_nl;
    for (int j = 0; j < n_steps; ++j) {
        const Eigen::VectorXd nl = detail::burgers_nonlinearity_derivative(
            basis, base.v[j] + wp_field(j), z);
        const Eigen::VectorXd ab =
            (j == 0) ? nl : Eigen::VectorXd(1.5 * nl - 0.5 * prev_nl);
        z = (cn_explicit * z.array() + dt * cn_inverse * ab.array()).matrix();
        prev_nl = nl;
        out.emplace_back(basis, z);
    }
    return out;
}

} // namespace semiflow
