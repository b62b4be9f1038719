#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace semiflow {

inline constexpr double kPi = 3.141592653589793238462643383279502884;

/// Truncated Dirichlet eigenbasis of -nu*Laplacian on [0,1].
///
/// Modes are e_n(xi) = sqrt(2) sin(n pi xi), n = 1..N, with rates
/// mu_n = nu n^2 pi^2. Grid values live on the P interior collocation
/// points xi_j = j/(P+1). All transforms are dense sine sums; at the
/// truncation sizes used here that is faster than setting up an FFT plan.
class SpectralBasis {
public:
    SpectralBasis(int n_modes, double viscosity, int grid_points)
        : n_modes_(n_modes), grid_points_(grid_points), viscosity_(viscosity) {
        if (n_modes < 1) throw std::invalid_argument("SpectralBasis: n_modes must be >= 1");
        if (viscosity <= 0.0) throw std::invalid_argument("SpectralBasis: viscosity must be > 0");
        if (grid_points < 2 * n_modes + 1)
            throw std::invalid_argument("SpectralBasis: grid_points must be >= 2*n_modes+1");

        eigenvalues_.resize(n_modes_);
        for (int n = 0; n < n_modes_; ++n) {
            const double k = static_cast<double>(n + 1);
            eigenvalues_[n] = viscosity_ * k * k * kPi * kPi;
        }

        const int p = grid_points_;
        sine_.resize(p, p);
        dsine_.resize(p, p);
        const double h = 1.0 / (p + 1);
        const double s2 = std::sqrt(2.0);
        for (int j = 0; j < p; ++j) {
            const double xi = (j + 1) * h;
            for (int m = 0; m < p; ++m) {
                const double freq = (m + 1) * kPi;
                sine_(j, m) = s2 * std::sin(freq * xi);
                dsine_(j, m) = s2 * freq * std::cos(freq * xi);
            }
        }
    }

    int n_modes() const { return n_modes_; }
    int grid_points() const { return grid_points_; }
    double viscosity() const { return viscosity_; }

    /// mu_n for mode index n in [1, N]
    double eigenvalue(int n) const { return eigenvalues_[n - 1]; }
    const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }

    double grid_point(int j) const { return (j + 1) / static_cast<double>(grid_points_ + 1); }

    Eigen::VectorXd grid() const {
        Eigen::VectorXd xi(grid_points_);
        for (int j = 0; j < grid_points_; ++j) xi[j] = grid_point(j);
        return xi;
    }

    /// Grid samples of the first `coef.size()` modes.
    Eigen::VectorXd synthesize_coef(const Eigen::VectorXd& coef) const {
        if (coef.size() > grid_points_)
            throw std::invalid_argument("synthesize: more modes than grid points");
        return sine_.leftCols(coef.size()) * coef;
    }

    /// Sine coefficients 1..m of grid samples (discrete sine quadrature).
    Eigen::VectorXd analyze_modes(const Eigen::VectorXd& grid_values, int m) const {
        if (grid_values.size() != grid_points_)
            throw std::invalid_argument("analyze: grid length " + std::to_string(grid_values.size()) +
                                        " does not match collocation size " + std::to_string(grid_points_));
        if (m > grid_points_) throw std::invalid_argument("analyze: too many modes requested");
        return sine_.leftCols(m).transpose() * grid_values / (grid_points_ + 1);
    }

    /// Grid samples of d/dxi of a sine series (cosine synthesis).
    Eigen::VectorXd synthesize_derivative(const Eigen::VectorXd& coef) const {
        if (coef.size() > grid_points_)
            throw std::invalid_argument("synthesize_derivative: more modes than grid points");
        return dsine_.leftCols(coef.size()) * coef;
    }

    /// Partial sum of sum_n mu_n^(-alpha), the finite-truncation stand-in
    /// for the trace-class hypothesis on A^(-alpha).
    double trace_partial_sum(double alpha) const {
        double s = 0.0;
        for (int n = 0; n < n_modes_; ++n) s += std::pow(eigenvalues_[n], -alpha);
        return s;
    }

private:
    int n_modes_;
    int grid_points_;
    double viscosity_;
    Eigen::VectorXd eigenvalues_;
    Eigen::MatrixXd sine_;   // (j, m): sqrt(2) sin((m+1) pi xi_j)
    Eigen::MatrixXd dsine_;  // (j, m): sqrt(2) (m+1) pi cos((m+1) pi xi_j)
};

/// A function on [0,1] stored as Dirichlet-mode coefficients.
class SpectralField {
public:
    explicit SpectralField(const SpectralBasis& basis)
        : basis_(&basis), coef_(Eigen::VectorXd::Zero(basis.n_modes())) {}

    SpectralField(const SpectralBasis& basis, Eigen::VectorXd coef)
        : basis_(&basis), coef_(std::move(coef)) {
        if (coef_.size() != basis.n_modes())
            throw std::invalid_argument("SpectralField: coefficient count does not match basis");
    }

    /// The eigenfunction e_n scaled by amp.
    static SpectralField mode(const SpectralBasis& basis, int n, double amp = 1.0) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.n_modes());
        c[n - 1] = amp;
        return {basis, std::move(c)};
    }

    const SpectralBasis& basis() const { return *basis_; }
    const Eigen::VectorXd& coefficients() const { return coef_; }
    Eigen::VectorXd& coefficients() { return coef_; }
    double coefficient(int n) const { return coef_[n - 1]; }

    double l2_norm() const { return coef_.norm(); }

    /// ( sum_n (1 + mu_n/nu)^k a_n^2 )^(1/2); k = 0 is the L2 norm.
    double sobolev_norm(int k) const {
        if (k < 0) throw std::invalid_argument("sobolev_norm: k must be >= 0");
        double s = 0.0;
        for (int n = 0; n < coef_.size(); ++n) {
            const double w = 1.0 + basis_->eigenvalues()[n] / basis_->viscosity();
            s += std::pow(w, k) * coef_[n] * coef_[n];
        }
        return std::sqrt(s);
    }

    /// sum_(n>m) a_n^2, the spectral tail used by compactness probes.
    double spectral_tail(int m) const {
        double s = 0.0;
        for (int n = m; n < coef_.size(); ++n) s += coef_[n] * coef_[n];
        return s;
    }

    SpectralField& operator+=(const SpectralField& o) { coef_ += o.coef_; return *this; }
    SpectralField& operator-=(const SpectralField& o) { coef_ -= o.coef_; return *this; }
    SpectralField& operator*=(double a) { coef_ *= a; return *this; }

    friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
    friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
    friend SpectralField operator*(double a, SpectralField x) { return x *= a; }

private:
    const SpectralBasis* basis_;
    Eigen::VectorXd coef_;
};

/// Heat semigroup: multiplies coefficient n by exp(-mu_n t).
inline SpectralField semigroup_apply(const SpectralField& x, double t) {
    if (t < 0.0) throw std::invalid_argument("semigroup_apply: negative time");
    Eigen::VectorXd c = x.coefficients();
    for (int n = 0; n < c.size(); ++n) c[n] *= std::exp(-x.basis().eigenvalues()[n] * t);
    return {x.basis(), std::move(c)};
}

inline SpectralField analyze(const SpectralBasis& basis, const Eigen::VectorXd& grid_values) {
    return {basis, basis.analyze_modes(grid_values, basis.n_modes())};
}

inline Eigen::VectorXd synthesize(const SpectralField& x) {
    return x.basis().synthesize_coef(x.coefficients());
}

/// Pointwise composition F(x)(xi) = f(x(xi)), evaluated on the collocation
/// grid and projected back onto the first N modes (dealiasing by truncation).
inline SpectralField nemytskii_apply(const std::function<double(double)>& f, const SpectralField& x) {
    Eigen::VectorXd g = synthesize(x);
    for (int j = 0; j < g.size(); ++j) {
        g[j] = f(g[j]);
        if (!std::isfinite(g[j]))
            throw std::domain_error("nemytskii_apply: non-finite value at grid point " + std::to_string(j));
    }
    return analyze(x.basis(), g);
}

inline double sobolev_norm(const SpectralField& x, int k) { return x.sobolev_norm(k); }

} // namespace semiflow
