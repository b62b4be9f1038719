#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <semiflow/noise.hpp>
#include <semiflow/spectral.hpp>

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semiflow {

/// Noise multiplier B of the linear equation du = -Au dt + Bu dW:
/// one N x N matrix per noise component. In the multiplication-operator
/// case B_k acts as pointwise multiplication by sigma_k between transforms.
class MultiplierB {
public:
    static MultiplierB from_matrices(std::vector<Eigen::MatrixXd> mats) {
        if (mats.empty()) throw std::invalid_argument("MultiplierB: need at least one component");
        return MultiplierB(std::move(mats));
    }

    static MultiplierB from_sigma_fields(const SpectralBasis& basis,
                                         const std::vector<Eigen::VectorXd>& sigma_grid) {
        const int n = basis.n_modes();
        std::vector<Eigen::MatrixXd> mats;
        mats.reserve(sigma_grid.size());
        for (const auto& sigma : sigma_grid) {
            if (sigma.size() != basis.grid_points())
                throw std::invalid_argument("MultiplierB: sigma grid size mismatch");
            Eigen::MatrixXd b(n, n);
            for (int col = 1; col <= n; ++col) {
                Eigen::VectorXd mode = basis.synthesize_coef(
                    SpectralField::mode(basis, col).coefficients());
                b.col(col - 1) = basis.analyze_modes(mode.cwiseProduct(sigma), n);
            }
            mats.push_back(std::move(b));
        }
        return MultiplierB(std::move(mats));
    }

    static MultiplierB zero(int dim, int k_modes) {
        return MultiplierB(std::vector<Eigen::MatrixXd>(k_modes, Eigen::MatrixXd::Zero(dim, dim)));
    }

    int k_modes() const { return static_cast<int>(mats_.size()); }
    int dim() const { return static_cast<int>(mats_.front().rows()); }
    const Eigen::MatrixXd& matrix(int k) const { return mats_[k]; }
    /// sum_k B_k^2, the Stratonovich-to-Ito correction
    const Eigen::MatrixXd& squared_sum() const { return squared_sum_; }

    /// partial sum of sum_k ||B_k^2||_op
    double condition_b_partial_sum() const {
        double s = 0.0;
        for (const auto& b : mats_)
            s += Eigen::JacobiSVD<Eigen::MatrixXd>(b * b).singularValues()(0);
        return s;
    }

    /// partial sum of sum_n mu_n^{-1} ||B(e_n)||^2
    double mu_weighted_hs_sum(const Eigen::VectorXd& eigenvalues) const {
        double s = 0.0;
        for (int n = 0; n < dim(); ++n) {
            double col = 0.0;
            for (const auto& b : mats_) col += b.col(n).squaredNorm();
            s += col / eigenvalues[n];
        }
        return s;
    }

private:
    explicit MultiplierB(std::vector<Eigen::MatrixXd> mats) : mats_(std::move(mats)) {
        squared_sum_ = Eigen::MatrixXd::Zero(dim(), dim());
        for (const auto& b : mats_) squared_sum_ += b * b;
    }

    std::vector<Eigen::MatrixXd> mats_;
    Eigen::MatrixXd squared_sum_;
};

/// Dense flow matrix over the truncated basis at one time.
struct FlowOperator {
    Eigen::MatrixXd matrix;
    double time = 0.0;
    std::string scheme;

    double hs_norm() const { return matrix.norm(); }
};

inline double hs_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).norm();
}

namespace detail {

inline Eigen::VectorXd semigroup_diag(const SpectralBasis& basis, double t) {
    return (-t * basis.eigenvalues().array()).exp().matrix();
}

} // namespace detail

/// One-step propagator factorization of a linear flow: the flow over
/// [0, t_j] is the ordered product of per-step matrices. Both the mild
/// Euler scheme and the smoothed-noise scheme fit this form, which is what
/// the variational solver for the semilinear equation builds on.
class LinearFlowProvider {
public:
    virtual ~LinearFlowProvider() = default;
    virtual int dim() const = 0;
    virtual int steps() const = 0;
    virtual double dt() const = 0;
    virtual const Eigen::MatrixXd& step_matrix(int j) const = 0;
    virtual std::unique_ptr<LinearFlowProvider> shifted(int m) const = 0;

    /// flow matrix at grid index j (cached cumulative product)
    const Eigen::MatrixXd& flow(int j) const {
        if (flows_.empty()) {
            flows_.reserve(steps() + 1);
            flows_.push_back(Eigen::MatrixXd::Identity(dim(), dim()));
        }
        while (static_cast<int>(flows_.size()) <= j)
            flows_.push_back(step_matrix(static_cast<int>(flows_.size()) - 1) * flows_.back());
        return flows_[j];
    }

private:
    mutable std::vector<Eigen::MatrixXd> flows_;
};

/// Mild Euler scheme for v(t) = T_t + Int_0^t T_{t-s} B v(s) dW(s):
/// v_{j+1} = T_dt (v_j + sum_k B_k v_j dW^k_j).
class EulerFlowProvider : public LinearFlowProvider {
public:
    EulerFlowProvider(const SpectralBasis& basis, const MultiplierB& b,
                      const BrownianGridPath& path, int n_steps)
        : basis_(&basis), b_(&b), path_(path), n_steps_(n_steps) {
        if (n_steps > path.steps())
            throw std::invalid_argument("EulerFlowProvider: horizon exceeds path");
        const Eigen::VectorXd t_dt = detail::semigroup_diag(basis, path.dt());
        const int n = b.dim();
        steps_.reserve(n_steps);
        for (int j = 0; j < n_steps; ++j) {
            Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
            for (int k = 0; k < b.k_modes(); ++k) m += path.increment(k, j) * b.matrix(k);
            m.array().colwise() *= t_dt.array();
            steps_.push_back(std::move(m));
        }
    }

    int dim() const override { return b_->dim(); }
    int steps() const override { return n_steps_; }
    double dt() const override { return path_.dt(); }
    const Eigen::MatrixXd& step_matrix(int j) const override { return steps_[j]; }

    std::unique_ptr<LinearFlowProvider> shifted(int m) const override {
        return std::make_unique<EulerFlowProvider>(*basis_, *b_, path_.shift(m), n_steps_ - m);
    }

private:
    const SpectralBasis* basis_;
    const MultiplierB* b_;
    BrownianGridPath path_;
    int n_steps_;
    std::vector<Eigen::MatrixXd> steps_;
};

/// Flow sequence of the discretized fundamental-solution equation
/// (mild Euler), v(0) = I. The accumulated matrix is advanced through the
/// recursion itself, so substituting the output back into the recursion
/// gives a bitwise-zero residual.
inline std::vector<FlowOperator> fundamental_solve(const SpectralBasis& basis, const MultiplierB& b,
                                                   const BrownianGridPath& path, int n_steps) {
    if (n_steps > path.steps())
        throw std::invalid_argument("fundamental_solve: horizon exceeds path");
    const Eigen::VectorXd t_dt = detail::semigroup_diag(basis, path.dt());
    const int n = b.dim();
    std::vector<FlowOperator> out;
    out.reserve(n_steps + 1);
    out.push_back({Eigen::MatrixXd::Identity(n, n), 0.0, "euler"});
    for (int j = 0; j < n_steps; ++j) {
        Eigen::MatrixXd next = out.back().matrix;
        for (int k = 0; k < b.k_modes(); ++k)
            next += path.increment(k, j) * (b.matrix(k) * out.back().matrix);
        next.array().colwise() *= t_dt.array();
        out.push_back({std::move(next), (j + 1) * path.dt(), "euler"});
    }
    return out;
}

/// Affine flow u(t)x = M(t) x + m(t) for noise B(x) = B0 + B1 x, carrying
/// the offset vector alongside the matrix.
struct AffineFlow {
    Eigen::MatrixXd linear;
    Eigen::VectorXd offset;

    Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return linear * x + offset; }
};

inline std::vector<AffineFlow> fundamental_solve_affine(const SpectralBasis& basis,
                                                        const MultiplierB& b1,
                                                        const std::vector<Eigen::VectorXd>& b0,
                                                        const BrownianGridPath& path, int n_steps) {
    if (b0.size() != static_cast<std::size_t>(b1.k_modes()))
        throw std::invalid_argument("fundamental_solve_affine: offset count mismatch");
    const Eigen::VectorXd t_dt = detail::semigroup_diag(basis, path.dt());
    const int n = b1.dim();
    std::vector<AffineFlow> out;
    out.reserve(n_steps + 1);
    out.push_back({Eigen::MatrixXd::Identity(n, n), Eigen::VectorXd::Zero(n)});
    for (int j = 0; j < n_steps; ++j) {
        Eigen::MatrixXd m = out.back().linear;
        Eigen::VectorXd v = out.back().offset;
        Eigen::MatrixXd dm = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd dv = Eigen::VectorXd::Zero(n);
        for (int k = 0; k < b1.k_modes(); ++k) {
            const double dw = path.increment(k, j);
            dm += dw * (b1.matrix(k) * m);
            dv += dw * (b1.matrix(k) * v + b0[k]);
        }
        m += dm;
        v += dv;
        m.array().colwise() *= t_dt.array();
        v.array() *= t_dt.array();
        out.push_back({std::move(m), std::move(v)});
    }
    return out;
}

/// Iterated-integral expansion of the linear flow. Level n >= 1 holds the
/// left-point Ito sum
///   Phi^n(t_j) = sum_{m<j} T_{t_j - t_m} sum_k B_k Phi^{n-1}(t_m) dW^k_m,
/// advanced incrementally as Phi^n(t_{j+1}) = T_dt (Phi^n(t_j) + sum_k B_k
/// Phi^{n-1}(t_j) dW^k_j); level 0 is the exact semigroup.
class ChaosExpansion {
public:
    ChaosExpansion(const SpectralBasis& basis, const MultiplierB& b, const BrownianGridPath& path,
                   int n_steps, int max_order, bool store_history = true)
        : basis_(&basis), max_order_(max_order), n_steps_(n_steps), dt_(path.dt()),
          store_(store_history) {
        if (max_order < 0) throw std::invalid_argument("ChaosExpansion: max_order must be >= 0");
        if (n_steps > path.steps())
            throw std::invalid_argument("ChaosExpansion: horizon exceeds path");
        const int n = b.dim();
        const Eigen::VectorXd t_dt = detail::semigroup_diag(basis, dt_);

        std::vector<Eigen::MatrixXd> level(max_order + 1, Eigen::MatrixXd::Zero(n, n));
        level[0] = Eigen::MatrixXd::Identity(n, n);
        sup_hs_.assign(max_order + 1, 0.0);
        if (store_) {
            history_.resize(max_order + 1);
            for (auto& h : history_) h.reserve(n_steps + 1);
            for (int q = 0; q <= max_order; ++q) history_[q].push_back(level[q]);
        }
        final_ = level;

        std::vector<Eigen::MatrixXd> next(max_order + 1);
        for (int j = 0; j < n_steps; ++j) {
            for (int q = max_order; q >= 1; --q) {
                Eigen::MatrixXd acc = level[q];
                for (int k = 0; k < b.k_modes(); ++k)
                    acc += path.increment(k, j) * (b.matrix(k) * level[q - 1]);
                acc.array().colwise() *= t_dt.array();
                next[q] = std::move(acc);
            }
            // exact semigroup at level 0 keeps the B = 0 reduction exact
            next[0] = Eigen::MatrixXd(
                detail::semigroup_diag(basis, (j + 1) * dt_).asDiagonal());
            for (int q = 0; q <= max_order; ++q) {
                level[q] = std::move(next[q]);
                if (q >= 1) sup_hs_[q] = std::max(sup_hs_[q], level[q].norm());
                if (store_) history_[q].push_back(level[q]);
            }
        }
        final_ = std::move(level);
    }

    int max_order() const { return max_order_; }
    int steps() const { return n_steps_; }

    /// Phi^order(t_j); order 0 is T_{t_j}
    const Eigen::MatrixXd& term(int order, int j) const {
        if (order < 0 || order > max_order_) throw std::out_of_range("chaos term: order");
        if (!store_) {
            if (j != n_steps_) throw std::out_of_range("chaos term: history not stored");
            return final_[order];
        }
        if (j < 0 || j > n_steps_) throw std::out_of_range("chaos term: time index");
        return history_[order][j];
    }

    /// partial sum T_t + sum_{n<=n_max} Phi^n(t_j)
    FlowOperator flow(int j, int n_max) const {
        if (n_max > max_order_) throw std::out_of_range("chaos flow: order beyond expansion");
        Eigen::MatrixXd m = term(0, j);
        for (int q = 1; q <= n_max; ++q) m += term(q, j);
        return {std::move(m), j * dt_, "chaos"};
    }

    /// HS norm of the last included term, the truncation indicator
    double truncation_indicator(int j, int n_max) const {
        return n_max >= 1 ? term(n_max, j).norm() : 0.0;
    }

    /// running sup over the grid of ||Phi^order||_HS
    double sup_hs(int order) const { return sup_hs_[order]; }

private:
    const SpectralBasis* basis_;
    int max_order_;
    int n_steps_;
    double dt_;
    bool store_;
    std::vector<std::vector<Eigen::MatrixXd>> history_;  // [order][j]
    std::vector<Eigen::MatrixXd> final_;
    std::vector<double> sup_hs_;
};

/// Smoothed-noise flow: the random ODE
///   u' = (-A + sum_k B_k Wn'_k(s) - 1/2 sum_k B_k^2) u
/// integrated by explicit midpoint with substeps, the derivative of the
/// mollified path interpolated linearly between grid nodes.
class WongZakaiFlowProvider : public LinearFlowProvider {
public:
    WongZakaiFlowProvider(const SpectralBasis& basis, const MultiplierB& b,
                          const BrownianGridPath& path, int smoothing_n, int n_steps,
                          int substeps = 4)
        : basis_(&basis), b_(&b), path_(path), smoothing_n_(smoothing_n), n_steps_(n_steps),
          substeps_(substeps) {
        if (n_steps > path.steps())
            throw std::invalid_argument("WongZakaiFlowProvider: horizon exceeds path");
        const int n = b.dim();
        const int k_modes = b.k_modes();

        Eigen::MatrixXd deriv(k_modes, n_steps + 1);
        for (int j = 0; j <= n_steps; ++j)
            deriv.col(j) = smooth_approx(path, smoothing_n, j).derivative;

        Eigen::MatrixXd drift = -0.5 * b.squared_sum();
        drift -= Eigen::MatrixXd(basis.eigenvalues().asDiagonal());

        auto coefficient = [&](int j, double frac) {
            Eigen::MatrixXd g = drift;
            for (int k = 0; k < k_modes; ++k) {
                const double d = (1.0 - frac) * deriv(k, j) + frac * deriv(k, j + 1);
                g += d * b.matrix(k);
            }
            return g;
        };

        const double h = path.dt() / substeps;
        steps_.reserve(n_steps);
        const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n, n);
        for (int j = 0; j < n_steps; ++j) {
            Eigen::MatrixXd m = id;
            for (int l = 0; l < substeps; ++l) {
                const double f0 = static_cast<double>(l) / substeps;
                const double fm = (l + 0.5) / substeps;
                const Eigen::MatrixXd g0 = coefficient(j, f0);
                const Eigen::MatrixXd gm = coefficient(j, fm);
                m = (id + h * gm * (id + 0.5 * h * g0)) * m;
            }
            steps_.push_back(std::move(m));
        }
    }

    int dim() const override { return b_->dim(); }
    int steps() const override { return n_steps_; }
    double dt() const override { return path_.dt(); }
    const Eigen::MatrixXd& step_matrix(int j) const override { return steps_[j]; }

    std::unique_ptr<LinearFlowProvider> shifted(int m) const override {
        return std::make_unique<WongZakaiFlowProvider>(*basis_, *b_, path_.shift(m), smoothing_n_,
                                                       n_steps_ - m, substeps_);
    }

private:
    const SpectralBasis* basis_;
    const MultiplierB* b_;
    BrownianGridPath path_;
    int smoothing_n_;
    int n_steps_;
    int substeps_;
    std::vector<Eigen::MatrixXd> steps_;
};

inline std::vector<FlowOperator> wong_zakai_flow(const SpectralBasis& basis, const MultiplierB& b,
                                                 const BrownianGridPath& path, int smoothing_n,
                                                 int n_steps, int substeps = 4) {
    WongZakaiFlowProvider provider(basis, b, path, smoothing_n, n_steps, substeps);
    std::vector<FlowOperator> out;
    out.reserve(n_steps + 1);
    for (int j = 0; j <= n_steps; ++j)
        out.push_back({provider.flow(j), j * path.dt(), "wong_zakai"});
    return out;
}

/// A flow construction evaluated on a path at a grid index.
using FlowMap = std::function<Eigen::MatrixXd(const BrownianGridPath&, int)>;

inline FlowMap euler_flow_map(const SpectralBasis& basis, const MultiplierB& b) {
    return [&basis, &b](const BrownianGridPath& path, int j) {
        return fundamental_solve(basis, b, path, j).back().matrix;
    };
}

inline FlowMap chaos_flow_map(const SpectralBasis& basis, const MultiplierB& b, int n_max) {
    return [&basis, &b, n_max](const BrownianGridPath& path, int j) {
        ChaosExpansion chaos(basis, b, path, j, n_max, /*store_history=*/false);
        return chaos.flow(j, n_max).matrix;
    };
}

inline FlowMap wong_zakai_flow_map(const SpectralBasis& basis, const MultiplierB& b,
                                   int smoothing_n, int substeps = 4) {
    return [&basis, &b, smoothing_n, substeps](const BrownianGridPath& path, int j) {
        WongZakaiFlowProvider provider(basis, b, path, smoothing_n, j, substeps);
        return provider.flow(j);
    };
}

/// Relative Hilbert-Schmidt defect of the cocycle identity
/// u(t1+t2, w) = u(t2, theta(t1, w)) u(t1, w).
inline double verify_linear_cocycle(const FlowMap& flow, const BrownianGridPath& path, int j1,
                                    int j2) {
    if (j1 + j2 > path.steps())
        throw std::invalid_argument("verify_linear_cocycle: horizon exceeds path");
    const Eigen::MatrixXd direct = flow(path, j1 + j2);
    const Eigen::MatrixXd first = flow(path, j1);
    const Eigen::MatrixXd second = flow(path.shift(j1), j2);
    return (direct - second * first).norm() / direct.norm();
}

} // namespace semiflow
