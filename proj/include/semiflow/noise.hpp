#pragma once

#include <Eigen/Dense>

#include <semiflow/rng.hpp>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace semiflow {

/// K independent scalar Brownian paths on a uniform time grid.
///
/// Increments are stored in a shared buffer; shifting produces a view with
/// a moved origin, never a mutation. Path values W^k(j dt) are cumulative
/// sums accumulated from the current origin, so a shifted path's values are
/// bit-identical to a fresh left-to-right sum over the same increments.
/// An optional presampled segment before time zero serves the smoothed
/// path's lookback window.
class BrownianGridPath {
public:
    static BrownianGridPath sample(int k_paths, double dt, int steps, std::uint64_t seed,
                                   int steps_before = 0) {
        if (k_paths < 1) throw std::invalid_argument("sample_path: k_paths must be >= 1");
        if (steps < 1) throw std::invalid_argument("sample_path: steps must be >= 1");
        if (dt <= 0.0) throw std::invalid_argument("sample_path: dt must be > 0");
        if (steps_before < 0) throw std::invalid_argument("sample_path: steps_before must be >= 0");
        const int total = steps_before + steps;
        auto incr = std::make_shared<Eigen::MatrixXd>(k_paths, total);
        const double scale = std::sqrt(dt);
        for (int k = 0; k < k_paths; ++k) {
            RandomStream stream(seed, static_cast<std::uint64_t>(k));
            for (int j = 0; j < total; ++j) (*incr)(k, j) = scale * stream.normal();
        }
        return BrownianGridPath(std::move(incr), dt, steps_before, seed);
    }

    static BrownianGridPath from_increments(Eigen::MatrixXd increments, double dt,
                                            int steps_before = 0, std::uint64_t seed = 0) {
        if (dt <= 0.0) throw std::invalid_argument("from_increments: dt must be > 0");
        if (steps_before < 0 || steps_before >= increments.cols())
            throw std::invalid_argument("from_increments: bad origin");
        auto incr = std::make_shared<Eigen::MatrixXd>(std::move(increments));
        return BrownianGridPath(std::move(incr), dt, steps_before, seed);
    }

    static BrownianGridPath zero(int k_paths, double dt, int steps, int steps_before = 0) {
        auto incr = std::make_shared<Eigen::MatrixXd>(
            Eigen::MatrixXd::Zero(k_paths, steps_before + steps));
        return BrownianGridPath(std::move(incr), dt, steps_before, 0);
    }

    int k_paths() const { return static_cast<int>(increments_->rows()); }
    double dt() const { return dt_; }
    /// grid steps available after time zero
    int steps() const { return static_cast<int>(increments_->cols()) - origin_; }
    /// grid steps available before time zero
    int steps_behind() const { return origin_; }
    std::uint64_t seed() const { return seed_; }
    int origin_offset() const { return origin_; }

    /// increment over [j dt, (j+1) dt); j may be negative down to -steps_behind()
    double increment(int k, int j) const { return (*increments_)(k, origin_ + j); }

    /// W^k(j dt); exact 0 at j = 0
    double value(int k, int j) const { return prefix_(k, origin_ + j); }

    /// Wiener shift by m grid steps: W_new(t) = W(t + m dt) - W(m dt).
    BrownianGridPath shift(int m) const {
        if (m < 0 || m > steps())
            throw std::out_of_range("shift: amount " + std::to_string(m) + " outside stored horizon");
        return BrownianGridPath(increments_, dt_, origin_ + m, seed_);
    }

    /// The same Brownian path on a grid coarsened by an integer factor:
    /// consecutive increments are aggregated. Used by dt-refinement studies
    /// so that all resolutions share one realization.
    BrownianGridPath coarsen(int factor) const {
        if (factor < 1) throw std::invalid_argument("coarsen: factor must be >= 1");
        if (origin_ % factor != 0 || (increments_->cols() - origin_) % factor != 0)
            throw std::invalid_argument("coarsen: factor does not divide the stored segments");
        const int total = static_cast<int>(increments_->cols()) / factor;
        Eigen::MatrixXd agg = Eigen::MatrixXd::Zero(increments_->rows(), total);
        for (int k = 0; k < increments_->rows(); ++k)
            for (int j = 0; j < total; ++j)
                for (int i = 0; i < factor; ++i) agg(k, j) += (*increments_)(k, j * factor + i);
        return BrownianGridPath(std::make_shared<Eigen::MatrixXd>(std::move(agg)), dt_ * factor,
                                origin_ / factor, seed_);
    }

private:
    BrownianGridPath(std::shared_ptr<const Eigen::MatrixXd> incr, double dt, int origin,
                     std::uint64_t seed)
        : increments_(std::move(incr)), dt_(dt), origin_(origin), seed_(seed) {
        const int k = static_cast<int>(increments_->rows());
        const int total = static_cast<int>(increments_->cols());
        prefix_.resize(k, total + 1);
        for (int r = 0; r < k; ++r) {
            prefix_(r, origin_) = 0.0;
            for (int j = origin_; j < total; ++j)
                prefix_(r, j + 1) = prefix_(r, j) + (*increments_)(r, j);
            for (int j = origin_ - 1; j >= 0; --j)
                prefix_(r, j) = prefix_(r, j + 1) - (*increments_)(r, j);
        }
    }

    std::shared_ptr<const Eigen::MatrixXd> increments_;  // k x total, shared across shifts
    Eigen::MatrixXd prefix_;  // per-view cumulative sums anchored at this origin
    double dt_;
    int origin_;
    std::uint64_t seed_;
};

inline BrownianGridPath sample_path(int k_paths, double dt, int steps, std::uint64_t seed,
                                    int steps_before = 0) {
    return BrownianGridPath::sample(k_paths, dt, steps, seed, steps_before);
}

/// Smoothing window of the mollified path: 1/n must be an integer number
/// of grid steps.
inline int smoothing_window(const BrownianGridPath& path, int n) {
    if (n < 1) throw std::invalid_argument("smooth_approx: n must be >= 1");
    const double r_real = 1.0 / (n * path.dt());
    const int r = static_cast<int>(std::lround(r_real));
    if (r < 1 || std::abs(r_real - r) > 1e-9 * r_real)
        throw std::invalid_argument("smooth_approx: 1/n is not an integer multiple of dt");
    return r;
}

struct SmoothedSample {
    Eigen::VectorXd value;       // W_n(t) per noise component
    Eigen::VectorXd derivative;  // W_n'(t) = n (W(t) - W(t - 1/n))
};

/// Boxcar-mollified path W_n(t) = n Int_{t-1/n}^{t} W du - n Int_{-1/n}^{0} W du
/// evaluated at grid index j, with its derivative. Requires the presampled
/// negative-time segment to cover the lookback window.
inline SmoothedSample smooth_approx(const BrownianGridPath& path, int n, int j) {
    const int r = smoothing_window(path, n);
    if (j < 0 || j > path.steps())
        throw std::out_of_range("smooth_approx: time index outside horizon");
    if (j - r < -path.steps_behind())
        throw std::invalid_argument("smooth_approx: presampled history too short for window");
    const int k_paths = path.k_paths();
    SmoothedSample out;
    out.value.resize(k_paths);
    out.derivative.resize(k_paths);
    for (int k = 0; k < k_paths; ++k) {
        double avg = 0.0, avg0 = 0.0;
        for (int i = j - r + 1; i <= j; ++i) avg += path.value(k, i);
        for (int i = -r + 1; i <= 0; ++i) avg0 += path.value(k, i);
        out.value[k] = (avg - avg0) / r;
        out.derivative[k] = n * (path.value(k, j) - path.value(k, j - r));
    }
    return out;
}

struct QOverflowError : std::runtime_error {
    QOverflowError(int time_index_, int grid_index_)
        : std::runtime_error("Q field overflow at time index " + std::to_string(time_index_) +
                             ", grid index " + std::to_string(grid_index_)),
          time_index(time_index_), grid_index(grid_index_) {}
    int time_index;
    int grid_index;
};

/// Q(t_j, xi_l) = exp( sum_i sigma_i(xi_l) W_i(t_j) - 1/2 sum_i sigma_i(xi_l)^2 t_j )
inline Eigen::VectorXd q_evaluate(const BrownianGridPath& path,
                                  const std::vector<Eigen::VectorXd>& sigmas, int j) {
    if (sigmas.size() != static_cast<std::size_t>(path.k_paths()))
        throw std::invalid_argument("q_evaluate: sigma count does not match noise dimension");
    const int p = static_cast<int>(sigmas.front().size());
    const double t = j * path.dt();
    Eigen::VectorXd q(p);
    for (int l = 0; l < p; ++l) {
        double arg = 0.0;
        for (int k = 0; k < path.k_paths(); ++k) {
            const double s = sigmas[k][l];
            arg += s * path.value(k, j) - 0.5 * s * s * t;
        }
        // |arg| > 700 overflows either Q or the stored inverse
        if (std::abs(arg) > 700.0) throw QOverflowError(j, l);
        q[l] = std::exp(arg);
    }
    return q;
}

/// Pointwise values of the multiplicative exponential field Q and its
/// inverse on the time x collocation grid, for one path realization.
class QFieldSample {
public:
    QFieldSample(const BrownianGridPath& path, std::vector<Eigen::VectorXd> sigmas, int n_times)
        : sigmas_(std::move(sigmas)) {
        const int p = static_cast<int>(sigmas_.front().size());
        q_.resize(n_times + 1, p);
        q_inv_.resize(n_times + 1, p);
        for (int j = 0; j <= n_times; ++j) {
            q_.row(j) = q_evaluate(path, sigmas_, j).transpose();
            q_inv_.row(j) = q_.row(j).cwiseInverse();
        }
        sigma_sq_sum_ = Eigen::VectorXd::Zero(p);
        for (const auto& s : sigmas_) sigma_sq_sum_ += s.cwiseProduct(s);
    }

    int n_times() const { return static_cast<int>(q_.rows()) - 1; }
    int grid_points() const { return static_cast<int>(q_.cols()); }
    double q(int j, int l) const { return q_(j, l); }
    double q_inv(int j, int l) const { return q_inv_(j, l); }
    Eigen::VectorXd q_row(int j) const { return q_.row(j).transpose(); }
    Eigen::VectorXd q_inv_row(int j) const { return q_inv_.row(j).transpose(); }

    const std::vector<Eigen::VectorXd>& sigmas() const { return sigmas_; }
    /// sum_i sigma_i(xi)^2 per grid point
    const Eigen::VectorXd& sigma_sq_sum() const { return sigma_sq_sum_; }
    /// quadrature partial sum of sum_i ||sigma_i||_L2^2 (reported, not enforced)
    double sigma_l2_partial_sum() const {
        return sigma_sq_sum_.sum() / (sigma_sq_sum_.size() + 1);
    }

    double min_q() const { return q_.minCoeff(); }
    double max_q() const { return q_.maxCoeff(); }

private:
    std::vector<Eigen::VectorXd> sigmas_;
    Eigen::MatrixXd q_;
    Eigen::MatrixXd q_inv_;
    Eigen::VectorXd sigma_sq_sum_;
};

/// Mode states of the stochastic convolution Int_0^t T_{t-s} dW(s):
/// independent OU processes dz_k = -alpha_k z_k dt + sqrt(lambda_k) dW^k.
struct OUConvolutionState {
    Eigen::VectorXd z;
    Eigen::VectorXd alpha;
    Eigen::VectorXd lambda;

    OUConvolutionState(Eigen::VectorXd alpha_, Eigen::VectorXd lambda_)
        : z(Eigen::VectorXd::Zero(alpha_.size())), alpha(std::move(alpha_)), lambda(std::move(lambda_)) {
        if ((alpha.array() <= 0.0).any())
            throw std::invalid_argument("OUConvolutionState: alpha_k must be positive");
        if ((lambda.array() < 0.0).any())
            throw std::invalid_argument("OUConvolutionState: lambda_k must be nonnegative");
    }

    /// partial sum of condition sum_k lambda_k / alpha_k (reported)
    double lambda_alpha_partial_sum() const { return (lambda.array() / alpha.array()).sum(); }
};

/// Exact OU transition driven by the standardized grid increment
/// eta_k = dW^k / sqrt(dt). Exact in distribution per mode; reusing the
/// path increments keeps the convolution a function of the path, so
/// shift-compatibility identities hold pathwise.
inline OUConvolutionState ou_step(const OUConvolutionState& state, double dt,
                                  const Eigen::VectorXd& increments) {
    if (dt <= 0.0) throw std::invalid_argument("ou_step: dt must be > 0");
    if (increments.size() != state.z.size())
        throw std::invalid_argument("ou_step: increment count mismatch");
    OUConvolutionState next = state;
    const double sqrt_dt = std::sqrt(dt);
    for (int k = 0; k < state.z.size(); ++k) {
        const double a = state.alpha[k];
        const double decay = std::exp(-a * dt);
        const double gain = std::sqrt(state.lambda[k] * (1.0 - decay * decay) / (2.0 * a));
        next.z[k] = decay * state.z[k] + gain * (increments[k] / sqrt_dt);
    }
    return next;
}

} // namespace semiflow
