#include <catch2/catch_amalgamated.hpp>

#include <semiflow/semilinear.hpp>

#include <cmath>
#include <vector>

using namespace semiflow;

namespace {

std::vector<Eigen::VectorXd> test_sigmas(const SpectralBasis& basis, int k_modes, double amp,
                                         std::uint64_t seed) {
    RandomStream rng(seed);
    std::vector<Eigen::VectorXd> out;
    for (int k = 0; k < k_modes; ++k) {
        Eigen::VectorXd coef = Eigen::VectorXd::Zero(basis.n_modes());
        for (int n = 0; n < std::min<int>(4, basis.n_modes()); ++n)
            coef[n] = amp * rng.normal() / (n + 1);
        out.push_back(basis.synthesize_coef(coef));
    }
    return out;
}

SpectralField random_field(const SpectralBasis& basis, std::uint64_t seed, double amp = 0.5) {
    RandomStream rng(seed);
    Eigen::VectorXd c(basis.n_modes());
    for (int i = 0; i < c.size(); ++i) c[i] = amp * rng.normal();
    return {basis, std::move(c)};
}

} // namespace

TEST_CASE("picard with F = 0 returns the linear flow applied to x") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 3);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    auto path = sample_path(2, 1e-3, 300, 5);
    EulerFlowProvider provider(basis, b, path, 300);
    SpectralField x = random_field(basis, 7);
    auto sol = picard_solve(provider, Nonlinearity::zero(), basis, x, 300);
    REQUIRE(sol.picard_iterations == 1);
    Eigen::VectorXd phi_x = x.coefficients();
    for (int j = 0; j < 300; ++j) phi_x = provider.step_matrix(j) * phi_x;
    REQUIRE((sol.trajectory[300] - phi_x).norm() == 0.0);
}

TEST_CASE("picard with B = 0 and linear f solves the diagonal equation") {
    SpectralBasis basis(4, 0.5, 9);
    MultiplierB b = MultiplierB::zero(4, 2);
    const double rate = 0.8, dt = 1e-3;
    const int steps = 1000;
    auto path = sample_path(2, dt, steps, 11);
    EulerFlowProvider provider(basis, b, path, steps);
    SpectralField x(basis, Eigen::VectorXd::Constant(4, 0.5));
    auto sol = picard_solve(provider, Nonlinearity::linear(rate), basis, x, steps, 1e-13);
    for (int n = 1; n <= 4; ++n) {
        const double expect = 0.5 * std::exp((rate - basis.eigenvalue(n)) * 1.0);
        // trapezoid quadrature: second-order in dt
        REQUIRE(sol.trajectory[steps][n - 1] == Catch::Approx(expect).margin(1e-8));
    }
}

TEST_CASE("picard output satisfies the discrete mild equation up to scheme error") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 11);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    double prev = 1e9;
    for (double dt : {4e-3, 2e-3, 1e-3}) {
        const int steps = static_cast<int>(std::lround(1.0 / dt));
        auto path = sample_path(2, dt, steps, 13);
        EulerFlowProvider provider(basis, b, path, steps);
        SpectralField x = random_field(basis, 5, 0.4);
        auto sol = picard_solve(provider, Nonlinearity::sine(), basis, x, steps, 1e-13);
        const double residual = mild_residual(sol, provider, Nonlinearity::sine(), basis);
        REQUIRE(residual < 5.0 * 0.01 * std::sqrt(dt));
        REQUIRE(residual < prev);
        prev = residual;
    }
}

TEST_CASE("picard signals non-contraction when the tolerance is unreachable") {
    SpectralBasis basis(4, 0.5, 9);
    MultiplierB b = MultiplierB::zero(4, 2);
    auto path = sample_path(2, 1e-2, 100, 17);
    EulerFlowProvider provider(basis, b, path, 100);
    SpectralField x = random_field(basis, 19);
    REQUIRE_THROWS_AS(
        picard_solve(provider, Nonlinearity::sine(), basis, x, 100, 1e-22, 5),
        PicardNonContraction);
}

TEST_CASE("growth bound check accepts sine and rejects exp") {
    REQUIRE(Nonlinearity::sine().check_growth(-50.0, 50.0, 1000));
    Nonlinearity bad{[](double s) { return std::exp(s); }, [](double s) { return std::exp(s); },
                     nullptr, 1.0};
    REQUIRE_FALSE(bad.check_growth(-5.0, 5.0, 100));
}

TEST_CASE("frechet flow with F = 0 is the linear flow") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 23);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    auto path = sample_path(2, 1e-3, 200, 29);
    EulerFlowProvider provider(basis, b, path, 200);
    SpectralField x = random_field(basis, 31);
    SpectralField y = random_field(basis, 37, 1.0);
    auto sol = picard_solve(provider, Nonlinearity::zero(), basis, x, 200);
    auto du = frechet_flow(sol, Nonlinearity::zero(), provider, basis, y);
    Eigen::VectorXd phi_y = y.coefficients();
    for (int j = 0; j < 200; ++j) phi_y = provider.step_matrix(j) * phi_y;
    REQUIRE((du[200].coefficients() - phi_y).norm() < 1e-14);
}

TEST_CASE("frechet flow for linear f is diagonal and independent of x") {
    SpectralBasis basis(4, 0.5, 9);
    MultiplierB b = MultiplierB::zero(4, 2);
    const double rate = 0.6, dt = 1e-3;
    const int steps = 500;
    auto path = sample_path(2, dt, steps, 41);
    EulerFlowProvider provider(basis, b, path, steps);
    for (std::uint64_t xseed : {43u, 47u}) {
        SpectralField x = random_field(basis, xseed);
        auto sol = picard_solve(provider, Nonlinearity::linear(rate), basis, x, steps, 1e-13);
        auto jac = frechet_flow_matrix(sol, Nonlinearity::linear(rate), provider, basis,
                                       Eigen::MatrixXd::Identity(4, 4));
        for (int n = 1; n <= 4; ++n) {
            const double expect = std::exp((rate - basis.eigenvalue(n)) * steps * dt);
            REQUIRE(jac[steps](n - 1, n - 1) == Catch::Approx(expect).margin(1e-8));
        }
        REQUIRE((jac[steps] - Eigen::MatrixXd(jac[steps].diagonal().asDiagonal())).norm() < 1e-10);
    }
}

TEST_CASE("finite differences confirm the frechet derivative with O(h) remainder") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 11);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    const double dt = 1e-3;
    const int steps = 500;
    auto path = sample_path(2, dt, steps, 17);
    EulerFlowProvider provider(basis, b, path, steps);
    SpectralField x = random_field(basis, 9, 0.4);
    SpectralField y = random_field(basis, 10, 1.0);
    auto sol = picard_solve(provider, Nonlinearity::sine(), basis, x, steps, 1e-14);
    auto du = frechet_flow(sol, Nonlinearity::sine(), provider, basis, y);
    std::vector<double> remainders;
    for (double h : {1e-3, 1e-4}) {
        SpectralField xp(basis, x.coefficients() + h * y.coefficients());
        auto solp = picard_solve(provider, Nonlinearity::sine(), basis, xp, steps, 1e-14);
        const Eigen::VectorXd fd = (solp.trajectory[steps] - sol.trajectory[steps]) / h;
        remainders.push_back((fd - du[steps].coefficients()).norm());
    }
    // remainder is O(h): one decade in h gives one decade in the remainder
    const double ratio = remainders[0] / remainders[1];
    REQUIRE(ratio > 5.0);
    REQUIRE(ratio < 20.0);
    REQUIRE(remainders[0] < 1e-5);
}

TEST_CASE("directional second derivative matches second-order finite differences") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.4, 53);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    const double dt = 2e-3;
    const int steps = 250;
    auto path = sample_path(2, dt, steps, 59);
    EulerFlowProvider provider(basis, b, path, steps);
    SpectralField x = random_field(basis, 61, 0.4);
    SpectralField y = random_field(basis, 67, 1.0);
    auto sol = picard_solve(provider, Nonlinearity::sine(), basis, x, steps, 1e-14);
    auto d2 = second_derivative_flow(sol, Nonlinearity::sine(), provider, basis, y, y);
    const double h = 1e-3;
    SpectralField xp(basis, x.coefficients() + h * y.coefficients());
    SpectralField xm(basis, x.coefficients() - h * y.coefficients());
    auto solp = picard_solve(provider, Nonlinearity::sine(), basis, xp, steps, 1e-14);
    auto solm = picard_solve(provider, Nonlinearity::sine(), basis, xm, steps, 1e-14);
    const Eigen::VectorXd fd2 =
        (solp.trajectory[steps] - 2.0 * sol.trajectory[steps] + solm.trajectory[steps]) / (h * h);
    REQUIRE((fd2 - d2[steps].coefficients()).norm() < 1e-4 * (1.0 + fd2.norm()));
}

TEST_CASE("semilinear cocycle defect vanishes at t2 = 0") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 71);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    auto path = sample_path(2, 1e-3, 200, 73);
    EulerFlowProvider provider(basis, b, path, 200);
    SpectralField x = random_field(basis, 79);
    REQUIRE(cocycle_defect(provider, Nonlinearity::sine(), basis, x, 200, 0) == 0.0);
}

TEST_CASE("semilinear cocycle defect reduces to the linear defect for F = 0") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 83);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    auto path = sample_path(2, 1e-3, 400, 89);
    EulerFlowProvider provider(basis, b, path, 400);
    SpectralField x = random_field(basis, 97);
    const double defect = cocycle_defect(provider, Nonlinearity::zero(), basis, x, 200, 200);
    REQUIRE(defect < 1e-12);
}

TEST_CASE("semilinear cocycle identity holds to floating-point exactness at every dt") {
    // the trapezoid fixed point over an exactly-composing one-step kernel
    // composes exactly; the defect is Picard tolerance plus rounding,
    // uniformly in dt
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 11);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    SpectralField x = random_field(basis, 5, 0.4);
    for (double dt : {4e-3, 2e-3, 1e-3}) {
        const int steps = static_cast<int>(std::lround(1.0 / dt));
        auto path = sample_path(2, dt, steps, 13);
        EulerFlowProvider provider(basis, b, path, steps);
        const double defect =
            cocycle_defect(provider, Nonlinearity::sine(), basis, x, steps / 2, steps / 2, 1e-13);
        REQUIRE(defect < 1e-12);
    }
}

TEST_CASE("compactness probe of the semigroup gives exact exponentials") {
    SpectralBasis basis(6, 0.5, 13);
    Eigen::MatrixXd t_half =
        ((-0.5 * basis.eigenvalues().array()).exp()).matrix().asDiagonal();
    FlowOperator flow{t_half, 0.5, "semigroup"};
    auto probe = compactness_probe(flow, 3);
    for (int n = 1; n <= 3; ++n)
        REQUIRE(probe.singular_values[n - 1] ==
                Catch::Approx(std::exp(-basis.eigenvalue(n) * 0.5)).epsilon(1e-13));
    double tail = 0.0;
    for (int n = 4; n <= 6; ++n) tail += std::exp(-basis.eigenvalue(n));
    REQUIRE(probe.hs_tail == Catch::Approx(tail).epsilon(1e-12));
}

TEST_CASE("compactness probe at t = 0 sees the identity") {
    FlowOperator id{Eigen::MatrixXd::Identity(5, 5), 0.0, "identity"};
    auto probe = compactness_probe(id, 5);
    for (int i = 0; i < 5; ++i) REQUIRE(probe.singular_values[i] == Catch::Approx(1.0));
    REQUIRE(probe.hs_tail == 0.0);
}

TEST_CASE("jacobian HS norm is Cauchy under refinement of the truncation") {
    const double dt = 2e-3;
    const int steps = 125;  // t = 0.25
    std::vector<double> hs;
    for (int n_modes : {8, 16, 32}) {
        SpectralBasis basis(n_modes, 0.5, 2 * n_modes + 1);
        auto sig = test_sigmas(basis, 2, 0.5, 101);
        MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
        auto path = sample_path(2, dt, steps, 103);
        EulerFlowProvider provider(basis, b, path, steps);
        // the same fixed smooth function at every truncation size
        RandomStream xr(107);
        Eigen::VectorXd xc = Eigen::VectorXd::Zero(n_modes);
        for (int n = 0; n < 4; ++n) xc[n] = 0.3 * xr.normal();
        SpectralField x(basis, xc);
        auto sol = picard_solve(provider, Nonlinearity::sine(), basis, x, steps, 1e-12);
        auto jac = frechet_flow_matrix(sol, Nonlinearity::sine(), provider, basis,
                                       Eigen::MatrixXd::Identity(n_modes, n_modes));
        hs.push_back(jac[steps].norm());
    }
    REQUIRE(std::abs(hs[2] - hs[1]) < std::abs(hs[1] - hs[0]) + 1e-9);
    REQUIRE(std::abs(hs[2] - hs[1]) < 1e-3 * hs[2]);
}

TEST_CASE("log-plus growth moment is finite and stable under sample doubling") {
    SpectralBasis basis(4, 0.5, 9);
    auto sig = test_sigmas(basis, 2, 0.5, 109);
    MultiplierB b = MultiplierB::from_sigma_fields(basis, sig);
    const double dt = 2e-3;
    const int steps = 250, shift_steps = 100;
    SpectralField x = random_field(basis, 113, 0.5);
    auto sample_mean = [&](int n_paths) {
        double acc = 0.0;
        for (int i = 0; i < n_paths; ++i) {
            auto path = sample_path(2, dt, steps + shift_steps, 7000 + i);
            auto shifted = path.shift(shift_steps);
            EulerFlowProvider provider(basis, b, shifted, steps);
            auto sol = picard_solve(provider, Nonlinearity::sine(), basis, x, steps, 1e-10);
            double sup = 0.0;
            for (const auto& u : sol.trajectory) sup = std::max(sup, u.norm());
            acc += std::max(0.0, std::log(sup / (1.0 + x.l2_norm())));
        }
        return acc / n_paths;
    };
    const double m100 = sample_mean(100);
    const double m200 = sample_mean(200);
    REQUIRE(std::isfinite(m200));
    REQUIRE(std::abs(m200 - m100) < 0.2 * (1.0 + std::abs(m200)));
}
