#include <catch2/catch_amalgamated.hpp>

#include <semiflow/reaction_diffusion.hpp>

#include <cmath>
#include <vector>

using namespace semiflow;

namespace {

std::vector<Eigen::VectorXd> smooth_sigmas(const SpectralBasis& basis, int k_modes, double amp,
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

std::vector<Eigen::VectorXd> zero_sigmas(const SpectralBasis& basis, int k_modes) {
    return {static_cast<std::size_t>(k_modes), Eigen::VectorXd::Zero(basis.grid_points())};
}

SpectralField smooth_field(const SpectralBasis& basis, std::uint64_t seed, double amp) {
    RandomStream rng(seed);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(basis.n_modes());
    for (int n = 0; n < std::min<int>(4, basis.n_modes()); ++n)
        c[n] = amp * rng.normal() / (n + 1);
    return {basis, std::move(c)};
}

} // namespace

TEST_CASE("dissipativity presets satisfy their declared conditions") {
    REQUIRE(DissipativeNonlinearity::cubic().check_conditions(-20.0, 20.0, 4000));
    REQUIRE(DissipativeNonlinearity::contracting().check_conditions(-50.0, 50.0, 4000));
}

TEST_CASE("tilde f with Q = 1 reduces to f") {
    SpectralBasis basis(4, 0.5, 9);
    auto path = sample_path(2, 1e-2, 10, 3);
    QFieldSample q(path, zero_sigmas(basis, 2), 10);
    auto d = DissipativeNonlinearity::cubic();
    for (double s : {-2.0, 0.3, 1.7})
        REQUIRE(tilde_f(q, d, 5, 3, s) == Catch::Approx(d.f(s)).epsilon(1e-15));
}

TEST_CASE("tilde f of a linear reaction is unchanged by any Q") {
    SpectralBasis basis(4, 0.5, 9);
    auto path = sample_path(2, 1e-2, 10, 5);
    QFieldSample q(path, smooth_sigmas(basis, 2, 0.8, 7), 10);
    DissipativeNonlinearity lin{[](double s) { return 0.7 * s; }, [](double) { return 0.7; },
                                1.0, 1.0, 1.0, 0.7, 1};
    for (double s : {-1.0, 0.25, 3.0})
        REQUIRE(tilde_f(q, lin, 7, 2, s) == Catch::Approx(0.7 * s).margin(1e-14));
}

TEST_CASE("tilde f of minus s cubed at Q = 2, s = 1 equals -4") {
    // direct formula: Q^{-1} f(Q s) = (1/2) * (-(2)^3) = -4
    SpectralBasis basis(2, 0.5, 5);
    auto path = BrownianGridPath::from_increments(
        Eigen::MatrixXd::Constant(1, 2, std::log(2.0)), 1.0);
    std::vector<Eigen::VectorXd> sigma{Eigen::VectorXd::Constant(5, 1.0)};
    // at t = 1: W = log 2 + t/2... choose sigma W - sigma^2 t/2 = log 2
    // by using W(1) = log 2 + 1/2
    auto path2 = BrownianGridPath::from_increments(
        Eigen::MatrixXd::Constant(1, 2, std::log(2.0) + 0.5), 1.0);
    QFieldSample q(path2, sigma, 1);
    REQUIRE(q.q(1, 2) == Catch::Approx(2.0).epsilon(1e-14));
    DissipativeNonlinearity cube{[](double s) { return -s * s * s; },
                                 [](double s) { return -3.0 * s * s; }, 1.0, 1.0, 1.0, 0.0, 2};
    REQUIRE(tilde_f(q, cube, 1, 2, 1.0) == Catch::Approx(-4.0).epsilon(1e-13));
}

TEST_CASE("transformed constants reduce to the originals when sigma = 0") {
    SpectralBasis basis(4, 0.5, 9);
    auto path = sample_path(2, 1e-2, 20, 9);
    QFieldSample q(path, zero_sigmas(basis, 2), 20);
    auto d = DissipativeNonlinearity::cubic();
    auto c = transformed_constants(q, d, 20);
    REQUIRE(c.c1t == Catch::Approx(d.c1).epsilon(1e-15));
    REQUIRE(c.c2t == Catch::Approx(d.c2).epsilon(1e-15));
    REQUIRE(c.c3t == Catch::Approx(d.c3).epsilon(1e-15));
}

TEST_CASE("for p = 1 the power terms are unaffected by Q") {
    SpectralBasis basis(4, 0.5, 9);
    auto path = sample_path(2, 1e-2, 20, 11);
    QFieldSample q(path, smooth_sigmas(basis, 2, 0.5, 13), 20);
    auto d = DissipativeNonlinearity::contracting();  // p = 1
    auto c = transformed_constants(q, d, 20);
    REQUIRE(c.c1t == Catch::Approx(d.c1).epsilon(1e-15));
    REQUIRE(c.c3t == Catch::Approx(d.c3).epsilon(1e-15));
}

TEST_CASE("transformed inequality holds at ten thousand random triples") {
    SpectralBasis basis(8, 0.5, 17);
    auto path = sample_path(3, 1e-3, 500, 17);
    QFieldSample q(path, smooth_sigmas(basis, 3, 0.4, 19), 500);
    auto d = DissipativeNonlinearity::cubic();
    auto c = transformed_constants(q, d, 500);
    RandomStream rng(21);
    REQUIRE(transformed_inequality_violations(q, d, c, 500, 10000, rng) == 0);
}

TEST_CASE("with zero noise and zero reaction the solve is exact heat decay") {
    SpectralBasis basis(16, 0.5, 64);
    auto path = sample_path(4, 1e-3, 1000, 23);
    SpectralField psi = smooth_field(basis, 25, 1.0);
    auto sol = rd_solve(basis, path, zero_sigmas(basis, 4), [](double) { return 0.0; }, psi, 1000);
    for (int n = 1; n <= 16; ++n) {
        const double expect = psi.coefficient(n) * std::exp(-basis.eigenvalue(n));
        REQUIRE(sol.v[1000][n - 1] == Catch::Approx(expect).margin(1e-14));
    }
}

TEST_CASE("zero initial data with an odd dissipative reaction stays at zero") {
    SpectralBasis basis(16, 0.5, 64);
    auto path = sample_path(4, 1e-3, 100, 29);
    SpectralField zero(basis);
    auto sol = rd_solve(basis, path, zero_sigmas(basis, 4),
                        [](double s) { return -s * s * s; }, zero, 100);
    REQUIRE(sol.v[100].norm() == 0.0);
}

TEST_CASE("with linear reaction the solution separation follows the diagonal oracle") {
    SpectralBasis basis(16, 0.5, 64);
    const double rate = 1.0, dt = 1e-3;
    const int steps = 1000;
    auto path = sample_path(4, dt, steps, 31);
    auto sig = zero_sigmas(basis, 4);
    SpectralField p1 = smooth_field(basis, 33, 0.6);
    SpectralField p2 = smooth_field(basis, 35, 0.6);
    auto s1 = rd_solve(basis, path, sig, [&](double s) { return rate * s; }, p1, steps);
    auto s2 = rd_solve(basis, path, sig, [&](double s) { return rate * s; }, p2, steps);
    double expect_sq = 0.0;
    for (int n = 1; n <= 16; ++n) {
        const double d0 = p1.coefficient(n) - p2.coefficient(n);
        const double grown = d0 * std::exp((rate - basis.eigenvalue(n)) * 1.0);
        expect_sq += grown * grown;
    }
    const double got = (s1.v[steps] - s2.v[steps]).norm();
    REQUIRE(got == Catch::Approx(std::sqrt(expect_sq)).epsilon(2e-3));
    // and the growth respects the bound exponent (c4 - nu lambda_1)
    const double exponent = std::log(got / (p1 - p2).l2_norm());
    REQUIRE(exponent <= 0.5 * (rate - basis.eigenvalue(1)) + 1e-6);
}

TEST_CASE("the explicit step rejects on blow-up of the reaction term") {
    SpectralBasis basis(8, 0.5, 17);
    auto path = sample_path(2, 1e-2, 10, 37);
    SpectralField psi = SpectralField::mode(basis, 1, 40.0);
    REQUIRE_THROWS_AS(rd_solve(basis, path, zero_sigmas(basis, 2),
                               [](double s) { return -s * s * s; }, psi, 10),
                      RdStepRejection);
}

TEST_CASE("transformed-field cocycle defect vanishes at t2 = 0") {
    SpectralBasis basis(8, 0.5, 32);
    auto path = sample_path(2, 1e-3, 200, 41);
    auto sig = smooth_sigmas(basis, 2, 0.3, 43);
    SpectralField psi = smooth_field(basis, 45, 0.5);
    REQUIRE(rd_cocycle_defect(basis, path, sig, DissipativeNonlinearity::cubic().f, psi, 200, 0) ==
            0.0);
}

TEST_CASE("transformed-field cocycle defect converges at order >= 0.5 on nested paths") {
    SpectralBasis basis(16, 0.5, 64);
    auto sig = smooth_sigmas(basis, 4, 0.3, 7);
    SpectralField psi = smooth_field(basis, 13, 0.5);
    auto fine = sample_path(4, 2.5e-4, 4000, 11);
    std::vector<double> defects;
    for (int factor : {8, 4, 2}) {
        auto path = fine.coarsen(factor);
        const int steps = path.steps();
        defects.push_back(rd_cocycle_defect(basis, path, sig, DissipativeNonlinearity::cubic().f,
                                            psi, steps / 2, steps / 2));
    }
    REQUIRE(defects[1] < defects[0]);
    REQUIRE(defects[2] < defects[1]);
    const double order = std::log2(defects[0] / defects[2]) / 2.0;
    REQUIRE(order >= 0.5);
}

TEST_CASE("recovered field satisfies the weak form with residual of order sqrt dt") {
    SpectralBasis basis(16, 0.5, 64);
    auto sig = smooth_sigmas(basis, 4, 0.3, 7);
    SpectralField psi = smooth_field(basis, 13, 0.5);
    auto fine = sample_path(4, 5e-4, 2000, 17);
    double prev = 1e9;
    for (int factor : {4, 2, 1}) {
        auto path = fine.coarsen(factor);
        const int steps = path.steps();
        auto sol = rd_solve(basis, path, sig, DissipativeNonlinearity::cubic().f, psi, steps);
        const double r = weak_form_residual(basis, path, sig,
                                            DissipativeNonlinearity::cubic().f, sol, 1);
        REQUIRE(r < 1.0 * std::sqrt(path.dt()));
        REQUIRE(r < prev);
        prev = r;
    }
}

TEST_CASE("contraction exponents beat the theoretical bound for a contracting reaction") {
    SpectralBasis basis(16, 0.5, 64);
    auto sig = smooth_sigmas(basis, 4, 0.3, 7);
    auto d = DissipativeNonlinearity::contracting();
    const double dt = 1e-3;
    const int steps = 1000;
    const double bound = contraction_bound(basis, sig, d.c4);
    REQUIRE(bound < 0.0);
    const double v_bound = 0.5 * (d.c4 - basis.eigenvalue(1));
    double mean = 0.0;
    const int n_paths = 20;
    for (int i = 0; i < n_paths; ++i) {
        auto path = sample_path(4, dt, steps, 900 + i);
        SpectralField p1 = smooth_field(basis, 31 + i, 0.6);
        SpectralField p2 = smooth_field(basis, 57 + i, 0.6);
        mean += contraction_exponent(basis, path, sig, d, p1, p2, steps);
        // pathwise transformed-field bound holds on every path
        REQUIRE(v_level_exponent(basis, path, sig, d, p1, p2, steps) <= v_bound + 1e-9);
    }
    mean /= n_paths;
    REQUIRE(mean <= bound + 0.1 * std::abs(bound));
}

TEST_CASE("contraction exponent rejects identical initial conditions") {
    SpectralBasis basis(8, 0.5, 17);
    auto path = sample_path(2, 1e-2, 10, 61);
    auto sig = zero_sigmas(basis, 2);
    SpectralField psi = smooth_field(basis, 63, 0.5);
    REQUIRE_THROWS_AS(contraction_exponent(basis, path, sig,
                                           DissipativeNonlinearity::contracting(), psi, psi, 10),
                      std::invalid_argument);
}

TEST_CASE("pure heat with zero reaction contracts exactly at the first eigenvalue") {
    SpectralBasis basis(8, 0.5, 17);
    auto path = sample_path(2, 1e-3, 1000, 67);
    auto sig = zero_sigmas(basis, 2);
    DissipativeNonlinearity none{[](double) { return 0.0; }, [](double) { return 0.0; },
                                 1.0, 1.0, 1.0, 0.0, 1};
    SpectralField p1 = SpectralField::mode(basis, 1, 1.0);
    SpectralField p2(basis);
    p2.coefficients()[0] = 0.3;  // difference purely on the slowest mode
    const double expo = contraction_exponent(basis, path, sig, none, p1, p2, 1000);
    REQUIRE(expo == Catch::Approx(-basis.eigenvalue(1)).epsilon(1e-12));
}

TEST_CASE("linearized flow at psi = 0 with zero noise is the diagonal oracle") {
    SpectralBasis basis(16, 0.5, 64);
    const double dt = 1e-3;
    const int steps = 500;
    auto path = sample_path(4, dt, steps, 71);
    auto sig = zero_sigmas(basis, 4);
    SpectralField zero(basis);
    SpectralField g = smooth_field(basis, 73, 1.0);
    auto dv = rd_linearized(basis, path, sig, 1.0, zero, g, steps);
    for (int n = 1; n <= 16; ++n) {
        const double expect = g.coefficient(n) * std::exp((1.0 - basis.eigenvalue(n)) * 0.5);
        REQUIRE(dv[steps].coefficient(n) == Catch::Approx(expect).margin(2e-3 * std::abs(expect) + 1e-12));
    }
}

TEST_CASE("linearized flow in the zero direction vanishes") {
    SpectralBasis basis(8, 0.5, 17);
    auto path = sample_path(2, 1e-3, 100, 79);
    auto sig = smooth_sigmas(basis, 2, 0.3, 81);
    SpectralField psi = smooth_field(basis, 83, 0.5);
    SpectralField zero(basis);
    auto dv = rd_linearized(basis, path, sig, 1.0, psi, zero, 100);
    REQUIRE(dv[100].l2_norm() == 0.0);
}

TEST_CASE("linearized flow rejects alpha outside (0, 4)") {
    SpectralBasis basis(4, 0.5, 9);
    auto path = sample_path(2, 1e-3, 10, 87);
    auto sig = zero_sigmas(basis, 2);
    SpectralField psi = smooth_field(basis, 89, 0.3);
    REQUIRE_THROWS_AS(rd_linearized(basis, path, sig, 4.5, psi, psi, 10), std::invalid_argument);
}

TEST_CASE("finite differences confirm the linearized flow with O(h) remainder") {
    SpectralBasis basis(16, 0.5, 64);
    const double dt = 1e-3;
    const int steps = 250;
    auto path = sample_path(4, dt, steps, 23);
    auto sig = smooth_sigmas(basis, 4, 0.3, 7);
    SpectralField psi = smooth_field(basis, 29, 0.5);
    SpectralField g = smooth_field(basis, 37, 1.0);
    auto dv = rd_linearized(basis, path, sig, 1.0, psi, g, steps);
    auto d1 = DissipativeNonlinearity::power_law(1.0);
    auto base = rd_solve(basis, path, sig, d1.f, psi, steps);
    std::vector<double> rem;
    for (double h : {1e-3, 1e-4}) {
        SpectralField pp(basis, psi.coefficients() + h * g.coefficients());
        auto sp = rd_solve(basis, path, sig, d1.f, pp, steps);
        const Eigen::VectorXd fd =
            ((sp.v[steps] - base.v[steps]) / h).head(basis.n_modes());
        rem.push_back((fd - dv[steps].coefficients()).norm());
    }
    const double ratio = rem[0] / rem[1];
    REQUIRE(ratio > 5.0);
    REQUIRE(ratio < 20.0);
}

TEST_CASE("spectral tail of the flow image shrinks when the truncation doubles") {
    const double dt = 1e-3;
    const int steps = 250;  // t = 0.25
    std::vector<double> tails;
    for (int n_modes : {8, 16}) {
        SpectralBasis basis(n_modes, 0.5, 8 * n_modes);
        auto sig = smooth_sigmas(basis, 4, 0.3, 7);
        auto path = sample_path(4, dt, steps, 91);
        double worst = 0.0;
        for (int i = 0; i < 5; ++i) {
            SpectralField psi = smooth_field(basis, 200 + i, 0.8);
            SpectralField unit(basis, psi.coefficients() / psi.l2_norm());
            auto sol = rd_solve(basis, path, sig, DissipativeNonlinearity::cubic().f, unit, steps);
            worst = std::max(worst, sol.u_tail(n_modes / 2, steps));
        }
        tails.push_back(worst);
    }
    REQUIRE(tails[1] < tails[0]);
}

TEST_CASE("transformed operator keeps the smallest eigenvalue of the Laplacian") {
    SpectralBasis basis(16, 0.5, 64);
    auto path = sample_path(4, 1e-3, 100, 41);
    QFieldSample q(path, smooth_sigmas(basis, 4, 0.3, 7), 100);
    const double ev = transformed_operator_smallest_eigenvalue(basis, q, 100);
    // agreement is at spectral-truncation accuracy, not exact
    REQUIRE(ev == Catch::Approx(basis.eigenvalue(1)).epsilon(1e-5));
}
