#include "doctest.h"

#include <cmath>

#include "delayco/admm.hpp"
#include "delayco/errors.hpp"
#include "fixtures.hpp"

using namespace delayco;

TEST_CASE("soft threshold") {
    MatrixXd V(1, 3), W = MatrixXd::Ones(1, 3);
    V << 2.0, 0.3, -2.0;
    MatrixXd F = fmin(V, W, 0.5, 1.0);
    CHECK(F(0, 0) == doctest::Approx(1.5));
    CHECK(F(0, 1) == 0.0);
    CHECK(F(0, 2) == doctest::Approx(-1.5));
    CHECK(fmin(V, W, 0.0, 1.0) == V);

    std::mt19937_64 rng(4);
    const MatrixXd R = fixtures::gaussian(4, 5, rng);
    const MatrixXd Wr = fixtures::gaussian(4, 5, rng).cwiseAbs();
    const MatrixXd Fr = fmin(R, Wr, 0.7, 1.3);
    CHECK((Fr - R).norm() <= R.norm());
    CHECK((Fr.array() * R.array() >= 0.0).all());
}

TEST_CASE("reweighting") {
    CHECK(reweight(MatrixXd::Zero(1, 1), 1e-3)(0, 0) == doctest::Approx(1000.0));
    MatrixXd h(1, 1);
    h << 0.5;
    CHECK(reweight(h, 1e-3)(0, 0) == doctest::Approx(1.0 / 0.501));
    std::mt19937_64 rng(5);
    CHECK((reweight(fixtures::gaussian(3, 3, rng), 1e-2).array() <= 100.0).all());
    CHECK_THROWS_AS(reweight(h, 0.0), ValidationError);
}

TEST_CASE("K-min stationarity and monotone merit") {
    const auto basis = SpectralBasis::make(10);
    for (unsigned seed = 1; seed <= 3; ++seed) {
        auto inst = fixtures::random_instance(3, seed);
        std::mt19937_64 rng(seed + 50);
        const MatrixXd U = inst.K + fixtures::gaussian(3, 3, rng, 0.2);
        for (double rho : {1.0, 100.0}) {
            auto r = kmin(inst.K, U, rho, inst.plant, inst.masks, basis, 0.4, 0.5);
            CHECK(r.converged);
            for (std::size_t i = 1; i < r.phi.size(); ++i) CHECK(r.phi[i] <= r.phi[i - 1]);
            double mu_norm = 0.0;
            const double res = kmin_stationarity(r.point, inst.plant, inst.masks, U, rho, &mu_norm);
            CHECK(res <= 1e-6 * (1.0 + mu_norm));
            CHECK(r.point.stable);
        }
    }
}

TEST_CASE("large rho pins K to U") {
    const auto basis = SpectralBasis::make(8);
    auto inst = fixtures::random_instance(3, 7);
    auto p = evaluate(inst.plant, inst.masks, basis, inst.K, 0.3, 0.5);
    const MatrixXd U = inst.K * 1.1;
    const auto sys = kmin_system(p, inst.plant, inst.masks, U, 1e9);
    const Eigen::VectorXd kbar = sys.H.llt().solve(sys.mu);
    CHECK((kbar - Eigen::Map<const Eigen::VectorXd>(U.data(), U.size())).norm() < 1e-6 * U.norm());
}

TEST_CASE("full coupling drops the cross terms") {
    const auto basis = SpectralBasis::make(8);
    auto inst = fixtures::random_instance(2, 8);
    StructureMasks full{MatrixXd::Ones(2, 2), MatrixXd::Zero(2, 2)};
    auto p = evaluate(inst.plant, full, basis, inst.K, 0.3, 0.4);
    const auto sys = kmin_system(p, inst.plant, full, inst.K, 10.0);
    const MatrixXd Xdd = p.cl.Nd.transpose() * p.L * p.cl.Nd;
    MatrixXd ref = 10.0 * MatrixXd::Identity(4, 4);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) ref.block(2 * a, 2 * b, 2, 2) += 2.0 * Xdd(a, b) * inst.plant.R();
    CHECK((sys.H - ref).norm() < 1e-12 * ref.norm());
}

TEST_CASE("K-min matches brute-force descent on the delay-free two-state problem") {
    // c = 0 with full coupling folds the delay away: the loop is x' = (A - BK) x
    auto inst = fixtures::random_instance(2, 31);
    StructureMasks full{MatrixXd::Ones(2, 2), MatrixXd::Zero(2, 2)};
    const auto basis = SpectralBasis::make(10);
    const double rho = 1.0;
    const MatrixXd U = MatrixXd::Zero(2, 2);
    const MatrixXd& A = inst.plant.A();

    auto Jfree = [&](const MatrixXd& K) {
        const MatrixXd Acl = A - K;  // B = I
        if (spectral_abscissa(Acl) >= 0) return std::numeric_limits<double>::infinity();
        const MatrixXd X = solve_lyapunov(Acl, MatrixXd::Identity(2, 2) + K.transpose() * K).X;
        return X.trace();
    };
    auto phi = [&](const MatrixXd& K) { return Jfree(K) + 0.5 * rho * (K - U).squaredNorm(); };

    MatrixXd K = inst.K;
    for (int it = 0; it < 20000; ++it) {
        MatrixXd g(2, 2);
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                MatrixXd a = K, b = K;
                a(i, j) += 1e-6;
                b(i, j) -= 1e-6;
                g(i, j) = (phi(a) - phi(b)) / 2e-6;
            }
        if (g.norm() < 1e-9) break;
        double s = 1.0;
        const double f0 = phi(K);
        while (phi(K - s * g) > f0 - 1e-4 * s * g.squaredNorm()) s *= 0.5;
        K -= s * g;
    }
    auto r = kmin(inst.K, U, rho, inst.plant, full, basis, 0.5, 0.0);
    REQUIRE(r.converged);
    CHECK(std::abs(r.point.J - Jfree(K)) <= 1e-3 * Jfree(K));
    CHECK(std::abs(r.point.J - Jfree(r.K)) <= 1e-8 * Jfree(r.K));
}

TEST_CASE("inner loop mechanics") {
    const auto basis = SpectralBasis::make(8);
    auto inst = fixtures::random_instance(4, 12);
    const double tau = 0.3, c = 0.5;

    auto r0 = inner_loop(AdmmState::start(inst.K, 100.0, 0.0), inst.plant, inst.masks, basis, tau, c);
    MESSAGE("lambda=0 iterations " << r0.iterations << " converged " << r0.converged);
    CHECK(count_zeros(r0.state.K) == count_zeros(inst.K));
    CHECK(r0.final_primal <= r0.eps_pri);

    auto lo = inner_loop(AdmmState::start(inst.K, 100.0, 0.01), inst.plant, inst.masks, basis, tau, c);
    auto hi = inner_loop(AdmmState::start(inst.K, 100.0, 0.95), inst.plant, inst.masks, basis, tau, c);
    for (const auto* r : {&lo, &hi}) {
        CHECK(r->point.stable);
        for (const auto& h : r->history) {
            CHECK(h.primal >= 0.0);
            CHECK(h.dual >= 0.0);
            CHECK(h.phi_monotone);
        }
        if (r->converged) CHECK(r->final_primal <= r->eps_pri);
    }
    MESSAGE("lo " << lo.iterations << " " << lo.converged << " zeros " << count_zeros(lo.state.K));
    MESSAGE("hi " << hi.iterations << " " << hi.converged << " zeros " << count_zeros(hi.state.K));
    CHECK(count_zeros(hi.state.K) >= count_zeros(lo.state.K));
    CHECK(count_zeros(hi.state.K) > 0);
}
