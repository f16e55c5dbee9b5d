#include "doctest.h"

#include <random>

#include "delayco/errors.hpp"
#include "delayco/lyap.hpp"

using namespace delayco;

namespace {

MatrixXd random_matrix(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    MatrixXd A(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) A(i, j) = g(rng);
    return A;
}

MatrixXd random_stable(int n, unsigned seed) {
    MatrixXd S = random_matrix(n, seed);
    S *= 4.0 / S.operatorNorm();
    return S - 6.0 * MatrixXd::Identity(n, n);
}

}  // namespace

TEST_CASE("spectral abscissa") {
    CHECK(spectral_abscissa(-MatrixXd::Identity(3, 3)) == doctest::Approx(-1.0));
    MatrixXd rot(2, 2);
    rot << 0, 1, -1, 0;
    CHECK(std::abs(spectral_abscissa(rot)) < 1e-14);
    // Gershgorin: ||S|| < 5 keeps every eigenvalue left of -1
    CHECK(spectral_abscissa(random_stable(10, 3)) < -1.0);
}

TEST_CASE("scalar and diagonal Lyapunov") {
    MatrixXd a(1, 1), q(1, 1);
    a << -2;
    q << 4;
    CHECK(solve_lyapunov(a, q).X(0, 0) == doctest::Approx(1.0));
    MatrixXd C = random_matrix(4, 9);
    C = C * C.transpose();
    auto s = solve_lyapunov(-MatrixXd::Identity(4, 4), C);
    CHECK((s.X - C / 2).norm() < 1e-12);
}

TEST_CASE("random stable 20x20 residuals and Kronecker cross-check") {
    for (unsigned seed = 1; seed <= 3; ++seed) {
        MatrixXd A = random_matrix(20, seed);
        A -= (spectral_abscissa(A) + 0.5) * MatrixXd::Identity(20, 20);
        MatrixXd Q = random_matrix(20, seed + 100);
        Q = Q * Q.transpose();
        auto P = solve_lyapunov(A, Q);
        CHECK(P.residual <= 1e-8 * std::max(1.0, Q.norm()));
        CHECK((A.transpose() * P.X + P.X * A + Q).norm() <= 1e-8 * std::max(1.0, Q.norm()));
        CHECK(P.X == P.X.transpose());
        const MatrixXd Pk = solve_lyapunov_kronecker(A, Q);
        CHECK((Pk - P.X).norm() <= 1e-8 * P.X.norm());
        CHECK(Eigen::SelfAdjointEigenSolver<MatrixXd>(P.X).eigenvalues().minCoeff() >= -1e-9);

        auto L = solve_lyapunov_dual(A, Q);
        CHECK((A * L.X + L.X * A.transpose() + Q).norm() <= 1e-8 * std::max(1.0, Q.norm()));
    }
}

TEST_CASE("trace duality") {
    const int n = 8;
    MatrixXd A = random_stable(n, 5);
    MatrixXd Bw = random_matrix(n, 6).leftCols(3);
    MatrixXd C = random_matrix(n, 7).topRows(4);
    const SchurForm s = schur(A);
    const MatrixXd P = solve_lyapunov(A, s, C.transpose() * C).X;
    const MatrixXd L = solve_lyapunov_dual(A, s, Bw * Bw.transpose()).X;
    const double j1 = (Bw.transpose() * P * Bw).trace();
    const double j2 = (C * L * C.transpose()).trace();
    CHECK(std::abs(j1 - j2) <= 1e-10 * std::abs(j1));
}

TEST_CASE("non-Hurwitz input is a precondition error") {
    MatrixXd A = MatrixXd::Identity(2, 2);
    CHECK_THROWS_AS(solve_lyapunov(A, A), PreconditionError);
    CHECK_THROWS_AS(solve_lyapunov_dual(A, A), PreconditionError);
}
