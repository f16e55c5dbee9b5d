#include "delayco/h2.hpp"

#include <cmath>
#include <sstream>
#include <unsupported/Eigen/MatrixFunctions>

#include "delayco/errors.hpp"

namespace delayco {

DesignPoint evaluate(const PlantModel& plant, const StructureMasks& masks, const SpectralBasis& basis,
                     const MatrixXd& K, double tau_o, double c) {
    DesignPoint p;
    p.K = K;
    p.tau_o = tau_o;
    p.c = c;
    p.cl = assemble_closed_loop(plant, masks, K, tau_o, c, basis);
    const SchurForm s = schur(p.cl.A_cl);
    p.abscissa = s.abscissa();
    if (!(p.abscissa < 0.0)) return p;
    p.stable = true;
    const MatrixXd CtC = p.cl.C_ext.transpose() * p.cl.C_ext;
    const MatrixXd BBt = p.cl.Bw_ext * p.cl.Bw_ext.transpose();
    auto P = solve_lyapunov(p.cl.A_cl, s, CtC);
    auto L = solve_lyapunov_dual(p.cl.A_cl, s, BBt);
    p.P = std::move(P.X);
    p.L = std::move(L.X);
    p.lyap_residual = std::max(P.residual / std::max(1.0, CtC.norm()), L.residual / std::max(1.0, BBt.norm()));
    p.J = (p.cl.Bw_ext.transpose() * p.P * p.cl.Bw_ext).trace();
    p.J_dual = (p.cl.C_ext * p.L * p.cl.C_ext.transpose()).trace();
    return p;
}

GradientBundle gradient(const DesignPoint& point, const PlantModel& plant, const StructureMasks& masks,
                        const SpectralBasis& basis) {
    if (!point.stable) throw PreconditionError("gradient requested at an unstable design point");
    const auto& cl = point.cl;
    const int n = plant.n();
    GradientBundle g;
    g.G = plant.R() * cl.Ctilde - cl.Bu_ext.transpose() * point.P;
    const MatrixXd GL = g.G * point.L;
    g.dJ_dK = 2.0 * ((GL * cl.Nd).cwiseProduct(masks.Id) + (GL * cl.No).cwiseProduct(masks.Io));
    g.dJ_dtau_o = -2.0 / (point.tau_o * point.tau_o) * (cl.Lambda.transpose() * point.P * point.L).trace();
    const MatrixXd dNd = kron_identity(basis.nd_weights_derivative(point.c), n);
    g.dJ_dc = 2.0 * (dNd * cl.Kd.transpose() * GL).trace();
    return g;
}

namespace {

double hermite(double s, double h, double x0, double x1, double d0, double d1) {
    const double s2 = s * s, s3 = s2 * s;
    return (2 * s3 - 3 * s2 + 1) * x0 + (s3 - 2 * s2 + s) * h * d0 + (-2 * s3 + 3 * s2) * x1 + (s3 - s2) * h * d1;
}

}  // namespace

Trajectory simulate_dde(const PlantModel& plant, const StructureMasks& masks, const MatrixXd& K, double tau_d,
                        double tau_o, const VectorXd& x0, double T, double dt) {
    const int n = plant.n();
    if (K.rows() != plant.m() || K.cols() != n) throw ValidationError("K must be m x n");
    if (x0.size() != n) throw ValidationError("initial state must have n entries");
    if (!(tau_d > 0.0) || !(tau_o >= tau_d)) throw DomainError("simulation needs 0 < tau_d <= tau_o");
    if (!(dt > 0.0) || dt > tau_d / 10.0 * (1 + 1e-12)) throw ValidationError("simulation needs 0 < dt <= tau_d / 10");
    if (!(T > 0.0)) throw ValidationError("simulation horizon must be positive");

    const MatrixXd BKd = plant.B() * K.cwiseProduct(masks.Id);
    const MatrixXd BKo = plant.B() * K.cwiseProduct(masks.Io);
    const auto steps = static_cast<Eigen::Index>(std::ceil(T / dt - 1e-9));

    Trajectory tr;
    tr.t.resize(steps + 1);
    tr.x.resize(n, steps + 1);
    MatrixXd slope(n, steps + 1);

    auto past = [&](double s, Eigen::Index filled) -> VectorXd {
        if (s <= 0.0) return x0;
        Eigen::Index k = static_cast<Eigen::Index>(std::floor(s / dt));
        if (k >= filled) k = filled - 1;  // only reached through rounding
        const double sk = s / dt - static_cast<double>(k);
        VectorXd out(n);
        for (int i = 0; i < n; ++i)
            out(i) = hermite(sk, dt, tr.x(i, k), tr.x(i, k + 1), slope(i, k), slope(i, k + 1));
        return out;
    };
    auto rhs = [&](double t, const VectorXd& x, Eigen::Index filled) -> VectorXd {
        return plant.A() * x - BKd * past(t - tau_d, filled) - BKo * past(t - tau_o, filled);
    };

    tr.t(0) = 0.0;
    tr.x.col(0) = x0;
    for (Eigen::Index k = 0; k < steps; ++k) {
        const double t = k * dt;
        const VectorXd xk = tr.x.col(k);
        // slope at the newest sample uses only the past, so it is final here
        slope.col(k) = rhs(t, xk, k);
        const VectorXd k1 = slope.col(k);
        const VectorXd k2 = rhs(t + 0.5 * dt, xk + 0.5 * dt * k1, k);
        const VectorXd k3 = rhs(t + 0.5 * dt, xk + 0.5 * dt * k2, k);
        const VectorXd k4 = rhs(t + dt, xk + dt * k3, k);
        tr.x.col(k + 1) = xk + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        tr.t(k + 1) = (k + 1) * dt;
        if (!(tr.x.col(k + 1).norm() <= 1e12)) {
            tr.diverged = true;
            tr.t.conservativeResize(k + 2);
            tr.x.conservativeResize(n, k + 2);
            return tr;
        }
    }
    return tr;
}

Trajectory simulate_discretized(const ClosedLoopRealization& cl, const VectorXd& x0, double T, double dt) {
    const auto n = cl.M.cols();
    const auto N = cl.M.rows() / n;
    if (x0.size() != n) throw ValidationError("initial state must have n entries");
    const MatrixXd step = (cl.A_cl * dt).exp();
    const auto steps = static_cast<Eigen::Index>(std::ceil(T / dt - 1e-9));
    VectorXd eta = kron_identity(VectorXd(VectorXd::Ones(N)), static_cast<int>(n)) * x0;
    Trajectory tr;
    tr.t.resize(steps + 1);
    tr.x.resize(n, steps + 1);
    for (Eigen::Index k = 0; k <= steps; ++k) {
        tr.t(k) = k * dt;
        tr.x.col(k) = cl.M.transpose() * eta;
        if (!(eta.norm() <= 1e12)) {
            tr.diverged = true;
            tr.t.conservativeResize(k + 1);
            tr.x.conservativeResize(n, k + 1);
            return tr;
        }
        eta = step * eta;
    }
    return tr;
}

}  // namespace delayco
