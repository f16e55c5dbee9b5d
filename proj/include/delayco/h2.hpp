#pragma once

#include <Eigen/Dense>
#include <limits>

#include "delayco/lyap.hpp"
#include "delayco/model.hpp"
#include "delayco/spectral.hpp"

namespace delayco {

/// A tuple (K, tau_o, c) with its closed loop and Gramians. When the loop is
/// not Hurwitz, stable is false, J is +inf and P, L are empty.
struct DesignPoint {
    MatrixXd K;
    double tau_o = 0.0;
    double c = 0.0;
    ClosedLoopRealization cl;
    double abscissa = 0.0;
    bool stable = false;
    MatrixXd P;  // A_cl^T P + P A_cl = -C_ext^T C_ext
    MatrixXd L;  // A_cl L + L A_cl^T = -Bw_ext Bw_ext^T
    double J = std::numeric_limits<double>::infinity();       // Tr(Bw^T P Bw)
    double J_dual = std::numeric_limits<double>::infinity();  // Tr(C L C^T)
    double lyap_residual = 0.0;
};

DesignPoint evaluate(const PlantModel& plant, const StructureMasks& masks, const SpectralBasis& basis,
                     const MatrixXd& K, double tau_o, double c);

struct GradientBundle {
    MatrixXd dJ_dK;
    double dJ_dtau_o = 0.0;
    double dJ_dc = 0.0;
    MatrixXd G;  // R Ctilde - Bu_ext^T P
};

/// Throws PreconditionError if the point is unstable.
GradientBundle gradient(const DesignPoint& point, const PlantModel& plant, const StructureMasks& masks,
                        const SpectralBasis& basis);

struct Trajectory {
    Eigen::VectorXd t;
    MatrixXd x;  // n x samples
    bool diverged = false;
};

/// Fixed-step RK4 for dx/dt = A x - B Kd x(t - tau_d) - B Ko x(t - tau_o) with
/// constant history x(t) = x0 for t <= 0. Delayed states between grid points
/// come from cubic Hermite interpolation of the stored samples and slopes.
/// Requires dt <= tau_d / 10; stops early with diverged = true once ||x|| > 1e12.
Trajectory simulate_dde(const PlantModel& plant, const StructureMasks& masks, const MatrixXd& K, double tau_d,
                        double tau_o, const VectorXd& x0, double T, double dt);

/// Physical state M^T eta(t) of the discretized closed loop started from the
/// constant history eta(0) = 1 (x) x0, sampled every dt (exact propagator).
Trajectory simulate_discretized(const ClosedLoopRealization& cl, const VectorXd& x0, double T, double dt);

}  // namespace delayco
