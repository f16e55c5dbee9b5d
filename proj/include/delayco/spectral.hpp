#pragma once

#include <Eigen/Dense>
#include <vector>

#include "delayco/model.hpp"

namespace delayco {

/// Scaled and shifted Chebyshev extremal points on [-tau_o, 0], increasing,
/// with nodes(0) = -tau_o and nodes(N-1) = 0. Throws ValidationError for N < 2.
VectorXd chebyshev_nodes(int N, double tau_o);

/// Lambda (N n x N n) and Abar = Diag(0, ..., 0, A) such that the delay-free
/// part of the discretized generator is Lambda / tau_o + Abar. Block row i < N
/// holds the Lagrange derivatives l_j'(theta_i) on the unit grid; the last
/// block row is zero.
struct LambdaFactor {
    MatrixXd Lambda;
    MatrixXd Abar;
};
LambdaFactor build_lambda(int N, int n, const MatrixXd& A);

/// Gamma (N x N): row j holds the coefficients, highest power first, of the
/// polynomial c -> l_j(-c tau_o). Expanded exactly from the product of the
/// N-1 affine Lagrange factors.
MatrixXd build_gamma(int N);

/// Piecewise-affine surrogate of the interpolation weights on kc uniform
/// sub-intervals of [0, 1]: weights(c) ~ chi[i] * [c, 1]^T on interval i.
struct AffineNd {
    std::vector<double> breakpoints;  // kc + 1 values, 0 .. 1
    std::vector<MatrixXd> chi;        // kc blocks of N x 2 (slope, intercept)
    std::vector<double> interval_error;
    double max_error = 0.0;

    int intervals() const { return static_cast<int>(chi.size()); }
    /// Index of the sub-interval containing c (c = 1 maps to the last).
    int interval_of(double c) const;
    VectorXd weights(int interval, double c) const;
};

/// Grid-dependent constants shared by every closed-loop assembly with the
/// same N.
struct SpectralBasis {
    int N = 0;
    VectorXd unit_nodes;   // chebyshev_nodes(N, 1)
    MatrixXd diff;         // N x N scalar factor of Lambda (last row zero)
    MatrixXd gamma;        // build_gamma(N)
    AffineNd affine;

    /// N >= 2, kc >= 1.
    static SpectralBasis make(int N, int kc = 10);

    /// Lagrange weights l_j(x) at a point x given in unit-grid coordinates.
    VectorXd lagrange(double x) const;
    /// Gamma nu(c), evaluated by the product formula (no monomial expansion).
    VectorXd nd_weights(double c) const;
    /// Gamma d nu / dc.
    VectorXd nd_weights_derivative(double c) const;
};

/// Samples per sub-interval used by the affine least-squares fit.
inline constexpr int kAffineSamples = 201;

AffineNd affine_nd(const SpectralBasis& basis, int kc);

/// Kronecker product w (x) I_n of an N-vector with the identity.
MatrixXd kron_identity(const VectorXd& w, int n);
MatrixXd kron_identity(const MatrixXd& S, int n);

/// N_d(c) = (Gamma nu(c)) (x) I_n. Throws DomainError unless 0 <= c <= 1.
MatrixXd nd_of_c(const SpectralBasis& basis, double c, int n);

/// Extended closed loop deta/dt = A_cl eta + Bw_ext w, z = C_ext eta.
struct ClosedLoopRealization {
    MatrixXd A_cl;
    MatrixXd A_tilde;  // Lambda / tau_o + Abar
    MatrixXd Lambda;
    MatrixXd Bu_ext;   // M B
    MatrixXd Bw_ext;   // M Bw
    MatrixXd C_ext;    // [Q^1/2 M^T; -R^1/2 Ctilde]
    MatrixXd Ctilde;   // Kd Nd^T + Ko No^T
    MatrixXd M, No, Nd;
    MatrixXd Kd, Ko;
    double tau_o = 0.0;
    double c = 0.0;
};

ClosedLoopRealization assemble_closed_loop(const PlantModel& plant, const StructureMasks& masks, const MatrixXd& K,
                                           double tau_o, double c, const SpectralBasis& basis,
                                           bool use_affine_nd = false);

}  // namespace delayco
