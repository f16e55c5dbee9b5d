#pragma once

#include <Eigen/Dense>
#include <vector>

#include "delayco/h2.hpp"

namespace delayco {

struct KminOptions {
    // stop when ||grad Phi1|| <= min(tol_rel (1 + ||K||), tol_mu (1 + ||mu||))
    double tol_rel = 1e-5;
    double tol_mu = 5e-7;
    int max_iter = 50;
    double armijo_sigma = 1e-4;
    double backtrack = 0.5;
    int max_halvings = 40;
    double min_step = 1e-10;
};

/// Structured Newton (Anderson-Moore) minimization of
/// Phi1(K) = J(K) + rho/2 ||K - U||_F^2 at fixed delays.
struct KminResult {
    MatrixXd K;
    DesignPoint point;
    int iterations = 0;
    bool converged = false;
    bool stalled = false;            // line search exhausted
    int gradient_fallbacks = 0;      // iterations where K_bar - K was not a descent direction
    double grad_norm = 0.0;
    std::vector<double> phi;         // Phi1 at the start and after every accepted step
};

/// The mn x mn system H vec(K_bar) = mu assembled from P, L at the given point
/// (column-major vec).
struct KminSystem {
    MatrixXd H;
    Eigen::VectorXd mu;
};
KminSystem kmin_system(const DesignPoint& point, const PlantModel& plant, const StructureMasks& masks,
                       const MatrixXd& U, double rho);

/// ||H vec(K) - mu|| for H, mu built at K itself; this is ||grad Phi1(K)||.
double kmin_stationarity(const DesignPoint& point, const PlantModel& plant, const StructureMasks& masks,
                         const MatrixXd& U, double rho, double* mu_norm = nullptr);

double phi1(const DesignPoint& point, const MatrixXd& U, double rho);

/// Requires K0 stabilizing at (tau_o, c); PreconditionError otherwise.
KminResult kmin(const MatrixXd& K0, const MatrixXd& U, double rho, const PlantModel& plant,
                const StructureMasks& masks, const SpectralBasis& basis, double tau_o, double c,
                const KminOptions& opt = {});

/// Weighted soft threshold with a_ij = (lambda / rho) W_ij.
MatrixXd fmin(const MatrixXd& V, const MatrixXd& W, double lambda, double rho);

/// W_ij = 1 / (|F_ij| + eps); eps > 0.
MatrixXd reweight(const MatrixXd& F, double eps);

struct AdmmState {
    MatrixXd K, F, Theta, W;
    double rho = 100.0;
    double lambda = 0.0;
    double primal = 0.0;  // ||K - F||_F
    double dual = 0.0;    // rho ||F_{k+1} - F_k||_F

    /// K = F = K0, Theta = 0, W = 1.
    static AdmmState start(const MatrixXd& K0, double rho, double lambda);
};

struct AdmmOptions {
    int max_iter = 100;
    double eps_abs = 1e-4;
    double eps_rel = 1e-2;
    // Entries where support == 0 are forced to zero in F-min (empty: no restriction).
    MatrixXd support;
    KminOptions kmin;
};

struct AdmmIteration {
    int iter = 0;
    double primal = 0.0, dual = 0.0;
    double eps_pri = 0.0, eps_dual = 0.0;
    double J = 0.0;
    int kmin_iterations = 0;
    bool kmin_stalled = false;
    bool phi_monotone = true;
    double abscissa = 0.0;  // at K
    MatrixXd K, F;
};

struct InnerResult {
    AdmmState state;
    DesignPoint point;  // at the returned K
    int iterations = 0;
    bool converged = false;
    bool projected = false;            // K was restricted to supp(F)
    bool projection_rejected = false;  // restriction destabilized the loop
    double eps_pri = 0.0, eps_dual = 0.0;
    double final_primal = 0.0;         // ||K - F|| before projection
    std::vector<AdmmIteration> history;
};

/// Requires state.K stabilizing at (tau_o, c).
InnerResult inner_loop(AdmmState state, const PlantModel& plant, const StructureMasks& masks,
                       const SpectralBasis& basis, double tau_o, double c, const AdmmOptions& opt = {});

}  // namespace delayco
