#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "delayco/admm.hpp"
#include "delayco/conic.hpp"
#include "delayco/h2.hpp"

namespace delayco {

// Bandwidth bookkeeping at fixed link counts.

/// (1/S_ref)(2 m_cp n_cp / c* + m_cc n_cc / (1 - c*)) - tau_o. Non-positive
/// iff the cost at (c*, tau_o) is at most S_ref.
double delta_S_tau(const BandwidthModel& bw, const BlockCounts& counts, double c_star, double S_ref, double tau_o);

/// [S_ref tau* c^2 + (m_cc n_cc - 2 m_cp n_cp - S_ref tau*) c + 2 m_cp n_cp] / (c (1 - c) tau*).
double delta_S_c(const BandwidthModel& bw, const BlockCounts& counts, double tau_star, double S_ref, double c);

/// Smallest tau_o with cost <= S_ref at ratio c.
double min_tau_for_budget(const BandwidthModel& bw, const BlockCounts& counts, double c, double S_ref);

struct Interval {
    double lo = 0.0, hi = 0.0;
    bool empty() const { return !(lo <= hi); }
};

/// Ratios c in [c_floor, 1 - c_floor] where the numerator of delta_S_c is
/// non-positive (cost at most S_ref at fixed tau_o).
Interval bandwidth_ratio_interval(const BandwidthModel& bw, const BlockCounts& counts, double tau_o, double S_ref,
                                  double c_floor);

/// Minimizer of the cost over c at fixed tau_o. nullopt when K has no links.
std::optional<double> c_min_shortcut(const BandwidthModel& bw, const BlockCounts& counts, double c_floor = 1e-3);

/// How the delays may move during an outer step.
struct DelayConstraints {
    enum class Kind { Bandwidth, TotalDelay };
    Kind kind = Kind::Bandwidth;
    BandwidthModel bandwidth;  // Bandwidth: cost <= bandwidth.budget
    CpsPartition partition;    // for link counts
    double total_ref = 0.0;    // TotalDelay: |tau_o (1 + c) - total_ref| <= total_tol
    double total_tol = 0.0;
    double c_floor = 1e-3;

    static DelayConstraints budget(const BandwidthModel& bw, const CpsPartition& partition, double c_floor = 1e-3);
    static DelayConstraints total_delay(double reference, double tolerance, const CpsPartition& partition,
                                        double c_floor = 1e-3);

    /// True when (K, tau_o, c) respects the constraint (cost <= budget + 1e-9).
    bool satisfied(const MatrixXd& K, double tau_o, double c) const;
};

/// Masks of the perturbation variables: Id and Io restricted to supp(K).
StructureMasks support_masks(const StructureMasks& masks, const MatrixXd& K);

// (K, tau_o) step.

struct KTauProgramData {
    DesignPoint base;
    double omega = 0.0;  // 1 / tau_o*
    double zeta1 = 0.0;  // |d omega| bound
    double zeta2 = 0.0;  // ||dP|| bound
    StructureMasks vary;  // free entries of dK_d, dK_o
    MatrixXd G;           // R Ctilde* - Bu^T P*
    MatrixXd residual;    // A*^T P* + P* A* + C*^T C*, ~0

    /// Throws PreconditionError unless base is stable with Lyapunov residual
    /// <= 1e-8 (relative); ValidationError for negative radii.
    static KTauProgramData make(const DesignPoint& base, const PlantModel& plant, const StructureMasks& masks,
                                double zeta1, double zeta2);
};

struct KTauProgram {
    ConicProgram program;
    int dKd = -1, dKo = -1, dP = -1, domega = -1, alpha = -1, prox = -1;
    Interval omega_range;  // admissible d omega after all scalar bounds
};

/// Returns nullopt when the scalar bounds on d omega leave nothing (the
/// caller treats this like an infeasible program). U must be m x n.
std::optional<KTauProgram> build_ktau_sdp(const KTauProgramData& data, const PlantModel& plant,
                                          const DelayConstraints& cons, double rho, const MatrixXd& U);

// The perturbation terms dropped by the relaxation, recomputed exactly.
struct WeylAudit {
    double bound = 0.0;  // sum of lambda_max of the dropped terms
    double alpha = 0.0;
    bool ok() const { return bound <= alpha + 1e-6; }
};

struct KTauCandidate {
    MatrixXd K;
    double tau_o = 0.0;
    MatrixXd dK, dP;
    double domega = 0.0, alpha = 0.0;
    double objective = 0.0;
    WeylAudit audit;
};

KTauCandidate decode_ktau(const KTauProgram& prog, const KTauProgramData& data, const PlantModel& plant,
                          const VectorXd& x);

/// lambda_max(A1^T dP + dP A1) + lambda_max(dC^T R dC).
WeylAudit audit_ktau(const KTauProgramData& data, const PlantModel& plant, const MatrixXd& dK, const MatrixXd& dP,
                     double domega, double alpha);

// (K, c) step.

struct KcProgramData {
    DesignPoint base;
    double beta = 0.0;  // ||dL|| bound
    int interval = 0;   // sub-interval index containing c*
    double c_lo = 0.0, c_hi = 0.0;
    VectorXd slope;     // d weights / dc of the affine surrogate on the interval
    double frak_S = 0.0;      // >= ||N_d(c)|| and >= ||dN_d|| on the interval
    StructureMasks vary;

    /// dJ_dc picks the interval when c* sits on a breakpoint.
    static KcProgramData make(const DesignPoint& base, const PlantModel& plant, const StructureMasks& masks,
                              const SpectralBasis& basis, double beta, double dJ_dc);
};

struct KcProgram {
    ConicProgram program;
    int dKd = -1, dKo = -1, dL = -1, dc = -1, alpha = -1, prox = -1;
    Interval c_range;
};

std::optional<KcProgram> build_kc_sdp(const KcProgramData& data, const PlantModel& plant,
                                      const DelayConstraints& cons, double rho, const MatrixXd& U);

struct KcCandidate {
    MatrixXd K;
    double c = 0.0;
    MatrixXd dK, dL;
    double dc = 0.0, alpha = 0.0;
    double objective = 0.0;
    WeylAudit audit;
};

KcCandidate decode_kc(const KcProgram& prog, const KcProgramData& data, const PlantModel& plant, const VectorXd& x);

/// lambda_max(phi2) + lambda_max(phi3) + lambda_max(phi4) with the affine
/// surrogate of N_d.
WeylAudit audit_kc(const KcProgramData& data, const MatrixXd& dK, const MatrixXd& dL, double dc, double alpha);

// Full outer step.

struct OuterOptions {
    double zeta1_frac = 0.1;  // zeta1 = frac * omega*
    double kappa_max = 0.25;  // also zeta1 <= kappa_max / (2 ||Lambda^T X||); 0 disables
    double zeta2_frac = 0.1;  // zeta2 = frac * ||P*||
    double beta_frac = 0.1;   // beta = frac * ||L*||
    int max_halvings = 5;
    // an accepted step lowering the merit by less than this (relative) is
    // kept only as a fallback while smaller radii are tried
    double null_step_tol = 1e-6;
    double sdp_tol = 1e-7;
    int sdp_max_iter = 200;
    bool use_c_min = true;
    KminOptions kmin;
};

struct OuterStepReport {
    DesignPoint point;  // accepted tuple (the base when nothing was accepted)
    bool ktau_accepted = false;
    bool kc_accepted = false;
    bool c_min_used = false;
    int ktau_attempts = 0, kc_attempts = 0;
    WeylAudit ktau_audit, kc_audit;
    double ktau_objective = 0.0, kc_objective = 0.0;
    std::string diagnostics;
};

/// P1_o1 then P1_o2 (or the c_min shortcut) from a stable base point. Each
/// candidate is re-evaluated exactly and kept only if it is stable, meets
/// the delay constraints, passes the Weyl audit, and does not raise
/// J + rho/2 ||K - U||^2. Never throws for numerical trouble; rejected
/// steps leave the point unchanged and are explained in diagnostics.
OuterStepReport outer_step(const DesignPoint& base, const PlantModel& plant, const StructureMasks& masks,
                           const SpectralBasis& basis, const DelayConstraints& cons, double rho, const MatrixXd& U,
                           const OuterOptions& opt = {});

}  // namespace delayco
