#pragma once

#include <Eigen/Dense>
#include <vector>

namespace delayco {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Entries with magnitude at or below this are structural zeros when
/// counting blocks, links, and sparsity.
inline constexpr double kZeroThreshold = 1e-12;

inline bool is_structural_zero(double v) { return v <= kZeroThreshold && v >= -kZeroThreshold; }

/// LTI plant dx/dt = A x + B u + Bw w with quadratic weights Q (state) and R
/// (input). Construction checks symmetry/definiteness of the weights and
/// runs PBH tests for stabilizability of (A, B) and detectability of
/// (A, Q^{1/2}); violations throw ValidationError.
class PlantModel {
public:
    PlantModel(MatrixXd A, MatrixXd B, MatrixXd Bw, MatrixXd Q, MatrixXd R);

    int n() const { return static_cast<int>(A_.rows()); }
    int m() const { return static_cast<int>(B_.cols()); }
    int r() const { return static_cast<int>(Bw_.cols()); }

    const MatrixXd& A() const { return A_; }
    const MatrixXd& B() const { return B_; }
    const MatrixXd& Bw() const { return Bw_; }
    const MatrixXd& Q() const { return Q_; }
    const MatrixXd& R() const { return R_; }
    const MatrixXd& Q_sqrt() const { return Q_sqrt_; }
    const MatrixXd& R_sqrt() const { return R_sqrt_; }

private:
    MatrixXd A_, B_, Bw_, Q_, R_;
    MatrixXd Q_sqrt_, R_sqrt_;
};

/// Symmetric PSD square root via eigendecomposition (tiny negative
/// eigenvalues are clamped to zero).
MatrixXd psd_sqrt(const MatrixXd& S);

/// PBH test: rank [A - lambda I, B] = n for every eigenvalue with
/// Re(lambda) >= 0. Singular-value tolerance is 1e-9 * max(1, ||A||).
bool is_stabilizable(const MatrixXd& A, const MatrixXd& B);

/// Dual PBH test on (A, C).
bool is_detectable(const MatrixXd& A, const MatrixXd& C);

/// Assignment of states and inputs to the p sensor/actuator groups.
/// Indices are zero-based.
struct CpsPartition {
    std::vector<std::vector<int>> state_blocks;
    std::vector<std::vector<int>> input_blocks;

    int blocks() const { return static_cast<int>(state_blocks.size()); }

    /// Throws ValidationError unless both lists hold the same number of
    /// non-empty, disjoint blocks covering 0..n-1 and 0..m-1 respectively.
    void validate(int n, int m) const;

    /// One block holding every state and input (full coupling).
    static CpsPartition single_block(int n, int m);
    /// Block q = {state q} x {input q}; requires n == m.
    static CpsPartition singletons(int n);
};

/// Id(i, j) = 1 iff input i and state j share a block; Io = 1 - Id.
struct StructureMasks {
    MatrixXd Id;
    MatrixXd Io;
};

StructureMasks build_masks(const CpsPartition& partition, int n, int m);

/// Prices per unit bandwidth for LAN (m_cp) and SDN (m_cc) links and the
/// total budget S_b.
struct BandwidthModel {
    double m_cp = 1.0;
    double m_cc = 1.0;
    double budget = 1.0;

    void validate() const;
};

struct BlockCounts {
    int rows = 0;  // non-zero block rows
    int cols = 0;  // non-zero block columns
    int off = 0;   // non-zero off-diagonal blocks

    int lan_links() const { return rows + cols; }
    bool operator==(const BlockCounts&) const = default;
};

BlockCounts block_counts(const MatrixXd& K, const CpsPartition& partition);

/// Number of structural zeros of K.
int count_zeros(const MatrixXd& K);

/// S = 2 m_cp (N_row + N_col) / tau_d + m_cc N_off / (tau_o - tau_d).
/// Throws DomainError unless 0 < tau_d < tau_o.
double bandwidth_cost(const BlockCounts& counts, double tau_d, double tau_o, const BandwidthModel& model);
double bandwidth_cost(const MatrixXd& K, double tau_d, double tau_o, const BandwidthModel& model,
                      const CpsPartition& partition);

/// Same cost written in the delay ratio c = tau_d / tau_o.
double bandwidth_cost_ratio(const BlockCounts& counts, double c, double tau_o, const BandwidthModel& model);

}  // namespace delayco
