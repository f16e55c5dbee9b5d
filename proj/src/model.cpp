#include "delayco/model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>

#include "delayco/errors.hpp"

namespace delayco {

namespace {

double weight_tolerance(const MatrixXd& S) { return 1e-10 * std::max(1.0, S.norm()); }

void check_symmetric(const MatrixXd& S, const char* name, bool strictly_positive) {
    if (S.rows() != S.cols()) throw ValidationError(std::string(name) + " must be square");
    const double tol = weight_tolerance(S);
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > tol)
        throw ValidationError(std::string(name) + " must be symmetric");
    const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(S, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    if (strictly_positive ? lmin <= tol : lmin < -tol) {
        std::ostringstream os;
        os << name << " must be positive " << (strictly_positive ? "definite" : "semidefinite")
           << " (min eigenvalue " << lmin << ")";
        throw ValidationError(os.str());
    }
}

// Smallest singular value of [A - lambda I, B] (or its transpose) at each
// eigenvalue lambda of A in the closed right half-plane.
bool pbh_full_rank(const MatrixXd& A, const MatrixXd& B, bool stack_rows) {
    const int n = static_cast<int>(A.rows());
    const double tol = 1e-9 * std::max(1.0, A.operatorNorm());
    Eigen::EigenSolver<MatrixXd> es(A, false);
    if (es.info() != Eigen::Success) throw NumericalError("eigen decomposition failed in PBH test");
    for (int k = 0; k < n; ++k) {
        const std::complex<double> lambda = es.eigenvalues()(k);
        if (lambda.real() < 0.0) continue;
        Eigen::MatrixXcd shifted = A.cast<std::complex<double>>();
        shifted.diagonal().array() -= lambda;
        Eigen::MatrixXcd pencil;
        if (stack_rows) {
            pencil.resize(n + B.rows(), n);
            pencil << shifted, B.cast<std::complex<double>>();
        } else {
            pencil.resize(n, n + B.cols());
            pencil << shifted, B.cast<std::complex<double>>();
        }
        Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pencil);
        const auto& sv = svd.singularValues();
        if (sv.size() < n || sv(n - 1) <= tol) return false;
    }
    return true;
}

void check_cover(const std::vector<std::vector<int>>& blocks, int size, const char* what) {
    std::vector<int> owner(static_cast<std::size_t>(size), -1);
    for (std::size_t q = 0; q < blocks.size(); ++q) {
        if (blocks[q].empty()) throw ValidationError(std::string(what) + " block is empty");
        for (int idx : blocks[q]) {
            if (idx < 0 || idx >= size) {
                std::ostringstream os;
                os << what << " index " << idx << " out of range [0, " << size << ")";
                throw ValidationError(os.str());
            }
            if (owner[idx] != -1) {
                std::ostringstream os;
                os << what << " index " << idx << " appears in blocks " << owner[idx] << " and " << q;
                throw ValidationError(os.str());
            }
            owner[idx] = static_cast<int>(q);
        }
    }
    for (int i = 0; i < size; ++i) {
        if (owner[i] == -1) {
            std::ostringstream os;
            os << what << " index " << i << " is not covered by any block";
            throw ValidationError(os.str());
        }
    }
}

}  // namespace

MatrixXd psd_sqrt(const MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()));
    VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

bool is_stabilizable(const MatrixXd& A, const MatrixXd& B) { return pbh_full_rank(A, B, false); }

bool is_detectable(const MatrixXd& A, const MatrixXd& C) { return pbh_full_rank(A, C, true); }

PlantModel::PlantModel(MatrixXd A, MatrixXd B, MatrixXd Bw, MatrixXd Q, MatrixXd R)
    : A_(std::move(A)), B_(std::move(B)), Bw_(std::move(Bw)), Q_(std::move(Q)), R_(std::move(R)) {
    const auto n = A_.rows();
    if (n == 0 || A_.cols() != n) throw ValidationError("A must be square and non-empty");
    if (B_.rows() != n || B_.cols() == 0) throw ValidationError("B must have n rows and at least one column");
    if (Bw_.rows() != n || Bw_.cols() == 0) throw ValidationError("Bw must have n rows and at least one column");
    if (Q_.rows() != n || Q_.cols() != n) throw ValidationError("Q must be n x n");
    if (R_.rows() != B_.cols() || R_.cols() != B_.cols()) throw ValidationError("R must be m x m");
    check_symmetric(Q_, "Q", false);
    check_symmetric(R_, "R", true);
    Q_ = 0.5 * (Q_ + Q_.transpose());
    R_ = 0.5 * (R_ + R_.transpose());
    Q_sqrt_ = psd_sqrt(Q_);
    R_sqrt_ = psd_sqrt(R_);
    if (!is_stabilizable(A_, B_)) throw ValidationError("(A, B) is not stabilizable");
    if (!is_detectable(A_, Q_sqrt_)) throw ValidationError("(A, Q^1/2) is not detectable");
}

void CpsPartition::validate(int n, int m) const {
    if (state_blocks.empty()) throw ValidationError("partition has no blocks");
    if (state_blocks.size() != input_blocks.size())
        throw ValidationError("partition needs the same number of state and input blocks");
    check_cover(state_blocks, n, "state");
    check_cover(input_blocks, m, "input");
}

CpsPartition CpsPartition::single_block(int n, int m) {
    CpsPartition p;
    p.state_blocks.resize(1);
    p.input_blocks.resize(1);
    for (int i = 0; i < n; ++i) p.state_blocks[0].push_back(i);
    for (int i = 0; i < m; ++i) p.input_blocks[0].push_back(i);
    return p;
}

CpsPartition CpsPartition::singletons(int n) {
    CpsPartition p;
    for (int i = 0; i < n; ++i) {
        p.state_blocks.push_back({i});
        p.input_blocks.push_back({i});
    }
    return p;
}

StructureMasks build_masks(const CpsPartition& partition, int n, int m) {
    partition.validate(n, m);
    StructureMasks masks{MatrixXd::Zero(m, n), MatrixXd::Ones(m, n)};
    for (int q = 0; q < partition.blocks(); ++q) {
        for (int i : partition.input_blocks[q]) {
            for (int j : partition.state_blocks[q]) {
                masks.Id(i, j) = 1.0;
                masks.Io(i, j) = 0.0;
            }
        }
    }
    return masks;
}

void BandwidthModel::validate() const {
    if (!(m_cp > 0.0) || !(m_cc > 0.0) || !(budget > 0.0))
        throw ValidationError("bandwidth prices and budget must be positive");
}

BlockCounts block_counts(const MatrixXd& K, const CpsPartition& partition) {
    const int p = partition.blocks();
    // nonzero(q, s): block (input group q, state group s) has a nonzero entry
    std::vector<char> nonzero(static_cast<std::size_t>(p * p), 0);
    for (int q = 0; q < p; ++q) {
        for (int s = 0; s < p; ++s) {
            bool any = false;
            for (int i : partition.input_blocks[q]) {
                for (int j : partition.state_blocks[s]) {
                    if (!is_structural_zero(K(i, j))) {
                        any = true;
                        break;
                    }
                }
                if (any) break;
            }
            nonzero[q * p + s] = any;
        }
    }
    BlockCounts c;
    for (int q = 0; q < p; ++q) {
        bool row = false, col = false;
        for (int s = 0; s < p; ++s) {
            row = row || nonzero[q * p + s];
            col = col || nonzero[s * p + q];
            if (s != q && nonzero[q * p + s]) ++c.off;
        }
        c.rows += row;
        c.cols += col;
    }
    return c;
}

int count_zeros(const MatrixXd& K) {
    int z = 0;
    for (Eigen::Index j = 0; j < K.cols(); ++j)
        for (Eigen::Index i = 0; i < K.rows(); ++i) z += is_structural_zero(K(i, j));
    return z;
}

double bandwidth_cost(const BlockCounts& counts, double tau_d, double tau_o, const BandwidthModel& model) {
    if (!(tau_d > 0.0) || !(tau_o > tau_d)) {
        std::ostringstream os;
        os << "bandwidth cost needs 0 < tau_d < tau_o (got tau_d=" << tau_d << ", tau_o=" << tau_o << ")";
        throw DomainError(os.str());
    }
    return 2.0 * model.m_cp * counts.lan_links() / tau_d + model.m_cc * counts.off / (tau_o - tau_d);
}

double bandwidth_cost(const MatrixXd& K, double tau_d, double tau_o, const BandwidthModel& model,
                      const CpsPartition& partition) {
    return bandwidth_cost(block_counts(K, partition), tau_d, tau_o, model);
}

double bandwidth_cost_ratio(const BlockCounts& counts, double c, double tau_o, const BandwidthModel& model) {
    if (!(c > 0.0) || !(c < 1.0) || !(tau_o > 0.0)) {
        std::ostringstream os;
        os << "bandwidth cost needs 0 < c < 1 and tau_o > 0 (got c=" << c << ", tau_o=" << tau_o << ")";
        throw DomainError(os.str());
    }
    return 2.0 * model.m_cp * counts.lan_links() / (c * tau_o) + model.m_cc * counts.off / ((1.0 - c) * tau_o);
}

}  // namespace delayco
