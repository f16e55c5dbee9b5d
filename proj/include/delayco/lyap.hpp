#pragma once

#include <Eigen/Dense>

namespace delayco {

using Eigen::MatrixXd;

/// Complex Schur form A = U T U^H, computed once and shared by the
/// stability test and both Lyapunov solves of an evaluation.
struct SchurForm {
    Eigen::MatrixXcd T;
    Eigen::MatrixXcd U;

    Eigen::VectorXcd eigenvalues() const { return T.diagonal(); }
    /// max Re(lambda)
    double abscissa() const;
};

/// Throws NumericalError (with the iteration cap) if QR iteration fails to
/// converge within 100 * dim sweeps.
SchurForm schur(const MatrixXd& A);

double spectral_abscissa(const MatrixXd& A);

struct LyapSolution {
    MatrixXd X;
    double residual = 0.0;  // ||op(X) + Q_rhs||_F
};

/// Solves A^T X + X A + Q = 0 (observability form) by Bartels-Stewart
/// substitution on the complex Schur factor. A must be Hurwitz
/// (PreconditionError otherwise); X is returned exactly symmetric.
LyapSolution solve_lyapunov(const MatrixXd& A, const MatrixXd& Q);
LyapSolution solve_lyapunov(const MatrixXd& A, const SchurForm& schur_of_A, const MatrixXd& Q);

/// Solves A X + X A^T + W = 0 (controllability form).
LyapSolution solve_lyapunov_dual(const MatrixXd& A, const MatrixXd& W);
LyapSolution solve_lyapunov_dual(const MatrixXd& A, const SchurForm& schur_of_A, const MatrixXd& W);

/// Reference solver through the n^2 x n^2 Kronecker system
/// (I (x) A^T + A^T (x) I) vec(X) = -vec(Q). Restricted to n <= 60.
MatrixXd solve_lyapunov_kronecker(const MatrixXd& A, const MatrixXd& Q);

}  // namespace delayco
