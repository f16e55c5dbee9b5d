#include "delayco/lyap.hpp"

#include <Eigen/Eigenvalues>
#include <limits>
#include <sstream>

#include "delayco/errors.hpp"

namespace delayco {

using Eigen::MatrixXcd;
using Eigen::VectorXcd;
using cplx = std::complex<double>;

double SchurForm::abscissa() const {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < T.rows(); ++i) best = std::max(best, T(i, i).real());
    return best;
}

SchurForm schur(const MatrixXd& A) {
    if (A.rows() != A.cols()) throw ValidationError("Schur form needs a square matrix");
    const Eigen::Index n = A.rows();
    const Eigen::Index max_iter = 100 * std::max<Eigen::Index>(n, 1);
    Eigen::ComplexSchur<MatrixXcd> cs(n);
    cs.setMaxIterations(max_iter);
    cs.compute(A.cast<cplx>(), true);
    if (cs.info() != Eigen::Success) {
        std::ostringstream os;
        os << "complex QR iteration did not converge within " << max_iter << " iterations";
        throw NumericalError(os.str(), static_cast<int>(max_iter));
    }
    return SchurForm{cs.matrixT(), cs.matrixU()};
}

double spectral_abscissa(const MatrixXd& A) { return schur(A).abscissa(); }

namespace {

void require_hurwitz(const SchurForm& s) {
    const double a = s.abscissa();
    if (!(a < 0.0)) {
        std::ostringstream os;
        os << "Lyapunov solve needs a Hurwitz matrix (spectral abscissa " << a << ")";
        throw PreconditionError(os.str());
    }
}

// T^H Z + Z T = F with T upper triangular; columns solved left to right.
MatrixXcd solve_adjoint_triangular(const MatrixXcd& T, const MatrixXcd& F) {
    const Eigen::Index n = T.rows();
    MatrixXcd Z(n, n);
    MatrixXcd lower = T.adjoint();
    const VectorXcd base = lower.diagonal();
    for (Eigen::Index k = 0; k < n; ++k) {
        VectorXcd rhs = F.col(k);
        if (k > 0) rhs.noalias() -= Z.leftCols(k) * T.col(k).head(k);
        lower.diagonal() = base.array() + T(k, k);
        Z.col(k) = lower.triangularView<Eigen::Lower>().solve(rhs);
    }
    return Z;
}

// T Y + Y T^H = F with T upper triangular; columns solved right to left.
MatrixXcd solve_primal_triangular(const MatrixXcd& T, const MatrixXcd& F) {
    const Eigen::Index n = T.rows();
    MatrixXcd Y(n, n);
    MatrixXcd upper = T;
    const VectorXcd base = upper.diagonal();
    for (Eigen::Index k = n - 1; k >= 0; --k) {
        VectorXcd rhs = F.col(k);
        const Eigen::Index tail = n - 1 - k;
        if (tail > 0) rhs.noalias() -= Y.rightCols(tail) * T.row(k).tail(tail).adjoint();
        upper.diagonal() = base.array() + std::conj(T(k, k));
        Y.col(k) = upper.triangularView<Eigen::Upper>().solve(rhs);
    }
    return Y;
}

MatrixXd symmetrized(const MatrixXd& X) { return 0.5 * (X + X.transpose()); }

}  // namespace

LyapSolution solve_lyapunov(const MatrixXd& A, const SchurForm& s, const MatrixXd& Q) {
    if (Q.rows() != A.rows() || Q.cols() != A.cols()) throw ValidationError("Lyapunov rhs dimension mismatch");
    require_hurwitz(s);
    const MatrixXcd F = -(s.U.adjoint() * Q.cast<cplx>() * s.U);
    const MatrixXcd Z = solve_adjoint_triangular(s.T, F);
    LyapSolution out;
    out.X = symmetrized((s.U * Z * s.U.adjoint()).real());
    out.residual = (A.transpose() * out.X + out.X * A + Q).norm();
    return out;
}

LyapSolution solve_lyapunov(const MatrixXd& A, const MatrixXd& Q) { return solve_lyapunov(A, schur(A), Q); }

LyapSolution solve_lyapunov_dual(const MatrixXd& A, const SchurForm& s, const MatrixXd& W) {
    if (W.rows() != A.rows() || W.cols() != A.cols()) throw ValidationError("Lyapunov rhs dimension mismatch");
    require_hurwitz(s);
    const MatrixXcd F = -(s.U.adjoint() * W.cast<cplx>() * s.U);
    const MatrixXcd Y = solve_primal_triangular(s.T, F);
    LyapSolution out;
    out.X = symmetrized((s.U * Y * s.U.adjoint()).real());
    out.residual = (A * out.X + out.X * A.transpose() + W).norm();
    return out;
}

LyapSolution solve_lyapunov_dual(const MatrixXd& A, const MatrixXd& W) {
    return solve_lyapunov_dual(A, schur(A), W);
}

MatrixXd solve_lyapunov_kronecker(const MatrixXd& A, const MatrixXd& Q) {
    const Eigen::Index n = A.rows();
    if (n > 60) throw ValidationError("Kronecker Lyapunov solver is limited to n <= 60");
    const MatrixXd I = MatrixXd::Identity(n, n);
    MatrixXd op = MatrixXd::Zero(n * n, n * n);
    // vec(A^T X) = (I (x) A^T) vec X, vec(X A) = (A^T (x) I) vec X
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            op.block(i * n, j * n, n, n) += I(i, j) * A.transpose();
            op.block(i * n, j * n, n, n) += A(j, i) * I;
        }
    }
    Eigen::VectorXd rhs = -Eigen::Map<const Eigen::VectorXd>(Q.data(), n * n);
    Eigen::VectorXd x = op.fullPivLu().solve(rhs);
    return Eigen::Map<MatrixXd>(x.data(), n, n);
}

}  // namespace delayco
