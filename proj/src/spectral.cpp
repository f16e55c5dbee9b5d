#include "delayco/spectral.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "delayco/errors.hpp"

namespace delayco {

namespace {

void require_grid(int N) {
    if (N < 2) throw ValidationError("spectral grid needs N >= 2");
}

void require_ratio(double c) {
    if (!(c >= 0.0 && c <= 1.0)) {
        std::ostringstream os;
        os << "delay ratio c must lie in [0, 1] (got " << c << ")";
        throw DomainError(os.str());
    }
}

// inv_gap(i, k) = 1 / (theta_i - theta_k) on the unit grid, via the
// product-of-sines form of the cosine difference (1-based i, k in the
// formula, 0-based storage).
MatrixXd inverse_node_gaps(int N) {
    const double h = std::numbers::pi / (2.0 * (N - 1));
    MatrixXd a = MatrixXd::Zero(N, N);
    for (int i = 1; i <= N; ++i) {
        for (int k = 1; k <= N; ++k) {
            if (i == k) continue;
            a(i - 1, k - 1) = -1.0 / (std::sin((2 * N - i - k) * h) * std::sin((k - i) * h));
        }
    }
    return a;
}

}  // namespace

VectorXd chebyshev_nodes(int N, double tau_o) {
    require_grid(N);
    if (!(tau_o > 0.0)) throw ValidationError("tau_o must be positive");
    VectorXd theta(N);
    for (int k = 0; k < N; ++k)
        theta(k) = 0.5 * tau_o * (std::cos((N - k - 1) * std::numbers::pi / (N - 1)) - 1.0);
    // exact endpoints
    theta(0) = -tau_o;
    theta(N - 1) = 0.0;
    return theta;
}

namespace {

MatrixXd unit_differentiation(int N) {
    const MatrixXd a = inverse_node_gaps(N);
    MatrixXd D = MatrixXd::Zero(N, N);
    for (int i = 0; i < N - 1; ++i) {
        for (int j = 0; j < N; ++j) {
            if (i == j) {
                D(i, i) = a.row(i).sum();
                continue;
            }
            // l_j'(theta_i) = 1/(theta_j - theta_i) prod_{m != i, j} (theta_i - theta_m) / (theta_j - theta_m)
            double v = a(j, i);
            for (int m = 0; m < N; ++m)
                if (m != i && m != j) v *= a(j, m) / a(i, m);
            D(i, j) = v;
        }
    }
    return D;
}

}  // namespace

MatrixXd kron_identity(const MatrixXd& S, int n) {
    MatrixXd out = MatrixXd::Zero(S.rows() * n, S.cols() * n);
    for (Eigen::Index i = 0; i < S.rows(); ++i)
        for (Eigen::Index j = 0; j < S.cols(); ++j)
            if (S(i, j) != 0.0) out.block(i * n, j * n, n, n).diagonal().setConstant(S(i, j));
    return out;
}

MatrixXd kron_identity(const VectorXd& w, int n) { return kron_identity(MatrixXd(w), n); }

LambdaFactor build_lambda(int N, int n, const MatrixXd& A) {
    require_grid(N);
    if (A.rows() != n || A.cols() != n) throw ValidationError("A must be n x n");
    LambdaFactor f;
    f.Lambda = kron_identity(unit_differentiation(N), n);
    f.Abar = MatrixXd::Zero(N * n, N * n);
    f.Abar.bottomRightCorner(n, n) = A;
    return f;
}

MatrixXd build_gamma(int N) {
    require_grid(N);
    const VectorXd theta = chebyshev_nodes(N, 1.0);
    const MatrixXd a = inverse_node_gaps(N);
    MatrixXd G(N, N);
    for (int j = 0; j < N; ++j) {
        // ascending coefficients of prod_{m != j} a_jm (-c - theta_m)
        std::vector<double> poly{1.0};
        for (int m = 0; m < N; ++m) {
            if (m == j) continue;
            const double lin = -a(j, m);
            const double cst = -a(j, m) * theta(m);
            std::vector<double> next(poly.size() + 1, 0.0);
            for (std::size_t p = 0; p < poly.size(); ++p) {
                next[p] += cst * poly[p];
                next[p + 1] += lin * poly[p];
            }
            poly.swap(next);
        }
        for (int p = 0; p < N; ++p) G(j, N - 1 - p) = poly[p];
    }
    return G;
}

VectorXd SpectralBasis::lagrange(double x) const {
    VectorXd w(N);
    for (int j = 0; j < N; ++j) {
        double v = 1.0;
        for (int m = 0; m < N; ++m)
            if (m != j) v *= (x - unit_nodes(m)) / (unit_nodes(j) - unit_nodes(m));
        w(j) = v;
    }
    return w;
}

VectorXd SpectralBasis::nd_weights(double c) const {
    require_ratio(c);
    return lagrange(-c);
}

VectorXd SpectralBasis::nd_weights_derivative(double c) const {
    require_ratio(c);
    VectorXd dnu = VectorXd::Zero(N);
    // nu = [c^{N-1}, ..., c, 1]
    for (int p = 0; p < N - 1; ++p) {
        const int power = N - 1 - p;
        dnu(p) = power * std::pow(c, power - 1);
    }
    return gamma * dnu;
}

int AffineNd::interval_of(double c) const {
    require_ratio(c);
    const int kc = intervals();
    int i = static_cast<int>(std::floor(c * kc));
    if (i >= kc) i = kc - 1;
    // guard against rounding at breakpoints
    while (i > 0 && c < breakpoints[i]) --i;
    while (i < kc - 1 && c > breakpoints[i + 1]) ++i;
    return i;
}

VectorXd AffineNd::weights(int interval, double c) const { return chi[interval].col(0) * c + chi[interval].col(1); }

AffineNd affine_nd(const SpectralBasis& basis, int kc) {
    if (kc < 1) throw ValidationError("affine surrogate needs kc >= 1");
    AffineNd out;
    out.breakpoints.resize(kc + 1);
    for (int i = 0; i <= kc; ++i) out.breakpoints[i] = static_cast<double>(i) / kc;
    out.breakpoints[kc] = 1.0;
    const int S = kAffineSamples;
    for (int i = 0; i < kc; ++i) {
        const double lo = out.breakpoints[i], hi = out.breakpoints[i + 1];
        VectorXd cs(S);
        MatrixXd W(S, basis.N);
        for (int s = 0; s < S; ++s) {
            cs(s) = lo + (hi - lo) * s / (S - 1);
            W.row(s) = basis.nd_weights(cs(s)).transpose();
        }
        // least squares on the design [c, 1]
        MatrixXd design(S, 2);
        design.col(0) = cs;
        design.col(1).setOnes();
        const MatrixXd coef = design.colPivHouseholderQr().solve(W);  // 2 x N
        MatrixXd chi = coef.transpose();
        double err = 0.0;
        for (int s = 0; s < S; ++s) {
            const VectorXd approx = chi.col(0) * cs(s) + chi.col(1);
            err = std::max(err, (approx - W.row(s).transpose()).norm());
        }
        out.chi.push_back(std::move(chi));
        out.interval_error.push_back(err);
        out.max_error = std::max(out.max_error, err);
    }
    return out;
}

SpectralBasis SpectralBasis::make(int N, int kc) {
    require_grid(N);
    SpectralBasis b;
    b.N = N;
    b.unit_nodes = chebyshev_nodes(N, 1.0);
    b.diff = unit_differentiation(N);
    b.gamma = build_gamma(N);
    b.affine = affine_nd(b, kc);
    return b;
}

MatrixXd nd_of_c(const SpectralBasis& basis, double c, int n) { return kron_identity(basis.nd_weights(c), n); }

ClosedLoopRealization assemble_closed_loop(const PlantModel& plant, const StructureMasks& masks, const MatrixXd& K,
                                           double tau_o, double c, const SpectralBasis& basis, bool use_affine_nd) {
    const int n = plant.n(), m = plant.m(), N = basis.N;
    if (K.rows() != m || K.cols() != n) throw ValidationError("K must be m x n");
    if (masks.Id.rows() != m || masks.Id.cols() != n) throw ValidationError("mask dimension mismatch");
    if (!(tau_o > 0.0)) throw DomainError("tau_o must be positive");
    require_ratio(c);

    ClosedLoopRealization cl;
    cl.tau_o = tau_o;
    cl.c = c;
    const int d = N * n;
    cl.Lambda = kron_identity(basis.diff, n);
    cl.A_tilde = cl.Lambda / tau_o;
    cl.A_tilde.bottomRightCorner(n, n) += plant.A();

    cl.M = MatrixXd::Zero(d, n);
    cl.M.bottomRows(n).setIdentity();
    cl.No = MatrixXd::Zero(d, n);
    cl.No.topRows(n).setIdentity();
    if (use_affine_nd) {
        const auto& aff = basis.affine;
        cl.Nd = kron_identity(aff.weights(aff.interval_of(c), c), n);
    } else {
        cl.Nd = nd_of_c(basis, c, n);
    }

    cl.Kd = K.cwiseProduct(masks.Id);
    cl.Ko = K.cwiseProduct(masks.Io);
    cl.Bu_ext = cl.M * plant.B();
    cl.Bw_ext = cl.M * plant.Bw();
    cl.Ctilde = cl.Kd * cl.Nd.transpose() + cl.Ko * cl.No.transpose();
    cl.A_cl = cl.A_tilde - cl.Bu_ext * cl.Ctilde;

    cl.C_ext = MatrixXd::Zero(n + m, d);
    cl.C_ext.topRows(n) = plant.Q_sqrt() * cl.M.transpose();
    cl.C_ext.bottomRows(m) = -plant.R_sqrt() * cl.Ctilde;
    return cl;
}

}  // namespace delayco
