#include "delayco/admm.hpp"

#include <cmath>
#include <sstream>

#include "delayco/errors.hpp"

namespace delayco {

namespace {

using Eigen::VectorXd;

VectorXd vec(const MatrixXd& X) { return Eigen::Map<const VectorXd>(X.data(), X.size()); }

MatrixXd unvec(const VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

// diag(vec S) * kron(X, R) * diag(vec T) accumulated into H
void add_masked_kron(MatrixXd& H, const MatrixXd& X, const MatrixXd& R, const VectorXd& s, const VectorXd& t,
                     double scale) {
    const Eigen::Index m = R.rows(), n = X.rows();
    for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b) {
            const double x = scale * X(a, b);
            if (x == 0.0) continue;
            for (Eigen::Index i = 0; i < m; ++i) {
                const double si = s(a * m + i);
                if (si == 0.0) continue;
                for (Eigen::Index j = 0; j < m; ++j) H(a * m + i, b * m + j) += si * x * R(i, j) * t(b * m + j);
            }
        }
}

}  // namespace

double phi1(const DesignPoint& point, const MatrixXd& U, double rho) {
    return point.J + 0.5 * rho * (point.K - U).squaredNorm();
}

KminSystem kmin_system(const DesignPoint& point, const PlantModel& plant, const StructureMasks& masks,
                       const MatrixXd& U, double rho) {
    if (!point.stable) throw PreconditionError("K-min system needs a stabilizing point");
    const auto& cl = point.cl;
    const MatrixXd LNd = point.L * cl.Nd, LNo = point.L * cl.No;
    const MatrixXd Xdd = cl.Nd.transpose() * LNd, Xoo = cl.No.transpose() * LNo;
    const MatrixXd Xdo = cl.Nd.transpose() * LNo;  // Nd^T L No
    const VectorXd dd = vec(masks.Id), dO = vec(masks.Io);
    const Eigen::Index mn = U.size();
    KminSystem sys;
    sys.H = rho * MatrixXd::Identity(mn, mn);
    add_masked_kron(sys.H, Xdd, plant.R(), dd, dd, 2.0);
    add_masked_kron(sys.H, Xdo, plant.R(), dd, dO, 2.0);
    add_masked_kron(sys.H, Xdo.transpose(), plant.R(), dO, dd, 2.0);
    add_masked_kron(sys.H, Xoo, plant.R(), dO, dO, 2.0);
    const MatrixXd BtP = cl.Bu_ext.transpose() * point.P;
    sys.mu = vec(2.0 * (BtP * LNd).cwiseProduct(masks.Id) + 2.0 * (BtP * LNo).cwiseProduct(masks.Io) + rho * U);
    return sys;
}

double kmin_stationarity(const DesignPoint& point, const PlantModel& plant, const StructureMasks& masks,
                         const MatrixXd& U, double rho, double* mu_norm) {
    const auto sys = kmin_system(point, plant, masks, U, rho);
    if (mu_norm) *mu_norm = sys.mu.norm();
    return (sys.H * vec(point.K) - sys.mu).norm();
}

KminResult kmin(const MatrixXd& K0, const MatrixXd& U, double rho, const PlantModel& plant,
                const StructureMasks& masks, const SpectralBasis& basis, double tau_o, double c,
                const KminOptions& opt) {
    if (!(rho > 0.0)) throw ValidationError("rho must be positive");
    KminResult res;
    res.K = K0;
    res.point = evaluate(plant, masks, basis, K0, tau_o, c);
    if (!res.point.stable) throw PreconditionError("K-min needs a stabilizing initial gain");
    double phi = phi1(res.point, U, rho);
    res.phi.push_back(phi);

    for (int it = 0;; ++it) {
        const auto g = gradient(res.point, plant, masks, basis);
        const MatrixXd grad = g.dJ_dK + rho * (res.K - U);
        const auto sys = kmin_system(res.point, plant, masks, U, rho);
        res.grad_norm = grad.norm();
        if (res.grad_norm <= std::min(opt.tol_rel * (1.0 + res.K.norm()), opt.tol_mu * (1.0 + sys.mu.norm()))) {
            res.converged = true;
            return res;
        }
        if (it == opt.max_iter) return res;
        const VectorXd kbar = sys.H.llt().solve(sys.mu);
        MatrixXd D = unvec(kbar, U.rows(), U.cols()) - res.K;
        double slope = grad.cwiseProduct(D).sum();
        if (!(slope < 0.0)) {
            D = -grad;
            slope = -grad.squaredNorm();
            ++res.gradient_fallbacks;
        }
        double s = 1.0;
        bool accepted = false;
        for (int h = 0; h <= opt.max_halvings && s >= opt.min_step; ++h, s *= opt.backtrack) {
            const MatrixXd Kt = res.K + s * D;
            auto pt = evaluate(plant, masks, basis, Kt, tau_o, c);
            if (!pt.stable) continue;
            const double phit = phi1(pt, U, rho);
            if (phit <= phi + opt.armijo_sigma * s * slope) {
                res.K = Kt;
                res.point = std::move(pt);
                phi = phit;
                accepted = true;
                break;
            }
        }
        res.iterations = it + 1;
        if (!accepted) {
            res.stalled = true;
            return res;
        }
        res.phi.push_back(phi);
    }
}

MatrixXd fmin(const MatrixXd& V, const MatrixXd& W, double lambda, double rho) {
    if (V.rows() != W.rows() || V.cols() != W.cols()) throw ValidationError("weights must match V");
    MatrixXd F = MatrixXd::Zero(V.rows(), V.cols());
    const double k = lambda / rho;
    for (Eigen::Index j = 0; j < V.cols(); ++j)
        for (Eigen::Index i = 0; i < V.rows(); ++i) {
            const double a = k * W(i, j), v = V(i, j);
            if (std::abs(v) > a) F(i, j) = (1.0 - a / std::abs(v)) * v;
        }
    return F;
}

MatrixXd reweight(const MatrixXd& F, double eps) {
    if (!(eps > 0.0)) throw ValidationError("reweighting epsilon must be positive");
    return (F.cwiseAbs().array() + eps).inverse().matrix();
}

AdmmState AdmmState::start(const MatrixXd& K0, double rho, double lambda) {
    AdmmState s;
    s.K = K0;
    s.F = K0;
    s.Theta = MatrixXd::Zero(K0.rows(), K0.cols());
    s.W = MatrixXd::Ones(K0.rows(), K0.cols());
    s.rho = rho;
    s.lambda = lambda;
    return s;
}

InnerResult inner_loop(AdmmState state, const PlantModel& plant, const StructureMasks& masks,
                       const SpectralBasis& basis, double tau_o, double c, const AdmmOptions& opt) {
    if (!(state.rho > 0.0) || !(state.lambda >= 0.0)) throw ValidationError("need rho > 0 and lambda >= 0");
    InnerResult out;
    const double rho = state.rho;
    const double root_mn = std::sqrt(static_cast<double>(state.K.size()));
    DesignPoint point = evaluate(plant, masks, basis, state.K, tau_o, c);
    if (!point.stable) throw PreconditionError("inner loop needs a stabilizing initial gain");

    for (int k = 0; k < opt.max_iter; ++k) {
        const MatrixXd U = state.F - state.Theta / rho;
        auto km = kmin(state.K, U, rho, plant, masks, basis, tau_o, c, opt.kmin);
        state.K = km.K;
        point = std::move(km.point);
        MatrixXd F_new = fmin(state.K + state.Theta / rho, state.W, state.lambda, rho);
        if (opt.support.size() > 0) F_new = F_new.cwiseProduct(opt.support);
        state.Theta += rho * (state.K - F_new);
        state.primal = (state.K - F_new).norm();
        state.dual = rho * (F_new - state.F).norm();
        state.F = F_new;

        AdmmIteration rec;
        rec.iter = k + 1;
        rec.primal = state.primal;
        rec.dual = state.dual;
        rec.eps_pri = root_mn * opt.eps_abs + opt.eps_rel * std::max(state.K.norm(), state.F.norm());
        rec.eps_dual = root_mn * opt.eps_abs + opt.eps_rel * state.Theta.norm();
        rec.J = point.J;
        rec.kmin_iterations = km.iterations;
        rec.kmin_stalled = km.stalled;
        for (std::size_t i = 1; i < km.phi.size(); ++i) rec.phi_monotone = rec.phi_monotone && km.phi[i] <= km.phi[i - 1];
        rec.abscissa = point.abscissa;
        rec.K = state.K;
        rec.F = state.F;
        out.history.push_back(rec);
        out.iterations = k + 1;
        out.eps_pri = rec.eps_pri;
        out.eps_dual = rec.eps_dual;
        if (state.primal <= rec.eps_pri && state.dual <= rec.eps_dual) {
            out.converged = true;
            break;
        }
    }
    out.final_primal = state.primal;

    MatrixXd Kp = state.K;
    bool changed = false;
    for (Eigen::Index j = 0; j < Kp.cols(); ++j)
        for (Eigen::Index i = 0; i < Kp.rows(); ++i)
            if (is_structural_zero(state.F(i, j)) && Kp(i, j) != 0.0) {
                Kp(i, j) = 0.0;
                changed = true;
            }
    if (changed) {
        auto pp = evaluate(plant, masks, basis, Kp, tau_o, c);
        if (pp.stable) {
            state.K = Kp;
            point = std::move(pp);
            out.projected = true;
        } else {
            out.projection_rejected = true;
        }
    }
    out.state = std::move(state);
    out.point = std::move(point);
    return out;
}

}  // namespace delayco
