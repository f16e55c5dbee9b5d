#include "delayco/conic.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "delayco/errors.hpp"

namespace delayco {

// ---------------------------------------------------------------- building

AffineMatrix::AffineMatrix(int r, int c) : rows(r), cols(c), E0(MatrixXd::Zero(r, c)) {}

AffineMatrix& AffineMatrix::constant(const MatrixXd& E) {
    if (E.rows() != rows || E.cols() != cols) throw ValidationError("affine constant has the wrong shape");
    E0 += E;
    return *this;
}

AffineMatrix& AffineMatrix::term(int var, const MatrixXd& L, const MatrixXd& R, double weight) {
    if (L.rows() != rows || R.cols() != cols) throw ValidationError("affine term has the wrong shape");
    mats.push_back({var, L, R, weight});
    return *this;
}

AffineMatrix& AffineMatrix::scalar(int var, const MatrixXd& E) {
    if (E.rows() != rows || E.cols() != cols) throw ValidationError("affine scalar term has the wrong shape");
    scals.push_back({var, E});
    return *this;
}

int ConicProgram::add_variable(Variable v) {
    v.offset = nvar_;
    nvar_ += static_cast<int>(v.basis.size());
    c_.conservativeResize(nvar_);
    c_.tail(static_cast<Eigen::Index>(v.basis.size())).setZero();
    vars_.push_back(std::move(v));
    return static_cast<int>(vars_.size()) - 1;
}

int ConicProgram::add_scalar(std::string name) {
    return add_variable(Variable{std::move(name), Kind::Scalar, 1, 1, 0, {{0, 0}}});
}

int ConicProgram::add_matrix(std::string name, int rows, int cols, const MatrixXd& mask) {
    if (rows <= 0 || cols <= 0) throw ValidationError("matrix variable needs positive dimensions");
    if (mask.size() != 0 && (mask.rows() != rows || mask.cols() != cols)) throw ValidationError("mask shape mismatch");
    Variable v{std::move(name), Kind::Matrix, rows, cols, 0, {}};
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i)
            if (mask.size() == 0 || mask(i, j) != 0.0) v.basis.emplace_back(i, j);
    return add_variable(std::move(v));
}

int ConicProgram::add_symmetric(std::string name, int dim) {
    if (dim <= 0) throw ValidationError("symmetric variable needs a positive dimension");
    Variable v{std::move(name), Kind::Symmetric, dim, dim, 0, {}};
    for (int j = 0; j < dim; ++j)
        for (int i = 0; i <= j; ++i) v.basis.emplace_back(i, j);
    return add_variable(std::move(v));
}

const ConicProgram::Variable& ConicProgram::checked(int var, bool scalar) const {
    if (var < 0 || var >= static_cast<int>(vars_.size())) throw ValidationError("unknown variable id");
    const auto& v = vars_[var];
    if (scalar != (v.kind == Kind::Scalar))
        throw ValidationError("variable '" + v.name + (scalar ? "' is not a scalar" : "' is a scalar"));
    return v;
}

void ConicProgram::check_block(int block) const {
    if (block < 0 || block >= static_cast<int>(blocks_.size())) throw ValidationError("unknown block id");
}

int ConicProgram::add_block(int dim) {
    if (dim <= 0) throw ValidationError("PSD block needs a positive dimension");
    blocks_.push_back(Block{dim, MatrixXd::Zero(dim, dim), {}, {}});
    return static_cast<int>(blocks_.size()) - 1;
}

void ConicProgram::block_constant(int block, const MatrixXd& S) {
    check_block(block);
    auto& b = blocks_[block];
    if (S.rows() != b.dim || S.cols() != b.dim) throw ValidationError("block constant has the wrong shape");
    b.F0 += 0.5 * (S + S.transpose());
}

void ConicProgram::block_scalar(int block, int var, const MatrixXd& C) {
    check_block(block);
    checked(var, true);
    auto& b = blocks_[block];
    if (C.rows() != b.dim || C.cols() != b.dim) throw ValidationError("block coefficient has the wrong shape");
    const MatrixXd S = 0.5 * (C + C.transpose());
    for (auto& [v, M] : b.scalars)
        if (v == var) {
            M += S;
            return;
        }
    b.scalars.emplace_back(var, S);
}

void ConicProgram::block_term(int block, int var, const MatrixXd& L, const MatrixXd& R, double weight) {
    check_block(block);
    const auto& v = checked(var, false);
    auto& b = blocks_[block];
    if (L.rows() != b.dim || L.cols() != v.rows || R.rows() != v.cols || R.cols() != b.dim)
        throw ValidationError("block term for '" + v.name + "' has the wrong shape");
    if (weight == 0.0) return;
    b.terms.push_back(MatrixTerm{var, L, R, weight});
}

void ConicProgram::add_inequality(const std::vector<std::pair<int, double>>& coefs, double constant) {
    Row r{constant, {}};
    for (auto [var, a] : coefs) {
        const auto& v = checked(var, true);
        if (a != 0.0) r.coefs.emplace_back(v.offset, a);
    }
    lp_.push_back(std::move(r));
}

void ConicProgram::objective_scalar(int var, double coef) { c_(checked(var, true).offset) += coef; }

void ConicProgram::objective_matrix(int var, const MatrixXd& C) {
    const auto& v = checked(var, false);
    if (C.rows() != v.rows || C.cols() != v.cols) throw ValidationError("objective matrix has the wrong shape");
    for (std::size_t e = 0; e < v.basis.size(); ++e) {
        const auto [a, b] = v.basis[e];
        double coef = C(a, b);
        if (v.kind == Kind::Symmetric && a != b) coef += C(b, a);
        c_(v.offset + static_cast<int>(e)) += coef;
    }
}

double ConicProgram::scalar_value(const VectorXd& x, int var) const { return x(checked(var, true).offset); }

MatrixXd ConicProgram::matrix_value(const VectorXd& x, int var) const {
    const auto& v = checked(var, false);
    MatrixXd X = MatrixXd::Zero(v.rows, v.cols);
    for (std::size_t e = 0; e < v.basis.size(); ++e) {
        const auto [a, b] = v.basis[e];
        X(a, b) = x(v.offset + static_cast<int>(e));
        if (v.kind == Kind::Symmetric) X(b, a) = X(a, b);
    }
    return X;
}

MatrixXd ConicProgram::block_value(int block, const VectorXd& x) const {
    check_block(block);
    const auto& b = blocks_[block];
    MatrixXd F = b.F0;
    for (const auto& [var, C] : b.scalars) F += x(vars_[var].offset) * C;
    for (const auto& t : b.terms) {
        const MatrixXd T = t.weight * (t.L * matrix_value(x, t.var) * t.R);
        F += T + T.transpose();
    }
    return F;
}

double ConicProgram::inequality_value(int row, const VectorXd& x) const {
    const auto& r = lp_.at(row);
    double v = r.constant;
    for (auto [g, a] : r.coefs) v += a * x(g);
    return v;
}

double ConicProgram::objective_value(const VectorXd& x) const { return c_.dot(x) + obj_const_; }

bool verify_feasible(const ConicProgram& program, const VectorXd& x, double* worst) {
    double w = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < program.block_count(); ++j) {
        const MatrixXd F = program.block_value(j, x);
        const double lmin = Eigen::SelfAdjointEigenSolver<MatrixXd>(F, Eigen::EigenvaluesOnly).eigenvalues()(0);
        w = std::max(w, -lmin / (1e-7 * (1.0 + F.norm())));
    }
    for (int r = 0; r < program.inequality_count(); ++r) w = std::max(w, -program.inequality_value(r, x) / 1e-8);
    if (worst) *worst = w;
    return w <= 1.0;
}

const char* to_string(ConicSolution::Status s) {
    switch (s) {
        case ConicSolution::Status::Optimal: return "optimal";
        case ConicSolution::Status::Infeasible: return "infeasible";
        case ConicSolution::Status::MaxIter: return "max_iter";
    }
    return "unknown";
}

// ----------------------------------------------------------------- solver

class ConicSolver {
public:
    ConicSolver(const ConicProgram& p, double tol, int max_iter);
    ConicSolution run();

private:
    using Block = ConicProgram::Block;
    using Variable = ConicProgram::Variable;

    struct Scaling {
        MatrixXd W, G, Ginv, Lx;
        VectorXd v;  // eigenvalues of the scaled point
    };

    // forward map F(y) (without F0) and its adjoint
    MatrixXd apply(const Block& b, const VectorXd& y) const;
    void adjoint(const Block& b, const MatrixXd& Y, VectorXd& out) const;
    VectorXd lp_apply(const VectorXd& y) const;
    void lp_adjoint(const VectorXd& u, VectorXd& out) const;

    void add_schur_block(const Block& b, const MatrixXd& W, MatrixXd& M) const;
    static bool nt_scaling(const MatrixXd& X, const MatrixXd& Z, Scaling& s);
    static double max_step(const MatrixXd& X, const MatrixXd& dX);

    const ConicProgram& prog_;
    double tol_;
    int max_iter_;
    std::vector<Block> blocks_;  // scaled copies
    std::vector<ConicProgram::Row> lp_;
    VectorXd c_;
    double c_scale_ = 1.0;
    int nvar_;
};

ConicSolver::ConicSolver(const ConicProgram& p, double tol, int max_iter)
    : prog_(p), tol_(tol), max_iter_(max_iter), nvar_(p.nvar_) {
    // normalize every block and row to unit data scale; feasibility and x are unchanged
    for (const auto& b : p.blocks_) {
        double s = std::max(1.0, b.F0.norm());
        for (const auto& [v, C] : b.scalars) s = std::max(s, C.norm());
        for (const auto& t : b.terms) s = std::max(s, std::abs(t.weight) * t.L.norm() * t.R.norm());
        Block nb = b;
        nb.F0 /= s;
        for (auto& [v, C] : nb.scalars) C /= s;
        for (auto& t : nb.terms) t.weight /= s;
        blocks_.push_back(std::move(nb));
    }
    for (const auto& r : p.lp_) {
        double s = std::max(1.0, std::abs(r.constant));
        for (auto [g, a] : r.coefs) s = std::max(s, std::abs(a));
        ConicProgram::Row nr = r;
        nr.constant /= s;
        for (auto& [g, a] : nr.coefs) a /= s;
        lp_.push_back(std::move(nr));
    }
    c_scale_ = std::max(1.0, p.c_.norm());
    c_ = p.c_ / c_scale_;
}

MatrixXd ConicSolver::apply(const Block& b, const VectorXd& y) const {
    MatrixXd F = MatrixXd::Zero(b.dim, b.dim);
    for (const auto& [var, C] : b.scalars) F += y(prog_.vars_[var].offset) * C;
    for (const auto& t : b.terms) {
        const MatrixXd T = t.weight * (t.L * prog_.matrix_value(y, t.var) * t.R);
        F += T + T.transpose();
    }
    return F;
}

void ConicSolver::adjoint(const Block& b, const MatrixXd& Y, VectorXd& out) const {
    for (const auto& [var, C] : b.scalars) out(prog_.vars_[var].offset) += C.cwiseProduct(Y).sum();
    for (const auto& t : b.terms) {
        const Variable& v = prog_.vars_[t.var];
        const MatrixXd T = 2.0 * t.weight * (t.L.transpose() * Y * t.R.transpose());
        const bool sym = v.kind == ConicProgram::Kind::Symmetric;
        for (std::size_t e = 0; e < v.basis.size(); ++e) {
            const auto [a, c] = v.basis[e];
            double val = T(a, c);
            if (sym && a != c) val += T(c, a);
            out(v.offset + static_cast<int>(e)) += val;
        }
    }
}

VectorXd ConicSolver::lp_apply(const VectorXd& y) const {
    VectorXd g(lp_.size());
    for (std::size_t r = 0; r < lp_.size(); ++r) {
        double v = 0.0;
        for (auto [i, a] : lp_[r].coefs) v += a * y(i);
        g(static_cast<Eigen::Index>(r)) = v;
    }
    return g;
}

void ConicSolver::lp_adjoint(const VectorXd& u, VectorXd& out) const {
    for (std::size_t r = 0; r < lp_.size(); ++r)
        for (auto [i, a] : lp_[r].coefs) out(i) += a * u(static_cast<Eigen::Index>(r));
}

namespace {

// Expansion of a basis element into matrix entries: one entry, or the
// mirrored pair of an off-diagonal symmetric element.
struct Expansion {
    int n;
    int a[2], b[2];
};

inline Expansion expand(const std::pair<int, int>& e, bool sym) {
    Expansion x{1, {e.first, 0}, {e.second, 0}};
    if (sym && e.first != e.second) {
        x.n = 2;
        x.a[1] = e.second;
        x.b[1] = e.first;
    }
    return x;
}

}  // namespace

void ConicSolver::add_schur_block(const Block& b, const MatrixXd& W, MatrixXd& M) const {
    const auto& vars = prog_.vars_;
    const std::size_t nt = b.terms.size();
    std::vector<MatrixXd> WL(nt), WRt(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        WL[t] = W * b.terms[t].L;
        WRt[t] = W * b.terms[t].R.transpose();
    }
    for (std::size_t t = 0; t < nt; ++t) {
        const auto& T1 = b.terms[t];
        const Variable& v1 = vars[T1.var];
        const bool s1 = v1.kind == ConicProgram::Kind::Symmetric;
        const int n1 = static_cast<int>(v1.basis.size());
        std::vector<Expansion> x1(n1);
        for (int e = 0; e < n1; ++e) x1[e] = expand(v1.basis[e], s1);
        for (std::size_t u = t; u < nt; ++u) {
            const auto& T2 = b.terms[u];
            const Variable& v2 = vars[T2.var];
            const bool s2 = v2.kind == ConicProgram::Kind::Symmetric;
            const int n2 = static_cast<int>(v2.basis.size());
            const MatrixXd LL = T1.L.transpose() * WL[u];
            const MatrixXd RR = T1.R * WRt[u];
            const MatrixXd LR = T1.L.transpose() * WRt[u];
            const MatrixXd RL = T1.R * WL[u];
            const double scale = 2.0 * T1.weight * T2.weight;
            std::vector<Expansion> x2(n2);
            for (int e = 0; e < n2; ++e) x2[e] = expand(v2.basis[e], s2);
            for (int e = 0; e < n1; ++e) {
                const Expansion& p = x1[e];
                const int row = v1.offset + e;
                const int start = (u == t) ? e : 0;
                for (int f = start; f < n2; ++f) {
                    const Expansion& q = x2[f];
                    double val = 0.0;
                    for (int i = 0; i < p.n; ++i)
                        for (int k = 0; k < q.n; ++k)
                            val += LL(p.a[i], q.a[k]) * RR(p.b[i], q.b[k]) + LR(p.a[i], q.b[k]) * RL(p.b[i], q.a[k]);
                    val *= scale;
                    const int col = v2.offset + f;
                    M(row, col) += val;
                    if (u != t || f != e) M(col, row) += val;
                }
            }
        }
    }
    for (std::size_t s = 0; s < b.scalars.size(); ++s) {
        const int gs = vars[b.scalars[s].first].offset;
        const MatrixXd Y = W * b.scalars[s].second * W;
        VectorXd col = VectorXd::Zero(nvar_);
        adjoint(b, Y, col);
        // column gs of M gets <F_i, W C_s W> for every variable i in this block
        for (const auto& [var, C] : b.scalars) {
            const int g = vars[var].offset;
            M(g, gs) += col(g);
        }
        // mirrored entries for matrix variables
        std::vector<char> seen(vars.size(), 0);
        for (const auto& t : b.terms) {
            if (seen[t.var]) continue;
            seen[t.var] = 1;
            const Variable& v = vars[t.var];
            for (std::size_t e = 0; e < v.basis.size(); ++e) {
                const int g = v.offset + static_cast<int>(e);
                M(g, gs) += col(g);
                M(gs, g) += col(g);
            }
        }
    }
}

bool ConicSolver::nt_scaling(const MatrixXd& X, const MatrixXd& Z, Scaling& s) {
    Eigen::LLT<MatrixXd> lx(X);
    if (lx.info() != Eigen::Success) return false;
    s.Lx = lx.matrixL();
    const MatrixXd LtZL = s.Lx.transpose() * Z * s.Lx;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (LtZL + LtZL.transpose()));
    if (!(es.eigenvalues()(0) > 0.0)) return false;
    const VectorXd& ev = es.eigenvalues();
    s.v = ev.cwiseSqrt();
    const VectorXd isq = s.v.cwiseSqrt().cwiseInverse();
    s.G = s.Lx * es.eigenvectors() * isq.asDiagonal();
    s.W = s.G * s.G.transpose();
    // G^{-1} = D^{1/2} U^T Lx^{-1}
    const MatrixXd LxInv = s.Lx.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(X.rows(), X.rows()));
    s.Ginv = s.v.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose() * LxInv;
    return true;
}

double ConicSolver::max_step(const MatrixXd& X, const MatrixXd& dX) {
    Eigen::LLT<MatrixXd> l(X);
    if (l.info() != Eigen::Success) return 0.0;
    const auto L = l.matrixL();
    MatrixXd T = L.solve(dX);
    T = L.solve(T.transpose()).transpose();
    const double lmin =
        Eigen::SelfAdjointEigenSolver<MatrixXd>(0.5 * (T + T.transpose()), Eigen::EigenvaluesOnly).eigenvalues()(0);
    return lmin < 0.0 ? -1.0 / lmin : std::numeric_limits<double>::infinity();
}

ConicSolution ConicSolver::run() {
    const std::size_t nb = blocks_.size();
    const Eigen::Index nl = static_cast<Eigen::Index>(lp_.size());
    ConicSolution sol;
    sol.x = VectorXd::Zero(nvar_);
    if (nvar_ == 0) throw ValidationError("conic program has no variables");

    double total = static_cast<double>(nl);
    for (const auto& b : blocks_) total += b.dim;
    if (total == 0) throw ValidationError("conic program has no constraints");

    // starting point in the spirit of SDPT3's default
    std::vector<MatrixXd> X(nb), Z(nb);
    for (std::size_t j = 0; j < nb; ++j) {
        const auto& b = blocks_[j];
        const double d = b.dim;
        double fmax = 0.0;
        for (const auto& [v, C] : b.scalars) fmax = std::max(fmax, C.norm());
        for (const auto& t : b.terms) fmax = std::max(fmax, 2.0 * std::abs(t.weight) * t.L.norm() * t.R.norm());
        const double xi = std::max({10.0, std::sqrt(d), d * (1.0 + c_.cwiseAbs().maxCoeff()) / (1.0 + fmax)});
        const double eta = std::max({10.0, std::sqrt(d), fmax, b.F0.norm()});
        X[j] = xi * MatrixXd::Identity(b.dim, b.dim);
        Z[j] = eta * MatrixXd::Identity(b.dim, b.dim);
    }
    VectorXd xl = VectorXd::Constant(nl, 10.0), zl = VectorXd::Constant(nl, 10.0);
    VectorXd y = VectorXd::Zero(nvar_);

    double F0norm = 0.0;
    for (const auto& b : blocks_) F0norm += b.F0.squaredNorm();
    VectorXd g0(nl);
    for (Eigen::Index r = 0; r < nl; ++r) g0(r) = lp_[r].constant;
    F0norm = std::sqrt(F0norm + g0.squaredNorm());

    MatrixXd M(nvar_, nvar_);
    double best_merit = std::numeric_limits<double>::infinity();
    VectorXd best_y = y;

    for (int it = 0; it <= max_iter_; ++it) {
        // residuals: rp = <F, X> - c, Rd = F0 + F(y) - Z
        VectorXd rp = -c_;
        std::vector<MatrixXd> Rd(nb);
        double xz = 0.0, pobj = 0.0, dinf = 0.0;
        for (std::size_t j = 0; j < nb; ++j) {
            adjoint(blocks_[j], X[j], rp);
            Rd[j] = blocks_[j].F0 + apply(blocks_[j], y) - Z[j];
            xz += X[j].cwiseProduct(Z[j]).sum();
            pobj += blocks_[j].F0.cwiseProduct(X[j]).sum();
            dinf += Rd[j].squaredNorm();
        }
        lp_adjoint(xl, rp);
        const VectorXd rdl = g0 + lp_apply(y) - zl;
        xz += xl.dot(zl);
        pobj += g0.dot(xl);
        dinf = std::sqrt(dinf + rdl.squaredNorm());
        const double dobj = -c_.dot(y);
        const double mu = xz / total;
        const double gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));
        const double pinf_rel = rp.norm() / (1.0 + c_.norm());
        const double dinf_rel = dinf / (1.0 + F0norm);

        sol.iterations = it;
        sol.gap = gap;
        sol.primal_infeasibility = pinf_rel;
        sol.dual_infeasibility = dinf_rel;
        const double merit = std::max({gap, pinf_rel, dinf_rel});
        if (dinf_rel <= 10 * tol_ && merit < best_merit) {
            best_merit = merit;
            best_y = y;
        }
        if (gap <= tol_ && pinf_rel <= tol_ && dinf_rel <= tol_) {
            sol.status = ConicSolution::Status::Optimal;
            best_y = y;
            break;
        }
        // certificate that no x makes every block PSD: X >= 0, <F_i, X> = 0, <F0, X> < 0
        {
            VectorXd ax = VectorXd::Zero(nvar_);
            for (std::size_t j = 0; j < nb; ++j) adjoint(blocks_[j], X[j], ax);
            lp_adjoint(xl, ax);
            double xnorm = xl.norm();
            for (const auto& Xj : X) xnorm = std::max(xnorm, Xj.norm());
            if (pobj < 0.0 && ax.norm() <= 1e-8 * std::abs(pobj) && std::abs(pobj) > 1e-10 * xnorm &&
                xnorm > 1e8) {
                sol.status = ConicSolution::Status::Infeasible;
                break;
            }
            if (xnorm > 1e14) {
                sol.status = ConicSolution::Status::Infeasible;
                break;
            }
        }
        if (it == max_iter_) break;

        // scaling and Schur complement
        // iterates this close to the boundary carry no more progress
        std::vector<Scaling> sc(nb);
        bool interior = true;
        for (std::size_t j = 0; j < nb && interior; ++j) interior = nt_scaling(X[j], Z[j], sc[j]);
        if (!interior) {
            // stalled: accept when every measure is within a factor 100 of tol
            if (gap <= 100 * tol_ && pinf_rel <= 100 * tol_ && dinf_rel <= 100 * tol_) {
                sol.status = ConicSolution::Status::Optimal;
                best_y = y;
            }
            break;
        }
        M.setZero();
        for (std::size_t j = 0; j < nb; ++j) add_schur_block(blocks_[j], sc[j].W, M);
        const VectorXd wl = xl.cwiseQuotient(zl);
        const VectorXd vl = (xl.cwiseProduct(zl)).cwiseSqrt();
        for (Eigen::Index r = 0; r < nl; ++r)
            for (auto [i, a] : lp_[r].coefs)
                for (auto [k, b2] : lp_[r].coefs) M(i, k) += wl(r) * a * b2;

        const double diag_max = M.diagonal().cwiseAbs().maxCoeff();
        M.diagonal().array() += 1e-14 * std::max(1.0, diag_max);
        Eigen::LLT<MatrixXd> chol(M);
        Eigen::LDLT<MatrixXd> ldlt;
        const bool use_llt = chol.info() == Eigen::Success;
        if (!use_llt) ldlt.compute(M);

        auto direction = [&](const std::vector<MatrixXd>& Rc, const VectorXd& rcl, VectorXd& dy,
                             std::vector<MatrixXd>& dX, std::vector<MatrixXd>& dZ, VectorXd& dxl, VectorXd& dzl) {
            VectorXd rhs = rp;
            for (std::size_t j = 0; j < nb; ++j)
                adjoint(blocks_[j], Rc[j] - sc[j].W * Rd[j] * sc[j].W, rhs);
            lp_adjoint(rcl - wl.cwiseProduct(rdl), rhs);
            dy = use_llt ? VectorXd(chol.solve(rhs)) : VectorXd(ldlt.solve(rhs));
            for (std::size_t j = 0; j < nb; ++j) {
                dZ[j] = Rd[j] + apply(blocks_[j], dy);
                dX[j] = Rc[j] - sc[j].W * dZ[j] * sc[j].W;
                dX[j] = 0.5 * (dX[j] + dX[j].transpose());
            }
            dzl = rdl + lp_apply(dy);
            dxl = rcl - wl.cwiseProduct(dzl);
        };
        auto steps = [&](const std::vector<MatrixXd>& dX, const std::vector<MatrixXd>& dZ, const VectorXd& dxl,
                         const VectorXd& dzl, double& ap, double& ad) {
            ap = std::numeric_limits<double>::infinity();
            ad = ap;
            for (std::size_t j = 0; j < nb; ++j) {
                ap = std::min(ap, max_step(X[j], dX[j]));
                ad = std::min(ad, max_step(Z[j], dZ[j]));
            }
            for (Eigen::Index r = 0; r < nl; ++r) {
                if (dxl(r) < 0) ap = std::min(ap, -xl(r) / dxl(r));
                if (dzl(r) < 0) ad = std::min(ad, -zl(r) / dzl(r));
            }
        };

        // predictor: Rc = -X
        std::vector<MatrixXd> Rc(nb), dX(nb), dZ(nb);
        for (std::size_t j = 0; j < nb; ++j) Rc[j] = -X[j];
        VectorXd rcl = -xl;
        VectorXd dy, dxl, dzl;
        direction(Rc, rcl, dy, dX, dZ, dxl, dzl);
        double ap, ad;
        steps(dX, dZ, dxl, dzl, ap, ad);
        ap = std::min(1.0, ap);
        ad = std::min(1.0, ad);
        double xz_aff = 0.0;
        for (std::size_t j = 0; j < nb; ++j) xz_aff += (X[j] + ap * dX[j]).cwiseProduct(Z[j] + ad * dZ[j]).sum();
        xz_aff += (xl + ap * dxl).dot(zl + ad * dzl);
        const double expo = std::max(1.0, 3.0 * std::min(ap, ad) * std::min(ap, ad));
        const double sigma = std::min(1.0, std::pow(std::max(0.0, xz_aff / xz), expo));

        // corrector in the scaled space
        for (std::size_t j = 0; j < nb; ++j) {
            const auto& s = sc[j];
            const MatrixXd dXs = s.Ginv * dX[j] * s.Ginv.transpose();
            const MatrixXd dZs = s.G.transpose() * dZ[j] * s.G;
            MatrixXd rhs = -0.5 * (dXs * dZs + dZs.transpose() * dXs.transpose());
            rhs.diagonal().array() += sigma * mu;
            rhs.diagonal() -= s.v.cwiseProduct(s.v);
            for (Eigen::Index a = 0; a < rhs.rows(); ++a)
                for (Eigen::Index b = 0; b < rhs.cols(); ++b) rhs(a, b) *= 2.0 / (s.v(a) + s.v(b));
            Rc[j] = s.G * rhs * s.G.transpose();
        }
        {
            const VectorXd sx = dxl.cwiseQuotient(wl.cwiseSqrt());
            const VectorXd sz = dzl.cwiseProduct(wl.cwiseSqrt());
            VectorXd rhs = VectorXd::Constant(nl, sigma * mu) - vl.cwiseProduct(vl) - sx.cwiseProduct(sz);
            rcl = wl.cwiseSqrt().cwiseProduct(rhs.cwiseQuotient(vl));
        }
        direction(Rc, rcl, dy, dX, dZ, dxl, dzl);
        steps(dX, dZ, dxl, dzl, ap, ad);
        const double gamma = 0.9 + 0.09 * std::min({1.0, ap, ad});
        ap = std::min(1.0, gamma * ap);
        ad = std::min(1.0, gamma * ad);
        for (std::size_t j = 0; j < nb; ++j) {
            X[j] += ap * dX[j];
            Z[j] += ad * dZ[j];
            X[j] = 0.5 * (X[j] + X[j].transpose());
            Z[j] = 0.5 * (Z[j] + Z[j].transpose());
        }
        xl += ap * dxl;
        zl += ad * dzl;
        y += ad * dy;
    }

    sol.x = (sol.status == ConicSolution::Status::Optimal) ? y : best_y;
    sol.objective = prog_.objective_value(sol.x);
    sol.verified = verify_feasible(prog_, sol.x, &sol.worst_violation);
    return sol;
}

ConicSolution solve(const ConicProgram& program, double tol, int max_iter) {
    if (!(tol > 0.0) || max_iter < 1) throw ValidationError("solver needs tol > 0 and max_iter >= 1");
    return ConicSolver(program, tol, max_iter).run();
}

// ------------------------------------------------------------ constraint shapes

namespace {

// Places E (p x q) into the off-diagonal corner of a (p + q) block.
void place_offdiag(ConicProgram& prog, int block, const AffineMatrix& E) {
    const int p = E.rows, q = E.cols, d = p + q;
    MatrixXd F0 = MatrixXd::Zero(d, d);
    F0.topRightCorner(p, q) = E.E0;
    F0.bottomLeftCorner(q, p) = E.E0.transpose();
    prog.block_constant(block, F0);
    for (const auto& s : E.scals) {
        MatrixXd C = MatrixXd::Zero(d, d);
        C.topRightCorner(p, q) = s.E;
        C.bottomLeftCorner(q, p) = s.E.transpose();
        prog.block_scalar(block, s.var, C);
    }
    for (const auto& t : E.mats) {
        MatrixXd L = MatrixXd::Zero(d, t.L.cols());
        L.topRows(p) = t.L;
        MatrixXd R = MatrixXd::Zero(t.R.rows(), d);
        R.rightCols(q) = t.R;
        prog.block_term(block, t.var, L, R, t.weight);
    }
}

}  // namespace

void add_norm_bound(ConicProgram& prog, const AffineMatrix& E, int t) {
    const int d = E.rows + E.cols;
    const int b = prog.add_block(d);
    place_offdiag(prog, b, E);
    prog.block_scalar(b, t, MatrixXd::Identity(d, d));
}

void add_norm_squared_bound(ConicProgram& prog, const AffineMatrix& E, int s) {
    const int p = E.rows, q = E.cols, d = p + q;
    const int b = prog.add_block(d);
    place_offdiag(prog, b, E);
    MatrixXd I = MatrixXd::Zero(d, d);
    I.topLeftCorner(p, p).setIdentity();
    prog.block_constant(b, I);
    MatrixXd S = MatrixXd::Zero(d, d);
    S.bottomRightCorner(q, q).setIdentity();
    prog.block_scalar(b, s, S);
}

void add_frobenius_squared_bound(ConicProgram& prog, const AffineMatrix& E, int q, double scale) {
    if (!(scale > 0.0)) throw ValidationError("Frobenius bound needs a positive scale");
    const int p = E.rows, c = E.cols, nv = p * c, d = nv + 1;
    const int b = prog.add_block(d);
    MatrixXd F0 = MatrixXd::Zero(d, d);
    F0.topLeftCorner(nv, nv) = MatrixXd::Identity(nv, nv) / scale;
    const Eigen::Map<const VectorXd> e0(E.E0.data(), nv);
    F0.block(0, nv, nv, 1) = e0;
    F0.block(nv, 0, 1, nv) = e0.transpose();
    prog.block_constant(b, F0);
    MatrixXd Cq = MatrixXd::Zero(d, d);
    Cq(nv, nv) = 1.0;
    prog.block_scalar(b, q, Cq);
    for (const auto& s : E.scals) {
        MatrixXd C = MatrixXd::Zero(d, d);
        const Eigen::Map<const VectorXd> es(s.E.data(), nv);
        C.block(0, nv, nv, 1) = es;
        C.block(nv, 0, 1, nv) = es.transpose();
        prog.block_scalar(b, s.var, C);
    }
    // column j of L X R sits in rows j p .. j p + p - 1 of the last column
    for (const auto& t : E.mats) {
        for (int j = 0; j < c; ++j) {
            if (t.R.col(j).isZero(0.0)) continue;
            MatrixXd L = MatrixXd::Zero(d, t.L.cols());
            L.middleRows(j * p, p) = t.L;
            MatrixXd R = MatrixXd::Zero(t.R.rows(), d);
            R.col(nv) = t.R.col(j);
            prog.block_term(b, t.var, L, R, t.weight);
        }
    }
}

std::vector<int> add_norm_sum_bound(ConicProgram& prog, int t, const std::vector<double>& coefs,
                                    const std::vector<AffineMatrix>& norms, const AffineMatrix* square) {
    if (coefs.size() != norms.size()) throw ValidationError("one coefficient per norm term");
    std::vector<int> aux;
    std::vector<std::pair<int, double>> row{{t, 1.0}};
    for (std::size_t i = 0; i < norms.size(); ++i) {
        if (coefs[i] < 0.0) throw ValidationError("norm coefficients must be non-negative");
        const int v = prog.add_scalar("norm_aux");
        add_norm_bound(prog, norms[i], v);
        row.emplace_back(v, -coefs[i]);
        aux.push_back(v);
    }
    if (square) {
        const int v = prog.add_scalar("square_aux");
        add_norm_squared_bound(prog, *square, v);
        row.emplace_back(v, -1.0);
        aux.push_back(v);
    }
    prog.add_inequality(row, 0.0);
    return aux;
}

}  // namespace delayco
