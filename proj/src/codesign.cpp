#include "delayco/codesign.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

#include "delayco/errors.hpp"
#include "delayco/lyap.hpp"

namespace delayco {

namespace {

double lan_price(const BandwidthModel& bw, const BlockCounts& k) { return 2.0 * bw.m_cp * k.lan_links(); }
double sdn_price(const BandwidthModel& bw, const BlockCounts& k) { return bw.m_cc * k.off; }

double lambda_max(const MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

double lambda_min(const MatrixXd& S) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (S + S.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

double spectral_norm(const MatrixXd& E) {
    if (E.size() == 0) return 0.0;
    Eigen::JacobiSVD<MatrixXd> svd(E);
    return svd.singularValues()(0);
}

bool has_entries(const MatrixXd& mask) { return (mask.array() != 0.0).any(); }

void require_base(const DesignPoint& base) {
    if (!base.stable) throw PreconditionError("outer step needs a stable base point");
    if (!(base.lyap_residual <= 1e-8)) {
        std::ostringstream os;
        os << "base point Lyapunov residual " << base.lyap_residual << " exceeds 1e-8";
        throw PreconditionError(os.str());
    }
}

// E(dKd, dKo) = Lmat (dKd Rd + dKo Ro), skipping absent variables.
AffineMatrix gain_map(int rows, int cols, int dKd, int dKo, const MatrixXd& Lmat, const MatrixXd& Rd,
                      const MatrixXd& Ro) {
    AffineMatrix E(rows, cols);
    if (dKd >= 0) E.term(dKd, Lmat, Rd);
    if (dKo >= 0) E.term(dKo, Lmat, Ro);
    return E;
}

MatrixXd value_or_zero(const ConicProgram& p, const VectorXd& x, int var, int rows, int cols) {
    return var >= 0 ? p.matrix_value(x, var) : MatrixXd::Zero(rows, cols);
}

// Shared tail of both builders: trust region on the symmetric perturbation,
// positivity of the perturbed certificate, prox epigraph.
void add_symmetric_trust(ConicProgram& p, int dX, const MatrixXd& Xstar, double radius, double floor) {
    const int d = static_cast<int>(Xstar.rows());
    const MatrixXd I = MatrixXd::Identity(d, d);
    const int up = p.add_block(d);
    p.block_constant(up, radius * I);
    p.block_term(up, dX, I, I, -0.5);
    const int lo = p.add_block(d);
    p.block_constant(lo, radius * I);
    p.block_term(lo, dX, I, I, 0.5);
    // Xstar + dX >= floor I follows from the trust region when radius is small
    if (lambda_min(Xstar) - radius <= floor + 1e-12) {
        const int pos = p.add_block(d);
        p.block_constant(pos, Xstar - floor * I);
        p.block_term(pos, dX, I, I, 0.5);
    }
}

int add_prox(ConicProgram& p, int dKd, int dKo, const MatrixXd& Kstar, const MatrixXd& U, double rho) {
    if (!(rho > 0.0)) return -1;
    const int m = static_cast<int>(Kstar.rows()), n = static_cast<int>(Kstar.cols());
    const int q = p.add_scalar("prox");
    AffineMatrix E(m, n);
    E.constant(Kstar - U);
    const MatrixXd Im = MatrixXd::Identity(m, m), In = MatrixXd::Identity(n, n);
    if (dKd >= 0) E.term(dKd, Im, In);
    if (dKo >= 0) E.term(dKo, Im, In);
    add_frobenius_squared_bound(p, E, q, 0.5 * rho);
    p.objective_scalar(q, 1.0);
    return q;
}

void add_range(ConicProgram& p, int var, const Interval& r) {
    p.add_inequality({{var, 1.0}}, -r.lo);
    p.add_inequality({{var, -1.0}}, r.hi);
}

}  // namespace

double delta_S_tau(const BandwidthModel& bw, const BlockCounts& counts, double c_star, double S_ref,
                   double tau_o) {
    return min_tau_for_budget(bw, counts, c_star, S_ref) - tau_o;
}

double delta_S_c(const BandwidthModel& bw, const BlockCounts& counts, double tau_star, double S_ref, double c) {
    if (!(c > 0.0 && c < 1.0) || !(tau_star > 0.0)) throw DomainError("delta_S_c needs 0 < c < 1 and tau* > 0");
    const double a = S_ref * tau_star;
    const double num = a * c * c + (sdn_price(bw, counts) - lan_price(bw, counts) - a) * c + lan_price(bw, counts);
    return num / (c * (1.0 - c) * tau_star);
}

double min_tau_for_budget(const BandwidthModel& bw, const BlockCounts& counts, double c, double S_ref) {
    if (!(c > 0.0 && c < 1.0)) throw DomainError("budget bound needs 0 < c < 1");
    if (!(S_ref > 0.0)) throw DomainError("budget bound needs a positive reference cost");
    return (lan_price(bw, counts) / c + sdn_price(bw, counts) / (1.0 - c)) / S_ref;
}

Interval bandwidth_ratio_interval(const BandwidthModel& bw, const BlockCounts& counts, double tau_o, double S_ref,
                                  double c_floor) {
    Interval box{c_floor, 1.0 - c_floor};
    const double a = S_ref * tau_o;
    const double lp = lan_price(bw, counts), sp = sdn_price(bw, counts);
    if (lp == 0.0 && sp == 0.0) return box;
    const double b = sp - lp - a;
    const double disc = b * b - 4.0 * a * lp;
    if (disc < 0.0) return Interval{1.0, 0.0};
    const double sq = std::sqrt(disc);
    // stable root pair
    const double r1 = (-b - std::copysign(sq, b)) / (2.0 * a);
    const double r2 = (r1 != 0.0) ? lp / (a * r1) : (-b + sq) / (2.0 * a);
    return Interval{std::max(box.lo, std::min(r1, r2)), std::min(box.hi, std::max(r1, r2))};
}

std::optional<double> c_min_shortcut(const BandwidthModel& bw, const BlockCounts& counts, double c_floor) {
    const double lp = lan_price(bw, counts), sp = sdn_price(bw, counts);
    if (lp == 0.0 && sp == 0.0) return std::nullopt;
    if (sp == 0.0) return 1.0 - c_floor;
    if (lp == 0.0) return c_floor;
    const double c = std::sqrt(lp) / (std::sqrt(lp) + std::sqrt(sp));
    return std::clamp(c, c_floor, 1.0 - c_floor);
}

DelayConstraints DelayConstraints::budget(const BandwidthModel& bw, const CpsPartition& partition, double c_floor) {
    bw.validate();
    DelayConstraints d;
    d.kind = Kind::Bandwidth;
    d.bandwidth = bw;
    d.partition = partition;
    d.c_floor = c_floor;
    return d;
}

DelayConstraints DelayConstraints::total_delay(double reference, double tolerance, const CpsPartition& partition,
                                               double c_floor) {
    if (!(reference > 0.0) || !(tolerance >= 0.0)) throw ValidationError("total-delay constraint needs ref > 0, tol >= 0");
    DelayConstraints d;
    d.kind = Kind::TotalDelay;
    d.total_ref = reference;
    d.total_tol = tolerance;
    d.partition = partition;
    d.c_floor = c_floor;
    return d;
}

bool DelayConstraints::satisfied(const MatrixXd& K, double tau_o, double c) const {
    if (kind == Kind::TotalDelay) return std::abs(tau_o * (1.0 + c) - total_ref) <= total_tol * (1.0 + 1e-9) + 1e-12;
    if (!(c > 0.0 && c < 1.0)) return false;
    const auto counts = block_counts(K, partition);
    return bandwidth_cost_ratio(counts, c, tau_o, bandwidth) <= bandwidth.budget + 1e-9;
}

StructureMasks support_masks(const StructureMasks& masks, const MatrixXd& K) {
    const MatrixXd nz = K.unaryExpr([](double v) { return is_structural_zero(v) ? 0.0 : 1.0; });
    return StructureMasks{masks.Id.cwiseProduct(nz), masks.Io.cwiseProduct(nz)};
}

// ---------------------------------------------------------------- (K, tau_o)

KTauProgramData KTauProgramData::make(const DesignPoint& base, const PlantModel& plant, const StructureMasks& masks,
                                      double zeta1, double zeta2) {
    require_base(base);
    if (!(zeta1 >= 0.0) || !(zeta2 >= 0.0)) throw ValidationError("trust radii must be non-negative");
    KTauProgramData d;
    d.base = base;
    d.omega = 1.0 / base.tau_o;
    d.zeta1 = zeta1;
    d.zeta2 = zeta2;
    d.vary = support_masks(masks, base.K);
    const auto& cl = base.cl;
    d.G = plant.R() * cl.Ctilde - cl.Bu_ext.transpose() * base.P;
    d.residual = cl.A_cl.transpose() * base.P + base.P * cl.A_cl + cl.C_ext.transpose() * cl.C_ext;
    d.residual = 0.5 * (d.residual + d.residual.transpose());
    return d;
}

std::optional<KTauProgram> build_ktau_sdp(const KTauProgramData& data, const PlantModel& plant,
                                          const DelayConstraints& cons, double rho, const MatrixXd& U) {
    const auto& cl = data.base.cl;
    const int d = static_cast<int>(cl.A_cl.rows());
    const int m = plant.m(), n = plant.n();
    if (U.rows() != m || U.cols() != n) throw ValidationError("prox centre must be m x n");

    // admissible d omega
    Interval r{-data.zeta1, data.zeta1};
    r.lo = std::max(r.lo, -0.5 * data.omega);
    const double c = data.base.c;
    if (cons.kind == DelayConstraints::Kind::Bandwidth) {
        const auto counts = block_counts(data.base.K, cons.partition);
        if (counts.lan_links() + counts.off > 0)
            r.hi = std::min(r.hi, 1.0 / min_tau_for_budget(cons.bandwidth, counts, c, cons.bandwidth.budget) - data.omega);
    } else {
        const double tau_hi = (cons.total_ref + cons.total_tol) / (1.0 + c);
        const double tau_lo = (cons.total_ref - cons.total_tol) / (1.0 + c);
        r.lo = std::max(r.lo, 1.0 / tau_hi - data.omega);
        if (tau_lo > 0.0) r.hi = std::min(r.hi, 1.0 / tau_lo - data.omega);
    }
    if (r.empty()) return std::nullopt;

    KTauProgram out;
    out.omega_range = r;
    auto& p = out.program;
    if (has_entries(data.vary.Id)) out.dKd = p.add_matrix("dKd", m, n, data.vary.Id);
    if (has_entries(data.vary.Io)) out.dKo = p.add_matrix("dKo", m, n, data.vary.Io);
    out.dP = p.add_symmetric("dP", d);
    out.domega = p.add_scalar("domega");
    out.alpha = p.add_scalar("alpha");

    const MatrixXd I = MatrixXd::Identity(d, d);
    const MatrixXd NdT = cl.Nd.transpose(), NoT = cl.No.transpose();
    // -(phi0 + phi1 + psi0 + alpha I) >= 0
    const int lmi = p.add_block(d);
    p.block_constant(lmi, -data.residual);
    p.block_term(lmi, out.dP, I, cl.A_cl, -1.0);
    p.block_scalar(lmi, out.domega, -(cl.Lambda.transpose() * data.base.P + data.base.P * cl.Lambda));
    if (out.dKd >= 0) p.block_term(lmi, out.dKd, data.G.transpose(), NdT, -1.0);
    if (out.dKo >= 0) p.block_term(lmi, out.dKo, data.G.transpose(), NoT, -1.0);
    p.block_scalar(lmi, out.alpha, -I);

    add_symmetric_trust(p, out.dP, data.base.P, data.zeta2, 1e-9);
    add_range(p, out.domega, r);

    // alpha >= 2 zeta1 ||Lambda^T dP|| + 2 zeta2 ||Bu dCtilde|| + ||R^1/2 dCtilde||^2
    std::vector<double> coefs;
    std::vector<AffineMatrix> norms;
    if (data.zeta1 > 0.0) {
        AffineMatrix E(d, d);
        E.term(out.dP, cl.Lambda.transpose(), I);
        coefs.push_back(2.0 * data.zeta1);
        norms.push_back(std::move(E));
    }
    const bool any_gain = out.dKd >= 0 || out.dKo >= 0;
    if (data.zeta2 > 0.0 && any_gain) {
        // ||M B X|| = ||B X|| since M has orthonormal columns
        coefs.push_back(2.0 * data.zeta2);
        norms.push_back(gain_map(n, d, out.dKd, out.dKo, plant.B(), NdT, NoT));
    }
    if (any_gain) {
        const AffineMatrix sq = gain_map(m, d, out.dKd, out.dKo, plant.R_sqrt(), NdT, NoT);
        add_norm_sum_bound(p, out.alpha, coefs, norms, &sq);
    } else {
        add_norm_sum_bound(p, out.alpha, coefs, norms, nullptr);
    }

    p.objective_matrix(out.dP, cl.Bw_ext * cl.Bw_ext.transpose());
    p.objective_constant(data.base.J);
    out.prox = add_prox(p, out.dKd, out.dKo, data.base.K, U, rho);
    return out;
}

WeylAudit audit_ktau(const KTauProgramData& data, const PlantModel& plant, const MatrixXd& dK, const MatrixXd& dP,
                     double domega, double alpha) {
    const auto& cl = data.base.cl;
    const MatrixXd dC = dK.cwiseProduct(data.vary.Id) * cl.Nd.transpose() + dK.cwiseProduct(data.vary.Io) * cl.No.transpose();
    const MatrixXd A1 = -cl.Bu_ext * dC + domega * cl.Lambda;
    const MatrixXd phi2 = A1.transpose() * dP + dP * A1;
    const MatrixXd psi1 = dC.transpose() * plant.R() * dC;
    return WeylAudit{lambda_max(phi2) + lambda_max(psi1), alpha};
}

KTauCandidate decode_ktau(const KTauProgram& prog, const KTauProgramData& data, const PlantModel& plant,
                          const VectorXd& x) {
    const auto& p = prog.program;
    const int m = plant.m(), n = plant.n();
    KTauCandidate c;
    c.dK = value_or_zero(p, x, prog.dKd, m, n) + value_or_zero(p, x, prog.dKo, m, n);
    c.dP = p.matrix_value(x, prog.dP);
    c.domega = std::clamp(p.scalar_value(x, prog.domega), prog.omega_range.lo, prog.omega_range.hi);
    c.alpha = p.scalar_value(x, prog.alpha);
    c.objective = p.objective_value(x);
    c.K = data.base.K + c.dK;
    c.tau_o = 1.0 / (data.omega + c.domega);
    c.audit = audit_ktau(data, plant, c.dK, c.dP, c.domega, c.alpha);
    return c;
}

// ---------------------------------------------------------------- (K, c)

KcProgramData KcProgramData::make(const DesignPoint& base, const PlantModel& plant, const StructureMasks& masks,
                                  const SpectralBasis& basis, double beta, double dJ_dc) {
    (void)plant;
    require_base(base);
    if (!(beta >= 0.0)) throw ValidationError("trust radius beta must be non-negative");
    const auto& aff = basis.affine;
    KcProgramData d;
    d.base = base;
    d.beta = beta;
    const double c = base.c;
    int i = aff.interval_of(c);
    const double tie = 1e-12;
    if (i > 0 && std::abs(c - aff.breakpoints[i]) <= tie && dJ_dc > 0.0) --i;
    if (i < aff.intervals() - 1 && std::abs(c - aff.breakpoints[i + 1]) <= tie && dJ_dc < 0.0) ++i;
    d.interval = i;
    d.c_lo = aff.breakpoints[i];
    d.c_hi = aff.breakpoints[i + 1];
    d.slope = aff.chi[i].col(0);
    double sup_nd = 0.0;
    for (int s = 0; s < kAffineSamples; ++s) {
        const double cs = d.c_lo + (d.c_hi - d.c_lo) * s / (kAffineSamples - 1);
        sup_nd = std::max(sup_nd, basis.nd_weights(cs).norm());
    }
    const double sup_dnd = d.slope.norm() * std::max(c - d.c_lo, d.c_hi - c);
    d.frak_S = 1.01 * std::max(sup_nd, sup_dnd);
    d.vary = support_masks(masks, base.K);
    return d;
}

std::optional<KcProgram> build_kc_sdp(const KcProgramData& data, const PlantModel& plant,
                                      const DelayConstraints& cons, double rho, const MatrixXd& U) {
    const auto& cl = data.base.cl;
    const auto& L = data.base.L;
    const int d = static_cast<int>(cl.A_cl.rows());
    const int m = plant.m(), n = plant.n();
    if (U.rows() != m || U.cols() != n) throw ValidationError("prox centre must be m x n");

    const double c = data.base.c, tau = data.base.tau_o;
    Interval cr{std::max(data.c_lo, cons.c_floor), std::min(data.c_hi, 1.0 - cons.c_floor)};
    if (cons.kind == DelayConstraints::Kind::Bandwidth) {
        const auto counts = block_counts(data.base.K, cons.partition);
        const auto bw = bandwidth_ratio_interval(cons.bandwidth, counts, tau, cons.bandwidth.budget, cons.c_floor);
        cr.lo = std::max(cr.lo, bw.lo);
        cr.hi = std::min(cr.hi, bw.hi);
    } else {
        cr.lo = std::max(cr.lo, (cons.total_ref - cons.total_tol) / tau - 1.0);
        cr.hi = std::min(cr.hi, (cons.total_ref + cons.total_tol) / tau - 1.0);
    }
    if (cr.empty()) return std::nullopt;

    KcProgram out;
    out.c_range = cr;
    auto& p = out.program;
    if (has_entries(data.vary.Id)) out.dKd = p.add_matrix("dKd", m, n, data.vary.Id);
    if (has_entries(data.vary.Io)) out.dKo = p.add_matrix("dKo", m, n, data.vary.Io);
    out.dL = p.add_symmetric("dL", d);
    out.dc = p.add_scalar("dc");
    out.alpha = p.add_scalar("alpha");

    const MatrixXd I = MatrixXd::Identity(d, d);
    const MatrixXd SlopeT = kron_identity(data.slope, n).transpose();  // n x d
    const MatrixXd Ec = cl.Bu_ext * cl.Kd * SlopeT;                     // d x d
    const MatrixXd BwBwT = cl.Bw_ext * cl.Bw_ext.transpose();
    MatrixXd res = cl.A_cl * L + L * cl.A_cl.transpose() + BwBwT;
    res = 0.5 * (res + res.transpose());

    // -(phi0 + phi1 + Bw Bw^T + alpha I) >= 0
    const int lmi = p.add_block(d);
    p.block_constant(lmi, -res);
    p.block_term(lmi, out.dL, cl.A_cl, I, -1.0);
    p.block_scalar(lmi, out.dc, Ec * L + L * Ec.transpose());
    if (out.dKd >= 0) p.block_term(lmi, out.dKd, cl.Bu_ext, cl.Nd.transpose() * L, 1.0);
    if (out.dKo >= 0) p.block_term(lmi, out.dKo, cl.Bu_ext, cl.No.transpose() * L, 1.0);
    p.block_scalar(lmi, out.alpha, -I);

    add_symmetric_trust(p, out.dL, L, data.beta, 0.0);
    add_range(p, out.dc, Interval{cr.lo - c, cr.hi - c});

    // alpha >= 2 beta ||B (dKd Nd^T + dKo No^T)|| + 2 beta ||Bu Kd* dNd^T||
    //          + (2 beta S + 2 S ||L*||) ||B dKd||
    std::vector<double> coefs;
    std::vector<AffineMatrix> norms;
    const bool any_gain = out.dKd >= 0 || out.dKo >= 0;
    if (data.beta > 0.0 && any_gain) {
        coefs.push_back(2.0 * data.beta);
        norms.push_back(gain_map(n, d, out.dKd, out.dKo, plant.B(), cl.Nd.transpose(), cl.No.transpose()));
    }
    const double ec_norm = spectral_norm(plant.B() * cl.Kd * SlopeT);
    if (data.beta > 0.0 && ec_norm > 0.0) {
        AffineMatrix E(1, 1);
        E.scalar(out.dc, MatrixXd::Ones(1, 1));
        coefs.push_back(2.0 * data.beta * ec_norm);
        norms.push_back(std::move(E));
    }
    const double cross = 2.0 * data.frak_S * (data.beta + spectral_norm(L));
    if (out.dKd >= 0 && cross > 0.0) {
        AffineMatrix E(n, n);
        E.term(out.dKd, plant.B(), MatrixXd::Identity(n, n));
        coefs.push_back(cross);
        norms.push_back(std::move(E));
    }
    add_norm_sum_bound(p, out.alpha, coefs, norms, nullptr);

    p.objective_matrix(out.dL, cl.C_ext.transpose() * cl.C_ext);
    p.objective_constant(data.base.J_dual);
    out.prox = add_prox(p, out.dKd, out.dKo, data.base.K, U, rho);
    return out;
}

WeylAudit audit_kc(const KcProgramData& data, const MatrixXd& dK, const MatrixXd& dL, double dc, double alpha) {
    const auto& cl = data.base.cl;
    const int n = static_cast<int>(dK.cols());
    const MatrixXd dNdT = dc * kron_identity(data.slope, n).transpose();
    const MatrixXd dKd = dK.cwiseProduct(data.vary.Id), dKo = dK.cwiseProduct(data.vary.Io);
    const MatrixXd A1 = -cl.Bu_ext * (cl.Kd * dNdT + dKd * cl.Nd.transpose() + dKo * cl.No.transpose());
    const MatrixXd A2 = -cl.Bu_ext * dKd * dNdT;
    const MatrixXd& L = data.base.L;
    const double b = lambda_max(A1 * dL + dL * A1.transpose()) + lambda_max(A2 * L + L * A2.transpose()) +
                     lambda_max(A2 * dL + dL * A2.transpose());
    return WeylAudit{b, alpha};
}

KcCandidate decode_kc(const KcProgram& prog, const KcProgramData& data, const PlantModel& plant, const VectorXd& x) {
    const auto& p = prog.program;
    const int m = plant.m(), n = plant.n();
    KcCandidate c;
    c.dK = value_or_zero(p, x, prog.dKd, m, n) + value_or_zero(p, x, prog.dKo, m, n);
    c.dL = p.matrix_value(x, prog.dL);
    c.dc = std::clamp(p.scalar_value(x, prog.dc), prog.c_range.lo - data.base.c, prog.c_range.hi - data.base.c);
    c.alpha = p.scalar_value(x, prog.alpha);
    c.objective = p.objective_value(x);
    c.K = data.base.K + c.dK;
    c.c = data.base.c + c.dc;
    c.audit = audit_kc(data, c.dK, c.dL, c.dc, c.alpha);
    return c;
}

// ---------------------------------------------------------------- outer step

namespace {

double merit(const DesignPoint& p, const MatrixXd& U, double rho) {
    return p.J + 0.5 * rho * (p.K - U).squaredNorm();
}

bool no_worse(double candidate, double reference) {
    return candidate <= reference + 1e-9 * (1.0 + std::abs(reference));
}

// Exact checks shared by every candidate; returns an empty string on success.
std::string reject_reason(const DesignPoint& pt, const DelayConstraints& cons) {
    if (!pt.stable) {
        std::ostringstream os;
        os << "unstable (abscissa " << pt.abscissa << ")";
        return os.str();
    }
    if (!cons.satisfied(pt.K, pt.tau_o, pt.c)) return "delay constraint violated";
    return {};
}

}  // namespace

OuterStepReport outer_step(const DesignPoint& base, const PlantModel& plant, const StructureMasks& masks,
                           const SpectralBasis& basis, const DelayConstraints& cons, double rho, const MatrixXd& U,
                           const OuterOptions& opt) {
    require_base(base);
    OuterStepReport rep;
    rep.point = base;
    std::ostringstream diag;

    double z1 = opt.zeta1_frac / base.tau_o;
    double z2 = opt.zeta2_frac * spectral_norm(base.P);
    if (z1 == 0.0 && z2 == 0.0 && opt.beta_frac == 0.0) {
        rep.diagnostics = "trust radii are zero";
        return rep;
    }
    // With dP = eps X (A^T X + X A = -I) the LMI keeps a margin (1 - kappa) eps,
    // kappa = 2 zeta1 ||Lambda^T X||. As kappa nears 1 the feasible set
    // flattens onto dP = 0 and the step stalls.
    if (z1 > 0.0 && opt.kappa_max > 0.0) {
        const int d = static_cast<int>(base.cl.A_cl.rows());
        const MatrixXd X = solve_lyapunov(base.cl.A_cl, MatrixXd::Identity(d, d)).X;
        const double g = spectral_norm(base.cl.Lambda.transpose() * X);
        if (g > 0.0) z1 = std::min(z1, opt.kappa_max / (2.0 * g));
    }

    DesignPoint cur = base;
    struct Accepted {
        DesignPoint point;
        WeylAudit audit;
        double objective, gain;
    };
    std::optional<Accepted> best;
    // P1_o1
    for (int attempt = 0; attempt <= opt.max_halvings; ++attempt, z1 *= 0.5, z2 *= 0.5) {
        rep.ktau_attempts = attempt + 1;
        const auto data = KTauProgramData::make(cur, plant, masks, z1, z2);
        auto prog = build_ktau_sdp(data, plant, cons, rho, U);
        if (!prog) {
            diag << "ktau: no admissible tau_o; ";
            break;
        }
        const auto sol = solve(prog->program, opt.sdp_tol, opt.sdp_max_iter);
        if (sol.status == ConicSolution::Status::Infeasible || !sol.verified) {
            diag << "ktau[" << attempt << "]: " << to_string(sol.status) << (sol.verified ? "" : " unverified") << "; ";
            continue;
        }
        const auto cand = decode_ktau(*prog, data, plant, sol.x);
        auto pt = evaluate(plant, masks, basis, cand.K, cand.tau_o, cur.c);
        std::string why = reject_reason(pt, cons);
        if (why.empty() && !cand.audit.ok()) why = "Weyl audit failed";
        if (why.empty() && !no_worse(merit(pt, U, rho), merit(cur, U, rho))) why = "merit increased";
        if (why.empty() && !(pt.lyap_residual <= 1e-8)) why = "Lyapunov residual too large";
        if (!why.empty()) {
            diag << "ktau[" << attempt << "]: " << why << "; ";
            continue;
        }
        const double gain = merit(cur, U, rho) - merit(pt, U, rho);
        if (!best || gain > best->gain) best = Accepted{std::move(pt), cand.audit, cand.objective, gain};
        if (gain >= opt.null_step_tol * (1.0 + std::abs(merit(cur, U, rho)))) break;
        diag << "ktau[" << attempt << "]: null step; ";
    }
    if (best) {
        rep.ktau_accepted = true;
        rep.ktau_audit = best->audit;
        rep.ktau_objective = best->objective;
        cur = std::move(best->point);
    }

    // c_min shortcut
    if (opt.use_c_min && cons.kind == DelayConstraints::Kind::Bandwidth) {
        const auto cm = c_min_shortcut(cons.bandwidth, block_counts(cur.K, cons.partition), cons.c_floor);
        if (cm) {
            auto probe = evaluate(plant, masks, basis, cur.K, cur.tau_o, *cm);
            if (probe.stable) {
                const auto vary = support_masks(masks, cur.K);
                const MatrixXd keep = vary.Id + vary.Io;
                auto km = kmin(cur.K, U, rho, plant, vary, basis, cur.tau_o, *cm, opt.kmin);
                auto pt = evaluate(plant, masks, basis, km.K.cwiseProduct(keep), cur.tau_o, *cm);
                const std::string why = reject_reason(pt, cons);
                if (why.empty()) {
                    rep.c_min_used = true;
                    rep.point = std::move(pt);
                    rep.diagnostics = diag.str();
                    return rep;
                }
                diag << "c_min: " << why << "; ";
            } else {
                diag << "c_min: gain not stabilizing at c_min; ";
            }
        }
    }

    // P1_o2
    best.reset();
    double beta = opt.beta_frac * spectral_norm(cur.L);
    const double dJ_dc = gradient(cur, plant, masks, basis).dJ_dc;
    for (int attempt = 0; attempt <= opt.max_halvings && beta > 0.0; ++attempt, beta *= 0.5) {
        rep.kc_attempts = attempt + 1;
        const auto data = KcProgramData::make(cur, plant, masks, basis, beta, dJ_dc);
        auto prog = build_kc_sdp(data, plant, cons, rho, U);
        if (!prog) {
            diag << "kc: no admissible c; ";
            break;
        }
        const auto sol = solve(prog->program, opt.sdp_tol, opt.sdp_max_iter);
        if (sol.status == ConicSolution::Status::Infeasible || !sol.verified) {
            diag << "kc[" << attempt << "]: " << to_string(sol.status) << (sol.verified ? "" : " unverified") << "; ";
            continue;
        }
        const auto cand = decode_kc(*prog, data, plant, sol.x);
        auto pt = evaluate(plant, masks, basis, cand.K, cur.tau_o, cand.c);
        std::string why = reject_reason(pt, cons);
        if (why.empty() && !cand.audit.ok()) why = "Weyl audit failed";
        if (why.empty() && !no_worse(merit(pt, U, rho), merit(cur, U, rho))) why = "merit increased";
        if (why.empty() && !(pt.lyap_residual <= 1e-8)) why = "Lyapunov residual too large";
        if (!why.empty()) {
            diag << "kc[" << attempt << "]: " << why << "; ";
            continue;
        }
        const double gain = merit(cur, U, rho) - merit(pt, U, rho);
        if (!best || gain > best->gain) best = Accepted{std::move(pt), cand.audit, cand.objective, gain};
        if (gain >= opt.null_step_tol * (1.0 + std::abs(merit(cur, U, rho)))) break;
        diag << "kc[" << attempt << "]: null step; ";
    }
    if (best) {
        rep.kc_accepted = true;
        rep.kc_audit = best->audit;
        rep.kc_objective = best->objective;
        cur = std::move(best->point);
    }

    rep.point = std::move(cur);
    rep.diagnostics = diag.str();
    return rep;
}

}  // namespace delayco
