#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

namespace delayco {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Affine matrix expression E(x) = E0 + sum w_t L_t X_t R_t + sum x_s E_s
/// (not necessarily square or symmetric). Used to describe norm bounds.
struct AffineMatrix {
    struct MatTerm {
        int var;
        MatrixXd L, R;
        double weight;
    };
    struct ScalTerm {
        int var;
        MatrixXd E;
    };

    AffineMatrix(int rows, int cols);

    AffineMatrix& constant(const MatrixXd& E);
    AffineMatrix& term(int var, const MatrixXd& L, const MatrixXd& R, double weight = 1.0);
    AffineMatrix& scalar(int var, const MatrixXd& E);

    int rows, cols;
    MatrixXd E0;
    std::vector<MatTerm> mats;
    std::vector<ScalTerm> scals;
};

struct ConicSolution;

/// minimize c^T x subject to
///   F_j(x) = F0_j + sum_s x_s C_js + sum_t w_t (L_t X_t R_t + (L_t X_t R_t)^T) >= 0  (PSD blocks)
///   g_l + sum_s a_ls x_s >= 0                                                   (scalar rows)
/// over scalar, (masked) matrix and symmetric variables.
class ConicProgram {
public:
    enum class Kind { Scalar, Matrix, Symmetric };

    struct Variable {
        std::string name;
        Kind kind;
        int rows, cols;
        int offset;                            // first global index
        std::vector<std::pair<int, int>> basis;  // (row, col); symmetric uses row <= col
    };

    int add_scalar(std::string name);
    /// Free entries are those with mask(i, j) != 0 (all entries when mask is empty).
    int add_matrix(std::string name, int rows, int cols, const MatrixXd& mask = MatrixXd());
    int add_symmetric(std::string name, int dim);

    int add_block(int dim);
    void block_constant(int block, const MatrixXd& S);
    void block_scalar(int block, int var, const MatrixXd& C);
    /// Adds w (L X R + (L X R)^T) for a matrix or symmetric variable X.
    void block_term(int block, int var, const MatrixXd& L, const MatrixXd& R, double weight = 1.0);

    /// constant + sum coef * x_var >= 0 (scalar variables only).
    void add_inequality(const std::vector<std::pair<int, double>>& coefs, double constant);

    void objective_scalar(int var, double coef);
    /// Adds <C, X> to the objective.
    void objective_matrix(int var, const MatrixXd& C);
    void objective_constant(double v) { obj_const_ += v; }

    int variable_count() const { return nvar_; }
    int block_count() const { return static_cast<int>(blocks_.size()); }
    int inequality_count() const { return static_cast<int>(lp_.size()); }
    const Variable& variable(int v) const { return vars_.at(v); }

    /// F_j(x) at a global vector x.
    MatrixXd block_value(int block, const VectorXd& x) const;
    double inequality_value(int row, const VectorXd& x) const;
    double objective_value(const VectorXd& x) const;

    /// Extract a variable's value from the global vector.
    double scalar_value(const VectorXd& x, int var) const;
    MatrixXd matrix_value(const VectorXd& x, int var) const;

private:
    friend class ConicSolver;

    struct MatrixTerm {
        int var;
        MatrixXd L;  // d x rows(var)
        MatrixXd R;  // cols(var) x d
        double weight;
    };
    struct Block {
        int dim;
        MatrixXd F0;
        std::vector<std::pair<int, MatrixXd>> scalars;
        std::vector<MatrixTerm> terms;
    };
    struct Row {
        double constant;
        std::vector<std::pair<int, double>> coefs;  // global index
    };

    int add_variable(Variable v);
    const Variable& checked(int var, bool scalar) const;
    void check_block(int block) const;

    std::vector<Variable> vars_;
    std::vector<Block> blocks_;
    std::vector<Row> lp_;
    VectorXd c_;
    double obj_const_ = 0.0;
    int nvar_ = 0;
};

struct ConicSolution {
    enum class Status { Optimal, Infeasible, MaxIter };
    Status status = Status::MaxIter;
    VectorXd x;
    double objective = 0.0;  // c^T x + constant
    double gap = 0.0;        // relative duality gap at exit
    double primal_infeasibility = 0.0;
    double dual_infeasibility = 0.0;
    int iterations = 0;
    bool verified = false;       // independent eigenvalue check of every block and row
    double worst_violation = 0.0;  // most negative scaled slack (<= 0 means satisfied)

    bool optimal() const { return status == Status::Optimal; }
};

const char* to_string(ConicSolution::Status s);

/// Infeasible-start primal-dual interior point method (Nesterov-Todd scaling,
/// Mehrotra predictor-corrector) on the standard dual form.
ConicSolution solve(const ConicProgram& program, double tol = 1e-7, int max_iter = 200);

/// Independent feasibility check: min eigenvalue of every block at least
/// -1e-7 (1 + ||block||) and every scalar row at least -1e-8. Returns the
/// worst scaled violation through `worst` when given.
bool verify_feasible(const ConicProgram& program, const VectorXd& x, double* worst = nullptr);

// Constraint shapes built from PSD blocks.

/// ||E(x)||_2 <= x_t via [[t I, E], [E^T, t I]] >= 0.
void add_norm_bound(ConicProgram& prog, const AffineMatrix& E, int t);
/// ||E(x)||_2^2 <= x_s via [[I, E], [E^T, s I]] >= 0.
void add_norm_squared_bound(ConicProgram& prog, const AffineMatrix& E, int s);
/// scale * ||E(x)||_F^2 <= x_q via [[I / scale, vec E], [vec E^T, q]] >= 0.
void add_frobenius_squared_bound(ConicProgram& prog, const AffineMatrix& E, int q, double scale = 1.0);
/// x_t >= sum coef_i ||E_i(x)||_2 + ||E_q(x)||_2^2 with auxiliary epigraph
/// variables; coef_i >= 0. Returns the auxiliary variable ids (norms, then square).
std::vector<int> add_norm_sum_bound(ConicProgram& prog, int t, const std::vector<double>& coefs,
                                    const std::vector<AffineMatrix>& norms, const AffineMatrix* square);

}  // namespace delayco
