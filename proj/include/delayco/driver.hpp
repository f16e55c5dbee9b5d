#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "delayco/admm.hpp"
#include "delayco/codesign.hpp"
#include "delayco/h2.hpp"
#include "delayco/model.hpp"

namespace delayco {

enum class RunMode { Full, CaseA, ConstantDelay };

const char* to_string(RunMode m);
RunMode parse_mode(const std::string& s);

struct RandomPlantSpec {
    unsigned seed = 1;
    int n = 5;
    double shift = 0.1;  // spectral abscissa of the generated A
};

struct RunConfig {
    // plant: either generated or explicit
    std::optional<RandomPlantSpec> random;
    MatrixXd A, B, Bw, Q, R;

    // empty: contiguous groups of `block_size` states/inputs (needs n == m)
    CpsPartition partition;
    int block_size = 2;

    BandwidthModel bandwidth;            // budget ignored when budget_factor is used
    std::optional<double> budget;        // absolute S_b
    double budget_factor = 1.0;          // S_b = factor * S(initial tuple) when budget is unset

    std::optional<MatrixXd> K0;          // empty: delay-free LQR gain
    double tau_o = 0.05;
    double c = 0.5;
    int max_tau_halvings = 20;

    int N = 10;
    int kc = 10;

    double rho = 100.0;
    double reweight_eps = 1e-3;
    std::vector<double> lambdas;         // explicit path; overrides the log-spaced one
    int lambda_count = 8;
    double lambda_lo = 0.01, lambda_hi = 0.95;  // fractions of lambda_max
    double lambda_max = 1.0;
    int max_reweight = 3;
    AdmmOptions admm;

    OuterOptions outer;

    RunMode mode = RunMode::Full;
    std::optional<double> case_a_tolerance;  // default 0.01 (tau_d + tau_o) of the start
    int case_a_iterations = 20;

    bool wall_clock = false;  // wall_ms column stays empty otherwise

    /// Throws ValidationError for bad values; does not touch the plant.
    void validate() const;
    std::vector<double> lambda_path() const;
};

/// Reads a JSON config. Matrices are row-major nested arrays or
/// {"csv": "path"} (relative to the config file). ValidationError on any
/// malformed or unknown entry.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".");

struct RandomModel {
    PlantModel plant;
    MatrixXd K_lqr;
};

/// A = G / sqrt(n) shifted so its spectral abscissa equals `shift`, with G
/// standard normal from mt19937_64(seed); B = Bw = Q = R = I.
RandomModel generate_random_model(unsigned seed, int n, double shift = 0.1);

/// Delay-free LQR gain R^{-1} B^T X (stabilizing ARE solution) by
/// Newton-Kleinman from a Bass-type stabilizing start.
MatrixXd lqr_gain(const PlantModel& plant);

/// Plant, partition, masks, basis and a verified stable start.
struct Problem {
    PlantModel plant;
    CpsPartition partition;
    StructureMasks masks;
    SpectralBasis basis;
    DesignPoint start;
    int tau_halvings = 0;  // applied to the configured tau_o
    double budget = 0.0;   // S_b
};

/// ValidationError when the data are inconsistent or no stable start exists
/// (including S > S_b in full mode).
Problem prepare(const RunConfig& config);

struct TraceRecord {
    double lambda = 0.0;
    int reweight_step = 0;
    int admm_iter = 0;
    double J = 0.0, S = 0.0, tau_o = 0.0, c = 0.0;
    int Nz = 0, Nrow = 0, Ncol = 0, Noff = 0;
    double abscissa = 0.0;
    std::optional<double> wall_ms;
    double primal = 0.0, dual = 0.0;
};

struct LambdaResult {
    double lambda = 0.0;
    MatrixXd K;
    double tau_o = 0.0, c = 0.0, J = 0.0, S = 0.0;
    int Nz = 0;
    BlockCounts counts;
};

/// Outcome of one outer step; K/tau_o/c are the tuple it returned.
struct OuterRecord {
    double lambda = 0.0;
    int reweight_step = 0;
    bool ktau_accepted = false, kc_accepted = false, c_min_used = false;
    WeylAudit ktau_audit, kc_audit;
    MatrixXd K;
    double tau_o = 0.0, c = 0.0;
};

struct RunTrace {
    RunMode mode = RunMode::Full;
    double budget = 0.0;
    int tau_halvings = 0;
    std::vector<TraceRecord> records;
    std::vector<LambdaResult> lambdas;
    std::vector<OuterRecord> outer;
    DesignPoint final_point;
    int outer_steps = 0, ktau_accepted = 0, kc_accepted = 0, c_min_used = 0;
    int inner_loops = 0, inner_converged = 0, inner_rejected = 0;
    std::vector<std::string> log;
};

RunTrace run(const RunConfig& config);
RunTrace run(const RunConfig& config, const Problem& problem);

/// Writes run.csv, summary.txt, result.json and plot.py into out_dir
/// (created if missing). Output depends only on the trace.
void report(const RunTrace& trace, const std::string& out_dir);

/// CSV text of the trace (header plus one line per record).
std::string trace_csv(const RunTrace& trace);

/// Shortest decimal string that parses back to exactly v.
std::string format_double(double v);

/// Config file for a generated model: explicit matrices, LQR start, defaults.
std::string model_config_json(unsigned seed, int n, double shift = 0.1);

}  // namespace delayco
