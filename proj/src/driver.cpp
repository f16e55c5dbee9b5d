#include "delayco/driver.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "delayco/errors.hpp"
#include "delayco/lyap.hpp"
#include "json.hpp"

namespace delayco {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(RunMode m) {
    switch (m) {
        case RunMode::Full: return "full";
        case RunMode::CaseA: return "case_a";
        case RunMode::ConstantDelay: return "constant_delay";
    }
    return "unknown";
}

RunMode parse_mode(const std::string& s) {
    if (s == "full") return RunMode::Full;
    if (s == "case_a") return RunMode::CaseA;
    if (s == "constant_delay") return RunMode::ConstantDelay;
    throw ValidationError("unknown mode '" + s + "' (expected full, case_a or constant_delay)");
}

// ------------------------------------------------------------------ config

void RunConfig::validate() const {
    auto positive = [](double v, const char* what) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string(what) + " must be positive");
    };
    if (random && random->n < 1) throw ValidationError("random plant needs n >= 1");
    if (random && !std::isfinite(random->shift)) throw ValidationError("random plant shift must be finite");
    if (!random && A.size() == 0) throw ValidationError("plant needs either 'random' or an explicit 'A'");
    if (block_size < 1) throw ValidationError("block_size must be at least 1");
    positive(bandwidth.m_cp, "m_cp");
    positive(bandwidth.m_cc, "m_cc");
    if (budget) positive(*budget, "budget");
    positive(budget_factor, "budget_factor");
    positive(tau_o, "tau_o");
    if (!(c > 0.0 && c < 1.0)) throw ValidationError("c must lie in (0, 1)");
    if (max_tau_halvings < 0) throw ValidationError("max_tau_halvings must be non-negative");
    if (N < 2) throw ValidationError("N must be at least 2");
    if (kc < 1) throw ValidationError("kc must be at least 1");
    positive(rho, "rho");
    positive(reweight_eps, "reweight eps");
    for (double l : lambdas)
        if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("lambda values must be non-negative");
    if (lambdas.empty()) {
        if (lambda_count < 1) throw ValidationError("lambda count must be at least 1");
        positive(lambda_lo, "lambda lo");
        positive(lambda_hi, "lambda hi");
        positive(lambda_max, "lambda_max");
        if (lambda_lo > lambda_hi) throw ValidationError("lambda lo must not exceed lambda hi");
    }
    if (max_reweight < 1) throw ValidationError("max_reweight must be at least 1");
    if (admm.max_iter < 1) throw ValidationError("admm max_iter must be at least 1");
    positive(admm.eps_abs, "eps_abs");
    positive(admm.eps_rel, "eps_rel");
    positive(admm.kmin.tol_rel, "kmin tol_rel");
    positive(admm.kmin.tol_mu, "kmin tol_mu");
    if (admm.kmin.max_iter < 1) throw ValidationError("kmin max_iter must be at least 1");
    for (double f : {outer.zeta1_frac, outer.zeta2_frac, outer.beta_frac, outer.kappa_max})
        if (!(f >= 0.0) || !std::isfinite(f)) throw ValidationError("trust radii must be non-negative");
    if (outer.max_halvings < 0) throw ValidationError("max_halvings must be non-negative");
    positive(outer.sdp_tol, "sdp_tol");
    if (outer.sdp_max_iter < 1) throw ValidationError("sdp_max_iter must be at least 1");
    if (case_a_tolerance) positive(*case_a_tolerance, "case_a tolerance");
    if (case_a_iterations < 1) throw ValidationError("case_a iterations must be at least 1");
}

std::vector<double> RunConfig::lambda_path() const {
    if (!lambdas.empty()) return lambdas;
    std::vector<double> out;
    if (lambda_count == 1) return {lambda_lo * lambda_max};
    const double a = std::log(lambda_lo), b = std::log(lambda_hi);
    for (int i = 0; i < lambda_count; ++i)
        out.push_back(lambda_max * std::exp(a + (b - a) * i / (lambda_count - 1)));
    return out;
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ValidationError("'" + where + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!ok.count(it.key())) throw ValidationError("unknown key '" + it.key() + "' in '" + where + "'");
}

double get_number(const json& j, const std::string& where) {
    if (!j.is_number()) throw ValidationError("'" + where + "' must be a number");
    return j.get<double>();
}

int get_int(const json& j, const std::string& where) {
    if (!j.is_number_integer()) throw ValidationError("'" + where + "' must be an integer");
    return j.get<int>();
}

MatrixXd read_csv_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open matrix file '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw ValidationError("bad number '" + cell + "' in '" + path + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ValidationError("matrix file '" + path + "' is empty");
    MatrixXd M(rows.size(), rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows[0].size()) throw ValidationError("ragged rows in '" + path + "'");
        for (std::size_t k = 0; k < rows[i].size(); ++k) M(i, k) = rows[i][k];
    }
    return M;
}

MatrixXd get_matrix(const json& j, const std::string& where, const std::string& base_dir) {
    if (j.is_object()) {
        check_keys(j, where, {"csv"});
        if (!j.contains("csv") || !j["csv"].is_string()) throw ValidationError("'" + where + "' needs a csv path");
        fs::path p = j["csv"].get<std::string>();
        if (p.is_relative()) p = fs::path(base_dir) / p;
        return read_csv_matrix(p.string());
    }
    if (!j.is_array() || j.empty()) throw ValidationError("'" + where + "' must be a non-empty array of rows");
    const std::size_t cols = j[0].is_array() ? j[0].size() : 0;
    if (cols == 0) throw ValidationError("'" + where + "' must be a non-empty array of rows");
    MatrixXd M(j.size(), cols);
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols) throw ValidationError("ragged rows in '" + where + "'");
        for (std::size_t k = 0; k < cols; ++k) M(i, k) = get_number(j[i][k], where);
    }
    return M;
}

std::vector<std::vector<int>> get_blocks(const json& j, const std::string& where) {
    if (!j.is_array()) throw ValidationError("'" + where + "' must be an array of index lists");
    std::vector<std::vector<int>> out;
    for (const auto& b : j) {
        if (!b.is_array()) throw ValidationError("'" + where + "' must be an array of index lists");
        std::vector<int> blk;
        for (const auto& v : b) blk.push_back(get_int(v, where));
        out.push_back(std::move(blk));
    }
    return out;
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("config is not valid JSON: ") + e.what());
    }
    check_keys(j, "config", {"plant", "partition", "block_size", "bandwidth", "initial", "discretization", "admm",
                             "kmin", "trust", "mode", "case_a", "seed", "wall_clock"});
    RunConfig c;
    std::optional<unsigned> seed;
    if (j.contains("seed")) seed = static_cast<unsigned>(get_int(j["seed"], "seed"));

    if (!j.contains("plant")) throw ValidationError("config needs a 'plant' section");
    const json& p = j["plant"];
    check_keys(p, "plant", {"random", "A", "B", "Bw", "Q", "R"});
    if (p.contains("random")) {
        const json& r = p["random"];
        check_keys(r, "plant.random", {"seed", "n", "shift"});
        RandomPlantSpec spec;
        if (seed) spec.seed = *seed;
        if (r.contains("seed")) spec.seed = static_cast<unsigned>(get_int(r["seed"], "plant.random.seed"));
        if (r.contains("n")) spec.n = get_int(r["n"], "plant.random.n");
        if (r.contains("shift")) spec.shift = get_number(r["shift"], "plant.random.shift");
        c.random = spec;
        if (p.contains("A")) throw ValidationError("plant has both 'random' and 'A'");
    } else {
        if (!p.contains("A") || !p.contains("B")) throw ValidationError("explicit plant needs 'A' and 'B'");
        c.A = get_matrix(p["A"], "plant.A", base_dir);
        c.B = get_matrix(p["B"], "plant.B", base_dir);
        const int n = static_cast<int>(c.A.rows()), m = static_cast<int>(c.B.cols());
        c.Bw = p.contains("Bw") ? get_matrix(p["Bw"], "plant.Bw", base_dir) : MatrixXd::Identity(n, n);
        c.Q = p.contains("Q") ? get_matrix(p["Q"], "plant.Q", base_dir) : MatrixXd::Identity(n, n);
        c.R = p.contains("R") ? get_matrix(p["R"], "plant.R", base_dir) : MatrixXd::Identity(m, m);
    }

    if (j.contains("partition")) {
        const json& q = j["partition"];
        check_keys(q, "partition", {"state_blocks", "input_blocks"});
        if (!q.contains("state_blocks") || !q.contains("input_blocks"))
            throw ValidationError("partition needs 'state_blocks' and 'input_blocks'");
        c.partition.state_blocks = get_blocks(q["state_blocks"], "partition.state_blocks");
        c.partition.input_blocks = get_blocks(q["input_blocks"], "partition.input_blocks");
    }
    if (j.contains("block_size")) c.block_size = get_int(j["block_size"], "block_size");

    if (j.contains("bandwidth")) {
        const json& b = j["bandwidth"];
        check_keys(b, "bandwidth", {"m_cp", "m_cc", "budget", "budget_factor"});
        if (b.contains("m_cp")) c.bandwidth.m_cp = get_number(b["m_cp"], "bandwidth.m_cp");
        if (b.contains("m_cc")) c.bandwidth.m_cc = get_number(b["m_cc"], "bandwidth.m_cc");
        if (b.contains("budget") && b.contains("budget_factor"))
            throw ValidationError("give either bandwidth.budget or bandwidth.budget_factor");
        if (b.contains("budget")) c.budget = get_number(b["budget"], "bandwidth.budget");
        if (b.contains("budget_factor")) c.budget_factor = get_number(b["budget_factor"], "bandwidth.budget_factor");
    }

    if (j.contains("initial")) {
        const json& i = j["initial"];
        check_keys(i, "initial", {"K", "tau_o", "c", "max_tau_halvings"});
        if (i.contains("K")) {
            if (i["K"].is_string()) {
                if (i["K"].get<std::string>() != "lqr") throw ValidationError("initial.K must be a matrix or \"lqr\"");
            } else {
                c.K0 = get_matrix(i["K"], "initial.K", base_dir);
            }
        }
        if (i.contains("tau_o")) c.tau_o = get_number(i["tau_o"], "initial.tau_o");
        if (i.contains("c")) c.c = get_number(i["c"], "initial.c");
        if (i.contains("max_tau_halvings")) c.max_tau_halvings = get_int(i["max_tau_halvings"], "initial.max_tau_halvings");
    }

    if (j.contains("discretization")) {
        const json& d = j["discretization"];
        check_keys(d, "discretization", {"N", "kc"});
        if (d.contains("N")) c.N = get_int(d["N"], "discretization.N");
        if (d.contains("kc")) c.kc = get_int(d["kc"], "discretization.kc");
    }

    if (j.contains("admm")) {
        const json& a = j["admm"];
        check_keys(a, "admm", {"rho", "reweight_eps", "max_iter", "eps_abs", "eps_rel", "max_reweight", "lambda"});
        if (a.contains("rho")) c.rho = get_number(a["rho"], "admm.rho");
        if (a.contains("reweight_eps")) c.reweight_eps = get_number(a["reweight_eps"], "admm.reweight_eps");
        if (a.contains("max_iter")) c.admm.max_iter = get_int(a["max_iter"], "admm.max_iter");
        if (a.contains("eps_abs")) c.admm.eps_abs = get_number(a["eps_abs"], "admm.eps_abs");
        if (a.contains("eps_rel")) c.admm.eps_rel = get_number(a["eps_rel"], "admm.eps_rel");
        if (a.contains("max_reweight")) c.max_reweight = get_int(a["max_reweight"], "admm.max_reweight");
        if (a.contains("lambda")) {
            const json& l = a["lambda"];
            check_keys(l, "admm.lambda", {"count", "lo", "hi", "max", "values"});
            if (l.contains("count")) c.lambda_count = get_int(l["count"], "admm.lambda.count");
            if (l.contains("lo")) c.lambda_lo = get_number(l["lo"], "admm.lambda.lo");
            if (l.contains("hi")) c.lambda_hi = get_number(l["hi"], "admm.lambda.hi");
            if (l.contains("max")) c.lambda_max = get_number(l["max"], "admm.lambda.max");
            if (l.contains("values")) {
                if (!l["values"].is_array() || l["values"].empty())
                    throw ValidationError("admm.lambda.values must be a non-empty array");
                for (const auto& v : l["values"]) c.lambdas.push_back(get_number(v, "admm.lambda.values"));
            }
        }
    }

    if (j.contains("kmin")) {
        const json& k = j["kmin"];
        check_keys(k, "kmin", {"tol_rel", "tol_mu", "max_iter"});
        if (k.contains("tol_rel")) c.admm.kmin.tol_rel = get_number(k["tol_rel"], "kmin.tol_rel");
        if (k.contains("tol_mu")) c.admm.kmin.tol_mu = get_number(k["tol_mu"], "kmin.tol_mu");
        if (k.contains("max_iter")) c.admm.kmin.max_iter = get_int(k["max_iter"], "kmin.max_iter");
    }
    c.outer.kmin = c.admm.kmin;

    if (j.contains("trust")) {
        const json& t = j["trust"];
        check_keys(t, "trust", {"zeta1_frac", "zeta2_frac", "beta_frac", "kappa_max", "max_halvings", "null_step_tol",
                                "sdp_tol", "sdp_max_iter", "use_c_min"});
        if (t.contains("zeta1_frac")) c.outer.zeta1_frac = get_number(t["zeta1_frac"], "trust.zeta1_frac");
        if (t.contains("zeta2_frac")) c.outer.zeta2_frac = get_number(t["zeta2_frac"], "trust.zeta2_frac");
        if (t.contains("beta_frac")) c.outer.beta_frac = get_number(t["beta_frac"], "trust.beta_frac");
        if (t.contains("kappa_max")) c.outer.kappa_max = get_number(t["kappa_max"], "trust.kappa_max");
        if (t.contains("max_halvings")) c.outer.max_halvings = get_int(t["max_halvings"], "trust.max_halvings");
        if (t.contains("null_step_tol")) c.outer.null_step_tol = get_number(t["null_step_tol"], "trust.null_step_tol");
        if (t.contains("sdp_tol")) c.outer.sdp_tol = get_number(t["sdp_tol"], "trust.sdp_tol");
        if (t.contains("sdp_max_iter")) c.outer.sdp_max_iter = get_int(t["sdp_max_iter"], "trust.sdp_max_iter");
        if (t.contains("use_c_min")) {
            if (!t["use_c_min"].is_boolean()) throw ValidationError("'trust.use_c_min' must be a boolean");
            c.outer.use_c_min = t["use_c_min"].get<bool>();
        }
    }

    if (j.contains("mode")) {
        if (!j["mode"].is_string()) throw ValidationError("'mode' must be a string");
        c.mode = parse_mode(j["mode"].get<std::string>());
    }
    if (j.contains("case_a")) {
        const json& a = j["case_a"];
        check_keys(a, "case_a", {"tolerance", "iterations"});
        if (a.contains("tolerance")) c.case_a_tolerance = get_number(a["tolerance"], "case_a.tolerance");
        if (a.contains("iterations")) c.case_a_iterations = get_int(a["iterations"], "case_a.iterations");
    }
    if (j.contains("wall_clock")) {
        if (!j["wall_clock"].is_boolean()) throw ValidationError("'wall_clock' must be a boolean");
        c.wall_clock = j["wall_clock"].get<bool>();
    }
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    const fs::path dir = fs::path(path).parent_path();
    return parse_config(ss.str(), dir.empty() ? "." : dir.string());
}

// ------------------------------------------------------------ plant models

MatrixXd lqr_gain(const PlantModel& plant) {
    const MatrixXd& A = plant.A();
    const MatrixXd& B = plant.B();
    const int n = plant.n();
    const Eigen::LLT<MatrixXd> Rllt(plant.R());
    if (!is_stabilizable(A, B)) throw ValidationError("(A, B) is not stabilizable; no LQR gain");

    // Bass: with beta above the spectrum, -(A + beta I) Z - Z (A + beta I)^T + 2 B B^T = 0
    // gives Z > 0 and A - B B^T Z^{-1} Hurwitz when (A, B) is controllable.
    MatrixXd K;
    {
        const double beta = A.norm() + 1.0;
        const MatrixXd Ab = -(A + beta * MatrixXd::Identity(n, n));
        const MatrixXd Z = solve_lyapunov_dual(Ab, 2.0 * B * B.transpose()).X;
        Eigen::LDLT<MatrixXd> zl(Z);
        K = B.transpose() * zl.solve(MatrixXd::Identity(n, n));
        if (zl.info() != Eigen::Success || !(spectral_abscissa(A - B * K) < 0.0))
            throw NumericalError("no stabilizing LQR start ((A, B) may be uncontrollable); give initial.K");
    }
    MatrixXd X_prev;
    for (int it = 0; it < 100; ++it) {
        const MatrixXd Acl = A - B * K;
        const MatrixXd X = solve_lyapunov(Acl, plant.Q() + K.transpose() * plant.R() * K).X;
        K = Rllt.solve(B.transpose() * X);
        if (X_prev.size() && (X - X_prev).norm() <= 1e-13 * std::max(1.0, X.norm())) return K;
        X_prev = X;
    }
    return K;
}

RandomModel generate_random_model(unsigned seed, int n, double shift) {
    if (n < 1) throw ValidationError("random model needs n >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXd A(n, n);
    // row-major fill so the model reads the same way it is printed
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = g(rng) / std::sqrt(static_cast<double>(n));
    A -= (spectral_abscissa(A) - shift) * MatrixXd::Identity(n, n);
    const MatrixXd I = MatrixXd::Identity(n, n);
    PlantModel plant(A, I, I, I, I);
    MatrixXd K = lqr_gain(plant);
    return RandomModel{std::move(plant), std::move(K)};
}

namespace {

CpsPartition contiguous_partition(int n, int size) {
    CpsPartition p;
    for (int start = 0; start < n; start += size) {
        std::vector<int> blk;
        for (int i = start; i < std::min(n, start + size); ++i) blk.push_back(i);
        p.state_blocks.push_back(blk);
        p.input_blocks.push_back(blk);
    }
    return p;
}

MatrixXd support_of(const MatrixXd& K) {
    return K.unaryExpr([](double v) { return is_structural_zero(v) ? 0.0 : 1.0; });
}

}  // namespace

Problem prepare(const RunConfig& config) {
    config.validate();
    std::optional<PlantModel> plant;
    MatrixXd K0;
    if (config.random) {
        auto rm = generate_random_model(config.random->seed, config.random->n, config.random->shift);
        plant.emplace(std::move(rm.plant));
        K0 = config.K0 ? *config.K0 : rm.K_lqr;
    } else {
        plant.emplace(config.A, config.B, config.Bw, config.Q, config.R);
        K0 = config.K0 ? *config.K0 : lqr_gain(*plant);
    }
    const int n = plant->n(), m = plant->m();
    if (K0.rows() != m || K0.cols() != n) throw ValidationError("initial K must be m x n");

    CpsPartition part = config.partition;
    if (part.state_blocks.empty()) {
        if (n != m) throw ValidationError("a partition is required when the plant is not square (m != n)");
        part = contiguous_partition(n, config.block_size);
    }
    part.validate(n, m);
    StructureMasks masks = build_masks(part, n, m);
    SpectralBasis basis = SpectralBasis::make(config.N, config.kc);

    double tau = config.tau_o;
    int halvings = 0;
    DesignPoint start = evaluate(*plant, masks, basis, K0, tau, config.c);
    while (!start.stable && halvings < config.max_tau_halvings) {
        tau *= 0.5;
        ++halvings;
        start = evaluate(*plant, masks, basis, K0, tau, config.c);
    }
    if (!start.stable) {
        std::ostringstream os;
        os << "initial gain is not stabilizing at c=" << config.c << " for tau_o down to " << tau << " ("
           << halvings << " halvings); spectral abscissa " << start.abscissa;
        throw ValidationError(os.str());
    }

    double budget = 0.0;
    const double S0 = bandwidth_cost_ratio(block_counts(K0, part), config.c, tau, config.bandwidth);
    budget = config.budget ? *config.budget : config.budget_factor * S0;
    if (config.mode == RunMode::Full && S0 > budget * (1.0 + 1e-9)) {
        std::ostringstream os;
        os << "initial bandwidth cost " << S0 << " exceeds the budget " << budget;
        throw ValidationError(os.str());
    }
    return Problem{std::move(*plant), std::move(part), std::move(masks), std::move(basis), std::move(start), halvings,
                   budget};
}

// --------------------------------------------------------------------- run

namespace {

class Recorder {
public:
    Recorder(RunTrace& t, const Problem& pb, const BandwidthModel& bw, bool wall)
        : trace_(t), pb_(pb), bw_(bw), wall_(wall), t0_(std::chrono::steady_clock::now()) {}

    // J and abscissa from the gain, counts from `pattern` (F during ADMM)
    void add(double lambda, int rs, int it, double J, double abscissa, const MatrixXd& pattern, double tau_o,
             double c, double primal = 0.0, double dual = 0.0) {
        TraceRecord r;
        r.lambda = lambda;
        r.reweight_step = rs;
        r.admm_iter = it;
        r.J = J;
        r.tau_o = tau_o;
        r.c = c;
        const auto k = block_counts(pattern, pb_.partition);
        r.S = bandwidth_cost_ratio(k, c, tau_o, bw_);
        r.Nz = count_zeros(pattern);
        r.Nrow = k.rows;
        r.Ncol = k.cols;
        r.Noff = k.off;
        r.abscissa = abscissa;
        r.primal = primal;
        r.dual = dual;
        if (wall_)
            r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
        trace_.records.push_back(r);
    }
    void add(double lambda, int rs, int it, const DesignPoint& p) {
        add(lambda, rs, it, p.J, p.abscissa, p.K, p.tau_o, p.c);
    }

private:
    RunTrace& trace_;
    const Problem& pb_;
    const BandwidthModel& bw_;
    bool wall_;
    std::chrono::steady_clock::time_point t0_;
};

void note_outer(RunTrace& trace, const OuterStepReport& rep, const std::string& where, double lambda, int step) {
    trace.outer.push_back(OuterRecord{lambda, step, rep.ktau_accepted, rep.kc_accepted, rep.c_min_used,
                                      rep.ktau_audit, rep.kc_audit, rep.point.K, rep.point.tau_o, rep.point.c});
    ++trace.outer_steps;
    trace.ktau_accepted += rep.ktau_accepted;
    trace.kc_accepted += rep.kc_accepted;
    trace.c_min_used += rep.c_min_used;
    std::string d = rep.diagnostics;
    while (!d.empty() && (d.back() == ' ' || d.back() == ';')) d.pop_back();
    if (!d.empty()) trace.log.push_back(where + ": " + d);
}

LambdaResult lambda_result(double lambda, const DesignPoint& p, const Problem& pb, const BandwidthModel& bw) {
    LambdaResult r;
    r.lambda = lambda;
    r.K = p.K;
    r.tau_o = p.tau_o;
    r.c = p.c;
    r.J = p.J;
    r.counts = block_counts(p.K, pb.partition);
    r.S = bandwidth_cost_ratio(r.counts, p.c, p.tau_o, bw);
    r.Nz = count_zeros(p.K);
    return r;
}

std::string fmt_lambda(double l) {
    std::ostringstream os;
    os << "lambda " << l;
    return os.str();
}

}  // namespace

RunTrace run(const RunConfig& config) { return run(config, prepare(config)); }

RunTrace run(const RunConfig& config, const Problem& pb) {
    RunTrace trace;
    trace.mode = config.mode;
    trace.budget = pb.budget;
    trace.tau_halvings = pb.tau_halvings;
    BandwidthModel bw = config.bandwidth;
    bw.budget = pb.budget;
    Recorder rec(trace, pb, bw, config.wall_clock);

    DesignPoint cur = pb.start;
    rec.add(0.0, 0, 0, cur);

    if (config.mode == RunMode::CaseA) {
        const double tol = config.case_a_tolerance ? *config.case_a_tolerance : 0.01 * cur.tau_o * (1.0 + cur.c);
        for (int it = 1; it <= config.case_a_iterations; ++it) {
            const auto cons = DelayConstraints::total_delay(cur.tau_o * (1.0 + cur.c), tol, pb.partition);
            auto rep = outer_step(cur, pb.plant, pb.masks, pb.basis, cons, config.rho, cur.K, config.outer);
            note_outer(trace, rep, "iteration " + std::to_string(it), 0.0, it);
            const bool moved = rep.ktau_accepted || rep.kc_accepted;
            cur = std::move(rep.point);
            rec.add(0.0, it, 0, cur);
            if (!moved) {
                trace.log.push_back("iteration " + std::to_string(it) + ": no step accepted, stopping");
                break;
            }
        }
        trace.lambdas.push_back(lambda_result(0.0, cur, pb, bw));
        trace.final_point = std::move(cur);
        return trace;
    }

    const bool full = config.mode == RunMode::Full;
    const auto cons = DelayConstraints::budget(bw, pb.partition);
    AdmmState st = AdmmState::start(cur.K, config.rho, 0.0);
    MatrixXd Kstar = cur.K;
    for (double lambda : config.lambda_path()) {
        st.lambda = lambda;
        for (int r = 1; r <= config.max_reweight; ++r) {
            const std::string where = fmt_lambda(lambda) + " step " + std::to_string(r);
            if (full) {
                const MatrixXd U = Kstar - st.Theta / config.rho;
                auto rep = outer_step(cur, pb.plant, pb.masks, pb.basis, cons, config.rho, U, config.outer);
                note_outer(trace, rep, where, lambda, r);
                cur = std::move(rep.point);
            }
            rec.add(lambda, r, 0, cur);

            st.K = cur.K;
            AdmmOptions ao = config.admm;
            if (full) ao.support = support_of(cur.K);
            auto inner = inner_loop(st, pb.plant, pb.masks, pb.basis, cur.tau_o, cur.c, ao);
            ++trace.inner_loops;
            trace.inner_converged += inner.converged;
            for (const auto& h : inner.history)
                rec.add(lambda, r, h.iter, h.J, h.abscissa, h.F, cur.tau_o, cur.c, h.primal, h.dual);

            std::string why;
            if (!inner.point.stable) {
                why = "inner loop ended unstable";
            } else if (full && !cons.satisfied(inner.point.K, cur.tau_o, cur.c)) {
                why = "inner loop exceeded the bandwidth budget";
            }
            if (why.empty()) {
                cur = std::move(inner.point);
                st = std::move(inner.state);
            } else {
                ++trace.inner_rejected;
                trace.log.push_back(where + ": " + why + "; kept the previous gain");
                st.Theta = inner.state.Theta;
                st.F = inner.state.F;
                st.K = cur.K;
            }
            if (inner.projection_rejected) trace.log.push_back(where + ": support projection destabilized, kept K");
            if (!inner.converged) trace.log.push_back(where + ": ADMM hit max_iter");
            rec.add(lambda, r, inner.iterations + 1, cur.J, cur.abscissa, cur.K, cur.tau_o, cur.c, inner.state.primal,
                    inner.state.dual);
            st.W = reweight(st.F, config.reweight_eps);
            Kstar = cur.K;
        }
        trace.lambdas.push_back(lambda_result(lambda, cur, pb, bw));
    }
    trace.final_point = std::move(cur);
    return trace;
}

// ------------------------------------------------------------------ report

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string trace_csv(const RunTrace& trace) {
    std::ostringstream os;
    os << "lambda,reweight_step,admm_iter,J,S,tau_o,c,Nz,Nrow,Ncol,Noff,abscissa,wall_ms,primal,dual\n";
    for (const auto& r : trace.records) {
        os << format_double(r.lambda) << ',' << r.reweight_step << ',' << r.admm_iter << ',' << format_double(r.J)
           << ',' << format_double(r.S) << ',' << format_double(r.tau_o) << ',' << format_double(r.c) << ',' << r.Nz
           << ',' << r.Nrow << ',' << r.Ncol << ',' << r.Noff << ',' << format_double(r.abscissa) << ','
           << (r.wall_ms ? format_double(*r.wall_ms) : std::string()) << ',' << format_double(r.primal) << ','
           << format_double(r.dual) << '\n';
    }
    return os.str();
}

namespace {

json matrix_json(const MatrixXd& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < M.cols(); ++j) row.push_back(M(i, j));
        rows.push_back(row);
    }
    return rows;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << text;
    if (!out) throw std::runtime_error("write failed for '" + p.string() + "'");
}

const char* kPlotScript = R"(# Plots the per-lambda end points of run.csv: J, S, tau_o and c against Nz.
import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
path = sys.argv[1] if len(sys.argv) > 1 else os.path.join(here, "run.csv")
with open(path) as f:
    rows = list(csv.DictReader(f))

# last record of every (lambda, reweight_step) pair is the accepted point
ends = {}
for r in rows:
    ends[(r["lambda"], r["reweight_step"])] = r
pts = sorted(ends.values(), key=lambda r: int(r["Nz"]))
nz = [int(r["Nz"]) for r in pts]

fig, axes = plt.subplots(2, 2, figsize=(9, 6))
for ax, key in zip(axes.flat, ["J", "S", "tau_o", "c"]):
    ax.plot(nz, [float(r[key]) for r in pts], "o-")
    ax.set_xlabel("Nz")
    ax.set_ylabel(key)
fig.tight_layout()
fig.savefig(os.path.join(os.path.dirname(path), "run.png"), dpi=120)
)";

}  // namespace

void report(const RunTrace& trace, const std::string& out_dir) {
    if (trace.records.empty()) throw ValidationError("trace is empty");
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    write_file(dir / "run.csv", trace_csv(trace));

    const DesignPoint& f = trace.final_point;
    json res;
    res["mode"] = to_string(trace.mode);
    res["K"] = matrix_json(f.K);
    res["tau_o"] = f.tau_o;
    res["tau_d"] = f.c * f.tau_o;
    res["c"] = f.c;
    res["J"] = f.J;
    res["abscissa"] = f.abscissa;
    res["budget"] = trace.budget;
    res["initial_tau_halvings"] = trace.tau_halvings;
    json path = json::array();
    for (const auto& l : trace.lambdas) {
        json e;
        e["lambda"] = l.lambda;
        e["J"] = l.J;
        e["S"] = l.S;
        e["tau_o"] = l.tau_o;
        e["c"] = l.c;
        e["Nz"] = l.Nz;
        e["Nrow"] = l.counts.rows;
        e["Ncol"] = l.counts.cols;
        e["Noff"] = l.counts.off;
        e["K"] = matrix_json(l.K);
        path.push_back(e);
    }
    res["lambda_path"] = path;
    write_file(dir / "result.json", res.dump(2) + "\n");

    std::ostringstream s;
    s << "mode              " << to_string(trace.mode) << "\n";
    s << "records           " << trace.records.size() << "\n";
    s << "budget S_b        " << format_double(trace.budget) << "\n";
    s << "tau_o halvings    " << trace.tau_halvings << "\n";
    s << "outer steps       " << trace.outer_steps << " (ktau accepted " << trace.ktau_accepted << ", kc accepted "
      << trace.kc_accepted << ", c_min used " << trace.c_min_used << ")\n";
    s << "inner loops       " << trace.inner_loops << " (converged " << trace.inner_converged << ", rejected "
      << trace.inner_rejected << ")\n";
    const TraceRecord& first = trace.records.front();
    s << "start             J " << format_double(first.J) << "  S " << format_double(first.S) << "  tau_o "
      << format_double(first.tau_o) << "  c " << format_double(first.c) << "  Nz " << first.Nz << "\n";
    s << "final             J " << format_double(f.J) << "  tau_o " << format_double(f.tau_o) << "  c "
      << format_double(f.c) << "  Nz " << count_zeros(f.K) << "\n";
    s << "\nlambda path\n";
    s << "  lambda                  J                       S                       tau_o                   c      "
         "                 Nz\n";
    for (const auto& l : trace.lambdas) {
        auto col = [](double v) {
            std::string x = format_double(v);
            x.resize(std::max<std::size_t>(x.size() + 1, 24), ' ');
            return x;
        };
        s << "  " << col(l.lambda) << col(l.J) << col(l.S) << col(l.tau_o) << col(l.c) << l.Nz << "\n";
    }
    if (!trace.log.empty()) {
        s << "\nlog\n";
        for (const auto& line : trace.log) s << "  " << line << "\n";
    }
    write_file(dir / "summary.txt", s.str());
    write_file(dir / "plot.py", kPlotScript);
}

std::string model_config_json(unsigned seed, int n, double shift) {
    const auto rm = generate_random_model(seed, n, shift);
    json j;
    j["plant"]["A"] = matrix_json(rm.plant.A());
    j["plant"]["B"] = matrix_json(rm.plant.B());
    j["plant"]["Bw"] = matrix_json(rm.plant.Bw());
    j["plant"]["Q"] = matrix_json(rm.plant.Q());
    j["plant"]["R"] = matrix_json(rm.plant.R());
    const CpsPartition part = contiguous_partition(n, 2);
    j["partition"]["state_blocks"] = part.state_blocks;
    j["partition"]["input_blocks"] = part.input_blocks;
    j["initial"]["K"] = matrix_json(rm.K_lqr);
    j["initial"]["tau_o"] = 0.05;
    j["initial"]["c"] = 0.5;
    j["bandwidth"]["m_cp"] = 1.0;
    j["bandwidth"]["m_cc"] = 1.0;
    j["bandwidth"]["budget_factor"] = 1.0;
    j["mode"] = "full";
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

}  // namespace delayco
