#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "delayco/driver.hpp"
#include "delayco/errors.hpp"

using namespace delayco;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kOther = 1, kValidation = 2, kNumerical = 3 };

// Runs f and maps the library's exceptions onto exit codes.
template <class F>
int guarded(F&& f, const std::string& label = "") {
    const std::string pre = label.empty() ? "delayco: " : "delayco [" + label + "]: ";
    try {
        f();
        return kOk;
    } catch (const ValidationError& e) {
        std::cerr << pre << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const DomainError& e) {
        std::cerr << pre << "validation error: " << e.what() << "\n";
        return kValidation;
    } catch (const NumericalError& e) {
        std::cerr << pre << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const PreconditionError& e) {
        std::cerr << pre << "numerical failure: " << e.what() << "\n";
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << pre << "error: " << e.what() << "\n";
        return kOther;
    }
}

std::pair<unsigned, unsigned> parse_seeds(const std::string& s) {
    const auto dots = s.find("..");
    try {
        if (dots == std::string::npos) {
            const unsigned v = static_cast<unsigned>(std::stoul(s));
            return {v, v};
        }
        const unsigned a = static_cast<unsigned>(std::stoul(s.substr(0, dots)));
        const unsigned b = static_cast<unsigned>(std::stoul(s.substr(dots + 2)));
        if (a > b) throw ValidationError("seed range '" + s + "' is empty");
        return {a, b};
    } catch (const std::invalid_argument&) {
        throw ValidationError("bad seed range '" + s + "' (expected a..b)");
    } catch (const std::out_of_range&) {
        throw ValidationError("bad seed range '" + s + "' (expected a..b)");
    }
}

unsigned sweep_threads() {
    if (const char* env = std::getenv("DELAYCO_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ValidationError("DELAYCO_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

std::string one_line(const RunTrace& t) {
    std::ostringstream os;
    const auto& f = t.final_point;
    os << "J " << format_double(f.J) << "  tau_o " << format_double(f.tau_o) << "  c " << format_double(f.c)
       << "  Nz " << count_zeros(f.K) << "  records " << t.records.size();
    return os.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Delay and sparse-gain co-design for H2 control under a bandwidth budget"};
    app.require_subcommand(1);

    std::string config, out;
    auto* run_cmd = app.add_subcommand("run", "Run the co-design loop and write a report");
    run_cmd->add_option("--config", config, "JSON config file")->required();
    run_cmd->add_option("--out", out, "output directory")->required();

    unsigned seed = 1;
    int n = 5;
    double shift = 0.1;
    auto* gen_cmd = app.add_subcommand("gen-model", "Write a config for a seeded random model");
    gen_cmd->add_option("--seed", seed, "RNG seed")->required();
    gen_cmd->add_option("--n", n, "state dimension")->required()->check(CLI::PositiveNumber);
    gen_cmd->add_option("--shift", shift, "spectral abscissa of A");
    gen_cmd->add_option("--out", out, "config file to write")->required();

    auto* check_cmd = app.add_subcommand("check", "Validate the config and the initial tuple");
    check_cmd->add_option("--config", config, "JSON config file")->required();

    std::string seeds;
    std::string sweep_out = "sweep";
    auto* sweep_cmd = app.add_subcommand("sweep", "Independent runs over a seed range (DELAYCO_THREADS sets workers)");
    sweep_cmd->add_option("--config", config, "JSON config file with a random plant")->required();
    sweep_cmd->add_option("--seeds", seeds, "inclusive range a..b")->required();
    sweep_cmd->add_option("--out", sweep_out, "parent directory for seed_<s>/ outputs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kValidation;
    }

    if (*run_cmd) {
        return guarded([&] {
            const RunConfig cfg = load_config(config);
            const RunTrace t = run(cfg);
            report(t, out);
            std::cout << one_line(t) << "\n";
        });
    }
    if (*gen_cmd) {
        return guarded([&] {
            const std::string text = model_config_json(seed, n, shift);
            const fs::path p(out);
            if (p.has_parent_path()) fs::create_directories(p.parent_path());
            std::ofstream f(p);
            if (!f) throw std::runtime_error("cannot write '" + out + "'");
            f << text;
        });
    }
    if (*check_cmd) {
        return guarded([&] {
            const RunConfig cfg = load_config(config);
            const Problem pb = prepare(cfg);
            BandwidthModel bw = cfg.bandwidth;
            bw.budget = pb.budget;
            const double S = bandwidth_cost_ratio(block_counts(pb.start.K, pb.partition), pb.start.c, pb.start.tau_o, bw);
            std::cout << "initial tuple is feasible\n"
                      << "  n " << pb.plant.n() << "  m " << pb.plant.m() << "  blocks " << pb.partition.blocks() << "\n"
                      << "  tau_o " << format_double(pb.start.tau_o) << " (" << pb.tau_halvings << " halvings)  c "
                      << format_double(pb.start.c) << "\n"
                      << "  abscissa " << format_double(pb.start.abscissa) << "  J " << format_double(pb.start.J)
                      << "\n"
                      << "  S " << format_double(S) << "  S_b " << format_double(pb.budget) << "\n";
        });
    }

    // sweep
    RunConfig base;
    std::pair<unsigned, unsigned> range;
    unsigned threads = 1;
    if (int rc = guarded([&] {
            base = load_config(config);
            if (!base.random) throw ValidationError("sweep needs a 'plant.random' config");
            range = parse_seeds(seeds);
            threads = sweep_threads();
        }))
        return rc;

    const unsigned count = range.second - range.first + 1;
    std::vector<int> codes(count, kOk);
    std::vector<std::string> lines(count);
    std::atomic<unsigned> next{0};
    auto worker = [&] {
        for (unsigned i = next++; i < count; i = next++) {
            const unsigned s = range.first + i;
            const std::string label = "seed " + std::to_string(s);
            codes[i] = guarded(
                [&] {
                    RunConfig cfg = base;
                    cfg.random->seed = s;
                    const RunTrace t = run(cfg);
                    report(t, (fs::path(sweep_out) / ("seed_" + std::to_string(s))).string());
                    lines[i] = one_line(t);
                },
                label);
        }
    };
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < std::min(threads, count); ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    int worst = kOk;
    for (unsigned i = 0; i < count; ++i) {
        std::cout << "seed " << range.first + i << ": " << (codes[i] == kOk ? lines[i] : "failed") << "\n";
        // validation beats numerical beats other when seeds disagree
        if (codes[i] != kOk && (worst == kOk || codes[i] == kValidation || (codes[i] == kNumerical && worst == kOther)))
            worst = codes[i];
    }
    return worst;
}
