#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "delayco/driver.hpp"
#include "delayco/errors.hpp"

namespace py = pybind11;
using namespace delayco;

namespace {

CpsPartition make_partition(const std::vector<std::vector<int>>& states, const std::vector<std::vector<int>>& inputs) {
    CpsPartition p;
    p.state_blocks = states;
    p.input_blocks = inputs;
    return p;
}

py::dict trace_dict(const RunTrace& t) {
    py::dict d;
    d["mode"] = to_string(t.mode);
    d["budget"] = t.budget;
    d["tau_halvings"] = t.tau_halvings;
    d["csv"] = trace_csv(t);
    py::list path;
    for (const auto& l : t.lambdas) {
        py::dict e;
        e["lambda"] = l.lambda;
        e["K"] = l.K;
        e["tau_o"] = l.tau_o;
        e["c"] = l.c;
        e["J"] = l.J;
        e["S"] = l.S;
        e["Nz"] = l.Nz;
        path.append(e);
    }
    d["lambda_path"] = path;
    py::dict f;
    f["K"] = t.final_point.K;
    f["tau_o"] = t.final_point.tau_o;
    f["c"] = t.final_point.c;
    f["J"] = t.final_point.J;
    f["abscissa"] = t.final_point.abscissa;
    d["final"] = f;
    d["log"] = t.log;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Delay and sparse-gain co-design (C++ core)";

    auto base = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_RuntimeError);
    (void)base;

    m.def(
        "generate_random_model",
        [](unsigned seed, int n, double shift) {
            auto rm = generate_random_model(seed, n, shift);
            py::dict d;
            d["A"] = rm.plant.A();
            d["B"] = rm.plant.B();
            d["Bw"] = rm.plant.Bw();
            d["Q"] = rm.plant.Q();
            d["R"] = rm.plant.R();
            d["K_lqr"] = rm.K_lqr;
            return d;
        },
        py::arg("seed"), py::arg("n"), py::arg("shift") = 0.1);

    m.def(
        "lqr_gain",
        [](const MatrixXd& A, const MatrixXd& B, const MatrixXd& Bw, const MatrixXd& Q, const MatrixXd& R) {
            return lqr_gain(PlantModel(A, B, Bw, Q, R));
        },
        py::arg("A"), py::arg("B"), py::arg("Bw"), py::arg("Q"), py::arg("R"));

    m.def("spectral_abscissa", [](const MatrixXd& M) { return spectral_abscissa(M); }, py::arg("M"));

    m.def(
        "evaluate",
        [](const MatrixXd& A, const MatrixXd& B, const MatrixXd& Bw, const MatrixXd& Q, const MatrixXd& R,
           const MatrixXd& K, double tau_o, double c, const std::vector<std::vector<int>>& state_blocks,
           const std::vector<std::vector<int>>& input_blocks, int N) {
            PlantModel plant(A, B, Bw, Q, R);
            const auto part = make_partition(state_blocks, input_blocks);
            part.validate(plant.n(), plant.m());
            const auto masks = build_masks(part, plant.n(), plant.m());
            const auto p = evaluate(plant, masks, SpectralBasis::make(N, 1), K, tau_o, c);
            py::dict d;
            d["stable"] = p.stable;
            d["abscissa"] = p.abscissa;
            d["J"] = p.J;
            d["J_dual"] = p.J_dual;
            return d;
        },
        py::arg("A"), py::arg("B"), py::arg("Bw"), py::arg("Q"), py::arg("R"), py::arg("K"), py::arg("tau_o"),
        py::arg("c"), py::arg("state_blocks"), py::arg("input_blocks"), py::arg("N") = 10);

    m.def(
        "run_json",
        [](const std::string& text, const std::string& base_dir) {
            const RunConfig cfg = parse_config(text, base_dir);
            RunTrace t;
            {
                py::gil_scoped_release nogil;
                t = run(cfg);
            }
            return trace_dict(t);
        },
        py::arg("text"), py::arg("base_dir") = ".");

    m.def(
        "run_to_dir",
        [](const std::string& text, const std::string& out_dir, const std::string& base_dir) {
            const RunConfig cfg = parse_config(text, base_dir);
            RunTrace t;
            {
                py::gil_scoped_release nogil;
                t = run(cfg);
                report(t, out_dir);
            }
            return trace_dict(t);
        },
        py::arg("text"), py::arg("out_dir"), py::arg("base_dir") = ".");

    m.def(
        "check_json",
        [](const std::string& text, const std::string& base_dir) {
            const auto pb = prepare(parse_config(text, base_dir));
            py::dict d;
            d["tau_o"] = pb.start.tau_o;
            d["c"] = pb.start.c;
            d["J"] = pb.start.J;
            d["abscissa"] = pb.start.abscissa;
            d["tau_halvings"] = pb.tau_halvings;
            d["budget"] = pb.budget;
            return d;
        },
        py::arg("text"), py::arg("base_dir") = ".");

    m.def("model_config_json", &model_config_json, py::arg("seed"), py::arg("n"), py::arg("shift") = 0.1);
    m.def("format_double", &format_double, py::arg("value"));
}
