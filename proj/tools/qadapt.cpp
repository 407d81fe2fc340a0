// qadapt command line: adapt, emit-smt, sim, bench.

#include "qadapt/qadapt.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

using namespace qadapt;

namespace {

struct Common {
    std::string circuit;
    std::string cost = "D0";
    std::string objective = "fidelity";
    std::string rules;
    std::string out;
    bool no_cz_db = false;
    long long node_budget = SolverOptions{}.node_budget;
};

void add_common(CLI::App* app, Common& c) {
    app->add_option("circuit", c.circuit, "input circuit file")->required();
    app->add_option("--cost", c.cost, "cost model: D0, D1 or a JSON file");
    app->add_option("--objective", c.objective, "fidelity | idle | combined");
    app->add_option("--rules", c.rules, "extra template rules (JSON list)");
    app->add_option("--out", c.out, "output file (default: stdout)");
    app->add_flag("--no-cz-db", c.no_cz_db, "drop the decoupled CZ gate and its rules");
    app->add_option("--node-budget", c.node_budget, "solver state budget");
}

RuleLibrary make_rules(const Common& c) {
    RuleLibrary lib = RuleLibrary::spin(!c.no_cz_db);
    if (!c.rules.empty()) {
        std::ifstream in(c.rules);
        if (!in) throw Error("cannot open rule file '" + c.rules + "'");
        try {
            lib.add_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw Error("rule file '" + c.rules + "': " + e.what());
        }
    }
    return lib;
}

void write_output(const std::string& path, const std::string& text) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
}

AdaptationProblem load_problem(const Common& c) {
    return AdaptationProblem::make(read_circuit_file(c.circuit), load_cost_model(c.cost), make_rules(c));
}

nlohmann::json summary(const AdaptedCircuit& ac, const AdaptationProblem& p) {
    nlohmann::json chosen = nlohmann::json::array();
    for (int s : ac.chosen)
        chosen.push_back({{"id", s}, {"rule", p.matches[s].rule_id}, {"block", p.matches[s].block}});
    return {{"num_gates", ac.circuit.gates.size()}, {"num_blocks", ac.blocks.size()},
            {"num_matches", p.matches.size()},      {"chosen", chosen},
            {"sum_log_fidelity", ac.sum_log_fidelity}, {"fidelity", std::exp(ac.sum_log_fidelity)},
            {"makespan_ns", ac.makespan_ns},         {"idle_ns", ac.idle_ns}};
}

int run_adapt(const Common& c, const std::string& solver, const std::string& summary_path) {
    const AdaptationProblem p = load_problem(c);
    const Objective o = parse_objective(c.objective);
    const AdaptationModel m = p.model(o);
    if (solver == "emit-smt") {
        write_output(c.out, emit_smtlib(m));
        return 0;
    }
    SolverOptions so;
    so.node_budget = c.node_budget;
    SolverStats stats;
    const Assignment a = solve_exact(m, so, &stats);
    const AdaptedCircuit ac = apply_assignment(p.pc, p.matches, a.chosen, p.cm);
    write_output(c.out, serialize_circuit(ac.circuit) + "\n");
    nlohmann::json j = summary(ac, p);
    j["objective"] = to_string(o);
    j["objective_value"] = a.objective;
    j["solver_nodes"] = stats.nodes;
    const std::string text = j.dump(2) + "\n";
    if (!summary_path.empty())
        write_output(summary_path, text);
    else if (!c.out.empty())
        std::cout << text;
    return 0;
}

int run_sim(const Common& c, const std::string& adapter, double cutoff) {
    const AdaptationProblem p = load_problem(c);
    AdaptedCircuit ac;
    if (adapter == "direct")
        ac = baseline_direct(p.pc, p.cm);
    else if (adapter == "sat")
        ac = adapt_exact(p, parse_objective(c.objective));
    else
        throw Error("unknown adapter '" + adapter + "' (direct | sat)");
    const Distribution noisy = simulate_distribution(ac, noise_from_cost(p.cm));
    const Distribution ideal = ideal_distribution(p.pc.circuit);
    const int nq = p.pc.circuit.num_qubits;
    nlohmann::json j = summary(ac, p);
    j["adapter"] = adapter;
    j["hellinger_fidelity"] = hellinger_fidelity(ideal, noisy);
    j["noisy"] = distribution_to_json(noisy, nq, cutoff);
    j["ideal"] = distribution_to_json(ideal, nq, cutoff);
    write_output(c.out, j.dump(2) + "\n");
    return 0;
}

int run_bench(const std::string& config, const std::string& out_override) {
    std::ifstream in(config);
    if (!in) throw Error("cannot open config '" + config + "'");
    ExperimentConfig cfg;
    try {
        cfg = experiment_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error("config '" + config + "': " + e.what());
    }
    const std::string path = out_override.empty() ? cfg.output : out_override;
    if (path.empty()) {
        run_experiment(cfg, &std::cout);
        return 0;
    }
    std::ofstream out(path);
    if (!out) throw Error("cannot write '" + path + "'");
    run_experiment(cfg, &out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gate-set adaptation for spin-qubit circuits"};
    app.require_subcommand(1);

    Common ac;
    std::string solver = "internal", summary_path;
    auto* adapt = app.add_subcommand("adapt", "choose substitutions and write the adapted circuit");
    add_common(adapt, ac);
    adapt->add_option("--solver", solver, "internal | emit-smt")->check(CLI::IsMember({"internal", "emit-smt"}));
    adapt->add_option("--summary", summary_path, "write the JSON summary here");

    Common ec;
    auto* emit = app.add_subcommand("emit-smt", "write the optimization model as SMT-LIB2");
    add_common(emit, ec);

    Common sc;
    std::string adapter = "direct";
    double cutoff = 0;
    auto* sim = app.add_subcommand("sim", "noisy output distribution of the adapted circuit");
    add_common(sim, sc);
    sim->add_option("--adapter", adapter, "direct | sat");
    sim->add_option("--cutoff", cutoff, "omit probabilities at or below this");

    std::string config, bench_out;
    auto* bench = app.add_subcommand("bench", "run a benchmark sweep and write CSV");
    bench->add_option("--config", config, "experiment JSON")->required();
    bench->add_option("--out", bench_out, "CSV path (overrides the config)");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*adapt) return run_adapt(ac, solver, summary_path);
        if (*emit) return run_adapt(ec, "emit-smt", {});
        if (*sim) return run_sim(sc, adapter, cutoff);
        if (*bench) return run_bench(config, bench_out);
    } catch (const std::exception& e) {
        std::cerr << "qadapt: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
