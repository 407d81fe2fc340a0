#pragma once

// Benchmark circuit generators, experiment orchestration and CSV output.

#include "qadapt/noise_sim.hpp"

#include <chrono>
#include <ostream>
#include <random>

namespace qadapt {

/// mt19937_64 with hand-written distributions, so draws are identical
/// across standard libraries.
class Rng {
public:
    static constexpr const char* kName = "mt19937_64";

    explicit Rng(uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double normal() {
        const double u1 = 1.0 - uniform(), u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, n).
    uint64_t below(uint64_t n) {
        if (n == 0) throw Error("empty range");
        const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % n;
        uint64_t x;
        do x = eng_();
        while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 eng_;
};

/// Haar-random unitary: QR of a complex Ginibre matrix with R's diagonal
/// phases folded back in.
inline MatX haar_unitary(Rng& rng, int n = 4) {
    MatX z(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) z(i, j) = cplx(rng.normal(), rng.normal()) / std::sqrt(2.0);
    Eigen::HouseholderQR<MatX> qr(z);
    MatX q = qr.householderQ();
    const MatX& r = qr.matrixQR();
    for (int j = 0; j < n; ++j) {
        const cplx d = r(j, j);
        q.col(j) *= std::abs(d) > 0 ? d / std::abs(d) : cplx(1);
    }
    return q;
}

/// Rewrites cz as H.cx.H so the gates stay in the source basis.
inline std::vector<Gate> to_source_basis(std::span<const Gate> gates) {
    std::vector<Gate> out;
    for (const Gate& g : gates) {
        if (g.name != "cz") {
            out.push_back(g);
            continue;
        }
        const int t = g.qubits[1];
        out.push_back(h_gate(t));
        out.push_back(make_gate("cx", {g.qubits[0], t}));
        out.push_back(h_gate(t));
    }
    return merge_single_qubit_runs(out);
}

/// `depth` layers; each pairs the qubits at random and applies a Haar
/// unitary to every pair.
inline Circuit gen_qv_circuit(int num_qubits, int depth, uint64_t seed) {
    if (num_qubits < 2) throw Error("quantum-volume circuits need at least 2 qubits");
    Rng rng(seed);
    Circuit c{num_qubits, {}};
    std::vector<int> perm(num_qubits);
    for (int layer = 0; layer < depth; ++layer) {
        std::iota(perm.begin(), perm.end(), 0);
        for (int i = num_qubits - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
        for (int k = 0; k + 1 < num_qubits; k += 2) {
            const Mat4 u = haar_unitary(rng, 4);
            for (const Gate& g : to_source_basis(kak_decompose(u, "cz", perm[k], perm[k + 1]))) c.add(g);
        }
    }
    return c;
}

struct TemplateWeights {
    double cx = 1, cz = 1, swap = 1, u = 1;

    static TemplateWeights uniform() { return {}; }
    static TemplateWeights swap_rich() { return {1, 1, 4, 2}; }
};

/// `depth` gates drawn from {cx, cz, swap, u} on random adjacent pairs.
inline Circuit gen_template_circuit(int num_qubits, int depth, uint64_t seed,
                                    TemplateWeights w = TemplateWeights::uniform()) {
    if (num_qubits < 2) throw Error("template circuits need at least 2 qubits");
    if (w.cx < 0 || w.cz < 0 || w.swap < 0 || w.u < 0 || w.cx + w.cz + w.swap + w.u <= 0)
        throw Error("invalid template weights");
    using std::numbers::pi;
    Rng rng(seed);
    Circuit c{num_qubits, {}};
    const double total = w.cx + w.cz + w.swap + w.u;
    for (int k = 0; k < depth; ++k) {
        const double x = rng.uniform() * total;
        if (x < w.cx + w.cz + w.swap) {
            const char* name = x < w.cx ? "cx" : x < w.cx + w.cz ? "cz" : "swap";
            const int a = static_cast<int>(rng.below(num_qubits - 1));
            const bool flip = rng.below(2) == 1;
            c.add(make_gate(name, flip ? std::vector<int>{a + 1, a} : std::vector<int>{a, a + 1}));
        } else {
            const int q = static_cast<int>(rng.below(num_qubits));
            const double theta = pi * rng.uniform(), phi = 2 * pi * rng.uniform(), lambda = 2 * pi * rng.uniform();
            c.add(u_gate(q, theta, phi, lambda));
        }
    }
    return c;
}

inline Circuit gen_circuit(const std::string& family, int num_qubits, int depth, uint64_t seed) {
    if (family == "qv") return gen_qv_circuit(num_qubits, depth, seed);
    if (family == "template") return gen_template_circuit(num_qubits, depth, seed);
    if (family == "template_swap") return gen_template_circuit(num_qubits, depth, seed, TemplateWeights::swap_rich());
    throw Error("unknown circuit family '" + family + "'");
}

// ------------------------------------------------------------- experiments

struct ExperimentConfig {
    std::vector<std::string> families{"template"};
    std::vector<int> qubits{3};
    std::vector<int> depths{20};
    std::vector<uint64_t> seeds{1};
    std::vector<std::string> cost_models{"D0"};
    std::vector<std::string> adapters{"direct", "kak_cz", "kak_cz_db", "greedy", "sat"};
    std::vector<Objective> objectives{Objective::Fidelity, Objective::IdleTime, Objective::Combined};
    bool simulate = true;
    bool use_cz_db = true;
    long long node_budget = SolverOptions{}.node_budget;
    std::string output;

    void validate() const {
        if (families.empty() || qubits.empty() || depths.empty() || seeds.empty() || cost_models.empty())
            throw Error("experiment grid has an empty axis");
        for (int q : qubits)
            if (q < 2 || q > 5) throw Error("qubit count must be in [2, 5]");
        for (int d : depths)
            if (d < 1) throw Error("depth must be at least 1");
        if (adapters.empty()) throw Error("at least one adapter is required");
        if (node_budget < 1) throw Error("node_budget must be positive");
        for (const std::string& a : adapters)
            if (a != "direct" && a != "kak_cz" && a != "kak_cz_db" && a != "greedy" && a != "sat")
                throw Error("unknown adapter '" + a + "'");
        if (!use_cz_db && std::count(adapters.begin(), adapters.end(), "kak_cz_db"))
            throw Error("adapter kak_cz_db requires use_cz_db");
        for (const std::string& f : families)
            if (f != "qv" && f != "template" && f != "template_swap") throw Error("unknown circuit family '" + f + "'");
    }
};

namespace detail {

template <class T>
std::vector<T> scalar_or_list(const nlohmann::json& j) {
    if (j.is_array()) return j.get<std::vector<T>>();
    return {j.get<T>()};
}

}  // namespace detail

/// Scalars or lists for family/qubits/depth/cost_model; seeds either as a
/// list or as {"seed_start", "seed_count"}.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    static const std::set<std::string> known{"family",  "qubits",     "depth",    "cost_model", "seeds",
                                             "seed_start", "seed_count", "adapters", "objectives", "simulate",
                                             "use_cz_db", "node_budget", "output"};
    if (!j.is_object()) throw Error("experiment config must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw Error("unknown experiment config key '" + k + "'");
    try {
        if (j.contains("family")) cfg.families = detail::scalar_or_list<std::string>(j["family"]);
        if (j.contains("qubits")) cfg.qubits = detail::scalar_or_list<int>(j["qubits"]);
        if (j.contains("depth")) cfg.depths = detail::scalar_or_list<int>(j["depth"]);
        if (j.contains("cost_model")) cfg.cost_models = detail::scalar_or_list<std::string>(j["cost_model"]);
        if (j.contains("seeds")) {
            cfg.seeds = detail::scalar_or_list<uint64_t>(j["seeds"]);
        } else if (j.contains("seed_count")) {
            const uint64_t start = j.value("seed_start", uint64_t{1});
            cfg.seeds.clear();
            for (uint64_t k = 0; k < j["seed_count"].get<uint64_t>(); ++k) cfg.seeds.push_back(start + k);
        }
        if (j.contains("adapters")) cfg.adapters = j["adapters"].get<std::vector<std::string>>();
        if (j.contains("objectives")) {
            cfg.objectives.clear();
            for (const auto& o : j["objectives"]) cfg.objectives.push_back(parse_objective(o.get<std::string>()));
        }
        cfg.simulate = j.value("simulate", cfg.simulate);
        cfg.use_cz_db = j.value("use_cz_db", cfg.use_cz_db);
        cfg.node_budget = j.value("node_budget", cfg.node_budget);
        cfg.output = j.value("output", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("bad experiment config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

struct ResultRow {
    uint64_t seed = 0;
    std::string family;
    int qubits = 0;
    int depth = 0;
    std::string cost_model;
    std::string adapter;
    std::string objective;  // "none" for objective-free adapters
    int num_gates = 0;
    int num_blocks = 0;
    int num_matches = 0;
    int num_chosen = 0;
    double sum_log_fidelity = 0;
    double makespan_ns = 0;
    double idle_ns = 0;
    double qubit_idle_ns = 0;
    std::optional<double> hellinger;
    // model objective values of this row's choice, one per objective
    std::optional<double> model_fidelity, model_idle, model_combined;
    double delta_fidelity = 0;  // exp(sum_log_fidelity - direct) - 1
    double delta_idle = 0;      // 1 - idle / idle_direct
    std::optional<double> delta_hellinger;
    std::optional<bool> optimal;  // sat rows: search completed within the node budget
    double runtime_ms = 0;
};

inline const std::vector<std::string>& csv_columns() {
    static const std::vector<std::string> cols{
        "seed",          "family",        "Q",            "depth",          "cost_model",    "adapter",
        "objective",     "num_gates",     "num_blocks",   "num_matches",    "num_chosen",    "sum_log_fidelity",
        "makespan_ns",   "idle_ns",       "qubit_idle_ns", "hellinger",     "model_fidelity", "model_idle",
        "model_combined", "delta_fidelity", "delta_idle", "delta_hellinger", "optimal",       "prng",
        "runtime_ms"};
    return cols;
}

inline void write_csv_header(std::ostream& os) {
    const auto& cols = csv_columns();
    for (size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << "\n";
}

inline void write_csv_row(std::ostream& os, const ResultRow& r) {
    auto num = [](double v) { return detail::format_double(v); };
    auto opt = [&](const std::optional<double>& v) { return v ? num(*v) : std::string{}; };
    os << r.seed << ',' << r.family << ',' << r.qubits << ',' << r.depth << ',' << r.cost_model << ',' << r.adapter
       << ',' << r.objective << ',' << r.num_gates << ',' << r.num_blocks << ',' << r.num_matches << ','
       << r.num_chosen << ',' << num(r.sum_log_fidelity) << ',' << num(r.makespan_ns) << ',' << num(r.idle_ns)
       << ',' << num(r.qubit_idle_ns) << ',' << opt(r.hellinger) << ',' << opt(r.model_fidelity) << ','
       << opt(r.model_idle) << ',' << opt(r.model_combined) << ',' << num(r.delta_fidelity) << ','
       << num(r.delta_idle) << ',' << opt(r.delta_hellinger) << ','
       << (r.optimal ? (*r.optimal ? "1" : "0") : "") << ',' << Rng::kName << ','
       << num(std::round(r.runtime_ms * 1000) / 1000) << "\n";
}

inline void write_csv(std::ostream& os, std::span<const ResultRow> rows) {
    write_csv_header(os);
    for (const ResultRow& r : rows) write_csv_row(os, r);
}

/// Rows for one generated circuit: the direct baseline first, then every
/// requested adapter (greedy and sat once per objective).
inline std::vector<ResultRow> run_circuit(const Circuit& c, const CostModel& cm, const ExperimentConfig& cfg,
                                          ResultRow key) {
    using clock = std::chrono::steady_clock;
    const AdaptationProblem prob = AdaptationProblem::make(c, cm, RuleLibrary::spin(cfg.use_cz_db));
    const AdaptationModel models[] = {prob.model(Objective::Fidelity), prob.model(Objective::IdleTime),
                                      prob.model(Objective::Combined)};
    const NoiseModel nm = noise_from_cost(cm);
    Distribution ideal;
    if (cfg.simulate) ideal = ideal_distribution(c);

    std::vector<ResultRow> rows;
    auto record = [&](const std::string& adapter, const std::string& objective, const AdaptedCircuit& ac,
                      const std::optional<std::vector<int>>& chosen, double ms) {
        ResultRow r = key;
        r.adapter = adapter;
        r.objective = objective;
        r.num_gates = static_cast<int>(ac.circuit.gates.size());
        r.num_blocks = static_cast<int>(ac.blocks.size());
        r.num_matches = static_cast<int>(prob.matches.size());
        r.sum_log_fidelity = ac.sum_log_fidelity;
        r.makespan_ns = ac.makespan_ns;
        r.idle_ns = ac.idle_ns;
        r.qubit_idle_ns = ac.qubit_idle_ns;
        if (chosen) {
            r.num_chosen = static_cast<int>(chosen->size());
            r.model_fidelity = objective_value(models[0], *chosen);
            r.model_idle = objective_value(models[1], *chosen);
            r.model_combined = objective_value(models[2], *chosen);
        }
        if (cfg.simulate) r.hellinger = hellinger_fidelity(ideal, simulate_distribution(ac, nm));
        r.runtime_ms = ms;
        rows.push_back(std::move(r));
    };
    auto timed = [](auto&& f) {
        const auto t0 = clock::now();
        auto out = f();
        return std::pair{std::move(out), std::chrono::duration<double, std::milli>(clock::now() - t0).count()};
    };

    {
        auto [ac, ms] = timed([&] { return baseline_direct(prob.pc, cm); });
        record("direct", "none", ac, std::vector<int>{}, ms);
    }
    for (const std::string& adapter : cfg.adapters) {
        if (adapter == "direct") continue;
        if (adapter == "kak_cz" || adapter == "kak_cz_db") {
            const std::string ent = adapter.substr(4);
            auto [ac, ms] = timed([&] { return baseline_kak(prob.pc, cm, ent); });
            record(adapter, "none", ac, kak_choice(prob.matches, ent), ms);
            continue;
        }
        for (Objective o : cfg.objectives) {
            SolverStats stats;
            auto [res, ms] = timed([&] {
                std::vector<int> chosen;
                if (adapter == "greedy") {
                    chosen = greedy_choice(prob.matches, o);
                } else {
                    // baselines seed the incumbent, so an early stop still dominates them
                    SolverOptions so;
                    so.node_budget = cfg.node_budget;
                    so.best_effort = true;
                    so.warm_starts = {{}, kak_choice(prob.matches, "cz"), greedy_choice(prob.matches, o)};
                    if (cfg.use_cz_db) so.warm_starts.push_back(kak_choice(prob.matches, "cz_db"));
                    chosen = solve_exact(models[static_cast<int>(o)], so, &stats).chosen;
                }
                return std::pair{apply_assignment(prob.pc, prob.matches, chosen, cm), chosen};
            });
            record(adapter, to_string(o), res.first, res.second, ms);
            if (adapter == "sat") rows.back().optimal = stats.optimal;
        }
    }
    const ResultRow& direct = rows.front();
    for (ResultRow& r : rows) {
        r.delta_fidelity = std::expm1(r.sum_log_fidelity - direct.sum_log_fidelity);
        r.delta_idle = direct.idle_ns > 0 ? 1 - r.idle_ns / direct.idle_ns : 0.0;
        if (r.hellinger && direct.hellinger && *direct.hellinger > 0)
            r.delta_hellinger = *r.hellinger / *direct.hellinger - 1;
    }
    return rows;
}

inline std::vector<ResultRow> run_experiment(const ExperimentConfig& cfg, std::ostream* stream = nullptr) {
    cfg.validate();
    std::vector<ResultRow> all;
    if (stream) write_csv_header(*stream);
    for (const std::string& cm_id : cfg.cost_models) {
        const CostModel cm = load_cost_model(cm_id);
        for (const std::string& family : cfg.families)
            for (int q : cfg.qubits)
                for (int depth : cfg.depths)
                    for (uint64_t seed : cfg.seeds) {
                        ResultRow key;
                        key.seed = seed;
                        key.family = family;
                        key.qubits = q;
                        key.depth = depth;
                        key.cost_model = cm.id;
                        for (ResultRow& r : run_circuit(gen_circuit(family, q, depth, seed), cm, cfg, key)) {
                            if (stream) write_csv_row(*stream, r);
                            all.push_back(std::move(r));
                        }
                    }
    }
    return all;
}

}  // namespace qadapt
