#pragma once

// Materializes adapted circuits from a choice of substitutions, plus the
// comparison adapters: direct translation, whole-block KAK, and greedy
// template application.

#include "qadapt/smt_model.hpp"

namespace qadapt {

struct AdaptedBlock {
    int id = 0;
    std::vector<int> qubits;
    std::vector<Gate> gates;
    double start_ns = 0;
    double duration_ns = 0;
    double log_fidelity = 0;
};

struct AdaptedCircuit {
    Circuit circuit;  // blocks concatenated in id order
    std::vector<AdaptedBlock> blocks;
    DependencyGraph graph;
    std::vector<int> chosen;  // applied match ids, when built from matches
    double sum_log_fidelity = 0;
    double makespan_ns = 0;
    double idle_ns = 0;        // Q * makespan - sum of block durations
    double qubit_idle_ns = 0;  // same, counting each qubit a block occupies
};

/// Costs every block from its emitted gates and schedules ASAP.
inline AdaptedCircuit finalize_adapted(const PreprocessedCircuit& pc, std::vector<std::vector<Gate>> per_block,
                                       const CostModel& cm) {
    AdaptedCircuit ac;
    ac.graph = pc.graph;
    ac.circuit.num_qubits = pc.circuit.num_qubits;
    std::vector<double> durations;
    for (const Block& b : pc.blocks) {
        AdaptedBlock ab;
        ab.id = b.id;
        ab.qubits = b.qubits;
        ab.gates = std::move(per_block[b.id]);
        BlockCost c = block_cost(ab.gates, cm);
        ab.duration_ns = c.duration_ns;
        ab.log_fidelity = c.log_fidelity;
        durations.push_back(c.duration_ns);
        for (const Gate& g : ab.gates) ac.circuit.add(g);
        ac.blocks.push_back(std::move(ab));
    }
    Schedule s = schedule_asap(pc.graph, durations);
    double busy = 0, qubit_busy = 0;
    for (AdaptedBlock& ab : ac.blocks) {
        ab.start_ns = s.start_ns[ab.id];
        ac.sum_log_fidelity += ab.log_fidelity;
        busy += ab.duration_ns;
        qubit_busy += ab.duration_ns * static_cast<double>(ab.qubits.size());
    }
    ac.makespan_ns = s.makespan_ns;
    ac.idle_ns = pc.circuit.num_qubits * ac.makespan_ns - busy;
    ac.qubit_idle_ns = pc.circuit.num_qubits * ac.makespan_ns - qubit_busy;
    return ac;
}

/// Applies the chosen matches; every other gate gets its reference translation.
inline AdaptedCircuit apply_assignment(const PreprocessedCircuit& pc, std::span<const SubstitutionMatch> matches,
                                       std::vector<int> chosen, const CostModel& cm,
                                       const EquivalenceLibrary& lib = default_library()) {
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::vector<const SubstitutionMatch*>> by_block(pc.blocks.size());
    for (int s : chosen) {
        if (s < 0 || s >= static_cast<int>(matches.size()) || matches[s].id != s)
            throw Error("unknown substitution id " + std::to_string(s));
        by_block.at(matches[s].block).push_back(&matches[s]);
    }
    std::vector<std::vector<Gate>> per_block;
    for (const Block& b : pc.blocks) per_block.push_back(emit_block(pc, b, by_block[b.id], lib));
    AdaptedCircuit ac = finalize_adapted(pc, std::move(per_block), cm);
    ac.chosen = std::move(chosen);
    return ac;
}

inline AdaptedCircuit apply_assignment(const PreprocessedCircuit& pc, std::span<const SubstitutionMatch> matches,
                                       const Assignment& a, const CostModel& cm) {
    return apply_assignment(pc, matches, a.chosen, cm);
}

inline AdaptedCircuit baseline_direct(const PreprocessedCircuit& pc, const CostModel& cm) {
    std::vector<std::vector<Gate>> per_block;
    for (const Block& b : pc.blocks) per_block.push_back(b.ref_gates);
    return finalize_adapted(pc, std::move(per_block), cm);
}

/// Every two-qubit block resynthesized with KAK on `entangler`.
inline AdaptedCircuit baseline_kak(const PreprocessedCircuit& pc, const CostModel& cm,
                                   const std::string& entangler = "cz") {
    std::vector<std::vector<Gate>> per_block;
    for (const Block& b : pc.blocks) {
        if (!b.is_two_qubit()) {
            per_block.push_back(b.ref_gates);
            continue;
        }
        const auto src = pc.source_gates(b);
        per_block.push_back(kak_decompose(block_unitary(src, b.qubits[0], b.qubits[1]), entangler, b.qubits[0],
                                          b.qubits[1]));
    }
    return finalize_adapted(pc, std::move(per_block), cm);
}

/// Ids of the KAK matches for `entangler`, one per two-qubit block.
inline std::vector<int> kak_choice(std::span<const SubstitutionMatch> matches, const std::string& entangler) {
    std::vector<int> ids;
    for (const SubstitutionMatch& m : matches)
        if (m.rule_id == "kak_" + entangler) ids.push_back(m.id);
    return ids;
}

inline bool is_template_match(const SubstitutionMatch& m) { return m.rule_id.rfind("kak_", 0) != 0; }

/// Local template optimization: scan template matches by (block, id) and
/// keep each one that improves its own cost term and conflicts with nothing
/// kept so far.
inline std::vector<int> greedy_choice(std::span<const SubstitutionMatch> matches, Objective objective) {
    std::vector<const SubstitutionMatch*> order;
    for (const SubstitutionMatch& m : matches)
        if (is_template_match(m)) order.push_back(&m);
    std::stable_sort(order.begin(), order.end(), [](auto* a, auto* b) {
        return a->block != b->block ? a->block < b->block : a->id < b->id;
    });
    std::vector<int> taken;
    std::set<int> used;
    for (const SubstitutionMatch* m : order) {
        const bool improves = objective == Objective::Fidelity ? m->delta_log_fidelity > 0 : m->delta_duration_ns < 0;
        if (!improves) continue;
        if (std::any_of(m->uids.begin(), m->uids.end(), [&](int u) { return used.count(u) > 0; })) continue;
        taken.push_back(m->id);
        used.insert(m->uids.begin(), m->uids.end());
    }
    std::sort(taken.begin(), taken.end());
    return taken;
}

inline AdaptedCircuit baseline_template_greedy(const PreprocessedCircuit& pc,
                                               std::span<const SubstitutionMatch> matches, Objective objective,
                                               const CostModel& cm) {
    return apply_assignment(pc, matches, greedy_choice(matches, objective), cm);
}

/// Everything needed to adapt one circuit: blocks, matches, and cost model.
struct AdaptationProblem {
    PreprocessedCircuit pc;
    std::vector<SubstitutionMatch> matches;
    CostModel cm;

    static AdaptationProblem make(const Circuit& c, const CostModel& cm, const RuleLibrary& rules) {
        AdaptationProblem p{preprocess(c, cm), {}, cm};
        p.matches = enumerate_matches(p.pc, cm, rules);
        return p;
    }

    AdaptationModel model(Objective o) const { return build_model(pc, matches, o, cm); }
};

inline AdaptedCircuit adapt_exact(const AdaptationProblem& p, Objective o, const SolverOptions& opt = {}) {
    Assignment a = solve_exact(p.model(o), opt);
    return apply_assignment(p.pc, p.matches, a.chosen, p.cm);
}

}  // namespace qadapt
